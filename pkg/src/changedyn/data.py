"""Synthetic generators, CSV stream I/O, EEG preprocessing and AR fitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy import signal

from .model import InvalidConfigError, InvalidInputError

TRUTH_COLUMNS = ("mu_true", "state_true", "nu_true", "log_sigma_true")
FLOAT_FMT = "{:.17g}"


class CsvFormatError(ValueError):
    """Malformed CSV input; the message names the offending row."""


class DegenerateInputError(ValueError):
    """Input without variance where normalization requires it."""


class SingularFitError(ValueError):
    """Rank-deficient regression design."""


@dataclass(frozen=True)
class StreamRecord:
    t: int
    x: float
    mu_true: Optional[float] = None
    state_true: Optional[int] = None
    nu_true: Optional[float] = None
    log_sigma_true: Optional[float] = None


@dataclass
class Stream:
    """Observation series with optional ground truth (arrays aligned with ``t``)."""

    t: np.ndarray
    x: np.ndarray
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=float)
        if self.t.shape != self.x.shape:
            raise InvalidInputError("t and x lengths differ")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise InvalidInputError("t must be strictly increasing")

    def __len__(self):
        return self.x.shape[0]

    def records(self) -> Iterator[StreamRecord]:
        for i in range(len(self)):
            extra = {}
            for k, v in self.truth.items():
                if k in TRUTH_COLUMNS:
                    extra[k] = int(v[i]) if k == "state_true" else float(v[i])
            yield StreamRecord(t=int(self.t[i]), x=float(self.x[i]), **extra)

    def slice(self, start: int, stop: Optional[int] = None) -> "Stream":
        sl = np.s_[start:stop]
        return Stream(self.t[sl], self.x[sl], {k: np.asarray(v)[sl] for k, v in self.truth.items()})

    def change_times(self) -> list[tuple[int, int]]:
        """Ground-truth changes as ``(last pre-change t, new state)`` pairs."""
        st = np.asarray(self.truth["state_true"])
        where = np.flatnonzero(st[1:] != st[:-1])
        return [(int(self.t[i]), int(st[i + 1])) for i in where]


@dataclass(frozen=True)
class SyntheticSpec:
    """Mean-drift generator. ``segments`` are ``(start, end, state, nu)``
    tuples with inclusive 1-based bounds tiling ``1..T``."""

    T: int = 225
    mu0: float = 1.0
    noise_sd: float = 0.05
    segments: tuple = ((1, 25, 0, 0.0), (26, 125, 1, -0.002), (126, 225, 0, 0.0))
    seed: int = 0

    def __post_init__(self):
        expect = 1
        for start, end, _, _ in self.segments:
            if start != expect or end < start:
                raise InvalidConfigError(f"segments must tile 1..{self.T} in order")
            expect = end + 1
        if expect != self.T + 1:
            raise InvalidConfigError(f"segments must tile 1..{self.T} in order")


def mean_drift_path(spec: SyntheticSpec):
    nu = np.zeros(spec.T)
    state = np.zeros(spec.T, dtype=np.int64)
    for start, end, s, v in spec.segments:
        nu[start - 1:end] = v
        state[start - 1:end] = s
    mu = spec.mu0 + np.cumsum(nu)
    return mu, nu, state


def generate_mean_drift(spec: SyntheticSpec) -> Stream:
    """``x_t = mu_t + sd * eps_t`` with ``mu_t = mu_{t-1} + nu_t``, ``mu_0 = mu0``."""
    mu, nu, state = mean_drift_path(spec)
    rng = np.random.default_rng(spec.seed)
    x = mu + spec.noise_sd * rng.standard_normal(spec.T)
    return Stream(np.arange(1, spec.T + 1), x, {"mu_true": mu, "state_true": state, "nu_true": nu})


@dataclass(frozen=True)
class SeizureSpec:
    """AR(2) surrogate whose log innovation sd ramps up (state 1), plateaus
    (state 0), ramps down (state 2) and returns to baseline (state 0).

    The first ``n_train`` samples are a stationary training block; the test
    block follows with ``n_pre`` stationary samples before the onset ramp.
    """

    alpha: tuple = (0.62, -0.18)
    log_sigma_base: float = -1.0
    log_sigma_peak: float = 1.0
    n_train: int = 3000
    n_pre: int = 550
    n_onset: int = 350
    n_plateau: int = 300
    n_term: int = 200
    n_post: int = 600
    burn_in: int = 200
    seed: int = 0

    @property
    def T(self) -> int:
        return self.n_train + self.n_pre + self.n_onset + self.n_plateau + self.n_term + self.n_post


def seizure_log_sigma_path(spec: SeizureSpec):
    lo, hi = spec.log_sigma_base, spec.log_sigma_peak
    up = lo + (hi - lo) * np.arange(1, spec.n_onset + 1) / max(spec.n_onset, 1)
    down = hi + (lo - hi) * np.arange(1, spec.n_term + 1) / max(spec.n_term, 1)
    parts = [
        (np.full(spec.n_train + spec.n_pre, lo), 0),
        (up, 1),
        (np.full(spec.n_plateau, hi), 0),
        (down, 2),
        (np.full(spec.n_post, lo), 0),
    ]
    log_sigma = np.concatenate([p for p, _ in parts])
    state = np.concatenate([np.full(p.shape[0], s, dtype=np.int64) for p, s in parts])
    return log_sigma, state


def generate_seizure_surrogate(spec: SeizureSpec) -> Stream:
    log_sigma, state = seizure_log_sigma_path(spec)
    alpha = np.asarray(spec.alpha, dtype=float)
    p = alpha.shape[0]
    rng = np.random.default_rng(spec.seed)
    n = spec.burn_in + spec.T
    ls = np.concatenate([np.full(spec.burn_in, spec.log_sigma_base), log_sigma])
    eps = rng.standard_normal(n)
    x = np.zeros(n + p)
    for i in range(n):
        # x[i + p - 1] is the most recent value
        past = x[i:i + p][::-1]
        x[i + p] = alpha @ past + math.exp(ls[i]) * eps[i]
    x = x[p + spec.burn_in:]
    nu = np.concatenate([[0.0], np.diff(log_sigma)])
    return Stream(np.arange(1, spec.T + 1), x,
                  {"log_sigma_true": log_sigma, "state_true": state, "nu_true": nu})


def preprocess_eeg(x, source_hz: int = 100, target_hz: int = 10, lowpass_hz: float = 5.0,
                   order: int = 4, normalize: bool = True) -> np.ndarray:
    """Zero-phase Butterworth low-pass at the source rate, decimate, then
    z-normalize with full-sequence statistics."""
    if source_hz <= 0 or target_hz <= 0 or source_hz % target_hz:
        raise InvalidConfigError(f"source rate {source_hz} Hz is not a multiple of {target_hz} Hz")
    if not 0 < lowpass_hz < source_hz / 2:
        raise InvalidConfigError("low-pass cutoff must lie below the source Nyquist frequency")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("EEG input contains non-finite values")
    sos = signal.butter(order, lowpass_hz, btype="low", fs=source_hz, output="sos")
    y = signal.sosfiltfilt(sos, x)[:: source_hz // target_hz]
    if not normalize:
        return y
    sd = y.std()
    if not sd > 1e-12 * max(1.0, np.abs(y).max()):
        raise DegenerateInputError("cannot normalize a constant signal")
    return (y - y.mean()) / sd


@dataclass(frozen=True)
class ARFit:
    alpha: np.ndarray
    log_sigma: float
    r_squared: float


def fit_ar(x, p: int) -> ARFit:
    """OLS AR(p) without intercept; ``alpha[0]`` pairs with lag 1."""
    x = np.asarray(x.x if isinstance(x, Stream) else x, dtype=float)
    if p < 1:
        raise InvalidInputError("AR order must be at least 1")
    if x.shape[0] <= 10 * p:
        raise InvalidInputError(f"need more than {10 * p} samples to fit AR({p})")
    n = x.shape[0]
    X = np.column_stack([x[p - k - 1:n - k - 1] for k in range(p)])
    y = x[p:]
    if np.linalg.matrix_rank(X) < p:
        raise SingularFitError("lagged design matrix is rank deficient")
    alpha, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ alpha
    rmse = math.sqrt(float(np.mean(resid ** 2)))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / sst if sst > 0 else float("nan")
    return ARFit(alpha=alpha, log_sigma=math.log(rmse) if rmse > 0 else -math.inf, r_squared=r2)


def iter_csv_records(path, column: str = "x", time_column: Optional[str] = "t") -> Iterator[StreamRecord]:
    """Yield records from a headered CSV; raises ``CsvFormatError`` naming the
    1-based data row at fault."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CsvFormatError(f"{path}: empty file")
        if column not in reader.fieldnames:
            raise CsvFormatError(f"{path}: missing column {column!r} (have {reader.fieldnames})")
        has_t = time_column is not None and time_column in reader.fieldnames
        truth = [c for c in TRUTH_COLUMNS if c in reader.fieldnames]
        prev_t = None
        row_no = 0
        for row_no, row in enumerate(reader, start=1):
            try:
                x = float(row[column])
                t = int(row[time_column]) if has_t else row_no
                extra = {c: (int(float(row[c])) if c == "state_true" else float(row[c]))
                         for c in truth if row[c] not in ("", None)}
            except (TypeError, ValueError) as exc:
                raise CsvFormatError(f"{path}: row {row_no}: {exc}") from None
            if prev_t is not None and t <= prev_t:
                raise CsvFormatError(f"{path}: row {row_no}: time {t} not after {prev_t}")
            prev_t = t
            yield StreamRecord(t=t, x=x, **extra)
        if row_no == 0:
            raise CsvFormatError(f"{path}: no data rows")


def read_csv_stream(path, column: str = "x", time_column: Optional[str] = "t") -> Stream:
    recs = list(iter_csv_records(path, column, time_column))
    truth = {}
    for c in TRUTH_COLUMNS:
        vals = [getattr(r, c) for r in recs]
        if all(v is not None for v in vals):
            truth[c] = np.asarray(vals, dtype=np.int64 if c == "state_true" else float)
    return Stream([r.t for r in recs], [r.x for r in recs], truth)


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT.format(float(v))


def write_rows(path, header: Sequence[str], rows) -> None:
    """Write a headered CSV; ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _write_csv(path, header, rows)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_csv(fh, header, rows)


def _write_csv(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def write_stream_csv(path, stream: Stream) -> None:
    cols = ["t", "x"] + [c for c in TRUTH_COLUMNS if c in stream.truth]
    data = [stream.t, stream.x] + [stream.truth[c] for c in cols[2:]]
    write_rows(path, cols, zip(*data))
