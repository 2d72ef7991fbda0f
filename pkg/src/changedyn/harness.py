"""Detection metrics, trial runners and the multi-trial experiment driver."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import data, presets
from . import filter as pf
from .baselines import bocd_detect, bocd_init, bocd_odds, bocd_step, particle_detector_step
from .detect import AlarmRecord, ThresholdPolicy, shiryaev_statistic, threshold_value
from .model import InvalidConfigError, ModelConfig
from .predict import predict_one_step

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("change_dynamic", "changepoint", "bocd")
FTD = None


class TrialFailure(RuntimeError):
    def __init__(self, trial, cause):
        super().__init__(f"trial {trial} failed: {cause!r}")
        self.trial = trial
        self.cause = cause


# ---------------------------------------------------------------------------
# metrics


def assign_alarms(alarms: Sequence[AlarmRecord], changes: Sequence[tuple[int, int]]):
    """Earliest-first matching of alarms to ground-truth changes.

    An alarm qualifies for change ``(time, state)`` if it is raised strictly
    after ``time`` and its detected state matches (or is unclassified).
    Returns ``(per-change alarm index or None, set of matched alarm indices)``.
    """
    order = sorted(range(len(alarms)), key=lambda i: alarms[i].time)
    used: set[int] = set()
    matched = []
    for change_t, new_state in sorted(changes):
        hit = None
        for i in order:
            a = alarms[i]
            if i in used or a.time <= change_t:
                continue
            if a.detected_state is None or a.detected_state == new_state:
                hit = i
                break
        if hit is not None:
            used.add(hit)
        matched.append(hit)
    return matched, used


def compute_add(alarms, changes) -> list[Optional[int]]:
    """Per-change detection delay, ``None`` marking a failure to detect."""
    matched, _ = assign_alarms(alarms, changes)
    return [None if i is None else alarms[i].time - ct for i, (ct, _) in zip(matched, sorted(changes))]


def compute_pfa_pma(alarms, changes) -> tuple[float, float]:
    """False-alarm ratio over raised alarms (0 with no alarms) and the
    fraction of changes never detected."""
    matched, used = assign_alarms(alarms, changes)
    pfa = (len(alarms) - len(used)) / len(alarms) if alarms else 0.0
    pma = sum(i is None for i in matched) / len(changes) if changes else 0.0
    return pfa, pma


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.sqrt(float(np.mean((a - b) ** 2))) if a.size else float("nan")


def nu_posterior_rmse(nu_mean, nu_true) -> float:
    """Time-averaged RMSE of the per-step posterior mean of nu."""
    return rmse(nu_mean, nu_true)


def collapse_at_alarms(alarms, nu_sd, t0: int = 1, lag: int = 5) -> list[bool]:
    """For each alarm: is the posterior sd of nu smaller than ``lag`` steps earlier?"""
    out = []
    for a in alarms:
        i = a.time - t0
        if i - lag >= 0:
            out.append(bool(nu_sd[i] < nu_sd[i - lag]))
    return out


# ---------------------------------------------------------------------------
# single-stream runners


@dataclass
class TrialResult:
    method: str
    alarms: list
    t: np.ndarray
    x: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    n_support: np.ndarray
    z: np.ndarray
    nu_mean: Optional[np.ndarray] = None
    nu_sd: Optional[np.ndarray] = None
    truth: dict = field(default_factory=dict)
    changes: list = field(default_factory=list)


def run_particle(config: ModelConfig, stream: data.Stream, n_particles: int,
                 policy: ThresholdPolicy, seed: int, x0_window=(), nu_component: int = 0,
                 workers: int = 1, backend=None, method: str = "change_dynamic") -> TrialResult:
    """Filter a stream; prediction for ``x_t`` uses the particle set at ``t - 1``."""
    T = len(stream)
    pset = pf.init(config, n_particles, x0_window, seed=seed, workers=workers, backend=backend)
    pm, pv, ns, zs, nm, nsd = (np.empty(T) for _ in range(6))
    alarms = []
    for i, x in enumerate(stream.x):
        pred = predict_one_step(pset)
        pm[i], pv[i], ns[i] = pred.mean, pred.variance, pred.n_support
        try:
            pset, alarm = particle_detector_step(pset, x, policy)
        except pf.DegenerateLikelihoodError as exc:
            raise pf.DegenerateLikelihoodError(int(stream.t[i]), str(exc)) from exc
        nu = pset.phi[:, nu_component]
        nm[i], nsd[i] = nu.mean(), nu.std()
        if alarm is not None:
            alarms.append(replace(alarm, time=int(stream.t[i]), tau_after=int(stream.t[i])))
            zs[i] = alarm.z_value
        else:
            zs[i] = shiryaev_statistic(pset)[0]
    return TrialResult(method, alarms, stream.t, stream.x, pm, pv, ns, zs, nm, nsd, stream.truth,
                       _changes(stream))


def run_bocd(model, hazard: float, stream: data.Stream, policy: ThresholdPolicy,
             prune_threshold: float = 1e-12, offset=None) -> TrialResult:
    """BOCD over ``stream.x``; ``offset`` (per-step) is added back to the
    predictive location, e.g. the AR mean when BOCD runs on residuals."""
    T = len(stream)
    state = bocd_init(model, hazard, prune_threshold)
    pm, pv, zs = np.empty(T), np.full(T, np.nan), np.empty(T)
    alarms = []
    tau = 0
    for i, x in enumerate(stream.x):
        pm[i] = state.predictive_location() + (0.0 if offset is None else offset[i])
        state = bocd_step(state, x)
        alarm = bocd_detect(state, policy, tau)
        if alarm is not None:
            tau = state.t
            alarms.append(replace(alarm, time=int(stream.t[i]), tau_after=int(stream.t[i])))
            zs[i] = alarm.z_value
        else:
            zs[i] = bocd_odds(state, tau)[0]
    return TrialResult("bocd", alarms, stream.t, stream.x, pm, pv, np.full(T, np.nan), zs,
                       truth=stream.truth, changes=_changes(stream))


def _changes(stream: data.Stream):
    return stream.change_times() if "state_true" in stream.truth else []


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Keys mirror the YAML file and the CLI flags (dots become nesting)."""

    method: str = "change_dynamic"
    experiment: str = "synthetic"
    n_particles: int = 2000
    threshold_kind: str = "fixed"
    threshold_h: Optional[float] = 99.0
    threshold_alpha: Optional[float] = None
    trials: int = 30
    seed: int = 0
    workers: int = 1
    jobs: int = 1
    backend: Optional[str] = None
    nu_bounds: str = "tight"
    cp_levels: str = "informed"
    bocd_prior_var: float = 0.03
    bocd_prune: float = 1e-12
    generator: dict = field(default_factory=dict)
    input_path: Optional[str] = None
    input_column: str = "x"
    input_source_hz: Optional[int] = None
    n_train: int = 3000
    output_dir: Optional[str] = None
    write_trials: bool = True

    _NESTED = {
        ("threshold", "kind"): "threshold_kind",
        ("threshold", "h"): "threshold_h",
        ("threshold", "alpha"): "threshold_alpha",
        ("input", "path"): "input_path",
        ("input", "column"): "input_column",
        ("input", "source_hz"): "input_source_hz",
        ("input", "n_train"): "n_train",
        ("output", "dir"): "output_dir",
        ("output", "write_trials"): "write_trials",
        ("bocd", "prior_var"): "bocd_prior_var",
        ("bocd", "prune"): "bocd_prune",
    }

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.experiment not in ("synthetic", "seizure"):
            raise InvalidConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1 or self.n_particles < 1:
            raise InvalidConfigError("trials and n_particles must be positive")
        self.policy  # validates

    @property
    def policy(self) -> ThresholdPolicy:
        if self.threshold_kind == "fixed":
            return ThresholdPolicy.fixed(self.threshold_h)
        return ThresholdPolicy(kind=self.threshold_kind, alpha=self.threshold_alpha)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        mapping = dict(mapping)
        version = mapping.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise InvalidConfigError(f"unsupported config schema_version {version}")
        flat = {}
        for key, val in mapping.items():
            if isinstance(val, dict) and key != "generator":
                for sub, v in val.items():
                    name = cls._NESTED.get((key, sub))
                    if name is None:
                        raise InvalidConfigError(f"unknown config key {key}.{sub}")
                    flat[name] = v
            else:
                flat[key] = val
        known = {f.name for f in fields(cls)}
        unknown = set(flat) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**flat)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(yaml.safe_load(fh) or {})

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Apply dotted-key overrides such as ``{"threshold.h": 19}``."""
        out = {}
        for key, val in overrides.items():
            if val is None:
                continue
            if key.startswith("generator."):
                gen = dict(out.get("generator", self.generator))
                gen[key.split(".", 1)[1]] = val
                out["generator"] = gen
                continue
            parts = tuple(key.split("."))
            name = self._NESTED.get(parts, key.replace(".", "_"))
            if name not in {f.name for f in fields(self)}:
                raise InvalidConfigError(f"unknown config key {key}")
            out[name] = val
        return replace(self, **out)


def trial_seeds(seed: int, trial: int) -> tuple[int, int]:
    """(data seed, filter seed) for a trial, independent of trial order."""
    s = np.random.SeedSequence([seed, trial]).generate_state(2, dtype=np.uint32)
    return int(s[0]), int(s[1])


def make_stream(cfg: ExperimentConfig, data_seed: int) -> data.Stream:
    if cfg.input_path:
        stream = data.read_csv_stream(cfg.input_path, cfg.input_column)
        if cfg.input_source_hz:
            # raw recording: low-pass, decimate to 10 Hz, normalize
            x = data.preprocess_eeg(stream.x, source_hz=int(cfg.input_source_hz))
            stream = data.Stream(np.arange(1, x.shape[0] + 1), x)
        return stream
    if cfg.experiment == "synthetic":
        gen = dict(cfg.generator)
        if "segments" in gen:
            gen["segments"] = tuple(tuple(s) for s in gen["segments"])
        return data.generate_mean_drift(data.SyntheticSpec(**gen, seed=data_seed))
    return data.generate_seizure_surrogate(data.SeizureSpec(**cfg.generator, seed=data_seed))


def _n_train(cfg: ExperimentConfig) -> int:
    if cfg.input_path:
        return cfg.n_train
    return int(cfg.generator.get("n_train", data.SeizureSpec.n_train))


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    data_seed, filter_seed = trial_seeds(cfg.seed, trial)
    stream = make_stream(cfg, data_seed)
    policy = cfg.policy
    common = dict(workers=cfg.workers, backend=cfg.backend)
    if cfg.experiment == "synthetic":
        if cfg.method == "change_dynamic":
            return run_particle(presets.synthetic_model(cfg.nu_bounds), stream, cfg.n_particles,
                                policy, filter_seed, nu_component=0, **common)
        if cfg.method == "changepoint":
            cp = presets.synthetic_changepoint(cfg.cp_levels, cfg.n_particles, policy)
            return run_particle(cp.to_model_config(), stream, cfg.n_particles, policy, filter_seed,
                                method="changepoint", **common)
        return run_bocd(presets.synthetic_bocd(cfg.bocd_prior_var), presets.SYNTH_BOCD_HAZARD,
                        stream, policy, cfg.bocd_prune)

    n_train = _n_train(cfg)
    train, test = stream.slice(0, n_train), stream.slice(n_train)
    fit = data.fit_ar(train.x, 2)
    x0 = train.x[-2:][::-1]
    if cfg.method == "change_dynamic":
        model = presets.seizure_model(fit.alpha, fit.log_sigma)
        return run_particle(model, test, cfg.n_particles, policy, filter_seed, x0_window=x0,
                            nu_component=model.m - 1, **common)
    if cfg.method == "changepoint":
        cp = presets.seizure_changepoint(fit.alpha, n_particles=cfg.n_particles, policy=policy)
        return run_particle(cp.to_model_config(), test, cfg.n_particles, policy, filter_seed,
                            x0_window=x0, method="changepoint", **common)
    full = np.concatenate([x0[::-1], test.x])
    ar_mean = fit.alpha[0] * full[1:-1] + fit.alpha[1] * full[:-2]
    resid = data.Stream(test.t, test.x - ar_mean, test.truth)
    res = run_bocd(presets.seizure_bocd(), presets.SEIZURE_BOCD_HAZARD, resid, policy,
                   cfg.bocd_prune, offset=ar_mean)
    res.x = test.x
    return res


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class TrialMetrics:
    trial: int
    rmsfe_mu: float
    rmse_mu_truth: float
    rmse_nu: float
    add: list
    pfa: float
    pma: float
    alarm_count: int
    false_alarms: int
    collapse: list


def trial_metrics(res: TrialResult, trial: int = 0) -> TrialMetrics:
    changes = res.changes
    add = compute_add(res.alarms, changes)
    pfa, pma = compute_pfa_pma(res.alarms, changes)
    _, used = assign_alarms(res.alarms, changes)
    mu_true = res.truth.get("mu_true")
    nu_true = res.truth.get("nu_true")
    rmse_nu = float("nan")
    collapse = []
    if res.nu_mean is not None and nu_true is not None:
        rmse_nu = nu_posterior_rmse(res.nu_mean, nu_true)
        collapse = collapse_at_alarms(res.alarms, res.nu_sd, t0=int(res.t[0]))
    return TrialMetrics(
        trial=trial,
        rmsfe_mu=rmse(res.pred_mean, res.x),
        rmse_mu_truth=rmse(res.pred_mean, mu_true) if mu_true is not None else float("nan"),
        rmse_nu=rmse_nu,
        add=add,
        pfa=pfa,
        pma=pma,
        alarm_count=len(res.alarms),
        false_alarms=len(res.alarms) - len(used),
        collapse=collapse,
    )


@dataclass
class MetricsReport:
    method: str
    h: float
    trials: int
    rmsfe_mu: float
    rmse_mu_truth: float
    rmse_nu: float
    add: list
    ftd_count: list
    pfa: float
    pfa_mean: float
    pma: float
    alarm_count: float
    total_alarms: int
    false_alarms: int

    def row(self) -> dict:
        d = asdict(self)
        add, ftd = d.pop("add"), d.pop("ftd_count")
        for k, (a, f) in enumerate(zip(add, ftd), start=1):
            d[f"add{k}"] = a
            d[f"ftd{k}"] = f
        return d


def aggregate(method: str, h: float, metrics: Sequence[TrialMetrics]) -> MetricsReport:
    """Order-independent reduction over trials. PFA is pooled (false alarms
    over all alarms); ``pfa_mean`` averages per-trial ratios."""
    metrics = sorted(metrics, key=lambda m: m.trial)
    n_changes = max((len(m.add) for m in metrics), default=0)
    add, ftd = [], []
    for k in range(n_changes):
        delays = [m.add[k] for m in metrics if m.add[k] is not None]
        add.append(float(np.mean(delays)) if delays else FTD)
        ftd.append(sum(m.add[k] is None for m in metrics))
    total = sum(m.alarm_count for m in metrics)
    false = sum(m.false_alarms for m in metrics)

    def mean(attr):
        vals = [getattr(m, attr) for m in metrics]
        return float(np.mean(vals)) if vals else float("nan")

    return MetricsReport(
        method=method, h=float(h), trials=len(metrics),
        rmsfe_mu=mean("rmsfe_mu"), rmse_mu_truth=mean("rmse_mu_truth"), rmse_nu=mean("rmse_nu"),
        add=add, ftd_count=ftd,
        pfa=false / total if total else 0.0, pfa_mean=mean("pfa"), pma=mean("pma"),
        alarm_count=mean("alarm_count"), total_alarms=total, false_alarms=false,
    )


# ---------------------------------------------------------------------------
# driver


ALARM_HEADER = ("method", "time", "z", "detected_state", "tau_after")
PRED_HEADER = ("method", "t", "mean", "variance", "n_support")
NU_HEADER = ("t", "nu_mean", "nu_sd", "nu_true")


def write_trial(outdir: Path, trial: int, res: TrialResult, prefix: Optional[str] = None) -> None:
    """Per-trial alarms, predictions, nu posterior and stream CSVs, named
    ``<prefix>alarms.csv`` etc. (prefix defaults to ``trial_NNN_``)."""
    stem = str(Path(outdir)) + "/" + (f"trial_{trial:03d}_" if prefix is None else prefix)
    data.write_rows(f"{stem}alarms.csv", ALARM_HEADER,
                    [(res.method, a.time, a.z_value, a.detected_state, a.tau_after) for a in res.alarms])
    data.write_rows(f"{stem}predictions.csv", PRED_HEADER,
                    [(res.method, int(t), m, v, None if np.isnan(n) else int(n))
                     for t, m, v, n in zip(res.t, res.pred_mean, res.pred_var, res.n_support)])
    if res.nu_mean is not None:
        nu_true = res.truth.get("nu_true", [None] * len(res.t))
        data.write_rows(f"{stem}nu.csv", NU_HEADER, zip(res.t, res.nu_mean, res.nu_sd, nu_true))
    if "mu_true" in res.truth or "log_sigma_true" in res.truth:
        data.write_stream_csv(f"{stem}stream.csv", data.Stream(res.t, res.x, res.truth))


def _run_one(args):
    cfg, trial = args
    try:
        res = run_trial(cfg, trial)
    except Exception as exc:  # noqa: BLE001
        raise TrialFailure(trial, exc) from exc
    return trial, res


def iter_trials(cfg: ExperimentConfig):
    jobs = [(cfg, k) for k in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            yield from ex.map(_run_one, jobs)
    else:
        for j in jobs:
            yield _run_one(j)


def run_experiment(cfg: ExperimentConfig):
    """Run all trials; returns ``(MetricsReport, [TrialMetrics], [TrialResult])``.

    With ``output_dir`` set, writes per-trial CSVs and ``report.csv``.
    """
    outdir = Path(cfg.output_dir) if cfg.output_dir else None
    results, metrics = [], []
    for trial, res in iter_trials(cfg):
        metrics.append(trial_metrics(res, trial))
        results.append(res)
        if outdir is not None and cfg.write_trials:
            write_trial(outdir, trial, res)
        log.info("trial %d: %d alarms", trial, len(res.alarms))
    report = aggregate(cfg.method, threshold_value(cfg.policy), metrics)
    if outdir is not None:
        write_report(outdir / "report.csv", [report])
        write_trial_metrics(outdir / "trials.csv", metrics)
    return report, metrics, results


def write_report(path, reports: Sequence[MetricsReport]) -> None:
    rows = [r.row() for r in reports]
    header = list(rows[0])
    data.write_rows(path, header, [[r.get(k) for k in header] for r in rows])


def write_trial_metrics(path, metrics: Sequence[TrialMetrics]) -> None:
    n = max((len(m.add) for m in metrics), default=0)
    header = ["trial", "rmsfe_mu", "rmse_mu_truth", "rmse_nu", "pfa", "pma", "alarm_count",
              "false_alarms"] + [f"add{k + 1}" for k in range(n)]
    rows = [[m.trial, m.rmsfe_mu, m.rmse_mu_truth, m.rmse_nu, m.pfa, m.pma, m.alarm_count,
             m.false_alarms] + list(m.add) for m in sorted(metrics, key=lambda m: m.trial)]
    data.write_rows(path, header, rows)


def run_sweep(cfg: ExperimentConfig, thresholds: Sequence[float]):
    """Repeat ``run_experiment`` per threshold (same trial seeds for every h)."""
    reports = []
    for h in thresholds:
        sub = replace(cfg, threshold_kind="fixed", threshold_h=float(h), output_dir=None)
        reports.append(run_experiment(sub)[0])
    if cfg.output_dir:
        write_report(Path(cfg.output_dir) / "sweep.csv", reports)
    return reports
