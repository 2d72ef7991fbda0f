import math

import numpy as np
import pytest

from changedyn import data
from changedyn.model import InvalidConfigError, InvalidInputError


# -- generators ---------------------------------------------------------------

def test_mean_drift_default_path():
    s = data.generate_mean_drift(data.SyntheticSpec(seed=0))
    mu = s.truth["mu_true"]
    assert len(s) == 225 and s.t[0] == 1
    assert mu[24] == 1.0 and mu[124] == pytest.approx(0.8, abs=1e-12)
    assert np.all(s.truth["state_true"][25:125] == 1) and s.truth["state_true"][125] == 0
    assert s.change_times() == [(25, 1), (125, 0)]


def test_mean_drift_exact_recursion():
    s = data.generate_mean_drift(data.SyntheticSpec(seed=2))
    mu, nu = s.truth["mu_true"], s.truth["nu_true"]
    assert np.allclose(mu[1:] - mu[:-1], nu[1:], rtol=0, atol=1e-15)
    assert mu[0] == 1.0 + nu[0]


def test_flat_drift_is_constant():
    spec = data.SyntheticSpec(T=50, segments=((1, 50, 0, 0.0),))
    assert np.all(data.generate_mean_drift(spec).truth["mu_true"] == 1.0)


def test_noise_variance_long_run():
    spec = data.SyntheticSpec(T=10_000, segments=((1, 10_000, 0, 0.0),), seed=11)
    s = data.generate_mean_drift(spec)
    v = np.var(s.x - s.truth["mu_true"], ddof=1)
    assert abs(v - 0.0025) < 0.05 * 0.0025


def test_segments_must_tile():
    with pytest.raises(InvalidConfigError):
        data.SyntheticSpec(T=10, segments=((1, 4, 0, 0.0), (6, 10, 1, 0.1)))
    with pytest.raises(InvalidConfigError):
        data.SyntheticSpec(T=10, segments=((1, 9, 0, 0.0),))


def test_generators_seed_deterministic():
    a = data.generate_mean_drift(data.SyntheticSpec(seed=5))
    b = data.generate_mean_drift(data.SyntheticSpec(seed=5))
    assert np.array_equal(a.x, b.x)
    c = data.generate_seizure_surrogate(data.SeizureSpec(seed=5))
    d = data.generate_seizure_surrogate(data.SeizureSpec(seed=5))
    assert np.array_equal(c.x, d.x)
    assert not np.array_equal(c.x, data.generate_seizure_surrogate(data.SeizureSpec(seed=6)).x)


def test_surrogate_layout():
    spec = data.SeizureSpec()
    s = data.generate_seizure_surrogate(spec)
    assert len(s) == spec.T == 5000
    ls, st = s.truth["log_sigma_true"], s.truth["state_true"]
    assert np.all(st[3550:3900] == 1) and np.all(st[4200:4400] == 2)
    assert ls[3899] == pytest.approx(1.0) and ls[4399] == pytest.approx(-1.0)
    assert s.change_times() == [(3550, 1), (3900, 0), (4200, 2), (4400, 0)]


def test_surrogate_zero_onset_is_jump():
    s = data.generate_seizure_surrogate(data.SeizureSpec(n_onset=0, seed=1))
    ls = s.truth["log_sigma_true"]
    i = data.SeizureSpec().n_train + data.SeizureSpec().n_pre
    assert ls[i - 1] == -1.0 and ls[i] == 1.0
    assert not np.any(s.truth["state_true"] == 1)


def test_surrogate_peak_sd():
    spec = data.SeizureSpec(seed=2)
    s = data.generate_seizure_surrogate(spec)
    a = np.asarray(spec.alpha)
    lo = spec.n_train + spec.n_pre + spec.n_onset
    seg = slice(lo, lo + spec.n_plateau)
    x = s.x
    resid = x[seg] - a[0] * x[lo - 1:lo - 1 + spec.n_plateau] - a[1] * x[lo - 2:lo - 2 + spec.n_plateau]
    assert abs(resid.std() - math.e) < 0.1 * math.e


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_surrogate_head_refit(seed):
    s = data.generate_seizure_surrogate(data.SeizureSpec(seed=seed))
    fit = data.fit_ar(s.x[:3000], 2)
    assert np.all(np.abs(fit.alpha - [0.62, -0.18]) < 0.05)
    assert fit.log_sigma == pytest.approx(-1.0, abs=0.05)


# -- preprocessing ------------------------------------------------------------

def _tone(freq, seconds=60, fs=100):
    t = np.arange(seconds * fs) / fs
    return np.sin(2 * math.pi * freq * t)


def test_passband_tone_preserved():
    y = data.preprocess_eeg(_tone(1.0), normalize=False)
    core = y[50:-50]  # away from the edges
    amp = math.sqrt(2) * core.std()
    assert abs(amp - 1.0) < 0.01
    assert y.shape[0] == 600


def test_stopband_tone_attenuated():
    y = data.preprocess_eeg(_tone(20.0), normalize=False)
    amp = math.sqrt(2) * y[50:-50].std()
    assert 20 * math.log10(amp) < -20


def test_output_standardized():
    rng = np.random.default_rng(0)
    y = data.preprocess_eeg(rng.normal(3.0, 2.0, 5000) + _tone(0.5, 50))
    assert abs(y.mean()) < 1e-9 and abs(y.std() - 1.0) < 1e-9


def test_constant_input_cannot_be_normalized():
    with pytest.raises(data.DegenerateInputError):
        data.preprocess_eeg(np.full(1000, 4.2))
    assert np.allclose(data.preprocess_eeg(np.full(1000, 4.2), normalize=False), 4.2)


@pytest.mark.parametrize("kw", [dict(source_hz=95), dict(lowpass_hz=60.0), dict(target_hz=0)])
def test_preprocess_config_errors(kw):
    with pytest.raises(InvalidConfigError):
        data.preprocess_eeg(_tone(1.0), **kw)


def test_preprocess_rejects_nan():
    x = _tone(1.0)
    x[10] = np.nan
    with pytest.raises(InvalidInputError):
        data.preprocess_eeg(x)


# -- AR fitting ---------------------------------------------------------------

def test_fit_noise_free_ar1():
    x = 3.0 * 0.5 ** np.arange(60)
    fit = data.fit_ar(x, 1)
    assert abs(fit.alpha[0] - 0.5) < 1e-10


def test_fit_simulated_ar2():
    rng = np.random.default_rng(0)
    n = 3200
    x = np.zeros(n)
    e = math.exp(-1) * rng.standard_normal(n)
    for i in range(2, n):
        x[i] = 0.62 * x[i - 1] - 0.18 * x[i - 2] + e[i]
    fit = data.fit_ar(x[200:], 2)
    assert np.all(np.abs(fit.alpha - [0.62, -0.18]) < 0.03)
    assert fit.log_sigma == pytest.approx(-1.0, abs=0.05)
    assert 0 < fit.r_squared < 1


def test_fit_singular_and_short():
    with pytest.raises(data.SingularFitError):
        data.fit_ar(np.zeros(100), 2)
    with pytest.raises(InvalidInputError):
        data.fit_ar(np.ones(20), 2)


# -- CSV ----------------------------------------------------------------------

def test_read_single_column(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("x\n0.5\n1.5\n-2\n3e-3\n7\n", encoding="utf-8")
    s = data.read_csv_stream(p)
    assert list(s.x) == [0.5, 1.5, -2.0, 0.003, 7.0] and list(s.t) == [1, 2, 3, 4, 5]


def test_truth_columns_round_trip(tmp_path):
    s = data.generate_mean_drift(data.SyntheticSpec(seed=3))
    p = tmp_path / "s.csv"
    data.write_stream_csv(p, s)
    back = data.read_csv_stream(p)
    assert np.array_equal(back.x, s.x) and np.array_equal(back.t, s.t)
    for k in ("mu_true", "state_true", "nu_true"):
        assert np.array_equal(back.truth[k], s.truth[k])
    recs = list(data.iter_csv_records(p))
    assert recs[30].state_true == 1 and recs[30].mu_true == s.truth["mu_true"][30]


def test_malformed_row_named(tmp_path):
    lines = ["t,x"] + [f"{i},{0.1 * i}" for i in range(1, 37)] + ["37,abc", "38,1.0"]
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(data.CsvFormatError, match="row 37"):
        data.read_csv_stream(p)


def test_missing_column_and_empty(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("t,y\n1,2\n", encoding="utf-8")
    with pytest.raises(data.CsvFormatError, match="missing column"):
        data.read_csv_stream(p)
    (tmp_path / "e.csv").write_text("", encoding="utf-8")
    with pytest.raises(data.CsvFormatError, match="empty"):
        data.read_csv_stream(tmp_path / "e.csv")
    (tmp_path / "h.csv").write_text("x\n", encoding="utf-8")
    with pytest.raises(data.CsvFormatError, match="no data"):
        data.read_csv_stream(tmp_path / "h.csv")


def test_time_must_increase(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("t,x\n1,0\n3,0\n2,0\n", encoding="utf-8")
    with pytest.raises(data.CsvFormatError, match="row 3"):
        data.read_csv_stream(p)


def test_float_format_round_trips():
    rng = np.random.default_rng(4)
    for v in rng.standard_normal(1000) * 10.0 ** rng.integers(-300, 300, 1000):
        assert float(data.fmt(v)) == v
    assert data.fmt(3) == "3" and data.fmt(None) == "" and data.fmt("bocd") == "bocd"
