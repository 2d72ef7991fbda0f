import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from changedyn import kernels, model
from changedyn.model import (InvalidConfigError, InvalidInputError, ModelConfig, PhiVector,
                             StateSpec, ThetaVector)


class _ZeroNormal:
    """Test hook: an rng whose normal draws are all zero."""

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


# --- types ------------------------------------------------------------------


def test_theta_roundtrip():
    th = ThetaVector(alpha=[0.62, -0.18], mu=0.1, log_sigma=-1.0)
    assert th.p == 2 and th.m == 4
    assert np.array_equal(ThetaVector.from_array(th.to_array()).to_array(), th.to_array())
    assert th.sigma == pytest.approx(math.exp(-1))


@pytest.mark.parametrize("bad", [dict(mu=np.nan), dict(log_sigma=np.inf), dict(alpha=[np.nan])])
def test_theta_rejects_non_finite(bad):
    kw = dict(alpha=[0.5], mu=0.0, log_sigma=0.0)
    kw.update(bad)
    with pytest.raises(InvalidInputError):
        ThetaVector(**kw)


def test_phi_validation():
    phi = PhiVector(nu=[0.1, 0.0], gamma=[0.0, 0.2])
    assert phi.m == 2
    assert np.array_equal(PhiVector.from_array(phi.to_array()).to_array(), [0.1, 0.0, 0.0, 0.2])
    with pytest.raises(InvalidInputError):
        PhiVector(nu=[0.0], gamma=[-1e-9])
    with pytest.raises(InvalidInputError):
        PhiVector(nu=[0.0, 1.0], gamma=[0.0])


def test_state_spec_canonicalizes_reversed_bounds():
    # out-of-order nu bounds for the drifting state
    spec = model.two_state_spec([[0, 0, 1e-4, 0], [-0.0022, 0, 1e-4, 0]],
                                [[0, 0, 1e-3, 0], [-0.018, 0, 1e-3, 0]], [1 / 25, 1 / 100])
    assert spec.lower[1, 0] == -0.018 and spec.upper[1, 0] == -0.0022
    assert np.all(spec.lower <= spec.upper)
    assert spec.num_states == 2 and spec.m == 2


@pytest.mark.parametrize("kw", [
    dict(hazard=[0.0, 0.5]),
    dict(hazard=[1.5, 0.5]),
    dict(transition_matrix=[[0.5, 0.4], [1.0, 0.0]]),
    dict(transition_matrix=[[-0.5, 1.5], [1.0, 0.0]]),
    dict(eta_min=[[0, 0], [0, -1]], eta_max=[[0, 0], [0, 0]]),  # negative gamma bound
])
def test_state_spec_validation(kw):
    base = dict(eta_min=[[0, 0], [0, 0]], eta_max=[[0, 0], [0, 0]], hazard=[0.5, 0.5],
                transition_matrix=[[0, 1], [1, 0]])
    base.update(kw)
    with pytest.raises(InvalidConfigError):
        StateSpec(**base)


def test_transition_rows_within_tolerance_accepted():
    P = np.array([[0.0, 1.0 - 5e-13], [1.0, 0.0]])
    StateSpec(eta_min=[[0, 0], [0, 0]], eta_max=[[0, 0], [0, 0]], hazard=[.5, .5],
              transition_matrix=P)


def test_transition_cdf_never_selects_zero_probability_state():
    P = model.uniform_offdiagonal(3)
    spec = StateSpec(eta_min=np.zeros((3, 2)), eta_max=np.zeros((3, 2)), hazard=[.1] * 3,
                     transition_matrix=P)
    cdf = spec.transition_cdf()
    assert np.all(cdf[:, -1] == 1.0)
    # a uniform draw just below 1 from state 2 must not land on state 2
    assert np.searchsorted(cdf[2], 1 - 1e-17, side="right") != 2


def test_model_config_rejects_q_and_shape_errors():
    spec = model.two_state_spec(np.zeros((2, 4)), np.zeros((2, 4)), [.5, .5])
    th = ThetaVector(alpha=[], mu=0.0, log_sigma=0.0)
    with pytest.raises(InvalidConfigError):
        ModelConfig(p=0, state_spec=spec, initial_theta=th, q=2)
    with pytest.raises(InvalidConfigError):
        ModelConfig(p=1, state_spec=spec, initial_theta=th)
    with pytest.raises(InvalidConfigError):
        ModelConfig(p=0, state_spec=spec, initial_theta=th, initial_state=2)


# --- ar_step_density / sample -------------------------------------------------


def test_density_standard_normal_peak():
    th = ThetaVector(alpha=[], mu=0.0, log_sigma=0.0)
    assert model.ar_step_density(th, [], 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)


def test_density_synthetic_peak():
    th = ThetaVector(alpha=[], mu=1.0, log_sigma=math.log(0.05))
    assert model.ar_step_density(th, [], 1.0) == pytest.approx(7.978845608028654, rel=1e-13)


def test_density_ar2_against_scipy():
    th = ThetaVector(alpha=[0.62, -0.18], mu=0.0, log_sigma=-1.0)
    oracle = stats.norm.pdf(0.53, loc=0.62 * 1.0 - 0.18 * 0.5, scale=math.exp(-1))
    got = model.ar_step_density(th, [1.0, 0.5], 0.53)
    assert got == pytest.approx(oracle, rel=1e-13)
    assert got == pytest.approx(1.0844375514192275, rel=1e-12)  # frozen oracle value


def test_density_lag_convention():
    # alpha[0] pairs with the most recent observation
    th = ThetaVector(alpha=[1.0, 0.0], mu=0.0, log_sigma=0.0)
    assert model.ar_mean(th, [2.0, 5.0]) == 2.0


@pytest.mark.parametrize("args", [([np.nan], 0.0), ([0.0], np.inf), ([0.0, 1.0], 0.0)])
def test_density_invalid_input(args):
    th = ThetaVector(alpha=[0.5], mu=0.0, log_sigma=0.0)
    with pytest.raises(InvalidInputError):
        model.ar_step_density(th, *args)


@given(mu=st.floats(-5, 5), log_sigma=st.floats(-3, 2), x=st.floats(-10, 10))
def test_density_positive(mu, log_sigma, x):
    th = ThetaVector(alpha=[], mu=mu, log_sigma=log_sigma)
    assert model.ar_step_logdensity(th, [], x) > -np.inf
    assert model.ar_step_density(th, [], x) >= 0.0


@pytest.mark.parametrize("mu,log_sigma", [(0.0, 0.0), (1.0, math.log(0.05)), (-2.0, 1.0)])
def test_density_integrates_to_one(mu, log_sigma):
    th = ThetaVector(alpha=[0.3], mu=mu, log_sigma=log_sigma)
    c = model.ar_mean(th, [0.7])
    s = math.exp(log_sigma)
    total, _ = integrate.quad(lambda x: model.ar_step_density(th, [0.7], x), c - 12 * s, c + 12 * s,
                              epsabs=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_sample_with_zero_noise_returns_mean():
    th = ThetaVector(alpha=[0.62, -0.18], mu=0.2, log_sigma=-1.0)
    assert model.ar_step_sample(th, [1.0, 0.5], _ZeroNormal()) == model.ar_mean(th, [1.0, 0.5])


def test_sample_moments():
    rng = np.random.default_rng(0)
    th = ThetaVector(alpha=[], mu=1.0, log_sigma=math.log(0.05))
    xs = np.array([model.ar_step_sample(th, [], rng) for _ in range(100_000)])
    assert abs(xs.mean() - 1.0) < 0.001
    assert abs(xs.std() - 0.05) < 0.002


def test_sample_ar1_autocorrelation():
    rng = np.random.default_rng(1)
    th = ThetaVector(alpha=[0.5], mu=0.0, log_sigma=0.0)
    x = np.zeros(20_000)
    for i in range(1, x.shape[0]):
        x[i] = model.ar_step_sample(th, [x[i - 1]], rng)
    rho = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(rho - 0.5) < 0.05


# --- change-dynamic, runlength and change-point proposals -----------------------


def test_change_dynamic_identity():
    th = ThetaVector(alpha=[0.1], mu=1.0, log_sigma=-2.0)
    out = model.change_dynamic_step(th, PhiVector(nu=[0, 0, 0], gamma=[0, 0, 0]),
                                    np.random.default_rng(0))
    assert np.array_equal(out.to_array(), th.to_array())


def test_change_dynamic_drift():
    th = ThetaVector(alpha=[], mu=1.0, log_sigma=math.log(0.05))
    out = model.change_dynamic_step(th, PhiVector(nu=[-0.002, 0.0], gamma=[0.0, 0.0]), _ZeroNormal())
    assert out.mu == pytest.approx(0.998, abs=1e-15)
    assert out.log_sigma == th.log_sigma


def test_change_dynamic_diffusion_sd():
    n = 100_000
    theta = np.zeros(n)  # n independent components in one call
    out = model.change_dynamic_step(theta, PhiVector(nu=np.zeros(n), gamma=np.full(n, 0.0005)),
                                    np.random.default_rng(2))
    sd = np.std(out.to_array() - theta)
    assert abs(sd - 0.0005) < 0.05 * 0.0005


def test_change_dynamic_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        model.change_dynamic_step(np.zeros(3), PhiVector(nu=[0, 0], gamma=[0, 0]), _ZeroNormal())


class _Fixed:
    def __init__(self, u):
        self.u = u

    def random(self, size=None):
        return self.u if size is None else np.full(size, self.u)


def test_runlength_gated():
    # r < t - tau: a change-point already happened, no second reset
    assert model.runlength_step(3, 10, 0, 1.0, _Fixed(0.0)) == 4


def test_runlength_forced_reset():
    assert model.runlength_step(12, 10, 0, 1.0, _Fixed(0.999)) == 0


def test_runlength_reset_frequency():
    rng = np.random.default_rng(3)
    resets = sum(model.runlength_step(12, 10, 0, 1 / 25, rng) == 0 for _ in range(100_000))
    assert abs(resets / 100_000 - 0.04) < 0.005


@pytest.mark.parametrize("h", [0.0, -0.1, 1.01, np.nan])
def test_runlength_bad_hazard(h):
    with pytest.raises(InvalidInputError):
        model.runlength_step(1, 1, 0, h, _Fixed(0.5))


def test_proposal_two_state_always_switches():
    spec = model.two_state_spec(np.zeros((2, 4)), np.zeros((2, 4)), [.5, .5])
    rng = np.random.default_rng(4)
    assert all(model.changepoint_proposal(0, spec, rng)[0] == 1 for _ in range(200))


def test_proposal_degenerate_bounds():
    c = np.array([0.3, -0.2, 0.01, 0.0])
    spec = model.two_state_spec([c, c], [c, c], [.5, .5])
    s, phi = model.changepoint_proposal(1, spec, np.random.default_rng(5))
    assert s == 0 and np.array_equal(phi.to_array(), c)


def test_proposal_uniformity_ks():
    lo = np.array([[-0.0033, 0.0003], [0.0033, 0.0003]])
    hi = np.array([[0.0033, 0.0003], [0.013, 0.0003]])
    spec = model.two_state_spec(lo, hi, [1e-4, 1 / 375])
    rng = np.random.default_rng(6)
    nus = np.array([model.changepoint_proposal(0, spec, rng)[1].nu[0] for _ in range(10_000)])
    assert np.all((nus >= 0.0033) & (nus <= 0.013))
    assert stats.kstest(nus, stats.uniform(0.0033, 0.013 - 0.0033).cdf).pvalue > 0.01


# --- trajectory properties (prior simulation through the kernels) ---------------


def _simulate_prior(cfg, n, steps, tau=0, seed=0):
    """Propose-only trajectories (no weighting) recorded per step."""
    from changedyn.filter import kernel_params
    params = kernel_params(cfg)
    theta = np.tile(cfg.initial_theta.to_array(), (n, 1))
    phi = np.tile(cfg.state_spec.lower[cfg.initial_state], (n, 1))
    state = np.zeros(n, dtype=np.int64)
    r = np.zeros(n, dtype=np.int64)
    hist = []
    for t in range(steps):
        theta, phi, state, r = kernels.propose(theta, phi, state, r, t, tau, seed, params)
        hist.append((theta.copy(), phi.copy(), state.copy(), r.copy()))
    return hist


def _small_cfg(reset_theta=None, nu=(0.1, 0.3), gamma=0.01):
    spec = model.two_state_spec([[0, 0, 0, 0], [nu[0], 0, gamma, 0]],
                                [[0, 0, gamma, 0], [nu[1], 0, gamma, 0]], [0.1, 0.2])
    return ModelConfig(p=0, state_spec=spec, initial_theta=ThetaVector([], 0.0, 0.0),
                       reset_theta=reset_theta)


def test_persistence_of_state_and_phi():
    hist = _simulate_prior(_small_cfg(), 500, 60)
    for (_, ph0, s0, _), (_, ph1, s1, r1) in zip(hist[:-1], hist[1:]):
        grew = r1 > 0
        assert np.array_equal(s0[grew], s1[grew])
        assert np.array_equal(ph0[grew], ph1[grew])


def test_gating_one_reset_per_interval():
    hist = _simulate_prior(_small_cfg(), 500, 80, tau=0)
    resets = sum((r == 0).astype(int) for _, _, _, r in hist[1:])
    assert resets.max() <= 1
    assert resets.sum() > 0


def test_changepoint_degeneracy_piecewise_constant():
    zeros = np.zeros((2, 4))
    spec = model.two_state_spec(zeros, zeros, [0.1, 0.2])
    levels = np.array([[1.0, -3.0], [0.8, -3.0]])
    cfg = ModelConfig(p=0, state_spec=spec, initial_theta=ThetaVector([], 1.0, -3.0),
                      reset_theta=levels)
    hist = _simulate_prior(cfg, 300, 50)
    for th, _, s, _ in hist:
        assert np.array_equal(th, levels[s])
