"""Experiment configurations: the synthetic mean-drift study and the
seizure-surrogate study."""

from __future__ import annotations

import math

import numpy as np

from .baselines import ChangePointBaselineConfig, NormalGammaModel, ZeroMeanGammaModel
from .detect import ThresholdPolicy
from .model import ModelConfig, StateSpec, ThetaVector, two_state_spec, uniform_offdiagonal

# nu bounds for the drifting state. "tight" is +-10% around the true rate;
# "wide" keeps an out-of-order pair that canonicalizes to [-0.018, -0.0022].
NU_BOUNDS = {"tight": (-0.0022, -0.0018), "wide": (-0.0022, -0.018)}
SYNTH_GAMMA = (0.0001, 0.001)
SYNTH_HAZARD = (1 / 25, 1 / 100)
SYNTH_SD = 0.05


def synthetic_model(nu_bounds: str = "tight", gamma=SYNTH_GAMMA, hazard=SYNTH_HAZARD,
                    mu0: float = 1.0, noise_sd: float = SYNTH_SD) -> ModelConfig:
    """AR(0) mean-drift model, theta = [mu, log_sigma] with sigma known."""
    nu_lo, nu_hi = NU_BOUNDS[nu_bounds] if isinstance(nu_bounds, str) else nu_bounds
    g_lo, g_hi = gamma
    # phi layout: [nu_mu, nu_logsig, gamma_mu, gamma_logsig]
    eta_min = [[0.0, 0.0, g_lo, 0.0], [nu_lo, 0.0, g_lo, 0.0]]
    eta_max = [[0.0, 0.0, g_hi, 0.0], [nu_hi, 0.0, g_hi, 0.0]]
    return ModelConfig(
        p=0,
        state_spec=two_state_spec(eta_min, eta_max, hazard),
        initial_theta=ThetaVector(alpha=[], mu=mu0, log_sigma=math.log(noise_sd)),
        initial_state=0,
    )


# "informed" pins the true pre/post levels; "zero_base" puts state 0 at 0
SYNTH_CP_LEVELS = {"informed": (1.0, 0.8), "zero_base": (0.0, 0.8)}


def synthetic_changepoint(levels: str = "informed", n_particles: int = 2000,
                          policy: ThresholdPolicy | None = None, hazard=SYNTH_HAZARD,
                          noise_sd: float = SYNTH_SD) -> ChangePointBaselineConfig:
    lo, hi = SYNTH_CP_LEVELS[levels] if isinstance(levels, str) else levels
    ls = math.log(noise_sd)
    return ChangePointBaselineConfig(
        state_theta=[[lo, ls], [hi, ls]],
        hazard=hazard,
        transition_matrix=[[0.0, 1.0], [1.0, 0.0]],
        n_particles=n_particles,
        policy=policy or ThresholdPolicy.fixed(99),
    )


def synthetic_bocd(prior_var: float = 0.03, mu0: float = 1.0, alpha0: float = 0.001,
                   beta0: float = 0.001) -> NormalGammaModel:
    return NormalGammaModel.from_prior_variance(mu0, prior_var, alpha0, beta0)


SYNTH_BOCD_HAZARD = 2 / 125

# seizure study: theta = [alpha1, alpha2, mu, log_sigma]; only log_sigma drifts
SEIZURE_NU = ((-0.0033, 0.0033), (0.0033, 0.013), (-0.013, -0.0033))
SEIZURE_GAMMA = 0.0003
SEIZURE_HAZARD = (1 / 10000, 1 / 375, 1 / 375)


def seizure_model(alpha, log_sigma0: float, nu_bounds=SEIZURE_NU, gamma: float = SEIZURE_GAMMA,
                  hazard=SEIZURE_HAZARD) -> ModelConfig:
    alpha = np.asarray(alpha, dtype=float)
    p = alpha.shape[0]
    m = p + 2
    k = len(nu_bounds)
    lo = np.zeros((k, 2 * m))
    hi = np.zeros((k, 2 * m))
    for s, (a, b) in enumerate(nu_bounds):
        lo[s, m - 1], hi[s, m - 1] = a, b
        lo[s, 2 * m - 1] = hi[s, 2 * m - 1] = gamma
    spec = StateSpec(eta_min=lo, eta_max=hi, hazard=hazard, transition_matrix=uniform_offdiagonal(k))
    return ModelConfig(p=p, state_spec=spec,
                       initial_theta=ThetaVector(alpha=alpha, mu=0.0, log_sigma=log_sigma0))


def seizure_changepoint(alpha, log_sigma_levels=(-1.0, 1.0), hazard=SEIZURE_HAZARD[:2],
                        n_particles: int = 5000,
                        policy: ThresholdPolicy | None = None) -> ChangePointBaselineConfig:
    alpha = list(np.asarray(alpha, dtype=float))
    return ChangePointBaselineConfig(
        state_theta=[alpha + [0.0, log_sigma_levels[0]], alpha + [0.0, log_sigma_levels[1]]],
        hazard=hazard,
        transition_matrix=[[0.0, 1.0], [1.0, 0.0]],
        n_particles=n_particles,
        policy=policy or ThresholdPolicy.fixed(99),
    )


def seizure_bocd(alpha0: float = 0.001, beta0: float = 0.001) -> ZeroMeanGammaModel:
    return ZeroMeanGammaModel(alpha0, beta0)


SEIZURE_BOCD_HAZARD = 1 / 10000
