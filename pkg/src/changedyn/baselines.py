"""Comparison detectors: a jump change-point particle model and Bayesian
Online Changepoint Detection (BOCD) with conjugate Gaussian models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from . import filter as pf
from .detect import AlarmRecord, ThresholdPolicy, detect_step, threshold_value
from .model import InvalidConfigError, InvalidInputError, ModelConfig, StateSpec, ThetaVector


# ---------------------------------------------------------------------------
# change-point particle baseline


@dataclass(frozen=True)
class ChangePointBaselineConfig:
    """Each state pins theta to a fixed value; theta jumps at change-points."""

    state_theta: np.ndarray
    hazard: tuple
    transition_matrix: np.ndarray
    n_particles: int = 2000
    policy: ThresholdPolicy = field(default_factory=lambda: ThresholdPolicy.fixed(99))
    initial_state: int = 0

    def __post_init__(self):
        st = np.atleast_2d(np.asarray(self.state_theta, dtype=float))
        if not np.all(np.isfinite(st)):
            raise InvalidConfigError("state theta values must be finite")
        object.__setattr__(self, "state_theta", st)

    @property
    def p(self) -> int:
        return self.state_theta.shape[1] - 2

    def to_model_config(self) -> ModelConfig:
        n_states, m = self.state_theta.shape
        zeros = np.zeros((n_states, 2 * m))
        spec = StateSpec(eta_min=zeros, eta_max=zeros, hazard=self.hazard,
                         transition_matrix=self.transition_matrix)
        return ModelConfig(
            p=self.p,
            state_spec=spec,
            initial_theta=ThetaVector.from_array(self.state_theta[self.initial_state]),
            initial_state=self.initial_state,
            reset_theta=self.state_theta,
        )


def particle_detector_step(pset: pf.ParticleSet, x_next: float, policy: ThresholdPolicy):
    """Filter one observation, test for change, and install tau on alarm."""
    pset = pf.step(pset, x_next)
    alarm = detect_step(pset, policy)
    if alarm is not None:
        pset = pset.with_tau(alarm.tau_after)
    return pset, alarm


def changepoint_baseline_init(cfg: ChangePointBaselineConfig, x0_window=(), seed: int = 0,
                              workers: int = 1, backend=None) -> pf.ParticleSet:
    return pf.init(cfg.to_model_config(), cfg.n_particles, x0_window, seed=seed,
                   workers=workers, backend=backend)


def changepoint_baseline_step(pset: pf.ParticleSet, x_next: float, cfg: ChangePointBaselineConfig):
    return particle_detector_step(pset, x_next, cfg.policy)


# ---------------------------------------------------------------------------
# BOCD


@dataclass(frozen=True)
class NormalGammaModel:
    """Unknown mean and precision: ``mu | lam ~ N(mu0, 1/(kappa0 lam))``,
    ``lam ~ Gamma(alpha0, rate=beta0)``."""

    mu0: float = 1.0
    kappa0: float = 1.0 / 0.03
    alpha0: float = 0.001
    beta0: float = 0.001

    @classmethod
    def from_prior_variance(cls, mu0: float, var0: float, alpha0: float = 0.001,
                            beta0: float = 0.001) -> "NormalGammaModel":
        """Pick kappa0 so that the prior variance of mu at the prior-mean
        precision equals ``var0``."""
        return cls(mu0=mu0, kappa0=beta0 / (alpha0 * var0), alpha0=alpha0, beta0=beta0)

    def prior(self) -> dict:
        return {"mu": np.array([self.mu0]), "kappa": np.array([self.kappa0]),
                "alpha": np.array([self.alpha0]), "beta": np.array([self.beta0])}

    def log_predictive(self, st: dict, x: float) -> np.ndarray:
        a, b, k, mu = st["alpha"], st["beta"], st["kappa"], st["mu"]
        scale2 = b * (k + 1.0) / (a * k)
        return _student_t_logpdf(x, 2.0 * a, mu, scale2)

    def predictive_location(self, st: dict) -> np.ndarray:
        return st["mu"]

    def update(self, st: dict, x: float) -> dict:
        a, b, k, mu = st["alpha"], st["beta"], st["kappa"], st["mu"]
        return {"mu": (k * mu + x) / (k + 1.0), "kappa": k + 1.0, "alpha": a + 0.5,
                "beta": b + k * (x - mu) ** 2 / (2.0 * (k + 1.0))}

    def log_marginal(self, xs) -> float:
        """Closed-form segment evidence (used by tests as an oracle)."""
        xs = np.asarray(xs, dtype=float)
        n = xs.shape[0]
        if n == 0:
            return 0.0
        xbar = xs.mean()
        kn = self.kappa0 + n
        an = self.alpha0 + n / 2.0
        bn = (self.beta0 + 0.5 * np.sum((xs - xbar) ** 2)
              + self.kappa0 * n * (xbar - self.mu0) ** 2 / (2.0 * kn))
        return float(gammaln(an) - gammaln(self.alpha0) + self.alpha0 * math.log(self.beta0)
                     - an * math.log(bn) + 0.5 * math.log(self.kappa0 / kn)
                     - 0.5 * n * math.log(2.0 * math.pi))


@dataclass(frozen=True)
class ZeroMeanGammaModel:
    """Zero-mean Gaussian with unknown precision ``lam ~ Gamma(alpha0, rate=beta0)``."""

    alpha0: float = 0.001
    beta0: float = 0.001

    def prior(self) -> dict:
        return {"alpha": np.array([self.alpha0]), "beta": np.array([self.beta0])}

    def log_predictive(self, st: dict, x: float) -> np.ndarray:
        a, b = st["alpha"], st["beta"]
        return _student_t_logpdf(x, 2.0 * a, 0.0, b / a)

    def predictive_location(self, st: dict) -> np.ndarray:
        return np.zeros_like(st["alpha"])

    def update(self, st: dict, x: float) -> dict:
        return {"alpha": st["alpha"] + 0.5, "beta": st["beta"] + 0.5 * x * x}

    def log_marginal(self, xs) -> float:
        xs = np.asarray(xs, dtype=float)
        n = xs.shape[0]
        an = self.alpha0 + n / 2.0
        bn = self.beta0 + 0.5 * np.sum(xs ** 2)
        return float(gammaln(an) - gammaln(self.alpha0) + self.alpha0 * math.log(self.beta0)
                     - an * math.log(bn) - 0.5 * n * math.log(2.0 * math.pi))


def _student_t_logpdf(x, df, loc, scale2):
    z2 = (x - loc) ** 2 / scale2
    return (gammaln((df + 1.0) / 2.0) - gammaln(df / 2.0) - 0.5 * np.log(df * math.pi * scale2)
            - (df + 1.0) / 2.0 * np.log1p(z2 / df))


@dataclass(frozen=True)
class BocdState:
    """Runlength posterior after ``t`` observations.

    ``runlengths[k]`` counts the observations in hypothesis k's current
    segment; ``r = 0`` is a segment that has not seen data yet.
    """

    model: object
    hazard_rate: float
    t: int
    runlengths: np.ndarray
    log_probs: np.ndarray
    stats: dict
    prune_threshold: float = 1e-12
    log_evidence: float = 0.0

    @property
    def runlength_posterior(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def dense_posterior(self) -> np.ndarray:
        """Posterior over r = 0..t with zeros for pruned hypotheses."""
        out = np.zeros(self.t + 1)
        out[self.runlengths] = np.exp(self.log_probs)
        return out

    def predictive_location(self) -> float:
        return float(np.sum(np.exp(self.log_probs) * self.model.predictive_location(self.stats)))


def bocd_init(model, hazard_rate: float, prune_threshold: float = 1e-12) -> BocdState:
    if not 0.0 < hazard_rate < 1.0:
        raise InvalidConfigError(f"BOCD hazard must lie in (0, 1), got {hazard_rate}")
    return BocdState(model=model, hazard_rate=float(hazard_rate), t=0,
                     runlengths=np.zeros(1, dtype=np.int64), log_probs=np.zeros(1),
                     stats=model.prior(), prune_threshold=float(prune_threshold))


def bocd_step(state: BocdState, x_next: float) -> BocdState:
    """Growth/change-point message passing for one observation."""
    x = float(x_next)
    if not math.isfinite(x):
        raise InvalidInputError(f"observation at t={state.t + 1} is not finite")
    model = state.model
    log_pred = model.log_predictive(state.stats, x) + state.log_probs
    log_h = math.log(state.hazard_rate)
    log_1mh = math.log1p(-state.hazard_rate)
    log_cp = logsumexp(log_pred) + log_h
    joint = np.concatenate([[log_cp], log_pred + log_1mh])
    log_norm = logsumexp(joint)
    log_probs = joint - log_norm
    runlengths = np.concatenate([[0], state.runlengths + 1])
    upd = model.update(state.stats, x)
    prior = model.prior()
    stats = {k: np.concatenate([prior[k], upd[k]]) for k in upd}
    if state.prune_threshold > 0:
        keep = log_probs > math.log(state.prune_threshold)
        keep[np.argmax(log_probs)] = True
        if not keep.all():
            runlengths = runlengths[keep]
            stats = {k: v[keep] for k, v in stats.items()}
            log_probs = log_probs[keep] - logsumexp(log_probs[keep])
    return replace(state, t=state.t + 1, runlengths=runlengths, log_probs=log_probs, stats=stats,
                   log_evidence=state.log_evidence + float(log_norm))


def bocd_odds(state: BocdState, tau: int) -> tuple[float, bool]:
    """``P(r < t - tau) / P(r >= t - tau)`` and a zero-denominator flag."""
    changed = state.runlengths < state.t - tau
    if not changed.any():
        return 0.0, False
    if changed.all():
        return math.inf, True
    log_z = logsumexp(state.log_probs[changed]) - logsumexp(state.log_probs[~changed])
    return math.exp(min(log_z, 700.0)), False


def bocd_detect(state: BocdState, policy: ThresholdPolicy, tau: int) -> Optional[AlarmRecord]:
    z, denom_zero = bocd_odds(state, tau)
    if denom_zero or z > threshold_value(policy):
        return AlarmRecord(time=state.t, z_value=z, detected_state=None, tau_after=state.t,
                           denom_zero=denom_zero)
    return None
