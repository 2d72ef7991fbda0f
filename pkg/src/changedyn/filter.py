"""Sequential importance resampling over change-dynamic particles.

Each step proposes from the prior (runlength, state/phi at change-points,
then the theta random walk), weights by the one-step likelihood of the new
observation, and multinomially resamples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .model import (InvalidConfigError, InvalidInputError, ModelConfig, Particle, PhiVector,
                    ThetaVector)

RESAMPLE_SLOT = 1 << 20


class DegenerateLikelihoodError(RuntimeError):
    """Every particle assigned zero (or non-finite) likelihood."""

    def __init__(self, t, message="all particle likelihoods are zero or non-finite"):
        super().__init__(f"t={t}: {message}")
        self.t = t


@dataclass(frozen=True)
class ParticleSet:
    """Struct-of-arrays particle approximation at time ``t``.

    ``log_weights`` hold normalized log-weights; after resampling they are
    all ``-log(N)``. ``x_window`` lists the last p observations, most recent
    first.
    """

    config: ModelConfig
    theta: np.ndarray
    phi: np.ndarray
    state: np.ndarray
    runlength: np.ndarray
    log_weights: np.ndarray
    t: int
    tau: int
    x_window: np.ndarray
    seed: int
    params: tuple
    workers: int = 1
    backend: str | None = None
    pending_x: float | None = None

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def particle(self, i: int) -> Particle:
        return Particle(
            theta_window=ThetaVector.from_array(self.theta[i]),
            phi=PhiVector.from_array(self.phi[i]),
            state=int(self.state[i]),
            runlength=int(self.runlength[i]),
            weight=float(np.exp(self.log_weights[i])),
        )

    def with_tau(self, tau: int) -> "ParticleSet":
        if tau > self.t:
            raise InvalidInputError(f"tau={tau} is after t={self.t}")
        return replace(self, tau=int(tau))


def kernel_params(config: ModelConfig) -> tuple:
    spec = config.state_spec
    return (np.ascontiguousarray(spec.hazard), np.ascontiguousarray(spec.transition_cdf()),
            np.ascontiguousarray(spec.lower), np.ascontiguousarray(spec.upper),
            config.reset_theta)


def init(config: ModelConfig, n_particles: int, x0_window=(), seed: int = 0, workers: int = 1,
         backend: str | None = None) -> ParticleSet:
    """Draw N particles from the initial densities; all runlengths are 0."""
    if n_particles < 1:
        raise InvalidConfigError("n_particles must be at least 1")
    if seed < 0:
        raise InvalidConfigError("seed must be non-negative")
    xw = np.asarray(x0_window, dtype=float).ravel()
    if xw.shape[0] != config.p or not np.all(np.isfinite(xw)):
        raise InvalidConfigError(f"x0_window must hold {config.p} finite values")
    m = config.m
    idx = np.arange(n_particles)
    s0 = config.initial_state
    if config.initial_phi is not None:
        phi = np.tile(config.initial_phi.to_array(), (n_particles, 1))
    else:
        lo, hi = config.state_spec.lower[s0], config.state_spec.upper[s0]
        u = kernels.uniforms(seed, 0, kernels.SLOT_PHI + np.arange(2 * m)[None, :], idx[:, None])
        phi = lo + (hi - lo) * u
    theta = np.tile(config.initial_theta.to_array(), (n_particles, 1))
    sd = config.initial_theta_sd
    if np.any(sd > 0):
        slots = kernels.slot_normal(m) + 2 * np.arange(m)
        theta = theta + sd * kernels.normals(seed, 0, slots[None, :], idx[:, None])
    return ParticleSet(
        config=config,
        theta=theta,
        phi=phi,
        state=np.full(n_particles, s0, dtype=np.int64),
        runlength=np.zeros(n_particles, dtype=np.int64),
        log_weights=np.full(n_particles, -np.log(n_particles)),
        t=0,
        tau=0,
        x_window=xw,
        seed=int(seed),
        params=kernel_params(config),
        workers=int(workers),
        backend=backend,
    )


def propose(pset: ParticleSet) -> ParticleSet:
    """Prior proposal for time t + 1. ``t`` itself advances in ``resample``."""
    theta, phi, state, r = kernels.propose(
        pset.theta, pset.phi, pset.state, pset.runlength, pset.t, pset.tau, pset.seed,
        pset.params, workers=pset.workers, backend=pset.backend)
    return replace(pset, theta=theta, phi=phi, state=state, runlength=r)


def normalize_log_weights(logw: np.ndarray, t: int) -> np.ndarray:
    if np.any(np.isnan(logw)):
        raise DegenerateLikelihoodError(t, "NaN particle likelihood")
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateLikelihoodError(t)
    w = np.exp(logw - top)
    return logw - top - np.log(w.sum())


def weight(pset: ParticleSet, x_next: float) -> ParticleSet:
    """Set normalized weights from the likelihood of ``x_next``."""
    x_next = float(x_next)
    if not np.isfinite(x_next):
        raise InvalidInputError(f"observation at t={pset.t + 1} is not finite")
    logw = kernels.log_likelihood(pset.theta, pset.x_window, x_next, workers=pset.workers,
                                  backend=pset.backend)
    return replace(pset, log_weights=normalize_log_weights(logw, pset.t + 1), pending_x=x_next)


def multinomial_indices(log_weights: np.ndarray, seed: int, step: int) -> np.ndarray:
    n = log_weights.shape[0]
    cdf = np.cumsum(np.exp(log_weights))
    u = kernels.uniforms(seed, step, RESAMPLE_SLOT, np.arange(n)) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)


def resample(pset: ParticleSet, indices: np.ndarray | None = None) -> ParticleSet:
    """Multinomial resampling after ``weight``; advances t and the
    observation window. ``indices`` overrides the ancestor draw."""
    if pset.pending_x is None:
        raise InvalidInputError("resample called before weight")
    idx = multinomial_indices(pset.log_weights, pset.seed, pset.t + 1) if indices is None else indices
    n = pset.n
    xw = pset.x_window
    if xw.shape[0]:
        xw = np.concatenate([[pset.pending_x], xw[:-1]])
    return replace(
        pset,
        theta=pset.theta[idx],
        phi=pset.phi[idx],
        state=pset.state[idx],
        runlength=pset.runlength[idx],
        log_weights=np.full(n, -np.log(n)),
        t=pset.t + 1,
        x_window=xw,
        pending_x=None,
    )


def step(pset: ParticleSet, x_next: float) -> ParticleSet:
    """One full propose / weight / resample cycle."""
    return resample(weight(propose(pset), x_next))
