"""Domain types and generative equations of the change-dynamic model.

The process model is an AR(p) observation equation whose parameters
``theta = [alpha; mu; log_sigma]`` drift under a random walk with drift
(the change-dynamic). The drift/diffusion parameters ``phi = [nu; gamma]``
are piecewise constant, re-drawn from state-specific uniform priors at
change-points of a gated regenerative runlength process.

Lag convention: ``alpha[0]`` multiplies the most recent observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class InvalidInputError(ValueError):
    """Raised for non-finite or out-of-domain arguments."""


class InvalidConfigError(ValueError):
    """Raised when a model or run configuration is inconsistent."""


def _finite(name, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite, got {arr!r}")
    return arr


@dataclass(frozen=True)
class ThetaVector:
    """Process-model parameters ``[alpha; mu; log_sigma]`` of dimension p + 2."""

    alpha: np.ndarray
    mu: float
    log_sigma: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _finite("alpha", np.atleast_1d(self.alpha).ravel()))
        object.__setattr__(self, "mu", float(_finite("mu", self.mu)))
        object.__setattr__(self, "log_sigma", float(_finite("log_sigma", self.log_sigma)))

    @property
    def p(self) -> int:
        return self.alpha.shape[0]

    @property
    def m(self) -> int:
        return self.p + 2

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.alpha, [self.mu, self.log_sigma]])

    @classmethod
    def from_array(cls, arr) -> "ThetaVector":
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.shape[0] < 2:
            raise InvalidInputError("theta needs at least [mu, log_sigma]")
        return cls(alpha=arr[:-2], mu=arr[-2], log_sigma=arr[-1])


@dataclass(frozen=True)
class PhiVector:
    """Change-dynamic parameters: drift rates ``nu`` and diffusion scales ``gamma``."""

    nu: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        nu = _finite("nu", np.atleast_1d(self.nu).ravel())
        gamma = _finite("gamma", np.atleast_1d(self.gamma).ravel())
        if nu.shape != gamma.shape:
            raise InvalidInputError(f"nu and gamma lengths differ: {nu.shape} vs {gamma.shape}")
        if np.any(gamma < 0):
            raise InvalidInputError(f"gamma must be non-negative, got {gamma!r}")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "gamma", gamma)

    @property
    def m(self) -> int:
        return self.nu.shape[0]

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.nu, self.gamma])

    @classmethod
    def from_array(cls, arr) -> "PhiVector":
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.shape[0] % 2:
            raise InvalidInputError("phi must have even length 2m")
        m = arr.shape[0] // 2
        return cls(nu=arr[:m], gamma=arr[m:])


@dataclass(frozen=True)
class StateSpec:
    """Per-state uniform bounds on phi, change-point hazards and the embedded
    transition matrix.

    ``eta_min``/``eta_max`` have shape ``(K + 1, 2m)`` in phi layout. Bounds
    given in the wrong order are canonicalized component-wise, so
    ``lower``/``upper`` are always ordered.
    """

    eta_min: np.ndarray
    eta_max: np.ndarray
    hazard: np.ndarray
    transition_matrix: np.ndarray
    lower: np.ndarray = field(init=False, repr=False)
    upper: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        eta_min = np.atleast_2d(np.asarray(self.eta_min, dtype=float))
        eta_max = np.atleast_2d(np.asarray(self.eta_max, dtype=float))
        hazard = np.atleast_1d(np.asarray(self.hazard, dtype=float))
        P = np.atleast_2d(np.asarray(self.transition_matrix, dtype=float))
        n = hazard.shape[0]
        if eta_min.shape != eta_max.shape or eta_min.shape[0] != n:
            raise InvalidConfigError(
                f"bounds shapes {eta_min.shape}/{eta_max.shape} do not match {n} states"
            )
        if eta_min.shape[1] % 2:
            raise InvalidConfigError("bounds must be in phi layout (2m columns)")
        if not (np.all(np.isfinite(eta_min)) and np.all(np.isfinite(eta_max))):
            raise InvalidConfigError("bounds must be finite")
        if np.any(~(hazard > 0)) or np.any(hazard > 1):
            raise InvalidConfigError(f"hazard entries must lie in (0, 1], got {hazard!r}")
        if P.shape != (n, n) or np.any(P < 0):
            raise InvalidConfigError(f"transition matrix must be a non-negative {n}x{n} array")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidConfigError("transition matrix rows must sum to 1")
        lower = np.minimum(eta_min, eta_max)
        upper = np.maximum(eta_min, eta_max)
        m = lower.shape[1] // 2
        if np.any(lower[:, m:] < 0):
            raise InvalidConfigError("gamma bounds must be non-negative")
        for name, val in (("eta_min", eta_min), ("eta_max", eta_max), ("hazard", hazard),
                          ("transition_matrix", P), ("lower", lower), ("upper", upper)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def num_states(self) -> int:
        return self.hazard.shape[0]

    @property
    def m(self) -> int:
        return self.lower.shape[1] // 2

    def transition_cdf(self) -> np.ndarray:
        """Row-wise cumulative transition probabilities, exactly 1 from the
        last reachable state onward so that a uniform draw never lands on a
        zero-probability state."""
        P = self.transition_matrix
        cdf = np.cumsum(P, axis=1)
        for s in range(P.shape[0]):
            last = np.flatnonzero(P[s] > 0)[-1]
            cdf[s, last:] = 1.0
        return cdf


@dataclass(frozen=True)
class ModelConfig:
    """Full generative configuration.

    ``initial_phi=None`` means phi_0 is drawn from the bounds of the initial
    state. ``initial_theta_sd`` spreads theta_0 as an independent Gaussian
    around ``initial_theta`` (zeros give a degenerate initial density).
    ``reset_theta``, when given, holds one theta per state and replaces theta
    at change-points (the degenerate jump rule of a change-point model).
    """

    p: int
    state_spec: StateSpec
    initial_theta: ThetaVector
    initial_state: int = 0
    initial_phi: Optional[PhiVector] = None
    q: int = 1
    initial_theta_sd: Optional[np.ndarray] = None
    reset_theta: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.p < 0:
            raise InvalidConfigError("p must be non-negative")
        if self.q != 1:
            raise InvalidConfigError("only lag order q = 1 change-dynamics are supported")
        if self.initial_theta.p != self.p:
            raise InvalidConfigError(
                f"initial theta has {self.initial_theta.p} AR coefficients, expected {self.p}"
            )
        if self.state_spec.m != self.m:
            raise InvalidConfigError(f"state bounds have m={self.state_spec.m}, expected {self.m}")
        if not 0 <= self.initial_state < self.state_spec.num_states:
            raise InvalidConfigError(f"initial state {self.initial_state} out of range")
        if self.initial_phi is not None and self.initial_phi.m != self.m:
            raise InvalidConfigError("initial phi has wrong dimension")
        sd = np.zeros(self.m) if self.initial_theta_sd is None else np.asarray(self.initial_theta_sd, float)
        if sd.shape != (self.m,) or np.any(sd < 0) or not np.all(np.isfinite(sd)):
            raise InvalidConfigError("initial_theta_sd must be m non-negative finite values")
        object.__setattr__(self, "initial_theta_sd", sd)
        if self.reset_theta is not None:
            rt = np.atleast_2d(np.asarray(self.reset_theta, dtype=float))
            if rt.shape != (self.state_spec.num_states, self.m) or not np.all(np.isfinite(rt)):
                raise InvalidConfigError("reset_theta must be a finite (K + 1, m) array")
            object.__setattr__(self, "reset_theta", rt)

    @property
    def m(self) -> int:
        return self.p + 2

    @property
    def num_states(self) -> int:
        return self.state_spec.num_states


@dataclass(frozen=True)
class Particle:
    """One posterior hypothesis. With q = 1 the theta window is a single theta."""

    theta_window: ThetaVector
    phi: PhiVector
    state: int
    runlength: int
    weight: float


def _split_theta(theta):
    if isinstance(theta, ThetaVector):
        return theta.alpha, theta.mu, theta.log_sigma
    arr = _finite("theta", theta).ravel()
    return arr[:-2], float(arr[-2]), float(arr[-1])


def ar_mean(theta, x_window) -> float:
    """Conditional mean ``alpha . x_window + mu`` (x_window most recent first)."""
    alpha, mu, _ = _split_theta(theta)
    xw = _finite("x_window", x_window).ravel()
    if xw.shape[0] != alpha.shape[0]:
        raise InvalidInputError(f"x_window has length {xw.shape[0]}, expected {alpha.shape[0]}")
    return float(alpha @ xw) + mu


def ar_step_logdensity(theta, x_window, x_next) -> float:
    _, _, log_sigma = _split_theta(theta)
    x_next = float(_finite("x_next", x_next))
    z = (x_next - ar_mean(theta, x_window)) * math.exp(-log_sigma)
    return -LOG_SQRT_2PI - log_sigma - 0.5 * z * z


def ar_step_density(theta, x_window, x_next) -> float:
    """Gaussian density of ``x_next`` under the AR process model."""
    return math.exp(ar_step_logdensity(theta, x_window, x_next))


def ar_step_sample(theta, x_window, rng) -> float:
    """Draw the next observation. ``rng`` needs a ``standard_normal()`` method."""
    _, _, log_sigma = _split_theta(theta)
    mean = ar_mean(theta, x_window)
    return mean + math.exp(log_sigma) * float(rng.standard_normal())


def change_dynamic_step(theta_window, phi: PhiVector, rng) -> ThetaVector:
    """One random-walk-with-drift step of every theta component."""
    theta = theta_window.to_array() if isinstance(theta_window, ThetaVector) else _finite(
        "theta", theta_window).ravel()
    if not isinstance(phi, PhiVector):
        phi = PhiVector.from_array(phi)
    if phi.m != theta.shape[0]:
        raise InvalidInputError(f"phi has m={phi.m}, theta has {theta.shape[0]} components")
    omega = np.asarray(rng.standard_normal(theta.shape[0]), dtype=float)
    return ThetaVector.from_array(theta + phi.nu + phi.gamma * omega)


def runlength_step(r_t: int, t: int, tau: int, hazard_s: float, rng) -> int:
    """Advance the gated regenerative runlength by one step.

    While a change-point has already happened since the last declaration
    (``r_t < t - tau``) the runlength grows deterministically. Otherwise it
    resets to 0 with probability ``hazard_s``. ``rng`` needs ``random()``.
    """
    if not 0.0 < hazard_s <= 1.0:
        raise InvalidInputError(f"hazard must lie in (0, 1], got {hazard_s}")
    if r_t < 0 or tau > t:
        raise InvalidInputError(f"need r_t >= 0 and tau <= t, got r_t={r_t}, t={t}, tau={tau}")
    if r_t < t - tau:
        return r_t + 1
    return 0 if float(rng.random()) < hazard_s else r_t + 1


def changepoint_proposal(s_t: int, spec: StateSpec, rng) -> tuple[int, PhiVector]:
    """Draw the post-change state from row ``s_t`` of the transition matrix,
    then phi uniformly within that state's bounds."""
    u = float(rng.random())
    s_new = int(np.searchsorted(spec.transition_cdf()[s_t], u, side="right"))
    lo, hi = spec.lower[s_new], spec.upper[s_new]
    phi = lo + (hi - lo) * np.asarray(rng.random(lo.shape[0]), dtype=float)
    return s_new, PhiVector.from_array(phi)


def two_state_spec(eta_min: Sequence, eta_max: Sequence, hazard: Sequence) -> StateSpec:
    """Convenience constructor for a two-state system whose only possible
    transitions are 0 -> 1 and 1 -> 0."""
    return StateSpec(eta_min=eta_min, eta_max=eta_max, hazard=hazard,
                     transition_matrix=[[0.0, 1.0], [1.0, 0.0]])


def uniform_offdiagonal(num_states: int) -> np.ndarray:
    """Transition matrix that moves uniformly to any *other* state."""
    if num_states < 2:
        raise InvalidConfigError("need at least two states")
    P = np.full((num_states, num_states), 1.0 / (num_states - 1))
    np.fill_diagonal(P, 0.0)
    return P
