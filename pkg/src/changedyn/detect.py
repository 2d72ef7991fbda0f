"""Particle-filtered Shiryaev statistic, threshold policies and alarms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import InvalidConfigError


@dataclass(frozen=True)
class AlarmRecord:
    """A change declaration. ``detected_state`` is None for detectors that
    do not classify the post-change regime (BOCD)."""

    time: int
    z_value: float
    detected_state: Optional[int]
    tau_after: int
    denom_zero: bool = False


@dataclass(frozen=True)
class ThresholdPolicy:
    """``standard``: h = (1 - a) / a. ``conservative``: h = (1 - a/2) / (a/2).
    ``fixed``: h given directly."""

    kind: str = "fixed"
    alpha: Optional[float] = None
    h: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("standard", "conservative", "fixed"):
            raise InvalidConfigError(f"unknown threshold kind {self.kind!r}")
        if self.kind == "fixed":
            if self.h is None or not self.h > 0:
                raise InvalidConfigError("fixed threshold needs h > 0")
        elif self.alpha is None or not 0 < self.alpha < 1:
            raise InvalidConfigError("alpha must lie in (0, 1)")

    @classmethod
    def fixed(cls, h: float) -> "ThresholdPolicy":
        return cls(kind="fixed", h=float(h))


def threshold_value(policy: ThresholdPolicy) -> float:
    if policy.kind == "fixed":
        return float(policy.h)
    a = policy.alpha if policy.kind == "standard" else policy.alpha / 2.0
    return (1.0 - a) / a


def shiryaev_counts(runlength: np.ndarray, t: int, tau: int) -> tuple[int, int]:
    """(change-hypothesis count, null-hypothesis count)."""
    n_change = int(np.count_nonzero(runlength < t - tau))
    return n_change, runlength.shape[0] - n_change


def shiryaev_statistic(pset, t: Optional[int] = None, tau: Optional[int] = None) -> tuple[float, bool]:
    """Posterior odds that a change occurred since ``tau``.

    Returns ``(z, denom_zero)``; ``z`` is ``inf`` when no particle supports
    the null hypothesis.
    """
    t = pset.t if t is None else t
    tau = pset.tau if tau is None else tau
    n_change, n_null = shiryaev_counts(pset.runlength, t, tau)
    if n_null == 0:
        return math.inf, True
    return n_change / n_null, False


def modal_state(states: np.ndarray, num_states: int) -> Optional[int]:
    """Most frequent state, ties broken toward the lowest index."""
    if states.shape[0] == 0:
        return None
    return int(np.argmax(np.bincount(states, minlength=num_states)))


def detect_step(pset, policy: ThresholdPolicy, t: Optional[int] = None,
                tau: Optional[int] = None) -> Optional[AlarmRecord]:
    """Declare a change when ``z > h`` or the null count is zero.

    The caller installs ``tau_after`` (``ParticleSet.with_tau``).
    """
    t = pset.t if t is None else t
    tau = pset.tau if tau is None else tau
    z, denom_zero = shiryaev_statistic(pset, t, tau)
    h = threshold_value(policy)
    if not (denom_zero or z > h):
        return None
    changed = pset.runlength < t - tau
    state = modal_state(pset.state[changed], pset.config.num_states)
    return AlarmRecord(time=t, z_value=z, detected_state=state, tau_after=t, denom_zero=denom_zero)
