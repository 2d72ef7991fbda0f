"""One-step-ahead predictive mixture over null-hypothesis particles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoNullHypothesisError(RuntimeError):
    """No particle supports the no-change hypothesis; a declaration is due."""


@dataclass(frozen=True)
class PredictiveSummary:
    mean: float
    variance: float
    n_support: int


def mixture_moments(means: np.ndarray, sds: np.ndarray) -> tuple[float, float]:
    """Mean and variance of an equal-weight Gaussian mixture."""
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    mean = float(np.mean(means))
    # E[sd^2 + m^2] - E[m]^2, written around the centred means for accuracy
    var = float(np.mean(sds * sds) + np.mean((means - mean) ** 2))
    return mean, max(var, 0.0)


def component_moments(theta: np.ndarray, x_window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = theta.shape[1] - 2
    means = theta[:, p].copy()
    for k in range(p):
        means = means + theta[:, k] * x_window[k]
    return means, np.exp(theta[:, p + 1])


def predict_one_step(pset, t=None, tau=None) -> PredictiveSummary:
    """Predictive mean/variance of the next observation assuming no new
    change-point; the mixture is renormalized over its support."""
    t = pset.t if t is None else t
    tau = pset.tau if tau is None else tau
    support = pset.runlength >= t - tau
    n_support = int(np.count_nonzero(support))
    if n_support == 0:
        raise NoNullHypothesisError(f"t={t}: no particle with runlength >= {t - tau}")
    means, sds = component_moments(pset.theta[support], pset.x_window)
    mean, var = mixture_moments(means, sds)
    return PredictiveSummary(mean=mean, variance=var, n_support=n_support)
