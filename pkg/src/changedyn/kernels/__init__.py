"""Particle kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set
``CHANGEDYN_BACKEND=python`` to force the numpy implementation. Both
backends draw from the same counter-based stream, so per-particle results
are independent of how particles are split across workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

_BACKENDS = {"python": _pykernels}
try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def _default_backend():
    choice = os.environ.get("CHANGEDYN_BACKEND", "").strip().lower()
    if choice:
        if choice not in _BACKENDS:
            raise ImportError(f"kernel backend {choice!r} unavailable; have {available_backends()}")
        return choice
    return "cython" if "cython" in _BACKENDS else "python"


BACKEND = _default_backend()

uniforms = _pykernels.uniforms
normals = _pykernels.normals
slot_normal = _pykernels.slot_normal
SLOT_RESET = _pykernels.SLOT_RESET
SLOT_STATE = _pykernels.SLOT_STATE
SLOT_PHI = _pykernels.SLOT_PHI


def get(backend=None):
    return _BACKENDS[backend or BACKEND]


def _chunks(n, workers):
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def propose(theta, phi, state, runlength, t, tau, seed, params, workers=1, backend=None):
    """Run the proposal kernel. ``params`` is ``(hazard, trans_cdf, lower,
    upper, reset_theta)``."""
    mod = get(backend)
    hazard, cdf, lower, upper, reset_theta = params
    if mod is _pykernels:
        if workers <= 1:
            return mod.propose(theta, phi, state, runlength, t, tau, seed, hazard, cdf,
                               lower, upper, reset_theta)
        parts = _chunks(theta.shape[0], workers)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(
                lambda ab: mod.propose(theta[ab[0]:ab[1]], phi[ab[0]:ab[1]], state[ab[0]:ab[1]],
                                       runlength[ab[0]:ab[1]], t, tau, seed, hazard, cdf,
                                       lower, upper, reset_theta, base=ab[0]),
                parts))
        return tuple(np.concatenate([o[k] for o in outs]) for k in range(4))
    return mod.propose(theta, phi, state, runlength, t, tau, seed, hazard, cdf, lower, upper,
                       reset_theta, nthreads=max(1, workers))


def log_likelihood(theta, x_window, x_next, workers=1, backend=None):
    mod = get(backend)
    if mod is _pykernels:
        if workers <= 1:
            return mod.log_likelihood(theta, x_window, x_next)
        parts = _chunks(theta.shape[0], workers)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(lambda ab: mod.log_likelihood(theta[ab[0]:ab[1]], x_window, x_next),
                               parts))
        return np.concatenate(outs)
    return mod.log_likelihood(theta, x_window, float(x_next), nthreads=max(1, workers))
