"""Pure-numpy particle kernels. Reference implementation and fallback for
the compiled core; both share the counter-based random stream below."""

import numpy as np

BACKEND = "python"

_U64 = np.uint64
_C_SEED = _U64(0x9E3779B97F4A7C15)
_C_INDEX = _U64(0xD1B54A32D192ED03)
_C_STEP = _U64(0xABC98388FB8FAC03)
_C_SLOT = _U64(0x8CB92BA72F3D8DD7)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_TWO_PI = 6.283185307179586
_INV_2_53 = 1.0 / 9007199254740992.0

SLOT_RESET = 0
SLOT_STATE = 1
SLOT_PHI = 2


def slot_normal(m):
    """First slot of the Box-Muller pairs; phi uses ``SLOT_PHI .. SLOT_PHI + 2m``."""
    return SLOT_PHI + 2 * m


def _mix(z):
    z = z ^ (z >> _U64(30))
    z = z * _M1
    z = z ^ (z >> _U64(27))
    z = z * _M2
    return z ^ (z >> _U64(31))


def uniforms(seed, step, slot, index):
    """Uniforms in (0, 1) keyed by (seed, particle index, step, slot).

    Every argument broadcasts; the result depends only on the key, never on
    evaluation order.
    """
    with np.errstate(over="ignore"):
        k = _mix(np.asarray(seed, dtype=_U64) + _C_SEED)
        k = _mix(k ^ (np.asarray(index, dtype=_U64) * _C_INDEX))
        k = _mix(k ^ (np.asarray(step, dtype=_U64) * _C_STEP + np.asarray(slot, dtype=_U64) * _C_SLOT))
    return ((k >> _U64(11)).astype(np.float64) + 0.5) * _INV_2_53


def normals(seed, step, slot0, index):
    """Standard normals from the uniform pair at ``(slot0, slot0 + 1)``."""
    u1 = uniforms(seed, step, slot0, index)
    u2 = uniforms(seed, step, np.asarray(slot0) + 1, index)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def propose(theta, phi, state, runlength, t, tau, seed, hazard, trans_cdf, lower, upper,
            reset_theta=None, base=0):
    """Propagate particles ``base .. base + n`` one step under the prior.

    Returns new ``(theta, phi, state, runlength)`` arrays; inputs are not
    modified.
    """
    n, m = theta.shape
    step = t + 1
    idx = np.arange(base, base + n, dtype=np.int64)
    u_reset = uniforms(seed, step, SLOT_RESET, idx)
    free = runlength >= t - tau
    reset = free & (u_reset < hazard[state])
    r_new = np.where(reset, 0, runlength + 1)

    state_new = state.copy()
    phi_new = phi.copy()
    theta_new = theta.copy()
    if np.any(reset):
        ri = np.flatnonzero(reset)
        u_state = uniforms(seed, step, SLOT_STATE, idx[ri])
        cdf = trans_cdf[state[ri]]
        s = (u_state[:, None] >= cdf).sum(axis=1)
        state_new[ri] = s
        slots = SLOT_PHI + np.arange(2 * m)
        u_phi = uniforms(seed, step, slots[None, :], idx[ri][:, None])
        lo, hi = lower[s], upper[s]
        phi_new[ri] = lo + (hi - lo) * u_phi
        if reset_theta is not None:
            theta_new[ri] = reset_theta[s]

    slots = slot_normal(m) + 2 * np.arange(m)
    omega = normals(seed, step, slots[None, :], idx[:, None])
    theta_new = theta_new + phi_new[:, :m] + phi_new[:, m:] * omega
    return theta_new, phi_new, state_new, r_new


def log_likelihood(theta, x_window, x_next):
    """Per-particle Gaussian log-density of ``x_next``."""
    p = theta.shape[1] - 2
    xw = np.asarray(x_window, dtype=np.float64).ravel()
    # elementwise accumulation, not BLAS: chunked threads must stay bit-identical
    mean = np.zeros(theta.shape[0])
    for k in range(p):
        mean = mean + theta[:, k] * xw[k]
    mean = mean + theta[:, p]
    log_sigma = theta[:, p + 1]
    z = (x_next - mean) * np.exp(-log_sigma)
    return -0.9189385332046727 - log_sigma - 0.5 * z * z
