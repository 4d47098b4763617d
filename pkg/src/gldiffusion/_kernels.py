"""Compiled O(n^2) pair kernels.

All kernels take their random numbers as pre-drawn arrays, so the numpy
generators stay the single source of randomness and the loops below are
deterministic functions of their inputs.
"""
import math

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, nogil=True, fastmath=False)

# differences this close to -1/2 may wrap to -1/2 in both orders
_NEAR_TIE = -0.5 + 1e-12


@_jit
def wrap_scalar(d):
    out = d - math.floor(d + 0.5)
    if out >= 0.5:
        out -= 1.0
    return out


@_jit
def wrap01_scalar(x):
    out = x - math.floor(x)
    if out >= 1.0:
        out = 0.0
    return out


@_jit
def v_scalar(z, beta):
    a = abs(z)
    if a <= 1.0:
        return 1.0 + 0.5 * beta * (1.0 - a * a)
    if beta == 0.5:
        return 1.0 / math.sqrt(a)
    return a ** (-beta)


@_jit
def vprime_scalar(z, beta):
    a = abs(z)
    if a <= 1.0:
        return -beta * z
    s = 1.0 if z > 0 else -1.0
    if beta == 0.5:
        return -0.5 * s / (a * math.sqrt(a))
    return -beta * s * a ** (-beta - 1.0)


@_jit
def drift_into(x, beta, scale, out):
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        xi = x[i]
        for j in range(i + 1, n):
            d = wrap_scalar(xi - x[j])
            f = scale * vprime_scalar(scale * d, beta)
            out[i] -= f
            if d < _NEAR_TIE:
                # wrap(x_j - x_i) may also be -1/2: evaluate the (j, i) term as written
                out[j] -= scale * vprime_scalar(scale * wrap_scalar(x[j] - xi), beta)
            else:
                out[j] += f


@_jit
def drift_batch(x, beta, scale):
    out = np.empty_like(x)
    for r in range(x.shape[0]):
        drift_into(x[r], beta, scale, out[r])
    return out


@_jit
def em_run(x, noise, dt, beta, scale, with_drift):
    """Advance each row of ``x`` through ``noise.shape[1]`` steps in place.

    ``noise`` has shape ``(R, K, n)``: replica, step, particle.
    """
    R, K, n = noise.shape
    b = np.empty(n)
    sq = math.sqrt(dt)
    for r in range(R):
        xr = x[r]
        for k in range(K):
            if with_drift:
                drift_into(xr, beta, scale, b)
                for i in range(n):
                    xr[i] = wrap01_scalar(xr[i] + b[i] * dt + sq * noise[r, k, i])
            else:
                for i in range(n):
                    xr[i] = wrap01_scalar(xr[i] + sq * noise[r, k, i])


@_jit
def energy(x, beta, scale):
    n = x.shape[0]
    e = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            e += v_scalar(scale * wrap_scalar(x[i] - x[j]), beta)
    return 2.0 * e


@_jit
def site_energy(x, i, xi, beta, scale):
    """Sum over j != i of V(scale * wrap(xi - x_j))."""
    e = 0.0
    for j in range(x.shape[0]):
        if j != i:
            e += v_scalar(scale * wrap_scalar(xi - x[j]), beta)
    return e


@_jit
def mh_run(x, e, sites, xis, us, sigma, beta, scale):
    """Single-site random-walk Metropolis; returns (energy, accepted)."""
    acc = 0
    for k in range(sites.shape[0]):
        i = sites[k]
        new = wrap01_scalar(x[i] + sigma * xis[k])
        de = 2.0 * (site_energy(x, i, new, beta, scale) - site_energy(x, i, x[i], beta, scale))
        if de <= 0.0 or us[k] < math.exp(-de):
            x[i] = new
            e += de
            acc += 1
    return e, acc


@_jit
def pair_sum(x, beta, scale):
    """Sum over i != j of V(scale * wrap(x_i - x_j)) for each row."""
    out = np.empty(x.shape[0])
    for r in range(x.shape[0]):
        out[r] = energy(x[r], beta, scale)
    return out


@_jit
def interaction_pairing(x, hp, beta, scale, n_alpha):
    """sum_i sum_{j != i} n^alpha V'(scale wrap(x_i - x_j)) h'(x_i) per row.

    ``hp`` holds h'(x) evaluated at the positions, shape ``(R, m, n)``.
    Returns shape ``(R, m)``.
    """
    R, m, n = hp.shape
    out = np.zeros((R, m))
    for r in range(R):
        xr = x[r]
        for i in range(n):
            for j in range(i + 1, n):
                d = wrap_scalar(xr[i] - xr[j])
                f = n_alpha * vprime_scalar(scale * d, beta)
                # V' is odd: away from the tie the (j, i) term carries -f
                fj = -f
                if d < _NEAR_TIE:
                    fj = n_alpha * vprime_scalar(scale * wrap_scalar(xr[j] - xr[i]), beta)
                for l in range(m):
                    out[r, l] += f * hp[r, l, i] + fj * hp[r, l, j]
    return out
