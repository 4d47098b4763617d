"""Euler-Maruyama simulation of the interacting diffusion on the circle.

Particle i follows

    dx_i = -scale * sum_{j != i} V'(scale * (x_i - x_j)) dt + dB_i

with ``scale = n**(1 + alpha)``. A configuration is a float array of
positions in ``[0, 1)``; a batch of replicas is a 2-D array ``(R, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels as K
from .model import ModelParams, V, wrap01
from .testfunctions import TestFunction, pairing


@dataclass
class TrajectoryRecord:
    time: float
    observables: dict
    mc_error: dict | None = field(default=None)


def as_configuration(x, n=None):
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim not in (1, 2):
        raise ValueError("configuration must be 1-D (n,) or 2-D (R, n)")
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x >= 1.0):
        raise ValueError("positions must lie in [0, 1)")
    if n is not None and x.shape[-1] != n:
        raise ValueError(f"expected {n} particles, got {x.shape[-1]}")
    return x


def equal_spacing(n, offset=0.0):
    return wrap01(offset + np.arange(n) / n)


def iid_from_density(density, n, rng, replicas=None):
    """i.i.d. positions drawn from a grid density by inverse-CDF sampling.

    ``density`` is an array of values on the uniform grid ``j / M`` (a
    DensityField's values). Within each cell the density is taken to be
    linear, so the CDF is piecewise quadratic and inverted exactly.
    """
    rho = np.asarray(getattr(density, "values", density), dtype=float)
    M = rho.size
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    lo = rho
    hi = np.roll(rho, -1)
    mass = 0.5 * (lo + hi) / M
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    total = cdf[-1]
    shape = (n,) if replicas is None else (replicas, n)
    u = rng.random(shape) * total
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, M - 1)
    r = u - cdf[j]
    a = lo[j]
    b = (hi[j] - lo[j]) * M
    # solve a s + b s^2 / 2 = r for s in [0, 1/M]
    disc = np.sqrt(np.maximum(a * a + 2.0 * b * r, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(np.abs(b) > 1e-14, (disc - a) / b, r / np.where(a > 0, a, 1.0))
    s = np.clip(s, 0.0, 1.0 / M)
    return wrap01(j / M + s)


def drift(x, params: ModelParams):
    """Pair drift ``b_i = -scale * sum_{j != i} V'(scale * wrap(x_i - x_j))``."""
    x = np.asarray(x, dtype=float)
    batch = np.atleast_2d(x)
    out = K.drift_batch(np.ascontiguousarray(batch), params.beta, params.scale)
    return out if x.ndim == 2 else out[0]


def step_em(x, params: ModelParams, rng, noise=True):
    """One Euler-Maruyama step; draws exactly ``n`` normals in index order."""
    x = np.asarray(x, dtype=float)
    xi = rng.standard_normal(x.shape[-1])
    if not noise:
        xi[:] = 0.0
    return wrap01(x + drift(x, params) * params.dt + np.sqrt(params.dt) * xi)


def run_em(x, params: ModelParams, n_steps, rngs, noise=True, with_drift=True):
    """Advance a replica batch ``(R, n)`` by ``n_steps`` steps, in place.

    ``rngs[r]`` supplies the noise of replica ``r``, drawn in step-major order
    so that the path of a replica does not depend on the batch it runs in.
    """
    R, n = x.shape
    if len(rngs) != R:
        raise ValueError("one random stream per replica is required")
    if n_steps <= 0:
        return x
    xi = np.empty((R, n_steps, n))
    for r, g in enumerate(rngs):
        xi[r] = g.standard_normal((n_steps, n))
    if not noise:
        xi[:] = 0.0
    K.em_run(x, xi, params.dt, params.beta, params.scale, with_drift)
    return x


def simulate(initial, params: ModelParams, T, observables: Mapping[str, Callable],
             sample_stride=1, rng=None, noise=True):
    """Simulate one trajectory up to time ``T`` recording ``observables``.

    Records are taken at ``t = 0``, every ``sample_stride`` steps, and at the
    final step. Observables receive the 1-D configuration (and the params if
    they accept two arguments).
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    if rng is None:
        from .rng import stream
        rng = stream(params.seed, 0)
    x = as_configuration(initial, params.n).copy()[None, :]
    n_steps = int(round(T / params.dt))

    def record(k):
        obs = {}
        for name, fn in observables.items():
            try:
                obs[name] = float(fn(x[0], params))
            except TypeError:
                obs[name] = float(fn(x[0]))
        return TrajectoryRecord(time=k * params.dt, observables=obs)

    out = [record(0)]
    k = 0
    while k < n_steps:
        m = min(sample_stride, n_steps - k)
        run_em(x, params, m, [rng], noise=noise)
        k += m
        out.append(record(k))
    return out


def empirical_pairing(x, h: TestFunction):
    return pairing(h, x)


@dataclass(frozen=True)
class PairEnergy:
    with_diagonal: float
    without_diagonal: float


def pair_energy_stat(x, params: ModelParams):
    """``(1/n) sum_{i,j} V(scale * wrap(x_i - x_j))`` with and without i = j.

    For a batch ``(R, n)`` the fields are arrays of length R.
    """
    x = np.asarray(x, dtype=float)
    batch = np.ascontiguousarray(np.atleast_2d(x))
    off = K.pair_sum(batch, params.beta, params.scale) / params.n
    with_diag = off + float(V(0.0, params.beta))
    if x.ndim == 1:
        return PairEnergy(float(with_diag[0]), float(off[0]))
    return PairEnergy(with_diag, off)
