"""Cylinder functions on empirical measures and bilinear-form diagnostics.

A cylinder function is ``g(mu) = phi((h_1, mu), ..., (h_m, mu))``. On an
n-particle configuration the lifted generator is

    A_n g = 1/2 sum_l phi_l (h_l'', mu)
            + 1/(2n) sum_{l,m} phi_lm (h_l' h_m', mu)
            - sum_l phi_l sum_i sum_{j != i} n^alpha V'(scale (x_i - x_j)) h_l'(x_i)

and the forms ``S_n(psi, chi) = -<A_n psi, chi>_n`` are estimated by Monte
Carlo over Gibbs samples. The resolvent ``G_b = (b - A_n)^-1`` is estimated
through ``G_b g(mu) = E_mu ∫_0^∞ e^{-b t} g(X_t) dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .gibbs import mc_inner_product
from .hydrodynamics import DensityField, phi_density
from .model import ModelParams, Psi, wrap
from .particles import run_em
from .stats import jackknife_mean
from .testfunctions import TestFunction, pairing

MAX_TERMS = 8


@dataclass(frozen=True)
class CylinderFunction:
    """``phi`` of the pairings with ``hs``.

    ``phi``, ``grad`` and ``hess`` act on pairing arrays of shape ``(..., m)``
    and return shapes ``(...)``, ``(..., m)`` and ``(..., m, m)``.
    """

    hs: tuple
    phi: Callable
    grad: Callable
    hess: Callable
    label: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.hs) < 1:
            raise ValueError("a cylinder function needs at least one test function")
        if len(self.hs) > MAX_TERMS:
            raise ValueError(f"at most {MAX_TERMS} test functions are supported")
        if len(set(self.hs)) != len(self.hs):
            raise ValueError("test functions must be distinct")

    @property
    def m(self):
        return len(self.hs)

    # -- built-in families --------------------------------------------------
    @classmethod
    def quadratic(cls, hs, a0=0.0, a=None, c=None, label="quadratic"):
        """``phi(y) = a0 + a.y + 1/2 y.C.y`` with symmetric ``C``."""
        hs = tuple(hs)
        m = len(hs)
        a = np.zeros(m) if a is None else np.asarray(a, dtype=float)
        C = np.zeros((m, m)) if c is None else np.asarray(c, dtype=float)
        if a.shape != (m,) or C.shape != (m, m):
            raise ValueError("coefficient shapes do not match the number of test functions")
        if not np.allclose(C, C.T, rtol=0, atol=1e-14):
            raise ValueError("Hessian coefficients must be symmetric")
        C = 0.5 * (C + C.T)
        a0 = float(a0)

        def phi(y):
            return a0 + y @ a + 0.5 * np.einsum("...l,lm,...m->...", y, C, y)

        def grad(y):
            return a + y @ C

        def hess(y):
            return np.broadcast_to(C, y.shape[:-1] + C.shape)

        return cls(hs, phi, grad, hess, label, {"a0": a0, "a": a.tolist(), "c": C.tolist()})

    @classmethod
    def linear(cls, hs, coefs, const=0.0):
        return cls.quadratic(hs, a0=const, a=coefs, label="linear")

    @classmethod
    def constant(cls, value=1.0):
        return cls.quadratic((TestFunction.cos(1),), a0=value, label="constant")

    @classmethod
    def separating(cls, reference, m=MAX_TERMS):
        """Truncated separating function ``H_ref``.

        ``H(mu) = sum_k w_k ((h_k, mu) - (h_k, ref))^2`` with
        ``w_k = 2^-k / (1 + (|h_k| + |h_k'|)^2 + |h_k h_k''|)`` over
        ``h = cos 2πθ, sin 2πθ, cos 4πθ, ...``. ``reference`` is a
        configuration, a DensityField, or an array of the m pairings.
        """
        hs = harmonic_basis(m)
        if isinstance(reference, DensityField):
            yhat = np.array([reference.pairing(h) for h in hs])
        else:
            ref = np.asarray(reference, dtype=float)
            if ref.shape == (m,) and np.any((ref < 0) | (ref >= 1)):
                yhat = ref
            else:
                yhat = np.array([pairing(h, ref) for h in hs])
        w = np.empty(m)
        theta = np.arange(4096) / 4096
        for k, h in enumerate(hs, start=1):
            hn = np.max(np.abs(h(theta)))
            dn = np.max(np.abs(h.d1(theta)))
            hl = np.max(np.abs(h(theta) * h.d2(theta)))
            w[k - 1] = 2.0 ** (-k) / (1.0 + (hn + dn) ** 2 + hl)
        g = cls.quadratic(hs, a0=float(np.sum(w * yhat**2)), a=-2.0 * w * yhat,
                          c=np.diag(2.0 * w), label="separating")
        g.meta.update(weights=w.tolist(), reference=yhat.tolist())
        return g


def harmonic_basis(m):
    """``cos 2πθ, sin 2πθ, cos 4πθ, sin 4πθ, ...`` (first m)."""
    out = []
    k = 1
    while len(out) < m:
        out.append(TestFunction.cos(k))
        if len(out) < m:
            out.append(TestFunction.sin(k))
        k += 1
    return tuple(out)


def designated_psi():
    """Quadratic cylinder function used by the form and resolvent scans:
    ``1 + (y1 + y2)/2 + (y1^2 + y2^2)/2`` with ``y = ((sin 2πθ, mu), (cos 2πθ, mu))``."""
    return CylinderFunction.quadratic((TestFunction.sin(1), TestFunction.cos(1)),
                                      a0=1.0, a=[0.5, 0.5], c=np.eye(2),
                                      label="designated-quadratic")


# --- evaluation --------------------------------------------------------------

def _pairings(g: CylinderFunction, x, fn="__call__"):
    x = np.asarray(x, dtype=float)
    vals = [np.mean(getattr(h, fn)(x) if fn != "__call__" else h(x), axis=-1) for h in g.hs]
    return np.stack(vals, axis=-1)


def eval_cyl(g: CylinderFunction, config):
    """``g(mu_n)`` for one configuration ``(n,)`` or a batch ``(S, n)``."""
    return g.phi(_pairings(g, config))


def lifted_laplacian(g: CylinderFunction, config, params: ModelParams = None):
    x = np.asarray(config, dtype=float)
    n = x.shape[-1]
    y = _pairings(g, x)
    dphi = g.grad(y)
    d2phi = g.hess(y)
    h2 = _pairings(g, x, "d2")
    hp = np.stack([h.d1(x) for h in g.hs], axis=-2)              # (..., m, n)
    cross = np.einsum("...ln,...kn->...lk", hp, hp) / n         # (h_l' h_k', mu)
    return 0.5 * np.sum(dphi * h2, axis=-1) + 0.5 / n * np.sum(d2phi * cross, axis=(-2, -1))


def interaction_term(g: CylinderFunction, config, params: ModelParams):
    """``sum_l phi_l sum_i sum_{j != i} n^alpha V'(scale wrap(x_i - x_j)) h_l'(x_i)``."""
    x = np.asarray(config, dtype=float)
    batch = np.ascontiguousarray(np.atleast_2d(x))
    hp = np.ascontiguousarray(np.stack([h.d1(batch) for h in g.hs], axis=1))
    I = K.interaction_pairing(batch, hp, params.beta, params.scale, params.n_alpha)
    dphi = g.grad(_pairings(g, batch))
    out = np.sum(dphi * I, axis=-1)
    return out if x.ndim == 2 else out[0]


def lifted_generator(g: CylinderFunction, config, params: ModelParams):
    return lifted_laplacian(g, config, params) - interaction_term(g, config, params)


# --- Monte Carlo forms -------------------------------------------------------

@dataclass
class FormEstimate:
    value: float
    std_error: float
    n: int
    sample_count: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.sample_count < 2:
            raise ValueError("a form estimate needs at least 2 samples")

    def to_json(self):
        return {"value": self.value, "std_error": self.std_error, "n": self.n,
                "sample_count": self.sample_count, "metadata": self.metadata}


def _configs(samples):
    return np.asarray(getattr(samples, "configs", samples), dtype=float)


def form_estimate(psi, psi_tilde, samples, params: ModelParams) -> FormEstimate:
    """``S_n(psi, psi_tilde) = -<A_n psi, psi_tilde>_n``."""
    X = _configs(samples)
    v, se = mc_inner_product(-lifted_generator(psi, X, params), eval_cyl(psi_tilde, X), X)
    return FormEstimate(v, se, params.n, len(X), {"form": "S_n", "psi": psi.label,
                                                   "psi_tilde": psi_tilde.label})


def generator_norm_estimate(psi, samples, params: ModelParams) -> FormEstimate:
    """``<A_n psi, A_n psi>_n``."""
    X = _configs(samples)
    a = lifted_generator(psi, X, params)
    v, se = mc_inner_product(a, a, X)
    return FormEstimate(v, se, params.n, len(X), {"form": "<A_n psi, A_n psi>_n",
                                                   "psi": psi.label})


def phi_functional(f: TestFunction, arg, params: ModelParams):
    """Difference-quotient functional on a configuration or a density.

    Configuration: ``(1/n^2) sum_{i != j} (f(x_i) - f(x_j)) / d_ij * n Psi(scale d_ij)``
    with ``d_ij = wrap(x_i - x_j)``. Density: ``beta ∬ (f(θ) - f(τ)) / (θ - τ)
    |θ - τ|^-β rho(θ) rho(τ)``.
    """
    if isinstance(arg, DensityField):
        return phi_density(f, arg, params.beta)
    x = np.asarray(arg, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("the empirical functional needs n >= 2")
    fx = f(x)
    d = wrap(x[:, None] - x[None, :])
    np.fill_diagonal(d, 1.0)
    q = (fx[:, None] - fx[None, :]) / d
    w = n * Psi(params.scale * d, params.beta)
    np.fill_diagonal(w, 0.0)
    return float(np.sum(q * w) / n**2)


# --- resolvent -----------------------------------------------------------------

def _interval_weights(b, t0, h):
    """Exact weights of ``∫_{t0}^{t0+h} e^{-bs} g(s) ds`` for linear ``g``."""
    x = b * h
    e0 = math.exp(-b * t0)
    total = e0 * -math.expm1(-x) / b
    # ∫_0^h u e^{-b(t0+u)} du / h, series near x = 0 to avoid cancellation
    if x < 1e-3:
        ramp = e0 * h * (0.5 - x / 3 + x * x / 8)
    else:
        ramp = e0 * (1 - math.exp(-x) * (1 + x)) / (b * x)
    return total - ramp, ramp


def _discounted_integrals(g, starts, replicas, beta_res, horizon, params, rngs, obs_stride):
    """Per-replica ``∫_0^H e^{-b t} g(X_t) dt`` for each start, shape (S, R).

    ``g`` is interpolated linearly between observations every ``obs_stride``
    steps and the exponential weight is integrated exactly against it.
    """
    S, n = starts.shape
    x = np.repeat(starts, replicas, axis=0).copy()
    dt = params.dt
    n_steps = max(int(round(horizon / dt)), 1)
    acc = np.zeros(S * replicas)
    g_prev = eval_cyl(g, x)
    k = 0
    while k < n_steps:
        m = min(obs_stride, n_steps - k)
        w0, w1 = _interval_weights(beta_res, k * dt, m * dt)
        run_em(x, params, m, rngs)
        g_next = eval_cyl(g, x)
        acc += w0 * g_prev + w1 * g_next
        g_prev = g_next
        k += m
    return acc.reshape(S, replicas), n_steps * dt


def _replica_streams(rng, count):
    return rng.spawn(count)


def resolvent_estimate(g, beta_res, start, params: ModelParams, horizon=None,
                       replicas=64, rng=None, obs_stride=1):
    """Monte Carlo ``G_b g(start)``; returns ``(value, std_error, tail_bound)``.

    ``tail_bound = sup|g| e^{-b H} / b`` bounds the truncated tail, with
    ``sup|g|`` taken over the replica paths' observed values.
    """
    if not beta_res > 0:
        raise ValueError("beta_res must be positive")
    horizon = 8.0 / beta_res if horizon is None else float(horizon)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if rng is None:
        from .rng import stream
        rng = stream(params.seed, 7)
    start = np.asarray(start, dtype=float).reshape(1, -1)
    Y, H = _discounted_integrals(g, start, replicas, beta_res, horizon, params,
                                 _replica_streams(rng, replicas), obs_stride)
    y = Y[0]
    se = float(np.std(y, ddof=1) / np.sqrt(replicas)) if replicas > 1 else float("nan")
    gsup = float(abs(eval_cyl(g, start[0])))
    gsup = max(gsup, _sup_hint(g))
    return float(np.mean(y)), se, gsup * math.exp(-beta_res * H) / beta_res


def _sup_hint(g):
    """Bound on ``sup |g|`` over all probability measures for quadratic phi."""
    meta = g.meta
    if "a0" not in meta:
        return 0.0
    bounds = np.array([h.sup_norm() for h in g.hs])
    a = np.abs(np.asarray(meta["a"]))
    C = np.abs(np.asarray(meta["c"]))
    return abs(meta["a0"]) + a @ bounds + 0.5 * bounds @ C @ bounds


def resolvent_deviation(g, beta_res, samples, params: ModelParams, horizon=None,
                        replicas=16, rng=None, obs_stride=10) -> FormEstimate:
    """``<b G_b g - g, b G_b g - g>_n`` over Gibbs samples.

    The replica noise of each inner estimate is removed by subtracting its
    variance ``b^2 Var(Y) / R``.
    """
    X = _configs(samples)
    horizon = 8.0 / beta_res if horizon is None else float(horizon)
    if rng is None:
        from .rng import stream
        rng = stream(params.seed, 8)
    Y, H = _discounted_integrals(g, X, replicas, beta_res, horizon, params,
                                 _replica_streams(rng, len(X) * replicas), obs_stride)
    bY = beta_res * Y
    inner = bY.mean(axis=1)
    noise = bY.var(axis=1, ddof=1) / replicas
    d = (inner - eval_cyl(g, X)) ** 2 - noise
    v, se = jackknife_mean(d, n_batches=min(50, len(d)))
    tail = _sup_hint(g) * math.exp(-beta_res * H)
    return FormEstimate(v, se, params.n, len(X), {
        "beta_res": beta_res, "horizon": H, "replicas": replicas, "dt": params.dt,
        "tail_bound": tail, "psi": g.label})


def sup_norm(g, samples):
    """``max |g|`` over the sampled configurations."""
    return float(np.max(np.abs(eval_cyl(g, _configs(samples)))))


def generator_bound(estimates: Sequence[FormEstimate]):
    """``b = max_n sqrt(<A_n g, A_n g>_n + 3 sigma)`` over an n-sweep."""
    return max(math.sqrt(max(e.value + 3.0 * e.std_error, 0.0)) for e in estimates)


def epsilon_n(g_norm, deviation_sqrt, b):
    """``(b * deviation_sqrt / |g|^2)^(1/3)``."""
    if not g_norm > 0:
        raise ValueError("g has zero sup-norm")
    if deviation_sqrt < 0 or b <= 0:
        raise ValueError("deviation_sqrt must be >= 0 and b > 0")
    return (b * deviation_sqrt / g_norm**2) ** (1.0 / 3.0)
