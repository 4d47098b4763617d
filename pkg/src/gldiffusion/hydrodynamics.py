"""Nonlocal hydrodynamic equation on the circle.

The density ``rho(t, theta)`` solves, weakly,

    d/dt (h, rho) = 1/2 (h'', rho) + Q(rho)(h'),
    Q(rho)(f) = beta/2 ∬ (f(θ) - f(τ)) / (θ - τ) |θ - τ|^-β rho(θ) rho(τ),

with differences taken on the circle. Writing the kernel as an odd
principal value gives ``Q(rho)(f) = ∫ f(θ) Q(rho, θ) dθ`` with

    Q(rho, θ) = -beta * rho(θ) * D rho(θ),
    D rho(θ)  = ∫_0^{1/2} (rho(θ + τ) - rho(θ - τ)) τ^(-1-β) dτ,

and one integration by parts in ``∫ h' Q(rho, θ) dθ`` gives the strong form
solved here:

    ∂_t rho = 1/2 rho'' + beta ∂_θ (rho * D rho).

``D`` is diagonal in Fourier space: ``D e_k = i m_k e_k`` with
``m_k = 2 ∫_0^{1/2} sin(2π k τ) τ^(-1-β) dτ`` and ``m_{-k} = -m_k``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .testfunctions import TWO_PI, TestFunction


class BlowUpError(RuntimeError):
    pass


# --- Fourier multiplier ----------------------------------------------------

def multiplier(k: int, beta: float) -> float:
    """``m_k = 2 ∫_0^{1/2} sin(2π k τ) τ^(-1-β) dτ``.

    Power series on ``[0, δ]`` (exact term-wise integration of the sine
    series) plus oscillatory adaptive quadrature on ``[δ, 1/2]`` with
    ``δ = min(1/2, 1/(4k + 4))``.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    if k == 0:
        return 0.0
    w = TWO_PI * k
    delta = min(0.5, 1.0 / (4 * k + 4))
    series = 0.0
    j = 0
    while True:
        p = 2 * j + 1
        term = (-1) ** j * w**p * delta ** (p - beta) / (math.factorial(p) * (p - beta))
        series += term
        if abs(term) < 1e-15:
            break
        j += 1
    tail = 0.0
    if delta < 0.5:
        tail, _ = integrate.quad(lambda t: t ** (-1.0 - beta), delta, 0.5,
                                 weight="sin", wvar=w, epsabs=1e-13, epsrel=1e-13,
                                 limit=400)
    return 2.0 * (series + tail)


@dataclass(frozen=True)
class FractionalMultiplier:
    beta: float
    m: np.ndarray  # m_k for k = 0..M/2

    @property
    def grid_size(self):
        return 2 * (len(self.m) - 1)


@lru_cache(maxsize=None)
def _multiplier_table(M, beta):
    m = np.array([multiplier(k, beta) for k in range(M // 2 + 1)])
    m.setflags(write=False)
    return m


def fractional_multiplier(M: int, beta: float) -> FractionalMultiplier:
    """Tabulated ``m_k`` for a grid of size ``M`` (cached per ``(M, beta)``)."""
    _check_grid(M)
    return FractionalMultiplier(beta, _multiplier_table(int(M), float(beta)))


# --- density fields --------------------------------------------------------

def _check_grid(M):
    if M < 16 or M & (M - 1):
        raise ValueError(f"grid size must be a power of two >= 16, got {M}")


@dataclass(frozen=True)
class DensityField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        _check_grid(v.size)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, M):
        return cls(fn(np.arange(M) / M))

    @classmethod
    def uniform(cls, M):
        return cls(np.ones(M))

    @property
    def grid_size(self):
        return self.values.size

    @property
    def theta(self):
        return np.arange(self.grid_size) / self.grid_size

    @property
    def spectrum(self):
        """Fourier coefficients ``rho_hat_k``, k = 0..M/2 (``rho_hat_0`` = mean)."""
        return np.fft.rfft(self.values) / self.grid_size

    @classmethod
    def from_spectrum(cls, rho_hat, M):
        return cls(np.fft.irfft(rho_hat * M, n=M))

    @classmethod
    def from_empirical(cls, x, M, bandwidth):
        """Empirical measure of ``x`` smoothed by a periodic Gaussian of std ``bandwidth``."""
        x = np.asarray(x, dtype=float)
        k = np.arange(M // 2 + 1)
        c = np.exp(-1j * TWO_PI * np.outer(k, x)).mean(axis=1)
        c *= np.exp(-0.5 * (TWO_PI * k * bandwidth) ** 2)
        c[-1] = c[-1].real
        return cls.from_spectrum(c, M)

    def mass(self):
        return float(np.mean(self.values))

    def check(self, tol=1e-12):
        """Raise if the field is not a unit-mass density representation."""
        if abs(self.mass() - 1.0) > tol:
            raise ValueError(f"density mass {self.mass()!r} differs from 1")
        return self

    def l2_distance(self, other=1.0):
        o = other.values if isinstance(other, DensityField) else other
        return float(np.sqrt(np.mean((self.values - o) ** 2)))

    def l1_distance(self, other):
        return float(np.mean(np.abs(self.values - other.values)))

    def pairing(self, h: TestFunction):
        """``(h, rho) = ∫ h rho dθ`` by the periodic trapezoid rule."""
        return float(np.mean(h(self.theta) * self.values))

    def reflect(self):
        """``rho(-θ)`` on the same grid."""
        return DensityField(np.roll(self.values[::-1], 1))


def _match(rho: DensityField, mult: FractionalMultiplier):
    if rho.grid_size != mult.grid_size:
        raise ValueError(f"grid size {rho.grid_size} does not match multiplier "
                         f"table of size {mult.grid_size}")


def _apply_D(rho_hat, m):
    out = 1j * m * rho_hat
    out[-1] = 0.0  # Nyquist mode of an odd operator
    return out


def frac_deriv(rho: DensityField, mult: FractionalMultiplier):
    """``D rho`` on the grid, via ``(D rho)^_k = i m_k rho_hat_k``."""
    _match(rho, mult)
    M = rho.grid_size
    return np.fft.irfft(_apply_D(rho.spectrum, mult.m) * M, n=M)


def q_pointwise(rho: DensityField, mult: FractionalMultiplier):
    """``Q(rho, θ_j) = -beta * D rho(θ_j) * rho(θ_j)``."""
    return -mult.beta * frac_deriv(rho, mult) * rho.values


# --- product-integration quadrature for the singular double integrals -----

_PANEL = 4


@lru_cache(maxsize=None)
def _product_weights(M, beta):
    """Weights ``w_m`` with ``∫_0^{1/2} g(d) d^-β dd ≈ Σ w_m g(m/M)``.

    Composite degree-4 Lagrange interpolation of ``g`` on panels of four
    cells; the products with ``d^-β`` are integrated exactly on the panel
    touching 0 and by 24-point Gauss-Legendre elsewhere (where ``d^-β`` is
    analytic over the panel).
    """
    N = M // 2
    h = 1.0 / M
    nodes = np.arange(_PANEL + 1, dtype=float)
    # Lagrange basis coefficients (in s = (d - a)/h), rows: basis i, cols: power
    V = np.vander(nodes, increasing=True)
    coef = np.linalg.inv(V).T
    gl_x, gl_w = np.polynomial.legendre.leggauss(24)
    s_q = 0.5 * _PANEL * (gl_x + 1.0)
    w_q = 0.5 * _PANEL * gl_w
    basis_q = coef @ np.vander(s_q, _PANEL + 1, increasing=True).T  # (5, 24)
    powers = np.arange(_PANEL + 1)
    first = coef @ (_PANEL ** (powers + 1.0 - beta) / (powers + 1.0 - beta))
    w = np.zeros(N + 1)
    for p in range(N // _PANEL):
        lo = p * _PANEL
        if p == 0:
            local = first
        else:
            local = basis_q @ (w_q * (lo + s_q) ** (-beta))
        w[lo: lo + _PANEL + 1] += h ** (1.0 - beta) * local
    w.setflags(write=False)
    return w


def _shifted(values, M):
    """``values[(j - m) % M]`` and ``values[(j + m) % M]`` for m = 0..M/2."""
    j = np.arange(M)[:, None]
    m = np.arange(M // 2 + 1)[None, :]
    return values[(j - m) % M], values[(j + m) % M]


def _kernel_pairing(rho: DensityField, f: TestFunction, beta):
    """``∬ (f(θ) - f(τ)) / wrap(θ - τ) |wrap(θ - τ)|^-β rho(θ) rho(τ)``."""
    M = rho.grid_size
    theta = rho.theta
    r = rho.values
    w = _product_weights(M, beta)
    d = np.arange(M // 2 + 1) / M
    fv = f(theta)
    fpv = f.d1(theta)
    f_minus, f_plus = _shifted(fv, M)   # f(θ - d), f(θ + d)
    r_minus, r_plus = _shifted(r, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        qm = (fv[:, None] - f_minus) / d[None, :]         # separation +d
        qp = (fv[:, None] - f_plus) / (-d[None, :])       # separation -d
    qm[:, 0] = fpv
    qp[:, 0] = fpv
    inner = (qm * r_minus + qp * r_plus) @ w
    return float(np.mean(inner * r))


def q_weak(rho: DensityField, f: TestFunction, beta):
    """``Q(rho)(f)`` by product integration on the grid (see module doc)."""
    if not isinstance(f, TestFunction):
        raise TypeError("f must be a periodic TestFunction")
    return 0.5 * beta * _kernel_pairing(rho, f, beta)


def phi_density(f: TestFunction, rho: DensityField, beta):
    """``beta ∬ (f(θ) - f(τ)) / (θ - τ) |θ - τ|^-β rho(θ) rho(τ)``."""
    return beta * _kernel_pairing(rho, f, beta)


def moment_functional(rho: DensityField, beta):
    """``∬ |wrap(θ - τ)|^-β rho(θ) rho(τ) dθ dτ``."""
    M = rho.grid_size
    w = _product_weights(M, beta)
    r_minus, r_plus = _shifted(rho.values, M)
    return float(np.mean(rho.values * ((r_minus + r_plus) @ w)))


# --- time evolution --------------------------------------------------------

class _Spectral:
    """Precomputed wavenumber data for one ``(M, beta)`` pair."""

    def __init__(self, mult: FractionalMultiplier):
        self.M = M = mult.grid_size
        self.beta = mult.beta
        self.k = np.arange(M // 2 + 1)
        self.ik = 1j * TWO_PI * self.k
        self.ik[-1] = 0.0
        self.lap = -(TWO_PI * self.k) ** 2
        self.im = 1j * mult.m.astype(float)
        self.im[-1] = 0.0
        self.keep = self.k <= M // 3   # 2/3-rule dealiasing

    def nonlocal_term(self, rho_hat):
        """Spectrum of ``beta ∂(rho D rho)`` with 2/3-rule dealiasing."""
        M = self.M
        r = np.where(self.keep, rho_hat, 0.0)
        u = np.fft.irfft(r * M, n=M)
        v = np.fft.irfft(self.im * r * M, n=M)
        p = np.fft.rfft(u * v) / M
        p[~self.keep] = 0.0
        return self.beta * self.ik * p


def pde_rhs(rho: DensityField, mult: FractionalMultiplier, nonlocal_term=True):
    """``1/2 rho'' + beta ∂(rho D rho)`` on the grid.

    ``nonlocal_term=False`` leaves the heat equation only.
    """
    _match(rho, mult)
    sp = _Spectral(mult)
    rho_hat = rho.spectrum
    out = 0.5 * sp.lap * rho_hat
    if nonlocal_term:
        out = out + sp.nonlocal_term(rho_hat)
    return np.fft.irfft(out * sp.M, n=sp.M)


class Integrator:
    """Integrating-factor RK4: diffusion exact, nonlocal drift explicit."""

    def __init__(self, mult: FractionalMultiplier, dt):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.sp = _Spectral(mult)
        self.dt = float(dt)
        self.E = np.exp(0.5 * self.sp.lap * 0.5 * dt)   # e^{-2π²k² dt/2}
        self.E2 = self.E * self.E

    def step_hat(self, u):
        N = self.sp.nonlocal_term
        dt, E, E2 = self.dt, self.E, self.E2
        k1 = N(u)
        k2 = N(E * (u + 0.5 * dt * k1))
        k3 = N(E * u + 0.5 * dt * k2)
        k4 = N(E2 * u + dt * E * k3)
        out = E2 * u + dt / 6.0 * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
        out[0] = u[0]
        out[-1] = out[-1].real
        if not np.all(np.isfinite(out)):
            bad = np.flatnonzero(~np.isfinite(out))
            raise BlowUpError(f"non-finite Fourier coefficients at k={bad[:5].tolist()} "
                              f"(dt={dt}, M={self.sp.M}); reduce dt")
        return out


def step(rho: DensityField, dt, mult: FractionalMultiplier) -> DensityField:
    _match(rho, mult)
    u = Integrator(mult, dt).step_hat(rho.spectrum)
    return DensityField.from_spectrum(u, rho.grid_size)


@dataclass
class Snapshot:
    time: float
    field: DensityField
    moment: float
    warning: str | None = None


def solve(rho0: DensityField, T, dt, mult: FractionalMultiplier, record_times=(0.0,)):
    """Integrate to ``T`` and return snapshots at the steps nearest ``record_times``.

    ``dt=None`` selects the default ``0.25 / M^2``.
    """
    _match(rho0, mult)
    if dt is None:
        dt = 0.25 / rho0.grid_size**2
    if T < 0:
        raise ValueError("T must be nonnegative")
    record_times = sorted(float(t) for t in record_times)
    if record_times and (record_times[0] < 0 or record_times[-1] > T + 1e-12):
        raise ValueError("record_times must lie in [0, T]")
    n_steps = int(round(T / dt))
    targets = sorted({min(int(round(t / dt)), n_steps) for t in record_times})
    integ = Integrator(mult, dt)
    M = rho0.grid_size
    u = rho0.spectrum
    out = []

    def snap(k):
        f = rho0 if k == 0 else DensityField.from_spectrum(u, M)
        msg = None
        if f.values.min() < -1e-8:
            msg = f"negative density {f.values.min():.3e} at t={k * dt:.6g}"
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
        out.append(Snapshot(k * dt, f, moment_functional(f, mult.beta), msg))

    ti = 0
    for k in range(n_steps + 1):
        while ti < len(targets) and targets[ti] == k:
            snap(k)
            ti += 1
        if ti == len(targets):
            break
        if k < n_steps:
            u = integ.step_hat(u)
    return out
