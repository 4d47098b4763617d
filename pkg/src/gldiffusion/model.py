"""Model parameters, circle arithmetic and the interaction potential.

The potential is glued from a concave bump on ``[-1, 1]`` and the power law
``|z|**-beta`` outside::

    V(z) = 1 + (beta/2) * (1 - z**2)     |z| <= 1
    V(z) = |z|**(-beta)                  |z| >= 1

It is even, nonnegative and C^1, ``Psi(z) = -z V'(z)`` is nonnegative with
``Psi <= beta * V``, and ``r * V(r**(1 + alpha) * z) == |z|**(-beta)`` holds
exactly once ``r**(1 + alpha) * |z| >= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the n-particle system.

    Parameters
    ----------
    beta : float
        Interaction exponent, strictly between 0 and 1.
    n : int
        Number of particles.
    seed : int
        64-bit seed for all random streams derived from these parameters.
    dt : float, optional
        Euler-Maruyama step. Defaults to ``0.1 / scale**2``.
    """

    beta: float = 0.5
    n: int = 1
    seed: int = 0
    dt: float | None = field(default=None)

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.dt is None:
            object.__setattr__(self, "dt", 0.1 / self.scale**2)
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def alpha(self) -> float:
        return (1.0 - self.beta) / self.beta

    @property
    def scale(self) -> float:
        """Interaction scale ``n**(1 + alpha)``."""
        return float(self.n) ** (1.0 + self.alpha)

    @property
    def n_alpha(self) -> float:
        """Prefactor ``n**alpha`` of the lifted generator."""
        return float(self.n) ** self.alpha

    def replace(self, **changes) -> "ModelParams":
        kw = dict(beta=self.beta, n=self.n, seed=self.seed, dt=self.dt)
        if "n" in changes and "dt" not in changes:
            kw["dt"] = None
        kw.update(changes)
        return ModelParams(**kw)


def _check_finite(d):
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite argument")
    return d


def wrap(d):
    """Signed circle difference, mapped to ``[-1/2, 1/2)``."""
    d = _check_finite(d)
    out = d - np.floor(d + 0.5)
    # floor(d + 0.5) can round so that out == 0.5 exactly
    out = np.where(out >= 0.5, out - 1.0, out)
    return out[()] if out.ndim == 0 else out


def wrap01(x):
    """Circle coordinate mapped to ``[0, 1)``."""
    x = np.asarray(x, dtype=float)
    out = x - np.floor(x)
    out = np.where(out >= 1.0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def V(z, beta):
    z = np.abs(_check_finite(z))
    inner = z <= 1.0
    out = np.empty_like(z)
    out[inner] = 1.0 + 0.5 * beta * (1.0 - z[inner] ** 2)
    out[~inner] = z[~inner] ** (-beta)
    return out[()] if out.ndim == 0 else out


def Vprime(z, beta):
    z = _check_finite(z)
    a = np.abs(z)
    inner = a <= 1.0
    out = np.empty_like(z)
    out[inner] = -beta * z[inner]
    out[~inner] = -beta * np.sign(z[~inner]) * a[~inner] ** (-beta - 1.0)
    return out[()] if out.ndim == 0 else out


def Psi(z, beta):
    z = _check_finite(z)
    return -z * Vprime(z, beta)


def scaling_error(r, z, beta):
    """Relative error of ``r * V(r**(1+alpha) * z)`` against ``|z|**-beta``."""
    z = _check_finite(z)
    if np.any(z == 0.0):
        raise ValueError("z = 0 is the singular point of the scaling limit")
    if not r > 0:
        raise ValueError("r must be positive")
    alpha = (1.0 - beta) / beta
    target = np.abs(z) ** (-beta)
    approx = r * V(r ** (1.0 + alpha) * z, beta)
    return np.abs(approx - target) / target
