"""Smooth periodic test functions on the unit circle.

A :class:`TestFunction` is a real trigonometric polynomial

    h(theta) = c + sum_k a_k cos(2 pi k theta) + b_k sin(2 pi k theta)

which covers the constant and single-harmonic observables used throughout
and closes under differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    const: float = 0.0
    cos_coef: tuple = ()
    sin_coef: tuple = ()

    @classmethod
    def constant(cls, c=1.0):
        return cls(const=float(c))

    @classmethod
    def cos(cls, k, amp=1.0):
        if k < 1:
            raise ValueError("frequency must be >= 1")
        a = [0.0] * k
        a[k - 1] = float(amp)
        return cls(cos_coef=tuple(a))

    @classmethod
    def sin(cls, k, amp=1.0):
        if k < 1:
            raise ValueError("frequency must be >= 1")
        b = [0.0] * k
        b[k - 1] = float(amp)
        return cls(sin_coef=tuple(b))

    @classmethod
    def random(cls, rng, degree, scale=1.0, const=0.0):
        """Random polynomial with coefficients decaying like 1/k."""
        k = np.arange(1, degree + 1)
        a = scale * rng.standard_normal(degree) / k
        b = scale * rng.standard_normal(degree) / k
        return cls(const=float(const), cos_coef=tuple(a), sin_coef=tuple(b))

    @property
    def degree(self):
        return max(len(self.cos_coef), len(self.sin_coef))

    def _coefs(self):
        K = self.degree
        a = np.zeros(K)
        b = np.zeros(K)
        a[: len(self.cos_coef)] = self.cos_coef
        b[: len(self.sin_coef)] = self.sin_coef
        return a, b

    @property
    def is_constant(self):
        a, b = self._coefs()
        return not (np.any(a) or np.any(b))

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = self._coefs()
        out = np.full(theta.shape, self.const)
        for k in range(1, self.degree + 1):
            if a[k - 1]:
                out = out + a[k - 1] * np.cos(TWO_PI * k * theta)
            if b[k - 1]:
                out = out + b[k - 1] * np.sin(TWO_PI * k * theta)
        return out

    def derivative(self) -> "TestFunction":
        a, b = self._coefs()
        w = TWO_PI * np.arange(1, self.degree + 1)
        # d/dθ [a cos + b sin] = w b cos - w a sin
        return TestFunction(0.0, tuple(w * b), tuple(-w * a))

    def d1(self, theta):
        return self.derivative()(theta)

    def d2(self, theta):
        return self.derivative().derivative()(theta)

    def __add__(self, other):
        a1, b1 = self._coefs()
        a2, b2 = other._coefs()
        K = max(len(a1), len(a2))
        a = np.zeros(K)
        b = np.zeros(K)
        a[: len(a1)] += a1
        a[: len(a2)] += a2
        b[: len(b1)] += b1
        b[: len(b2)] += b2
        return TestFunction(self.const + other.const, tuple(a), tuple(b))

    def scaled(self, c):
        a, b = self._coefs()
        return TestFunction(c * self.const, tuple(c * a), tuple(c * b))

    def sup_norm(self, grid=4096):
        theta = np.arange(grid) / grid
        return float(np.max(np.abs(self(theta))))


def pairing(h: TestFunction, x):
    """Empirical pairing ``(h, mu_n) = mean_i h(x_i)`` along the last axis."""
    return np.mean(h(x), axis=-1)
