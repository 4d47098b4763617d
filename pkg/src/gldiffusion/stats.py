"""Monte Carlo error bars."""
from __future__ import annotations

import numpy as np


def jackknife_mean(values, n_batches=50):
    """Mean of ``values`` with a delete-one-batch jackknife standard error.

    Contiguous batches absorb serial correlation shorter than a batch. With
    ``len(values) < n_batches`` each value is its own batch.
    """
    v = np.asarray(values, dtype=float).ravel()
    N = v.size
    if N < 2:
        raise ValueError("need at least 2 values for an error estimate")
    B = min(n_batches, N)
    parts = np.array_split(v, B)
    sums = np.array([p.sum() for p in parts])
    lens = np.array([p.size for p in parts], dtype=float)
    total = sums.sum()
    mean = total / N
    loo = (total - sums) / (N - lens)
    se = np.sqrt((B - 1) / B * np.sum((loo - loo.mean()) ** 2))
    return float(mean), float(se)


def decreasing_within(values, errors, k=2.0):
    """True if each consecutive step does not increase beyond ``k`` joint sigma."""
    v = np.asarray(values, float)
    e = np.asarray(errors, float)
    joint = np.sqrt(e[1:] ** 2 + e[:-1] ** 2)
    return bool(np.all(v[1:] - v[:-1] <= k * joint))


def trend_ok(values, errors, k=2.0):
    """Decreasing within ``k`` joint sigma and final below half the first value."""
    v = np.asarray(values, float)
    return decreasing_within(values, errors, k) and bool(v[-1] < 0.5 * v[0])


def integrated_autocorr(series, c=5.0):
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(series, float)
    x = x - x.mean()
    N = x.size
    if N < 4 or not np.any(x):
        return 1.0
    f = np.fft.rfft(x, n=2 * N)
    acf = np.fft.irfft(f * np.conj(f))[:N]
    acf /= acf[0]
    tau = 1.0
    for w in range(1, N):
        tau = 1.0 + 2.0 * acf[1:w + 1].sum()
        if w >= c * tau:
            break
    return float(max(tau, 1e-12))
