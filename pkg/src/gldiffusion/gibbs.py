"""Metropolis sampling of the Gibbs measure

    nu_n(dx) ∝ exp(-sum_{i != j} V(scale * (x_i - x_j))) dx_1 ... dx_n.

The diagonal terms ``V(0)`` are a constant and are left out of the energy;
they cancel in every Metropolis ratio and in the normalisation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .model import ModelParams
from .particles import as_configuration, equal_spacing
from .rng import stream
from .stats import jackknife_mean

GIBBS_STREAM = 1


@dataclass
class ChainState:
    config: np.ndarray
    energy: float
    accepted: int = 0
    proposed: int = 0

    @classmethod
    def start(cls, config, params: ModelParams):
        x = as_configuration(config, params.n).copy()
        return cls(x, energy(x, params))

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposed if self.proposed else float("nan")


@dataclass
class GibbsSamples:
    configs: np.ndarray  # (n_samples, n)
    acceptance_rate: float
    proposal_sigma: float

    def __len__(self):
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)


def energy(config, params: ModelParams) -> float:
    x = np.ascontiguousarray(config, dtype=float)
    return float(K.energy(x, params.beta, params.scale))


def _advance(state: ChainState, params, sigma, n_steps, rng):
    n = params.n
    sites = rng.integers(0, n, size=n_steps)
    xis = rng.standard_normal(n_steps)
    us = rng.random(n_steps)
    e, acc = K.mh_run(state.config, state.energy, sites, xis, us,
                      float(sigma), params.beta, params.scale)
    state.energy = e
    state.accepted += int(acc)
    state.proposed += int(n_steps)
    return int(acc)


def mh_step(state: ChainState, params: ModelParams, proposal_sigma, rng) -> ChainState:
    """One single-site random-walk Metropolis step, returning a new state."""
    if not proposal_sigma > 0:
        raise ValueError("proposal_sigma must be positive")
    new = replace(state, config=state.config.copy())
    _advance(new, params, proposal_sigma, 1, rng)
    return new


def run_chain(state: ChainState, params: ModelParams, proposal_sigma, n_steps, rng):
    """Advance ``state`` in place by ``n_steps`` Metropolis steps."""
    _advance(state, params, proposal_sigma, n_steps, rng)
    return state


def sample(params: ModelParams, n_samples, burn_in_sweeps=200, thin_sweeps=5,
           proposal_sigma=None, rng=None, initial=None, tune=True) -> GibbsSamples:
    """Thinned post-burn-in samples of one chain (one sweep = n steps).

    During burn-in the proposal width is tuned sweep by sweep towards a
    30-50% acceptance band and frozen afterwards.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = params.n
    if rng is None:
        rng = stream(params.seed, GIBBS_STREAM)
    if initial is None:
        initial = equal_spacing(n, offset=rng.random())
    sigma = float(proposal_sigma) if proposal_sigma is not None else min(0.5, 0.5 / n)
    state = ChainState.start(initial, params)
    for _ in range(burn_in_sweeps):
        acc = _advance(state, params, sigma, n, rng)
        if tune and n > 1:
            rate = acc / n
            if rate < 0.3:
                sigma *= 0.8
            elif rate > 0.5:
                sigma = min(sigma * 1.25, 0.5)
    state.accepted = state.proposed = 0
    out = np.empty((n_samples, n))
    for s in range(n_samples):
        _advance(state, params, sigma, n * max(thin_sweeps, 1), rng)
        out[s] = state.config
    return GibbsSamples(out, state.acceptance_rate, sigma)


def sample_chains(params: ModelParams, n_chains, samples_per_chain, stream_ids=(), **kw):
    """Independent chains on streams ``(seed, GIBBS_STREAM, *stream_ids, c)``,
    concatenated in chain order."""
    parts = []
    rates = []
    sigmas = []
    for c in range(n_chains):
        rng = stream(params.seed, GIBBS_STREAM, *stream_ids, c)
        res = sample(params, samples_per_chain, rng=rng, **kw)
        parts.append(res.configs)
        rates.append(res.acceptance_rate)
        sigmas.append(res.proposal_sigma)
    return GibbsSamples(np.concatenate(parts), float(np.mean(rates)), float(np.mean(sigmas)))


def _values(f, configs):
    if np.ndim(f) > 0 or isinstance(f, (int, float)):
        v = np.broadcast_to(np.asarray(f, dtype=float), (len(configs),))
        return np.asarray(v)
    try:
        v = np.asarray(f(configs), dtype=float)
        if v.shape == (len(configs),):
            return v
    except Exception:
        pass
    return np.array([f(c) for c in configs], dtype=float)


def mc_inner_product(f, g, samples, n_batches=50):
    """Estimate of ``<f, g>_n`` with a jackknife-over-batches error.

    ``f`` and ``g`` are functions of a configuration (vectorised over a
    ``(S, n)`` batch when possible) or precomputed arrays of values.
    """
    configs = getattr(samples, "configs", samples)
    if len(configs) < 2:
        raise ValueError("mc_inner_product needs at least 2 samples")
    configs = np.asarray(configs, dtype=float)
    prod = _values(f, configs) * _values(g, configs)
    return jackknife_mean(prod, n_batches=min(n_batches, len(configs)))


# --- discretised toy chain used for exact balance checks -------------------

def grid_states(n_grid, n=2):
    idx = np.indices((n_grid,) * n).reshape(n, -1).T
    return idx


def grid_transition_matrix(params: ModelParams, n_grid):
    """Transition matrix of the Metropolis chain restricted to a grid.

    Each coordinate lives on ``{j / n_grid}``; a step picks a site uniformly
    and proposes a move of one grid cell left or right with equal
    probability. Acceptance uses the same O(n) energy difference as the
    continuous sampler. Returns ``(P, states, weights)`` with weights
    ``exp(-energy)`` (unnormalised).
    """
    n = params.n
    states = grid_states(n_grid, n)
    index = {tuple(s): k for k, s in enumerate(states)}
    S = len(states)
    P = np.zeros((S, S))
    w = np.empty(S)
    for a, s in enumerate(states):
        x = s / n_grid
        w[a] = np.exp(-energy(x, params))
        for i in range(n):
            for step in (-1, 1):
                t = s.copy()
                t[i] = (t[i] + step) % n_grid
                xi_new = t[i] / n_grid
                de = 2.0 * (K.site_energy(x, i, xi_new, params.beta, params.scale)
                            - K.site_energy(x, i, x[i], params.beta, params.scale))
                P[a, index[tuple(t)]] += (1.0 / n) * 0.5 * min(1.0, np.exp(-de))
        P[a, a] += 1.0 - P[a].sum()
    return P, states, w


def run_grid_chain(params: ModelParams, n_grid, n_steps, rng, start=None):
    """Run the grid-restricted Metropolis chain step by step.

    Returns the visited state index per step and the state table of
    ``grid_states``.
    """
    n = params.n
    states = grid_states(n_grid, n)
    strides = n_grid ** np.arange(n - 1, -1, -1)
    s = np.zeros(n, dtype=np.int64) if start is None else np.array(states[start])
    sites = rng.integers(0, n, size=n_steps)
    moves = rng.integers(0, 2, size=n_steps) * 2 - 1
    us = rng.random(n_steps)
    visits = np.empty(n_steps, dtype=np.int64)
    for k in range(n_steps):
        i = sites[k]
        x = s / n_grid
        new = (s[i] + moves[k]) % n_grid
        de = 2.0 * (K.site_energy(x, i, new / n_grid, params.beta, params.scale)
                    - K.site_energy(x, i, x[i], params.beta, params.scale))
        if de <= 0.0 or us[k] < np.exp(-de):
            s[i] = new
        visits[k] = int(s @ strides)
    return visits, states
