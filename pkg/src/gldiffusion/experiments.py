"""Seeded experiment drivers behind the command line.

Every driver takes an :class:`ExperimentConfig`, writes one CSV report plus a
manifest into ``cfg.out`` and returns the CSV rows. Random streams are keyed
by ``(seed, experiment id, n, purpose, index)`` so the output does not depend
on the thread count.
"""
from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from .forms import (designated_psi, epsilon_n, form_estimate, generator_bound,
                    generator_norm_estimate, resolvent_deviation, sup_norm)
from .gibbs import sample_chains
from .hydrodynamics import DensityField, fractional_multiplier, moment_functional, solve
from .model import ModelParams
from .particles import equal_spacing, iid_from_density, pair_energy_stat, run_em
from .rng import stream
from .stats import integrated_autocorr, jackknife_mean
from .testfunctions import TestFunction, pairing

EXPERIMENTS = ("invariant-scan", "stationary-path", "pde-relax",
               "hydro-compare", "forms-scan", "resolvent-scan")
_EXP_ID = {name: 10 + i for i, name in enumerate(EXPERIMENTS)}

# per-experiment defaults, overridden by config keys
DEFAULTS = {
    "invariant-scan": dict(n_list=[8, 16, 32, 64], samples=4000),
    "stationary-path": dict(n_list=[8, 16, 32, 64], replicas=32, T=1.0,
                            record_interval=0.005, samples=1000),
    "pde-relax": dict(n_list=[1], T=5.0, pde_dt=1e-4,
                      record_times=[round(0.1 * k, 10) for k in range(51)]),
    "hydro-compare": dict(n_list=[128], replicas=64, T=0.1, pde_dt=1e-4,
                          record_times=[0.0, 0.05, 0.1]),
    "forms-scan": dict(n_list=[8, 16, 32, 64], samples=8000),
    "resolvent-scan": dict(n_list=[8, 16, 32], samples=64, replicas=16,
                           norm_samples=8000, beta_res=10.0, obs_stride=10),
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    beta: float = 0.5
    n_list: list = field(default_factory=lambda: [8])
    threads: int = 1
    out: str = "results"
    grid_size: int = 256
    dt: float | None = None          # particle step; None -> dt_factor / n^2
    dt_factor: float = 0.04
    pde_dt: float | None = None      # None -> 0.25 / M^2
    samples: int = 1000
    norm_samples: int = 8000
    chains: int = 4
    burn_in_sweeps: int = 200
    thin_sweeps: int = 5
    replicas: int = 16
    T: float = 1.0
    record_times: list = field(default_factory=list)
    record_interval: float = 0.01
    amplitude: float = 0.5
    mode: int = 1
    beta_res: float = 10.0
    horizon: float | None = None
    obs_stride: int = 10
    zero_noise: bool = False
    initial: str = "gibbs"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.seed is None:
            raise ValueError("a seed is required")
        if not self.n_list:
            raise ValueError("n_list must be nonempty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be strictly increasing")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if any(t > self.T + 1e-12 or t < 0 for t in self.record_times):
            raise ValueError("record_times must lie in [0, T]")

    @classmethod
    def from_dict(cls, d):
        rio.validate(d, "config.schema.json")
        merged = dict(DEFAULTS[d["experiment"]])
        merged.update(d)
        return cls(**merged)

    def to_dict(self):
        return dataclasses.asdict(self)

    def params(self, n):
        dt = self.dt if self.dt is not None else self.dt_factor / n**2
        return ModelParams(beta=self.beta, n=n, seed=self.seed, dt=dt)

    @property
    def exp_id(self):
        return _EXP_ID[self.experiment]


def _pmap(fn, tasks, threads):
    """Ordered map, threaded when ``threads > 1`` (the kernels release the GIL)."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def _finish(cfg: ExperimentConfig, columns, rows, t0, metadata=None, extra_files=()):
    out = Path(cfg.out)
    h = rio.config_hash(cfg.to_dict())
    for r in rows:
        r["run_id"] = h
    csv_path = rio.write_csv(out / f"{cfg.experiment}.csv", list(columns) + ["run_id"], rows)
    files = [csv_path, *extra_files]
    manifest = {
        "experiment": cfg.experiment,
        "manifest_hash": h,
        "config": cfg.to_dict(),
        "git_hash": rio.git_hash(Path(__file__).parent),
        "seeds": {"seed": cfg.seed, "experiment_stream": cfg.exp_id,
                  "stream_key": "(seed, experiment_stream, n, purpose, index)"},
        "wall_time_s": time.perf_counter() - t0,
        "files": [{"path": p.name, "sha256": rio.sha256_file(p)} for p in files],
        "metadata": metadata or {},
        "package_version": __version__,
    }
    rio.write_manifest(out / f"{cfg.experiment}.manifest.json", manifest)
    return rows


def _harmonics(kmax=4):
    hs = []
    for k in range(1, kmax + 1):
        hs += [(f"sin{k}", TestFunction.sin(k)), (f"cos{k}", TestFunction.cos(k))]
    return hs


def _gibbs(cfg, p, count, purpose):
    chains = min(cfg.chains, count)
    per = math.ceil(count / chains)
    s = sample_chains(p, chains, per, stream_ids=(cfg.exp_id, p.n, purpose),
                      burn_in_sweeps=cfg.burn_in_sweeps, thin_sweeps=cfg.thin_sweeps)
    return s, s.configs[:count]


# --- invariant-scan ----------------------------------------------------------

def _smoothing_grid(cfg, n):
    M = cfg.grid_size
    while M < 4 * n:
        M *= 2
    return M


def run_invariant_scan(cfg: ExperimentConfig):
    t0 = time.perf_counter()

    def task(n):
        p = cfg.params(n)
        s, X = _gibbs(cfg, p, cfg.samples, 0)
        rows = []
        for name, h in _harmonics():
            est, se = jackknife_mean(pairing(h, X) ** 2)
            rows.append(dict(n=n, observable=f"{name}_sq", estimate=est, std_error=se))
        est, se = jackknife_mean(pair_energy_stat(X, p).with_diagonal)
        rows.append(dict(n=n, observable="pair_energy", estimate=est, std_error=se))
        # smoothed empirical measures at bandwidth 1/n, on a subsample
        M = _smoothing_grid(cfg, n)
        sub = X[:: max(1, len(X) // 200)]
        mf = [moment_functional(DensityField.from_empirical(x, M, 1.0 / n), p.beta) for x in sub]
        est, se = jackknife_mean(mf)
        rows.append(dict(n=n, observable="moment_functional", estimate=est, std_error=se))
        per = len(X) // min(cfg.chains, len(X))
        tau = integrated_autocorr(pairing(TestFunction.sin(1), X[:per]))
        meta = {"acceptance_rate": s.acceptance_rate, "proposal_sigma": s.proposal_sigma,
                "tau_int_sin1_samples": tau, "sample_count": len(X),
                "smoothing_grid": M, "smoothing_bandwidth": 1.0 / n}
        return rows, meta

    res = _pmap(task, list(cfg.n_list), cfg.threads)
    rows = [r for part, _ in res for r in part]
    meta = {str(n): m for n, (_, m) in zip(cfg.n_list, res)}
    return _finish(cfg, ["n", "observable", "estimate", "std_error"], rows, t0, meta)


# --- stationary-path -----------------------------------------------------------

def _path_stats(cfg, p, starts, purpose):
    """Run replicas from ``starts`` to time ``T`` tracking running sups."""
    x = np.array(starts, dtype=float)
    R = len(x)
    rngs = [stream(cfg.seed, cfg.exp_id, p.n, purpose, r) for r in range(R)]
    n_steps = int(round(cfg.T / p.dt))
    stride = max(1, int(round(cfg.record_interval / p.dt)))
    sin1, cos1 = TestFunction.sin(1), TestFunction.cos(1)
    sup_s = np.abs(pairing(sin1, x))
    sup_c = np.abs(pairing(cos1, x))
    e0 = pair_energy_stat(x, p).with_diagonal
    sup_e = e0.copy()
    k = 0
    while k < n_steps:
        m = min(stride, n_steps - k)
        run_em(x, p, m, rngs, noise=not cfg.zero_noise)
        k += m
        np.maximum(sup_s, np.abs(pairing(sin1, x)), out=sup_s)
        np.maximum(sup_c, np.abs(pairing(cos1, x)), out=sup_c)
        np.maximum(sup_e, pair_energy_stat(x, p).with_diagonal, out=sup_e)
    return sup_s, sup_c, sup_e, n_steps


def _mean_se(v):
    v = np.asarray(v, float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def run_stationary_path(cfg: ExperimentConfig):
    t0 = time.perf_counter()

    def task(n):
        p = cfg.params(n)
        if cfg.initial == "equal-spacing":
            starts = np.tile(equal_spacing(n), (cfg.replicas, 1))
            ref = pair_energy_stat(starts, p).with_diagonal
        else:
            _, starts = _gibbs(cfg, p, cfg.replicas, 0)
            _, Xref = _gibbs(cfg, p, cfg.samples, 1)
            ref = pair_energy_stat(Xref, p).with_diagonal
        sup_s, sup_c, sup_e, steps = _path_stats(cfg, p, starts, 2)
        nan = float("nan")
        rows = []
        for name, v in (("sup_abs_sin1", sup_s), ("sup_abs_cos1", sup_c),
                        ("pair_energy_sup", sup_e)):
            est, se = _mean_se(v)
            rows.append(dict(n=n, observable=name, estimate=est, std_error=se))
        rows.append(dict(n=n, observable="pair_energy_sup_max",
                         estimate=float(sup_e.max()), std_error=nan))
        est, se = _mean_se(ref)
        rows.append(dict(n=n, observable="pair_energy_t0_mean", estimate=est, std_error=se))
        rows.append(dict(n=n, observable="pair_energy_t0_p99",
                         estimate=float(np.percentile(ref, 99)), std_error=nan))
        return rows, {"dt": p.dt, "steps": steps, "replicas": len(starts)}

    res = _pmap(task, list(cfg.n_list), cfg.threads)
    rows = [r for part, _ in res for r in part]
    meta = {str(n): m for n, (_, m) in zip(cfg.n_list, res)}
    return _finish(cfg, ["n", "observable", "estimate", "std_error"], rows, t0, meta)


# --- pde-relax ---------------------------------------------------------------

def initial_density(cfg: ExperimentConfig, M=None):
    M = M or cfg.grid_size
    a, k = cfg.amplitude, cfg.mode
    return DensityField.from_function(lambda t: 1.0 + a * np.cos(2 * np.pi * k * t), M)


def _record_times(cfg):
    return sorted(set(cfg.record_times)) or [0.0, cfg.T]


def run_pde_relax(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    rho0 = initial_density(cfg)
    mult = fractional_multiplier(cfg.grid_size, cfg.beta)
    dt = cfg.pde_dt if cfg.pde_dt is not None else 0.25 / cfg.grid_size**2
    snaps = solve(rho0, cfg.T, dt, mult, _record_times(cfg))
    rows = [dict(time=s.time, l2_distance=s.field.l2_distance(),
                 min_rho=float(s.field.values.min()), mass=s.field.mass(),
                 moment_functional=s.moment, warning=s.warning or "") for s in snaps]
    dpath, hpath = rio.write_density(Path(cfg.out) / "pde-relax_final.csv", snaps[-1].field,
                                     beta=cfg.beta, dt=dt, time=snaps[-1].time)
    return _finish(cfg, ["time", "l2_distance", "min_rho", "mass", "moment_functional",
                         "warning"], rows, t0, {"dt": dt}, extra_files=(dpath, hpath))


# --- hydro-compare -------------------------------------------------------------

def run_hydro_compare(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    times = _record_times(cfg)
    rho0 = initial_density(cfg)
    mult = fractional_multiplier(cfg.grid_size, cfg.beta)
    pde_dt = cfg.pde_dt if cfg.pde_dt is not None else 0.25 / cfg.grid_size**2
    snaps = solve(rho0, max(times), pde_dt, mult, times)
    hs = [("sin1", TestFunction.sin(1)), ("cos1", TestFunction.cos(1))]
    pde = {(round(s.time, 12), name): s.field.pairing(h) for s in snaps for name, h in hs}
    chunk = 8

    def task(job):
        n, c0 = job
        p = cfg.params(n)
        R = min(chunk, cfg.replicas - c0)
        x = np.stack([iid_from_density(rho0, n, stream(cfg.seed, cfg.exp_id, n, 0, c0 + r))
                      for r in range(R)])
        rngs = [stream(cfg.seed, cfg.exp_id, n, 1, c0 + r) for r in range(R)]
        out = {}
        k = 0
        for t in times:
            target = int(round(t / p.dt))
            run_em(x, p, target - k, rngs, noise=not cfg.zero_noise)
            k = max(k, target)
            for name, h in hs:
                out[(t, name)] = pairing(h, x)
        return out

    jobs = [(n, c0) for n in cfg.n_list for c0 in range(0, cfg.replicas, chunk)]
    parts = _pmap(task, jobs, cfg.threads)
    rows = []
    for n in cfg.n_list:
        mine = [pt for (nn, _), pt in zip(jobs, parts) if nn == n]
        dt_n = cfg.params(n).dt
        for t in times:
            t_pde = min(snaps, key=lambda s: abs(s.time - t)).time
            for name, _ in hs:
                v = np.concatenate([pt[(t, name)] for pt in mine])
                est, se = _mean_se(v)
                ref = pde[(round(t_pde, 12), name)]
                rows.append(dict(n=n, time=round(t / dt_n) * dt_n, observable=name,
                                 particle_mean=est, std_error=se, pde_value=ref,
                                 gap=abs(est - ref)))
    meta = {"initial-law": "iid(rho0); not from the bounded-entropy initial class",
            "pde_dt": pde_dt, "replicas": cfg.replicas,
            "particle_dt": {str(n): cfg.params(n).dt for n in cfg.n_list}}
    return _finish(cfg, ["n", "time", "observable", "particle_mean", "std_error",
                         "pde_value", "gap"], rows, t0, meta)


# --- forms-scan and resolvent-scan --------------------------------------------

def run_forms_scan(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    psi = designated_psi()

    def task(n):
        p = cfg.params(n)
        s, X = _gibbs(cfg, p, cfg.samples, 0)
        f = form_estimate(psi, psi, X, p)
        a = generator_norm_estimate(psi, X, p)
        rows = [dict(n=n, observable="form_S", estimate=f.value, std_error=f.std_error),
                dict(n=n, observable="generator_norm", estimate=a.value, std_error=a.std_error)]
        return rows, {"acceptance_rate": s.acceptance_rate, "sample_count": len(X)}

    res = _pmap(task, list(cfg.n_list), cfg.threads)
    rows = [r for part, _ in res for r in part]
    meta = {"psi": psi.meta, "per_n": {str(n): m for n, (_, m) in zip(cfg.n_list, res)}}
    return _finish(cfg, ["n", "observable", "estimate", "std_error"], rows, t0, meta)


def run_resolvent_scan(cfg: ExperimentConfig):
    t0 = time.perf_counter()
    g = designated_psi()

    def task(n):
        p = cfg.params(n)
        _, Xn = _gibbs(cfg, p, cfg.norm_samples, 0)
        norm = generator_norm_estimate(g, Xn, p)
        _, X = _gibbs(cfg, p, cfg.samples, 1)
        dev = resolvent_deviation(g, cfg.beta_res, X, p, horizon=cfg.horizon,
                                  replicas=cfg.replicas, obs_stride=cfg.obs_stride,
                                  rng=stream(cfg.seed, cfg.exp_id, n, 2))
        return norm, dev, sup_norm(g, X)

    res = _pmap(task, list(cfg.n_list), cfg.threads)
    b = generator_bound([norm for norm, _, _ in res])
    rows = []
    for n, (norm, dev, gsup) in zip(cfg.n_list, res):
        dsq = math.sqrt(max(dev.value, 0.0))
        eps = epsilon_n(gsup, dsq, b)
        eps_se = eps * dev.std_error / (6.0 * dev.value) if dev.value > 0 else float("nan")
        rows += [dict(n=n, observable="deviation", estimate=dev.value, std_error=dev.std_error),
                 dict(n=n, observable="generator_norm", estimate=norm.value,
                      std_error=norm.std_error),
                 dict(n=n, observable="g_sup", estimate=gsup, std_error=float("nan")),
                 dict(n=n, observable="epsilon_n", estimate=eps, std_error=eps_se)]
    meta = {"b": b, "b_rule": "max over n of sqrt(generator_norm + 3 std_error)",
            "psi": g.meta, "deviations": {str(n): d.to_json() for n, (_, d, _) in
                                          zip(cfg.n_list, res)}}
    return _finish(cfg, ["n", "observable", "estimate", "std_error"], rows, t0, meta)


RUNNERS = {
    "invariant-scan": run_invariant_scan,
    "stationary-path": run_stationary_path,
    "pde-relax": run_pde_relax,
    "hydro-compare": run_hydro_compare,
    "forms-scan": run_forms_scan,
    "resolvent-scan": run_resolvent_scan,
}


def run(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)
