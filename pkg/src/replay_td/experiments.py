"""Multi-seed runs, exact TV schedules and parameter sweeps.

Runs are dispatched as independent ``(cell, seed)`` tasks. Results are
gathered in task order and every run derives its streams from
``(master seed, seed index)``, so outputs do not depend on the worker count.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import bounds
from .chain import MixingProfile, distribution_curve, mixing_profile
from .exceptions import HypothesisViolated, InputError
from .generate import GeneratorSpec, gen_mdp
from .learner import RunConfig, run_chain
from .mdp import InducedChain, induce_chain, load_mdp, load_policy, uniform_policy
from .report import BoundReport, CheckRecord, mean_se

JOBS_ENV = "REPLAY_TD_JOBS"
CHECK_NAMES = ("first_moment", "second_moment", "avg_iterate", "avg_iterate_rms", "final_iterate")


def resolve_jobs(requested: int | None = None) -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            requested = int(env)
        except ValueError as exc:
            raise InputError(f"{JOBS_ENV}={env!r} is not an integer") from exc
    jobs = 1 if requested is None else int(requested)
    if jobs < 1:
        raise InputError("jobs must be >= 1")
    return jobs


class TvSchedule:
    """``k -> d_TV(mu, law of S_{k-N})`` computed exactly by powering from the start law."""

    def __init__(self, p_pi, mu, start, length: int = 1):
        self._p = np.asarray(p_pi, dtype=float)
        self._mu = np.asarray(mu, dtype=float)
        self._start = np.asarray(start, dtype=float)
        self._tv = np.empty(0)
        self._extend(max(length, 1))

    def _extend(self, length):
        rows = distribution_curve(self._p, self._start, length)
        self._tv = 0.5 * np.abs(rows - self._mu).sum(axis=1)

    def __call__(self, k: int) -> float:
        k = int(k)
        if k >= self._tv.size:
            self._extend(max(2 * self._tv.size, k + 1))
        return float(self._tv[k])

    def curve(self, n: int) -> np.ndarray:
        if n > self._tv.size:
            self._extend(n)
        return self._tv[:n].copy()


def bound_inputs_for(chain: InducedChain, profile: MixingProfile, config: RunConfig) -> bounds.BoundInputs:
    """Bound inputs for one run configuration, with exact TV terms and ``V_0`` error."""
    start = config.start_distribution(chain)
    e0 = config.v0(chain) - np.asarray(chain.v_pi)
    stationary = config.initial_state_mode == "stationary"
    return bounds.BoundInputs(
        n_states=chain.n_states, n_actions=chain.mdp.n_actions, r_max=chain.mdp.r_max,
        gamma=chain.gamma, mu_min=chain.mu_min, alpha=config.alpha, buffer_n=config.buffer_size,
        batch_l=config.batch_size, horizon_t=config.horizon, t1_mix=profile.t1_mix,
        t2_mix=profile.t2_mix, v0_err_sq=float(e0 @ e0),
        tv_at=TvSchedule(chain.p_pi, chain.mu, start, config.horizon + 1),
        stationary_start=stationary,
    )


@dataclass
class SeedStats:
    """Per-seed arrays stacked along axis 0."""

    err_l2_sq: np.ndarray
    w_norm: np.ndarray
    w_norm_sq: np.ndarray
    mean_sq_err: np.ndarray
    avg_iterate_err_sq: np.ndarray
    max_v_inf: np.ndarray

    @property
    def n_seeds(self) -> int:
        return self.err_l2_sq.shape[0]


def _run_task(args):
    chain, config = args
    tr = run_chain(chain, config)
    return (tr.err_l2_sq, tr.w_norm, tr.w_norm_sq, tr.mean_sq_err, tr.avg_iterate_err_sq,
            float(tr.v_inf.max()))


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _with(config: RunConfig, **kw) -> RunConfig:
    d = config.to_dict()
    d.update(kw)
    return RunConfig(**d)


def run_seeds(chain: InducedChain, config: RunConfig, n_seeds: int, jobs: int = 1) -> SeedStats:
    """Run ``n_seeds`` replicates; replicate ``i`` uses ``run_index = i`` under ``config.seed``."""
    tasks = [(chain, _with(config, run_index=i)) for i in range(n_seeds)]
    return _stack(_map(_run_task, tasks, jobs))


def _stack(results) -> SeedStats:
    cols = list(zip(*results))
    return SeedStats(*(np.array(c) for c in cols))


def evaluate_checks(chain, profile, config, stats: SeedStats, checks=CHECK_NAMES) -> list:
    """Dominance records for the requested bound names; violated hypotheses become skips."""
    b = bound_inputs_for(chain, profile, config)
    t = config.horizon
    meta = {"alpha": config.alpha, "buffer_size": config.buffer_size, "batch_size": config.batch_size,
            "horizon": t, "seed": config.seed, "n_seeds": stats.n_seeds,
            "initial_state_mode": config.initial_state_mode}
    out, skipped = [], []
    for name in checks:
        try:
            if name in ("first_moment", "second_moment"):
                if not config.instrument or t == 0:
                    skipped.append({"name": name, "reason": "no instrumented steps"})
                    continue
                series = stats.w_norm if name == "first_moment" else stats.w_norm_sq
                fn = bounds.first_moment_bound if name == "first_moment" else bounds.second_moment_bound
                out.append(worst_over_k(name, series, np.array([fn(b, k) for k in range(t)]), meta))
            elif name == "avg_iterate":
                res = bounds.avg_iterate_bound(b)
                m, se = mean_se(stats.mean_sq_err)
                out.append(CheckRecord(name, res.total, float(m), float(se), terms=res.terms(), metadata=meta))
            elif name == "avg_iterate_rms":
                res = bounds.avg_iterate_bound_rms(b)
                m, se = mean_se(np.sqrt(stats.avg_iterate_err_sq))
                out.append(CheckRecord(name, res.total, float(m), float(se), terms=res.terms(), metadata=meta))
            elif name == "final_iterate":
                res = bounds.final_iterate_bound(b, t)
                m, se = mean_se(stats.err_l2_sq[:, t])
                out.append(CheckRecord(name, res.total, float(m), float(se), terms=res.terms(),
                                       metadata={**meta, "k": t}))
            else:
                raise InputError(f"unknown check {name!r}")
        except HypothesisViolated as exc:
            skipped.append({"name": name, "reason": str(exc)})
    return out, skipped


def worst_over_k(name, series, bound_k, meta) -> CheckRecord:
    """Per-step dominance summarised at the step with the smallest margin."""
    m, se = mean_se(series)
    margin = bound_k + 3.0 * se - m
    k = int(np.argmin(margin))
    return CheckRecord(name, float(bound_k[k]), float(m[k]), float(se[k]),
                       terms={"k_worst": k, "n_steps": int(len(bound_k)),
                              "max_ratio": float(np.max(m / bound_k))},
                       metadata=meta)


# -- sweeps -------------------------------------------------------------------

@dataclass
class SweepSpec:
    alpha: list
    buffer_size: list
    batch_size: list
    horizon: list
    mdp: str | None = None
    policy: str | None = None
    generator: dict | None = None
    n_seeds: int = 30
    master_seed: int = 0
    initial_state_mode: str = "stationary"
    initial_state: int | None = None
    initial_distribution: list | None = None
    initial_v: list | None = None
    instrument: bool = True
    checks: list = field(default_factory=lambda: list(CHECK_NAMES))
    out: str | None = None

    def __post_init__(self):
        for name in ("alpha", "buffer_size", "batch_size", "horizon"):
            grid = getattr(self, name)
            if not isinstance(grid, list):
                grid = [grid]
                setattr(self, name, grid)
            if len(grid) == 0:
                raise InputError(f"sweep grid {name!r} is empty")
        if any(int(n) < 1 for n in self.buffer_size) or any(int(l) < 1 for l in self.batch_size):
            raise InputError("every N and L in the grid must be >= 1")
        if self.n_seeds < 1:
            raise InputError("seed count must be >= 1")
        if (self.mdp is None) == (self.generator is None):
            raise InputError("give exactly one of 'mdp' (path) or 'generator' (GeneratorSpec fields)")
        bad = set(self.checks) - set(CHECK_NAMES)
        if bad:
            raise InputError(f"unknown checks {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        seeds = d.pop("seeds", None)
        if isinstance(seeds, dict):
            d.setdefault("n_seeds", seeds.get("count", 30))
            d.setdefault("master_seed", seeds.get("master", 0))
        grids = d.pop("grid", None)
        if isinstance(grids, dict):
            for k, v in grids.items():
                d.setdefault(k, v)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown SweepSpec fields {sorted(unknown)}")
        missing = {"alpha", "buffer_size", "batch_size", "horizon"} - set(d)
        if missing:
            raise InputError(f"SweepSpec is missing grids {sorted(missing)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SweepSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from exc
        spec = cls.from_dict(doc)
        base = Path(path).resolve().parent
        for attr in ("mdp", "policy"):
            val = getattr(spec, attr)
            if val is not None and not Path(val).is_absolute():
                setattr(spec, attr, str(base / val))
        return spec

    def environment(self):
        if self.generator is not None:
            return gen_mdp(GeneratorSpec(**self.generator))
        mdp = load_mdp(self.mdp)
        pol = load_policy(self.policy, mdp) if self.policy else uniform_policy(mdp)
        return mdp, pol

    def cells(self) -> list:
        """Grid cells in deterministic (alpha, N, L, T) lexicographic order."""
        return [dict(alpha=float(a), buffer_size=int(n), batch_size=int(l), horizon=int(t))
                for a, n, l, t in product(self.alpha, self.buffer_size, self.batch_size, self.horizon)]

    def config_for(self, cell: dict) -> RunConfig:
        return RunConfig(alpha=cell["alpha"], buffer_size=cell["buffer_size"], batch_size=cell["batch_size"],
                         horizon=cell["horizon"], initial_v=self.initial_v,
                         initial_state_mode=self.initial_state_mode, initial_state=self.initial_state,
                         initial_distribution=self.initial_distribution, seed=self.master_seed,
                         instrument=self.instrument)


def _write_cell_csv(path, stats: SeedStats):
    err_m, err_se = mean_se(stats.err_l2_sq)
    w_m, w_se = mean_se(stats.w_norm)
    w2_m, w2_se = mean_se(stats.w_norm_sq)
    t = err_m.size - 1
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "err_l2_sq_mean", "err_l2_sq_se", "w_norm_mean", "w_norm_se",
                     "w_norm_sq_mean", "w_norm_sq_se"])
        for k in range(t + 1):
            noise = [w_m[k], w_se[k], w2_m[k], w2_se[k]] if k < t else [np.nan] * 4
            wr.writerow([k] + [("" if not np.isfinite(x) else repr(float(x))) for x in [err_m[k], err_se[k], *noise]])


def run_sweep(spec: SweepSpec, out_dir=None, jobs: int = 1) -> dict:
    """Run every cell and seed; write per-cell CSVs plus ``summary.json``/``summary.csv``."""
    out = Path(out_dir or spec.out or "sweep_out")
    out.mkdir(parents=True, exist_ok=True)
    mdp, pol = spec.environment()
    cells = spec.cells()
    chains, profiles, configs, tasks, owners = {}, {}, [], [], []
    for ci, cell in enumerate(cells):
        cfg = spec.config_for(cell)
        configs.append(cfg)
        if cfg.alpha not in chains:
            chains[cfg.alpha] = induce_chain(mdp, pol, cfg.alpha)
            profiles[cfg.alpha] = mixing_profile(chains[cfg.alpha])
        for i in range(spec.n_seeds):
            tasks.append((chains[cfg.alpha], _with(cfg, run_index=i)))
            owners.append(ci)
    results = _map(_run_task, tasks, jobs)

    summary_cells = []
    report = BoundReport("sweep", metadata={"master_seed": spec.master_seed, "n_seeds": spec.n_seeds})
    for ci, cell in enumerate(cells):
        stats = _stack([r for r, o in zip(results, owners) if o == ci])
        cfg = configs[ci]
        csv_name = f"cell_{ci:03d}.csv"
        _write_cell_csv(out / csv_name, stats)
        checks, skipped = evaluate_checks(chains[cfg.alpha], profiles[cfg.alpha], cfg, stats, spec.checks)
        for c in checks:
            c.metadata = {**c.metadata, "cell": ci}
        report.extend(checks)
        m, se = mean_se(stats.mean_sq_err)
        am, ase = mean_se(stats.avg_iterate_err_sq)
        summary_cells.append({
            "cell": ci, **cell, "trace_csv": csv_name,
            "status": "ok" if checks else "skipped",
            "mean_sq_err": float(m), "mean_sq_err_se": float(se),
            "avg_iterate_err_sq": float(am), "avg_iterate_err_sq_se": float(ase),
            "max_v_inf": float(stats.max_v_inf.max()),
            "checks": [c.to_dict() for c in checks], "skipped": skipped,
        })
    doc = {"spec": asdict(spec) | {"out": None}, "t1_mix": {str(a): p.t1_mix for a, p in profiles.items()},
           "t2_mix": {str(a): p.t2_mix for a, p in profiles.items()},
           "passed": report.passed, "cells": summary_cells}
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    (out / "summary.csv").write_text(report.to_csv())
    return doc
