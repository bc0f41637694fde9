"""The acceptance battery: one function per exit criterion.

Each ``criterion_*`` function returns a :class:`BoundReport`; its verdict is
derivable from the stored numbers. ``level="full"`` runs at the stated sizes,
``level="quick"`` at reduced Monte-Carlo sizes.
"""

import math
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import bounds
from .buffer import empirics
from .chain import (empirical_distribution_variance, ergodicity_check, mixing_profile, mixing_time,
                    pair_chain, stationary_distribution, tv_curve, tv_distance)
from .exceptions import ChainNotErgodic
from .experiments import TvSchedule, bound_inputs_for, run_seeds, worst_over_k
from .generate import GeneratorSpec, gen_mdp
from .learner import (ReplayTDLearner, RunConfig, TrajectorySampler, delta_stationary, run_chain,
                      run_streams, sample_trajectory, standard_td)
from .mdp import induce_chain, mdp_from_dict, policy_from_dict
from .norms import frobenius_norm, inf_norm, spectral_norm
from .report import BoundReport, CheckRecord, mean_se

LEVELS = {
    "quick": dict(instances=30, seeds=10, bound_t=500, conc_trials=2000, var_trials=500),
    "full": dict(instances=100, seeds=30, bound_t=500, conc_trials=10_000, var_trials=2000),
}

DESK = dict(alpha=0.1, buffer_size=256, batch_size=32, horizon=2000)


@dataclass(frozen=True)
class Fixture:
    name: str
    mdp: object
    policy: object

    def chain(self, alpha=DESK["alpha"]):
        return induce_chain(self.mdp, self.policy, alpha)


def load_fixture(name: str = "desk") -> Fixture:
    """Bundled fixtures: ``desk`` (3 states, 2 actions) and ``two_state``."""
    import json
    pkg = resources.files("replay_td") / "fixtures"
    mdp = mdp_from_dict(json.loads((pkg / f"{name}_mdp.json").read_text()))
    pol = policy_from_dict(json.loads((pkg / f"{name}_policy.json").read_text()), mdp)
    return Fixture(name, mdp, pol)


def random_instances(n: int, seed: int, max_states: int = 6):
    """``n`` random ergodic (mdp, policy, alpha) triples with ``|S| <= max_states``."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        spec = GeneratorSpec(
            n_states=int(rng.integers(1, max_states + 1)),
            n_actions=int(rng.integers(1, 4)),
            gamma=float(rng.uniform(0.05, 0.95)),
            r_max=float(rng.uniform(0.5, 2.0)),
            sparsity=float(rng.choice([0.0, 0.5, 0.8])),
            self_loop_min=float(rng.uniform(0.01, 0.2)),
            seed=int(rng.integers(2**32)),
        )
        mdp, pol = gen_mdp(spec)
        yield mdp, pol, float(rng.uniform(0.0, 1.0) * 0.998 + 0.001)


def _max_record(name, values, tol, **meta):
    values = np.asarray(values, dtype=float)
    return CheckRecord(name, tol, float(values.max()) if values.size else 0.0, 0.0,
                       metadata={"count": int(values.size), **meta})


# -- 1 --------------------------------------------------------------------------

def criterion_boundedness(level="full", seed=1) -> BoundReport:
    """``max_k ||V_k||_inf`` from the extreme start never exceeds ``R_max / (1 - gamma)``."""
    p = LEVELS[level]
    rng = np.random.default_rng(seed + 1000)
    excess = []
    for mdp, pol, alpha in random_instances(p["instances"], seed):
        chain = induce_chain(mdp, pol, alpha)
        cfg = RunConfig(alpha=alpha, buffer_size=int(rng.integers(1, 65)), batch_size=int(rng.integers(1, 33)),
                        horizon=p["bound_t"], initial_v=tuple(np.full(mdp.n_states, mdp.v_max)),
                        seed=int(rng.integers(2**32)), instrument=False)
        stats = run_seeds(chain, cfg, p["seeds"])
        excess.append(float(stats.max_v_inf.max()) - mdp.v_max)
    rep = BoundReport("1 boundedness", metadata={"instances": p["instances"], "seeds": p["seeds"], "T": p["bound_t"]})
    rep.add(_max_record("max_k ||V_k||_inf - R_max/(1-gamma)", excess, 1e-12))
    return rep


# -- 2 --------------------------------------------------------------------------

def criterion_identities(level="full", seed=2) -> BoundReport:
    """Update identity, noise decomposition, Bellman residual and ``D^B P^B = mu^B_{SS'}``."""
    p = LEVELS[level]
    upd, dec, bell, occ = [], [], [], []
    cases = [(f.mdp, f.policy, 0.1) for f in (load_fixture("desk"), load_fixture("two_state"))]
    cases += list(random_instances(max(5, p["instances"] // 10), seed))
    for i, (mdp, pol, alpha) in enumerate(cases):
        chain = induce_chain(mdp, pol, alpha)
        bell.append(np.abs(delta_stationary(chain, chain.v_pi)).max())
        cfg = RunConfig(alpha=alpha, buffer_size=16 + 8 * (i % 4), batch_size=1 + 5 * (i % 3), horizon=300,
                        seed=seed, run_index=i)
        lrn = ReplayTDLearner(chain, cfg).warm_up()
        a = np.asarray(chain.a_matrix)
        for _ in range(cfg.horizon):
            emp = empirics(lrn.buffer, chain.n_states)
            occ.append(np.abs(emp.d_b @ emp.p_b - emp.mu_ss).max())
            rec = lrn.step(instrument=True)
            lhs = rec.v_after - chain.v_pi
            rhs = a @ (rec.v_before - chain.v_pi) + alpha * rec.noise.w
            upd.append(np.abs(lhs - rhs).max())
            dec.append(np.abs(rec.noise.w - (rec.noise.decomp_a - rec.noise.decomp_b)).max())
    rep = BoundReport("2 exact identities", metadata={"instances": len(cases), "steps_each": 300})
    rep.add(_max_record("update identity |V_{k+1}-V^pi - A(V_k-V^pi) - alpha w|", upd, 1e-12))
    rep.add(_max_record("decomposition |w - (a - b)|", dec, 1e-12))
    rep.add(_max_record("|Delta_pi(V^pi)|", bell, 1e-10))
    rep.add(_max_record("|D^B P^B - mu^B_SS'|", occ, 1e-14))
    return rep


# -- 3 --------------------------------------------------------------------------

def criterion_lyapunov(level="full", seed=3) -> BoundReport:
    p = LEVELS[level]
    eq, res, ratio = [], [], []
    for mdp, pol, alpha in random_instances(p["instances"], seed):
        ch = induce_chain(mdp, pol, alpha)
        a, m = np.asarray(ch.a_matrix), np.asarray(ch.m_matrix)
        eq.append(abs(inf_norm(a) - ch.contraction))
        res.append(frobenius_norm(a.T @ m @ a - m + np.eye(ch.n_states)))
        ratio.append(spectral_norm(m) / ch.m_norm_bound)
    rep = BoundReport("3 system matrix and Lyapunov", metadata={"instances": p["instances"]})
    rep.add(_max_record("| ||A||_inf - (1 - alpha(1-gamma)mu_min) |", eq, 1e-12))
    rep.add(_max_record("||A^T M A - M + I||_F", res, 1e-8))
    rep.add(_max_record("||M||_2 / (1 + |S|/(alpha(1-gamma)mu_min))", ratio, 1.0))
    return rep


# -- 4 --------------------------------------------------------------------------

def brute_force_mixing_time(p, mu, epsilon=0.25, cap=100_000) -> int:
    """Direct matrix powering with a per-start TV scan."""
    p = np.asarray(p, dtype=float)
    for k in range(1, cap + 1):
        pk = np.linalg.matrix_power(p, k)
        if max(tv_distance(row, mu) for row in pk) <= epsilon:
            return k
    raise RuntimeError("brute-force cap reached")


def _mixing_cases(n, seed):
    cases = []
    for mdp, pol, _ in random_instances(n, seed):
        p_pi = np.einsum("sa,sat->st", pol.probs, mdp.transition)
        cases.append(p_pi)
    cases.append(np.array([[0.9, 0.1], [0.2, 0.8]]))
    cases.append(np.array([[1 - 1e-3, 1e-3], [1e-3, 1 - 1e-3]]))
    cases.append(np.array([[0.96, 0.04, 0.0], [0.0, 0.96, 0.04], [0.04, 0.0, 0.96]]))
    return cases


def criterion_mixing(level="full", seed=4) -> BoundReport:
    p = LEVELS[level]
    rng = np.random.default_rng(seed)
    mono, halving, tv_sum_ratio, mismatch = [], [], [], []
    for chain in _mixing_cases(p["instances"], seed):
        mu = stationary_distribution(chain)
        t = mixing_time(chain, mu)
        curve = tv_curve(chain, mu, 4 * t + 1)
        mono.append(float(np.max(np.diff(curve), initial=0.0)))
        halving.append(max(curve[l * t] - 2.0 ** -l for l in range(1, 5)))
        n = chain.shape[0]
        starts = [np.eye(n)[s] for s in range(n)] + [rng.dirichlet(np.ones(n)) for _ in range(3)]
        horizon = 40 * t + 50
        for start in starts:
            sched = TvSchedule(chain, mu, start, horizon)
            tv_sum_ratio.append(float(sched.curve(horizon).sum()) / (2 * t))
        if n <= 6:
            mismatch.append(abs(t - brute_force_mixing_time(chain, mu)))
    rep = BoundReport("4 mixing times", metadata={"chains": len(mono)})
    rep.add(_max_record("max increase of sup-TV curve", mono, 1e-12))
    rep.add(_max_record("max_l sup-TV(l t_mix) - 2^-l", halving, 1e-12))
    rep.add(_max_record("sum_k TV / (2 t1_mix)", tv_sum_ratio, 1.0))
    rep.add(_max_record("|mixing_time - brute force|", mismatch, 0.0))
    return rep


# -- 5 --------------------------------------------------------------------------

def criterion_pair_chain(level="full", seed=5) -> BoundReport:
    p = LEVELS[level]
    failures = 0
    count = 0
    for mdp, pol, alpha in random_instances(p["instances"], seed):
        ch = induce_chain(mdp, pol, alpha)
        pc = pair_chain(ch.p_pi, ch.mu)
        count += 1
        failures += int(not ergodicity_check(pc.transition).ergodic)
    periodic = np.array([[0.0, 1.0], [1.0, 0.0]])
    reducible = np.array([[1.0, 0.0], [0.5, 0.5]])
    r_per, r_red = ergodicity_check(periodic), ergodicity_check(reducible)
    wrong = int(r_per.aperiodic or not r_per.irreducible) + int(r_red.irreducible or not r_red.aperiodic)
    rep = BoundReport("5 pair-chain ergodicity", metadata={"chains": count})
    rep.add(CheckRecord("non-ergodic pair chains among ergodic bases", 0.0, float(failures),
                        metadata={"chains": count}))
    rep.add(CheckRecord("misclassified counterexamples (period-2, reducible)", 0.0, float(wrong),
                        metadata={"period2": [r_per.irreducible, r_per.aperiodic],
                                  "reducible": [r_red.irreducible, r_red.aperiodic]}))
    return rep


# -- 6 --------------------------------------------------------------------------

CONC_BUFFER = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 3])


def criterion_concentration(level="full", seed=6) -> BoundReport:
    """Matrix Bernstein for ``X = e_s e_s^T`` with ``s`` uniform over a fixed 4-state buffer."""
    trials = LEVELS[level]["conc_trials"]
    rng = np.random.default_rng(seed)
    d = 4
    probs = np.bincount(CONC_BUFFER, minlength=d) / CONC_BUFFER.size
    sigma = spectral_norm(np.diag(probs))
    rep = BoundReport("6 matrix concentration", metadata={"trials": trials, "buffer": CONC_BUFFER.tolist(),
                                                          "sigma": sigma, "x_max": 1.0})
    for n in (4, 16, 64, 256):
        draws = CONC_BUFFER[rng.integers(0, CONC_BUFFER.size, size=(trials, n))]
        offs = (np.arange(trials) * d)[:, None]
        counts = np.bincount((draws + offs).ravel(), minlength=trials * d).reshape(trials, d)
        # the deviation matrix is diagonal, so its spectral norm is the largest entry
        dev = np.abs(counts / n - probs).max(axis=1)
        m1, se1 = mean_se(dev)
        m2, se2 = mean_se(dev**2)
        rep.add(CheckRecord(f"E||mean - EX||_2, n={n}", bounds.bernstein_mean_bound(sigma, 1.0, d, d, n),
                            float(m1), float(se1), metadata={"n": n}))
        rep.add(CheckRecord(f"E||mean - EX||_2^2, n={n}", bounds.bernstein_second_moment_bound(sigma, 1.0, d, d, n),
                            float(m2), float(se2), metadata={"n": n}))
    return rep


# -- 7 --------------------------------------------------------------------------

def criterion_empirical_variance(level="full", seed=7, fixture="desk") -> BoundReport:
    trials = LEVELS[level]["var_trials"]
    chain = load_fixture(fixture).chain()
    prof = mixing_profile(chain)
    n_s = chain.n_states
    n_pairs = pair_chain(chain.p_pi, chain.mu).n_pairs
    rep = BoundReport("7 empirical-distribution variance",
                      metadata={"fixture": fixture, "trials": trials, "t1_mix": prof.t1_mix,
                                "t2_mix": prof.t2_mix, "n_pairs": n_pairs})
    for n in (64, 256, 1024):
        ev = empirical_distribution_variance(chain, n, trials, seed=seed + n)
        sq1, tv1 = bounds.var_emp_bounds(n_s, prof.t1_mix, n)
        sq2, tv2 = bounds.var_emp_bounds(n_pairs, prof.t2_mix, n)
        rep.add(CheckRecord(f"state sum E(mu-mu_em)^2, n={n}", sq1, ev.state_var_sum, ev.state_var_se))
        rep.add(CheckRecord(f"state E d_TV, n={n}", tv1, ev.tv_mean, ev.tv_se))
        rep.add(CheckRecord(f"pair sum E(mu-mu_em)^2, n={n}", sq2, ev.pair_var_sum, ev.pair_var_se))
        rep.add(CheckRecord(f"pair E d_TV, n={n}", tv2, ev.pair_tv_mean, ev.pair_tv_se))
    return rep


# -- 8, 9, 10 ---------------------------------------------------------------------

START_MODES = (("stationary", {}), ("fixed", {"initial_state": 0}))


def _desk_config(**kw) -> RunConfig:
    return RunConfig(**{**DESK, "seed": 2024, **kw})


def criterion_noise_moments(level="full", fixture="desk") -> BoundReport:
    seeds = LEVELS[level]["seeds"]
    chain = load_fixture(fixture).chain()
    prof = mixing_profile(chain)
    rep = BoundReport("8 noise-moment dominance", metadata={"fixture": fixture, "seeds": seeds})
    for mode, extra in START_MODES:
        cfg = _desk_config(initial_state_mode=mode, **extra)
        b = bound_inputs_for(chain, prof, cfg)
        stats = run_seeds(chain, cfg, seeds)
        t = cfg.horizon
        meta = {"start": mode, "t1_mix": prof.t1_mix, "t2_mix": prof.t2_mix}
        first = np.array([bounds.first_moment_bound(b, k) for k in range(t)])
        second = np.array([bounds.second_moment_bound(b, k) for k in range(t)])
        rep.add(worst_over_k(f"E||w_k||_2 [{mode} start]", stats.w_norm, first, meta))
        rep.add(worst_over_k(f"E||w_k||_2^2 [{mode} start]", stats.w_norm_sq, second, meta))
    return rep


def criterion_avg_iterate(level="full", fixture="desk") -> BoundReport:
    seeds = LEVELS[level]["seeds"]
    chain = load_fixture(fixture).chain()
    prof = mixing_profile(chain)
    rep = BoundReport("9 averaged-iterate bound", metadata={"fixture": fixture, "seeds": seeds})
    for mode, extra in START_MODES:
        cfg = _desk_config(initial_state_mode=mode, instrument=False, **extra)
        b = bound_inputs_for(chain, prof, cfg)
        stats = run_seeds(chain, cfg, seeds)
        res = bounds.avg_iterate_bound(b)
        alt = bounds.avg_iterate_bound(b, variant="alt_log")
        m, se = mean_se(stats.mean_sq_err)
        rep.add(CheckRecord(f"(1/T) sum_k E||V_k - V^pi||^2 [{mode} start]", res.total, float(m), float(se),
                            terms={**res.terms(), "alt_log_variant_total": alt.total},
                            metadata={"t1_mix": prof.t1_mix, "t2_mix": prof.t2_mix}))
        rms = bounds.avg_iterate_bound_rms(b)
        m, se = mean_se(np.sqrt(stats.avg_iterate_err_sq))
        rep.add(CheckRecord(f"E||(1/T) sum_k V_k - V^pi||_2 [{mode} start]", rms.total, float(m), float(se),
                            terms=rms.terms()))
    return rep


FINAL_KS = (0, 10, 100, 1000, 2000)
DECAY_TOL = 0.10


def measured_decay_rate(mean_err, floor_window: int = 500):
    """Per-step ratio of the seed-averaged transient above the noise floor.

    The floor is the mean over the last ``floor_window`` steps; the rate is
    the exponential of a least-squares slope of ``log(err - floor)`` over the
    steps where the excess is still at least 100 times the floor.
    """
    mean_err = np.asarray(mean_err, dtype=float)
    floor = float(mean_err[-floor_window:].mean())
    excess = mean_err - floor
    ok = excess > 100.0 * floor
    stop = int(np.argmin(ok)) if not ok.all() else ok.size
    ks = np.arange(stop)
    if stop < 10:
        raise RuntimeError("transient too short to measure a decay rate")
    slope = np.polyfit(ks, np.log(excess[:stop]), 1)[0]
    return math.exp(slope), floor, stop


def criterion_final_iterate(level="full", fixture="desk") -> BoundReport:
    seeds = LEVELS[level]["seeds"]
    chain = load_fixture(fixture).chain()
    prof = mixing_profile(chain)
    v0 = tuple(np.full(chain.n_states, chain.mdp.v_max))
    cfg = _desk_config(initial_state_mode="stationary", initial_v=v0, instrument=False)
    b = bound_inputs_for(chain, prof, cfg)
    stats = run_seeds(chain, cfg, seeds)
    rep = BoundReport("10 final-iterate bound", metadata={"fixture": fixture, "seeds": seeds, "V0": list(v0)})
    for k in FINAL_KS:
        res = bounds.final_iterate_bound(b, k)
        m, se = mean_se(stats.err_l2_sq[:, k])
        rep.add(CheckRecord(f"E||V_k - V^pi||^2, k={k}", res.total, float(m), float(se),
                            terms=res.terms(), metadata={"k": k}))
        rms = bounds.final_iterate_bound_rms(b, k)
        m, se = mean_se(np.sqrt(stats.err_l2_sq[:, k]))
        rep.add(CheckRecord(f"E||V_k - V^pi||_2, k={k}", rms, float(m), float(se), metadata={"k": k}))
    mean_err = stats.err_l2_sq.mean(axis=0)
    rate, floor, window = measured_decay_rate(mean_err)
    c2 = chain.contraction ** 2
    rep.add(CheckRecord("log decay rate vs (1 - DECAY_TOL) log ||A||_inf^2", (1 - DECAY_TOL) * math.log(c2),
                        math.log(rate), 0.0,
                        terms={"rate": rate, "contraction_sq": c2, "floor": floor, "fit_window": window,
                               "spectral_radius_sq": float(max(abs(np.linalg.eigvals(chain.a_matrix)))) ** 2}))
    return rep


# -- 11 ---------------------------------------------------------------------------

def criterion_reduction(level="full", fixture="desk", steps: int = 1000) -> BoundReport:
    mdp_fix = load_fixture(fixture)
    chain = mdp_fix.chain()
    cfg = _desk_config(buffer_size=1, batch_size=1, horizon=steps, initial_state_mode="fixed", initial_state=0)
    trace = run_chain(chain, cfg)

    env, _ = run_streams(cfg.seed, cfg.run_index)
    traj = sample_trajectory(TrajectorySampler(chain.mdp, chain.policy, env), cfg.start_distribution(chain), steps + 1)
    ref = standard_td(traj.transitions()[1:], cfg.v0(chain), cfg.alpha, chain.gamma)

    lrn = ReplayTDLearner(chain, cfg).warm_up()
    stepped = [lrn.v.copy()] + [lrn.step().v_after for _ in range(steps)]

    rep = BoundReport("11 L = N = 1 reduction", metadata={"fixture": fixture, "steps": steps})
    for name, got in (("vectorised run", trace.v_history), ("stepwise learner", np.array(stepped))):
        rep.add(CheckRecord(f"max |{name} - standard TD|", 0.0, float(np.abs(got - ref).max()), 0.0,
                            slack=0.0, metadata={"bit_identical": bool(np.array_equal(got, ref))}))
    return rep


# -- 12 ---------------------------------------------------------------------------

TREND_SLACK = 2.0


def _trend_records(label, grid, per_cell):
    out = []
    for (g0, x0), (g1, x1) in zip(zip(grid, per_cell), list(zip(grid, per_cell))[1:]):
        m0, se0 = mean_se(x0)
        m1, se1 = mean_se(x1)
        diff = float(m1 - m0)
        se = float(math.hypot(se0, se1))
        out.append(CheckRecord(f"{label}: {g0} -> {g1}", 0.0, diff, se, slack=TREND_SLACK,
                               terms={"mean_before": float(m0), "mean_after": float(m1)}))
    return out


def criterion_trend(level="full", fixture="desk") -> BoundReport:
    seeds = LEVELS[level]["seeds"]
    chain = load_fixture(fixture).chain()
    rep = BoundReport("12 batch and buffer trends", metadata={"fixture": fixture, "seeds": seeds})
    ls = (1, 8, 64)
    by_l = [run_seeds(chain, _desk_config(batch_size=l, instrument=False), seeds) for l in ls]
    ns = (16, 256)
    by_n = [run_seeds(chain, _desk_config(buffer_size=n, instrument=False), seeds) for n in ns]
    rep.extend(_trend_records("avg-iterate error vs L (N=256)", ls, [s.avg_iterate_err_sq for s in by_l]))
    rep.extend(_trend_records("avg-iterate error vs N (L=32)", ns, [s.avg_iterate_err_sq for s in by_n]))
    rep.extend(_trend_records("mean sq error vs L (N=256)", ls, [s.mean_sq_err for s in by_l]))
    rep.extend(_trend_records("mean sq error vs N (L=32)", ns, [s.mean_sq_err for s in by_n]))
    return rep


CRITERIA = {
    1: criterion_boundedness,
    2: criterion_identities,
    3: criterion_lyapunov,
    4: criterion_mixing,
    5: criterion_pair_chain,
    6: criterion_concentration,
    7: criterion_empirical_variance,
    8: criterion_noise_moments,
    9: criterion_avg_iterate,
    10: criterion_final_iterate,
    11: criterion_reduction,
    12: criterion_trend,
}

FIXTURE_CRITERIA = {7, 8, 9, 10, 11, 12}


def run_criterion(number: int, level: str = "full", fixture: str = "desk") -> tuple:
    """``(report, seconds)`` for one criterion."""
    fn = CRITERIA[number]
    t0 = time.perf_counter()
    rep = fn(level, fixture=fixture) if number in FIXTURE_CRITERIA else fn(level)
    return rep, time.perf_counter() - t0


def verify(level: str = "quick", fixture: str = "desk", only=None) -> list:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {sorted(LEVELS)}")
    out = []
    for number in sorted(only or CRITERIA):
        rep, secs = run_criterion(number, level, fixture)
        rep.metadata["seconds"] = round(secs, 3)
        rep.metadata["level"] = level
        out.append(rep)
    return out


__all__ = ["CRITERIA", "LEVELS", "Fixture", "load_fixture", "random_instances", "run_criterion", "verify",
           "brute_force_mixing_time", "measured_decay_rate", "ChainNotErgodic"]
