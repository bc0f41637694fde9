"""``replay-td`` command line: analyze, run, sweep, verify, gen-mdp.

Exit codes: 0 ok, 1 a dominance or identity check failed, 2 bad input or a
violated bound hypothesis.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .chain import ergodicity_check, mixing_profile, pair_chain
from .exceptions import ReplayTDError
from .experiments import SweepSpec, resolve_jobs, run_sweep
from .generate import GeneratorSpec, gen_mdp
from .learner import RunConfig, run_chain, write_trace_csv, write_trace_sidecar
from .mdp import induce_chain, load_mdp, load_policy, save_json, uniform_policy
from .norms import frobenius_norm, inf_norm, spectral_norm
from .verification import LEVELS, load_fixture, verify

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT = 0, 1, 2


def _environment(args):
    if args.mdp is None:
        fx = load_fixture("desk")
        return fx.mdp, fx.policy
    mdp = load_mdp(args.mdp)
    pol = load_policy(args.policy, mdp) if args.policy else uniform_policy(mdp)
    return mdp, pol


def _emit(doc, as_json, lines):
    if as_json:
        print(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False))
    else:
        for ln in lines:
            print(ln)


def analyze_report(mdp, policy, alpha: float) -> dict:
    ch = induce_chain(mdp, policy, alpha)
    prof = mixing_profile(ch)
    a, m = np.asarray(ch.a_matrix), np.asarray(ch.m_matrix)
    pc = pair_chain(ch.p_pi, ch.mu)
    erg = ergodicity_check(pc.transition)
    return {
        "n_states": ch.n_states,
        "n_actions": mdp.n_actions,
        "gamma": ch.gamma,
        "alpha": alpha,
        "mu": ch.mu.tolist(),
        "mu_min": ch.mu_min,
        "v_pi": ch.v_pi.tolist(),
        "a_inf_norm": inf_norm(a),
        "contraction": ch.contraction,
        "lyapunov_residual": frobenius_norm(a.T @ m @ a - m + np.eye(ch.n_states)),
        "lyapunov_terms": ch.lyapunov_terms,
        "m_norm": spectral_norm(m),
        "m_norm_bound": ch.m_norm_bound,
        "t1_mix": prof.t1_mix,
        "t2_mix": prof.t2_mix,
        "n_pairs": pc.n_pairs,
        "pair_chain_irreducible": erg.irreducible,
        "pair_chain_aperiodic": erg.aperiodic,
    }


def cmd_analyze(args) -> int:
    mdp, pol = _environment(args)
    doc = analyze_report(mdp, pol, args.alpha)
    _emit(doc, args.json, [f"{k}: {v}" for k, v in doc.items()])
    return EXIT_OK


def _run_config(args) -> RunConfig:
    d = {}
    if args.config:
        d = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        d["seed"] = args.seed
    return RunConfig(**d)


def cmd_run(args) -> int:
    mdp, pol = _environment(args)
    cfg = _run_config(args)
    trace = run_chain(induce_chain(mdp, pol, cfg.alpha), cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, out / "trace.csv")
        write_trace_sidecar(trace, out / "trace.json")
    summary = trace.summary()
    _emit(summary, args.json, [f"{k}: {v}" for k, v in summary.items()])
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.config:
        raise SystemExit("sweep needs --config <SweepSpec JSON>")
    spec = SweepSpec.load(args.config)
    if args.seed is not None:
        spec.master_seed = args.seed
    doc = run_sweep(spec, args.out, jobs=resolve_jobs(args.jobs))
    lines = []
    for c in doc["cells"]:
        verdict = "skipped" if c["status"] == "skipped" else ("pass" if all(k["passed"] for k in c["checks"]) else "FAIL")
        lines.append(f"cell {c['cell']:3d} alpha={c['alpha']} N={c['buffer_size']} L={c['batch_size']} "
                     f"T={c['horizon']}: mean_sq_err={c['mean_sq_err']:.4g} ({verdict})")
    _emit({"passed": doc["passed"], "n_cells": len(doc["cells"])}, args.json, lines)
    return EXIT_OK if doc["passed"] else EXIT_CHECK_FAILED


def cmd_verify(args) -> int:
    fixture = args.fixture
    reports = verify(args.level, fixture=fixture)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2, allow_nan=False))
        (out / "verify.csv").write_text("".join(r.to_csv() for r in reports))
    lines = []
    for r in reports:
        lines.append(f"[{'PASS' if r.passed else 'FAIL'}] {r.title} ({r.metadata['seconds']}s)")
        lines += [f"    violated: {c.describe()}" for c in r.failures]
    ok = all(r.passed for r in reports)
    _emit({"passed": ok, "reports": [r.to_dict() for r in reports]}, args.json, lines)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_gen_mdp(args) -> int:
    spec = GeneratorSpec(n_states=args.n_states, n_actions=args.n_actions, gamma=args.gamma, r_max=args.r_max,
                         sparsity=args.sparsity, self_loop_min=args.self_loop_min,
                         seed=args.seed if args.seed is not None else 0)
    mdp, pol = gen_mdp(spec)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_json(mdp.to_dict(), out / "mdp.json")
    save_json(pol.to_dict(), out / "policy.json")
    _emit({"mdp": str(out / "mdp.json"), "policy": str(out / "policy.json"), "spec": spec.to_dict()},
          args.json, [f"wrote {out / 'mdp.json'} and {out / 'policy.json'}"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mdp", help="MDP JSON file (default: bundled desk fixture)")
    common.add_argument("--policy", help="policy JSON file (default: uniform, or the fixture's policy)")
    common.add_argument("--config", help="RunConfig JSON (run) or SweepSpec JSON (sweep)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (REPLAY_TD_JOBS overrides)")

    p = argparse.ArgumentParser(prog="replay-td", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="exact chain quantities and mixing times")
    a.add_argument("--alpha", type=float, default=0.1)
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("run", parents=[common], help="one seeded run; writes trace CSV and JSON sidecar")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="grid over (alpha, N, L, T) with multi-seed aggregation")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", parents=[common], help="acceptance battery")
    v.add_argument("--level", choices=sorted(LEVELS), default="quick")
    v.add_argument("--fixture", choices=["desk", "two_state"], default="desk")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-mdp", parents=[common], help="random ergodic MDP and policy")
    g.add_argument("--n-states", type=int, default=3)
    g.add_argument("--n-actions", type=int, default=2)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--r-max", type=float, default=1.0)
    g.add_argument("--sparsity", type=float, default=0.0)
    g.add_argument("--self-loop-min", type=float, default=0.05)
    g.set_defaults(func=cmd_gen_mdp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReplayTDError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
