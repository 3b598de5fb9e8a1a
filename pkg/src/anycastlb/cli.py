"""Command-line interface: solve, simulate, analyze, sweep, generate.

Exit codes: 0 success (solver converged), 1 invalid input, 2 solver hit the
iteration cap, 3 fastcontrol mode on a matrix with zero correlations.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dual as dual_mod
from . import fastcontrol
from . import greedy as greedy_mod
from . import harness as harness_mod
from . import oracle as oracle_mod
from . import stability as stability_mod
from .model import load_instance, save_instance

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_MAX_ITERS = 2
EXIT_CHANNEL = 3


def _load(path):
    try:
        return load_instance(path)
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON in {path}: {exc.msg} at line {exc.lineno}, "
              f"column {exc.colno}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load instance {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _write_json(obj, path) -> None:
    if path is None or path == "-":
        json.dump(obj, sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=1)
            fh.write("\n")


def cmd_solve_dual(args) -> int:
    instance = _load(args.instance)
    channel = fastcontrol.ChannelConfig(gamma_rate=args.gamma_rate,
                                        mode=args.channel_mode, seed=args.seed)
    try:
        cfg = dual_mod.DualConfig(epsilon=args.epsilon, step_size=args.step_size,
                                  max_iters=args.max_iters, beta_mode=args.beta_mode,
                                  channel=channel)
        run = dual_mod.run_dual(instance, cfg)
    except fastcontrol.ChannelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHANNEL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    gap = None
    oracle_obj = None
    if args.with_oracle:
        if instance.n <= 3:
            res = oracle_mod.primal_grid_solve(instance)
        else:
            res = oracle_mod.primal_projected_descent(instance)
        oracle_obj = res.objective
        gap = res.objective - run.best_dual
    out = {
        "converged": run.converged,
        "iterations": run.iterations,
        "epsilon": args.epsilon,
        "step_size": run.step_size,
        "beta_mode": args.beta_mode,
        "seed": args.seed,
        "best_dual": run.best_dual,
        "best_primal": run.best_primal,
        "mu": run.mu.tolist(),
        "x": run.x_avg.tolist(),
        "x_last": run.x_last.tolist(),
        "s_obs": run.s_obs_avg.tolist(),
        "s_obs_last": run.s_obs_last.tolist(),
        "max_supergradient_sq": run.max_supergradient_sq,
        "supergradient_bound": run.lemma_bound,
        "oracle_objective": oracle_obj,
        "gap": gap,
    }
    _write_json(out, args.out)
    if args.history:
        dual_mod.write_history_csv(run, args.history, oracle_value=oracle_obj)
    return EXIT_OK if run.converged else EXIT_MAX_ITERS


def cmd_simulate_greedy(args) -> int:
    instance = _load(args.instance)
    if args.x0 == "default":
        x0 = np.full(instance.n, 0.5)
    else:
        try:
            x0 = np.array([float(v) for v in args.x0.split(",")])
        except ValueError:
            print(f"error: cannot parse --x0 {args.x0!r}", file=sys.stderr)
            return EXIT_INVALID
    try:
        cfg = greedy_mod.GreedyConfig(sensitivity=args.sensitivity, horizon=args.horizon,
                                      step=args.step)
        traj = greedy_mod.integrate(instance, x0, cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = greedy_mod.detect_uncontrollable(traj, instance)
    out = {
        "verdict": traj.verdict,
        "t_final": traj.t_final,
        "x_final": traj.x_final.tolist(),
        "s_final": traj.s_final.tolist(),
        "node_classes": traj.node_classes,
        "overload_classes": report.classes,
        "indeterminate": report.indeterminate,
        "uncontrollable_nodes": report.uncontrollable_nodes,
        "steps": traj.steps,
        "clamp_activations": traj.clamp_activations,
        "max_excursion": traj.max_excursion,
        "sensitivity": args.sensitivity,
    }
    _write_json(out, args.out)
    if args.trajectory:
        greedy_mod.write_trajectory_csv(traj, args.trajectory)
    if args.vector_field:
        if instance.n != 2:
            print("error: --vector-field requires a two-node instance", file=sys.stderr)
            return EXIT_INVALID
        grid = greedy_mod.vector_field_grid(instance, args.vector_field, args.sensitivity)
        path = args.vector_field_out or "vector_field.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x1,x2,dx1,dx2\n")
            for row in grid:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return EXIT_OK


def _parse_partition(spec: str, n: int):
    try:
        left = [int(v) for v in spec.split("/")[0].split(",") if v != ""]
        right = [int(v) for v in spec.split("/")[1].split(",") if v != ""]
    except (IndexError, ValueError):
        raise ValueError(f"partition must look like '0,1/2,3', got {spec!r}")
    return left, right


def cmd_analyze(args) -> int:
    instance = _load(args.instance)
    partition = None
    if args.partition:
        try:
            partition = _parse_partition(args.partition, instance.n)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    try:
        report = stability_mod.analyze(instance, partition=partition)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _write_json(stability_mod.report_to_dict(report), args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        cfg = harness_mod.ExperimentConfig.from_json(args.config)
    except (OSError, TypeError, ValueError, KeyError) as exc:
        print(f"error: cannot load experiment config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result = harness_mod.run_sweep(cfg)
    result.write_csv(args.out)
    return EXIT_OK


def cmd_gen_instance(args) -> int:
    cfg = harness_mod.ExperimentConfig(n=args.n, self_corr=args.self_corr, seed=args.seed)
    try:
        inst = harness_mod.generate_instance(cfg, args.abar, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    meta = {"seed": args.seed, "abar": args.abar, "self_corr": args.self_corr}
    save_instance(inst, args.out, meta=meta)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anycastlb",
                                description="Anycast CDN load management toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sd = sub.add_parser("solve-dual", help="run the dual-decomposition solver")
    sd.add_argument("--instance", required=True)
    sd.add_argument("--epsilon", type=float, default=0.01)
    sd.add_argument("--step-size", type=float, default=None)
    sd.add_argument("--beta-mode", choices=[dual_mod.EXACT, dual_mod.FASTCONTROL],
                    default=dual_mod.EXACT)
    sd.add_argument("--channel-mode", choices=[fastcontrol.DETERMINISTIC, fastcontrol.POISSON],
                    default=fastcontrol.DETERMINISTIC)
    sd.add_argument("--gamma-rate", type=float, default=10.0)
    sd.add_argument("--max-iters", type=int, default=100_000)
    sd.add_argument("--with-oracle", action="store_true")
    sd.add_argument("--seed", type=int, default=0)
    sd.add_argument("--out", default=None)
    sd.add_argument("--history", default=None, help="per-iteration CSV path")
    sd.set_defaults(fn=cmd_solve_dual)

    sg = sub.add_parser("simulate-greedy", help="integrate the greedy dynamics")
    sg.add_argument("--instance", required=True)
    sg.add_argument("--x0", default="default", help="comma-separated interior start")
    sg.add_argument("--sensitivity", type=float, default=1.0)
    sg.add_argument("--horizon", type=float, default=500.0)
    sg.add_argument("--step", type=float, default=None)
    sg.add_argument("--out", default=None)
    sg.add_argument("--trajectory", default=None, help="trajectory CSV path")
    sg.add_argument("--vector-field", type=int, default=None, metavar="RES")
    sg.add_argument("--vector-field-out", default=None)
    sg.set_defaults(fn=cmd_simulate_greedy)

    an = sub.add_parser("analyze", help="emit the stability report as JSON")
    an.add_argument("--instance", required=True)
    an.add_argument("--partition", default=None, help="e.g. '0,1/2,3'")
    an.add_argument("--out", default=None)
    an.set_defaults(fn=cmd_analyze)

    ex = sub.add_parser("experiment", help="run a Monte-Carlo load sweep")
    ex.add_argument("--config", required=True)
    ex.add_argument("--out", required=True)
    ex.set_defaults(fn=cmd_experiment)

    gi = sub.add_parser("gen-instance", help="generate a synthetic instance file")
    gi.add_argument("--n", type=int, default=48)
    gi.add_argument("--abar", type=float, required=True)
    gi.add_argument("--self-corr", type=float, default=0.7)
    gi.add_argument("--seed", type=int, default=0)
    gi.add_argument("--out", required=True)
    gi.set_defaults(fn=cmd_gen_instance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
