"""Command-line entry point: ``gwdiscovery sim|analytics|experiment ...``."""

from __future__ import annotations

import argparse
import csv
import sys

from . import analytics as an
from .discovery import (
    SUMMARY_COLUMNS,
    DepthBiased,
    append_summary_csv,
    format_cell,
    horizon_for,
    mc_depth_biased,
    mc_uniform,
)
from .errors import GWDiscoveryError
from .experiments import emit_csv, load_config, parse_overrides, render_csv, run_experiment
from .gw_core import build_tree, write_arena_csv, write_profile_csv
from .offspring import parse_offspring
from .replicas import default_workers, replica_streams


def _add_sim_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist", required=True, help='offspring law, "k:p,..." or "det:m"')
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="default: machine parallelism")
    p.add_argument("--csv", help="append the summary row to this CSV file")
    p.add_argument("--root-selected", action="store_true", help="force a mark on the root")
    p.add_argument("--dump-arena", help="write replica 0's tree as node,parent,level")
    p.add_argument("--dump-profile", help="write replica 0's profile as level,count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwdiscovery",
        description="Discovery of Galton-Watson trees: simulation, series and experiments.",
    )
    top = parser.add_subparsers(dest="command", required=True)

    sim = top.add_parser("sim", help="Monte-Carlo campaigns").add_subparsers(
        dest="model", required=True
    )
    uni = sim.add_parser("uniform", help="every node selected with probability 1 - exp(-lambda)")
    _add_sim_common(uni)
    uni.add_argument("--lambda", dest="lam", type=float, required=True)
    uni.add_argument("--N", type=int, required=True, help="tree depth")

    dep = sim.add_parser("depth-biased", help="depth-n node selected w.p. 1 - exp(-(alpha/m)^n)")
    _add_sim_common(dep)
    dep.add_argument("--alpha", type=float, required=True)
    dep.add_argument("--eps", type=float, default=1e-3, help="expected missed selections")
    dep.add_argument("--engine", choices=["auto", "arena", "skeleton"], default="auto")

    ana = top.add_parser("analytics", help="series evaluators").add_subparsers(
        dest="quantity", required=True
    )
    rho = ana.add_parser("rho", help="limiting discovered fraction")
    rho.add_argument("--dist", required=True)
    rho.add_argument("--lambda", dest="lam", type=float, required=True)
    rho.add_argument("--tol", type=float, default=1e-12)

    rho2 = ana.add_parser("rho2", help="limiting normalized variance of R_N")
    rho2.add_argument("--dist", required=True)
    rho2.add_argument("--lambda", dest="lam", type=float, required=True)
    rho2.add_argument("--tol", type=float, default=1e-12)
    rho2.add_argument(
        "--general",
        action="store_true",
        help="evaluate the covariance series for any law instead of choosing by Var(G)",
    )
    rho2.add_argument("--no-leaves", action="store_true", help="drop the height-0 term")

    ral = ana.add_parser("ralpha", help="E(R(alpha)) in the depth-biased model")
    ral.add_argument("--dist", required=True)
    ral.add_argument("--alpha", type=float, required=True)
    ral.add_argument("--inner-replicas", type=int, default=10_000)
    ral.add_argument("--depth-eps", type=float, default=1e-6)
    ral.add_argument("--seed", type=int, default=0)
    ral.add_argument("--tol", type=float, default=1e-12)
    ral.add_argument("--exact", action="store_true", help="use the subtree-hit recursion")

    psi = ana.add_parser("psi", help="harmonic sum sum_n m^-n E(1 - exp(-x V m^n))")
    psi.add_argument("--x", type=float, required=True)
    psi.add_argument("--m", type=float, default=2.0)
    psi.add_argument("--v", type=float, default=1.0, help="point mass for V")
    psi.add_argument("--tol", type=float, default=1e-12)

    bnd = ana.add_parser("bounds", help="bracket for the expected number of selections")
    bnd.add_argument("--alpha", type=float, required=True)
    bnd.add_argument("--m", type=float, required=True)

    exp = top.add_parser("experiment", help="configured experiments").add_subparsers(
        dest="action", required=True
    )
    run = exp.add_parser("run", help="run one experiment from a TOML file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="CSV destination (default: the config's out, else stdout)")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--no-timestamp", action="store_true")
    run.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key"
    )
    return parser


def _workers(args) -> int:
    return default_workers() if args.workers is None else max(1, args.workers)


def _dump(args, dist, depth: int) -> None:
    if not (args.dump_arena or args.dump_profile):
        return
    tree = build_tree(dist, depth, replica_streams(args.seed, 0)[0])
    if args.dump_arena:
        write_arena_csv(tree, args.dump_arena)
    if args.dump_profile:
        write_profile_csv(tree.profile, args.dump_profile)


def _print_summary(summary, csv_path) -> None:
    row = summary.csv_row()
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    writer.writerow([format_cell(row[c]) for c in SUMMARY_COLUMNS])
    if csv_path:
        append_summary_csv(summary, csv_path)


def _cmd_sim(args) -> int:
    dist = parse_offspring(args.dist)
    if args.model == "uniform":
        summary = mc_uniform(
            dist,
            args.N,
            args.lam,
            args.replicas,
            args.seed,
            workers=_workers(args),
            root_selected=args.root_selected,
        )
        _dump(args, dist, args.N)
    else:
        DepthBiased(args.alpha, dist.m)
        summary = mc_depth_biased(
            dist,
            args.alpha,
            args.eps,
            args.replicas,
            args.seed,
            engine=args.engine,
            workers=_workers(args),
            root_selected=args.root_selected,
        )
        _dump(args, dist, horizon_for(args.alpha, args.eps))
        print(
            f"# depth={summary.depth} engine={summary.engine} "
            f"missed_marks<={summary.missed_marks_bound:.3e} "
            f"missed_discovered<={summary.missed_discovery_bound:.3e}",
            file=sys.stderr,
        )
    _print_summary(summary, args.csv)
    return 0


def _cmd_analytics(args) -> int:
    q = args.quantity
    if q == "bounds":
        b = an.selected_count_bounds(args.alpha, args.m)
        print("lower,upper,exact,tail_bound")
        print(",".join(f"{v:.17e}" for v in b))
        return 0
    if q == "rho":
        res = an.rho_series(parse_offspring(args.dist), args.lam, args.tol)
    elif q == "rho2":
        dist = parse_offspring(args.dist)
        leaves = not args.no_leaves
        if args.general:
            res = an.rho2_series(dist, args.lam, args.tol, include_leaves=leaves)
        elif dist.is_deterministic:
            res = an.rho2_deterministic_series(dist.min_children, args.lam, args.tol, leaves)
        else:
            res = an.rho2_nondeterministic(dist, args.lam, args.tol)
    elif q == "ralpha":
        dist = parse_offspring(args.dist)
        if args.exact:
            res = an.mean_R_alpha_exact(dist, args.alpha, args.tol)
        else:
            res = an.mean_R_alpha(
                dist, args.alpha, args.inner_replicas, args.depth_eps, args.seed, args.tol
            )
    else:
        res = an.psi_harmonic_sum(args.x, args.m, v=args.v, tol=args.tol)
    print(an.SeriesResult.CSV_HEADER)
    print(res.csv_line())
    return 0


def _cmd_experiment(args) -> int:
    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    report = run_experiment(cfg, workers=_workers(args))
    out = args.out or cfg.out
    if out:
        emit_csv(report, out, timestamp=not args.no_timestamp)
    else:
        sys.stdout.write(render_csv(report, timestamp=not args.no_timestamp))
    failed = sum(not r.passed for r in report.rows)
    verdict = "PASS" if report.passed else f"FAIL ({failed} of {len(report.rows)} rows)"
    print(f"{cfg.experiment}: {verdict}", file=sys.stderr)
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"sim": _cmd_sim, "analytics": _cmd_analytics, "experiment": _cmd_experiment}
    try:
        return handlers[args.command](args)
    except GWDiscoveryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
