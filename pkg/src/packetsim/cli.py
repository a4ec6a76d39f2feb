"""Command line front end.

Subcommands: generate (write a workload file), simulate (one experiment),
sweep (a full grid from a YAML config), analyze (series, plateaus, and
figures from a results CSV).
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .errors import PacketSimError
from .metrics import measurement_window, metrics_report
from .policies import POLICY_NAMES, make_policy
from .sim import run_simulation
from .sweep import (
    METRIC_NAMES,
    emit_plot_series,
    load_sweep_config,
    plateau_report,
    read_results_csv,
    run_sweep,
    write_plateau_csv,
)
from .workload import (
    GeneratorConfig,
    build_workload,
    read_workload,
    set_initialization_proportion,
    write_trace_csv,
    write_workload,
)


def _add_generator_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--jobs", type=int, default=1000, help="number of jobs")
    parser.add_argument("--span-s", type=float, default=86_400.0,
                        help="submission period in seconds")
    parser.add_argument("--types", type=int, default=8, help="number of job types")
    parser.add_argument("--nodes", type=int, default=None,
                        help="cluster size (default 100, or the workload file's M)")
    parser.add_argument("--load", type=float, default=0.9,
                        help="target offered load in (0,1); 0 disables calibration")
    parser.add_argument("--homogeneity", choices=("heterogeneous", "homogeneous"),
                        default="heterogeneous")


def _generator_from_args(args, nodes: int) -> GeneratorConfig:
    return GeneratorConfig(
        n_jobs=args.jobs,
        span_s=args.span_s,
        h_types=args.types,
        nodes=nodes,
        load=args.load if args.load > 0 else None,
        homogeneity=args.homogeneity,
        seed=args.seed,
    )


def _cmd_generate(args) -> int:
    nodes = args.nodes if args.nodes else 100
    jobs = build_workload(_generator_from_args(args, nodes),
                          s_target=args.init_proportion)
    write_workload(jobs, args.out, nodes=nodes, h_types=args.types, seed=args.seed)
    print(f"wrote {len(jobs)} jobs to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    if args.workload:
        jobs, meta = read_workload(args.workload)
        nodes = args.nodes if args.nodes else meta.get("M", 100)
        if args.init_proportion is not None:
            jobs = set_initialization_proportion(jobs, args.init_proportion)
    else:
        nodes = args.nodes if args.nodes else 100
        s_target = args.init_proportion if args.init_proportion is not None else 0.1
        jobs = build_workload(_generator_from_args(args, nodes), s_target=s_target)
    policy = make_policy(args.policy, k=args.k, t_max_s=args.t_max_s)
    trace = run_simulation(jobs, policy, nodes, seed=args.seed)
    report = metrics_report(trace, measurement_window(jobs),
                            wait_endpoint=args.wait_endpoint)
    print(f"policy={args.policy} nodes={nodes} jobs={len(jobs)} seed={args.seed}"
          + (f" k={args.k:g}" if args.policy == "packet" else ""))
    print(f"full utilization:    {report.full_utilization:.6f}")
    print(f"useful utilization:  {report.useful_utilization:.6f}")
    print(f"avg queue time:      {report.avg_queue_time_s:.6f} s")
    print(f"median queue time:   {report.median_queue_time_s:.6f} s")
    print(f"avg queue length:    {report.avg_queue_length:.6f}")
    print(f"window:              0 .. {report.window_end_s:.6f} s")
    if args.trace_out:
        write_trace_csv(trace, args.trace_out)
        print(f"trace written to {args.trace_out}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_sweep_config(args.config)
    overrides: dict = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.policy:
        overrides["policies"] = (args.policy,)
    if args.k is not None:
        overrides["k_grid"] = (args.k,)
    if args.init_proportion is not None:
        overrides["s_grid"] = (args.init_proportion,)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    rows = run_sweep(config, workers=args.workers)
    failed = [r for r in rows if r.status != "ok"]
    print(f"ran {len(rows)} experiments ({len(failed)} failed); "
          f"results in {os.path.join(config.out_dir, 'results.csv')}")
    for row in failed:
        print(f"  failed: {row.workload}/{row.policy} S={row.s_value:g} "
              f"k={row.k:g} seed={row.seed}: {row.error}", file=sys.stderr)
    return 0 if not failed else 1


def _cmd_analyze(args) -> int:
    rows = read_results_csv(args.results)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    metrics = [args.metric] if args.metric else list(METRIC_NAMES)
    from .plots import render_metric_figures

    written = []
    for metric in metrics:
        written.extend(emit_plot_series(rows, metric, out_dir))
        report = plateau_report(rows, metric, rel_tol=args.rel_tol)
        if report:
            path = os.path.join(out_dir, f"plateau_{metric}.csv")
            write_plateau_csv(report, path)
            written.append(path)
            for entry in report:
                k_star = entry["k_star"]
                flat = f"k >= {k_star:g}" if k_star is not None else "no plateau"
                print(f"{entry['workload']}/{entry['policy']} S={entry['s']:g} "
                      f"{metric}: {flat}")
        if not args.no_figures:
            written.extend(render_metric_figures(rows, metric, out_dir))
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="packetsim",
        description="Discrete-event simulator for group-based cluster scheduling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a synthetic workload file")
    _add_generator_args(p_gen)
    p_gen.add_argument("--init-proportion", type=float, default=0.1,
                       help="share of all compute spent initializing")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output workload CSV")
    p_gen.set_defaults(func=_cmd_generate)

    p_sim = sub.add_parser("simulate", help="run one experiment and print metrics")
    p_sim.add_argument("--workload", help="workload CSV; omit to generate one")
    _add_generator_args(p_sim)
    p_sim.add_argument("--policy", choices=POLICY_NAMES, default="packet")
    p_sim.add_argument("--k", type=float, default=2.0, help="scale ratio (packet)")
    p_sim.add_argument("--init-proportion", type=float, default=None,
                       help="override init times to hit this proportion")
    p_sim.add_argument("--t-max-s", type=float, default=86_400.0,
                       help="queue wait that doubles a queue's weight")
    p_sim.add_argument("--wait-endpoint", choices=("group", "job"), default="group")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--trace-out", help="write the per-job trace CSV here")
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run an experiment grid from a config")
    p_sweep.add_argument("--config", required=True, help="sweep YAML")
    p_sweep.add_argument("--out", help="output directory (overrides config)")
    p_sweep.add_argument("--workers", type=int, default=max(1, (os.cpu_count() or 2) - 1))
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="replace the seed list with this single seed")
    p_sweep.add_argument("--policy", choices=POLICY_NAMES, default=None,
                         help="restrict the sweep to one policy")
    p_sweep.add_argument("--k", type=float, default=None,
                         help="replace the k grid with this single value")
    p_sweep.add_argument("--init-proportion", type=float, default=None,
                         help="replace the S grid with this single value")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analyze", help="series, plateaus, and figures from results")
    p_an.add_argument("--results", required=True, help="results.csv from a sweep")
    p_an.add_argument("--out", default="analysis", help="output directory")
    p_an.add_argument("--metric", choices=METRIC_NAMES, default=None,
                      help="one metric; default analyzes all")
    p_an.add_argument("--rel-tol", type=float, default=0.05,
                      help="relative tolerance for plateau detection")
    p_an.add_argument("--no-figures", action="store_true",
                      help="skip PNG rendering, write only CSV series")
    p_an.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PacketSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
