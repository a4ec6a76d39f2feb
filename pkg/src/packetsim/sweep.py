"""Experiment grids: expansion, parallel execution, and result tables.

A sweep crosses workloads x policies x init proportions x scale ratios x
seeds, runs one simulation per cell, and writes a results CSV that is
byte-identical for a given configuration regardless of worker count.  The
wall-clock cost of each cell goes to a separate timing CSV so the results
file stays deterministic.  Helper functions aggregate per-seed rows into
plot-ready series and locate the k beyond which a metric stops moving.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import yaml

from .errors import ConfigError, ParseError
from .metrics import WAIT_ENDPOINTS, measurement_window, metrics_report
from .policies import POLICY_NAMES, make_policy
from .sim import run_simulation
from .workload import GeneratorConfig, build_workload, read_workload, set_initialization_proportion

# k from 0.1 to 1000, roughly log-spaced: each decade steps in tenths of
# its magnitude, 37 values in all.
DEFAULT_K_GRID = tuple(
    [i / 10 for i in range(1, 10)]
    + [float(i) for i in range(1, 11)]
    + [float(i) for i in range(20, 101, 10)]
    + [float(i) for i in range(200, 1001, 100)]
)

DEFAULT_S_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)

# Baselines ignore k; their grid collapses to this placeholder value.
BASELINE_K = 0.0

METRIC_NAMES = (
    "full_utilization",
    "useful_utilization",
    "avg_queue_time_s",
    "median_queue_time_s",
    "avg_queue_length",
)

TIME_METRICS = ("avg_queue_time_s", "median_queue_time_s")

RESULT_COLUMNS = (
    "workload", "policy", "k", "s", "seed",
    "full_utilization", "useful_utilization", "avg_queue_time_s",
    "median_queue_time_s", "avg_queue_length", "window_start_s",
    "window_end_s", "status", "error",
)


@dataclass(frozen=True)
class WorkloadSpec:
    """One workload source: a generator setup or a file on disk."""

    workload_id: str
    nodes: int
    generator: GeneratorConfig | None = None
    path: str | None = None

    def __post_init__(self) -> None:
        if (self.generator is None) == (self.path is None):
            raise ConfigError(
                f"workload {self.workload_id!r} needs exactly one of generator or file"
            )
        if self.nodes < 1:
            raise ConfigError(f"workload {self.workload_id!r}: nodes must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    workloads: tuple[WorkloadSpec, ...]
    policies: tuple[str, ...] = ("packet",)
    k_grid: tuple[float, ...] = DEFAULT_K_GRID
    s_grid: tuple[float, ...] = DEFAULT_S_GRID
    seeds: tuple[int, ...] = (1,)
    t_max_s: float = 86_400.0
    wait_endpoint: str = "group"
    out_dir: str = "results"

    def __post_init__(self) -> None:
        if not self.workloads:
            raise ConfigError("sweep needs at least one workload")
        ids = [w.workload_id for w in self.workloads]
        if len(set(ids)) != len(ids):
            raise ConfigError("workload ids must be unique")
        if not self.policies:
            raise ConfigError("sweep needs at least one policy")
        for name in self.policies:
            if name not in POLICY_NAMES:
                raise ConfigError(
                    f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}"
                )
        for dim, name in ((self.k_grid, "k_grid"), (self.s_grid, "s_grid"),
                          (self.seeds, "seeds")):
            if not dim:
                raise ConfigError(f"{name} must not be empty")
        for i, k in enumerate(self.k_grid):
            if not (k > 0.0) or not math.isfinite(k):
                raise ConfigError("k_grid values must be positive finite numbers")
            if i > 0 and k <= self.k_grid[i - 1]:
                raise ConfigError("k_grid must be strictly increasing")
        for s in self.s_grid:
            if not (0.0 < s < 1.0):
                raise ConfigError("s_grid values must lie in (0, 1)")
        if self.wait_endpoint not in WAIT_ENDPOINTS:
            raise ConfigError(f"wait_endpoint must be one of {WAIT_ENDPOINTS}")
        if self.t_max_s <= 0:
            raise ConfigError("t_max_s must be positive")


@dataclass(frozen=True)
class ExperimentSpec:
    """One fully resolved cell of the sweep grid."""

    workload: WorkloadSpec
    policy: str
    k: float
    s_value: float
    seed: int
    t_max_s: float
    wait_endpoint: str


@dataclass(frozen=True)
class ResultRow:
    workload: str
    policy: str
    k: float
    s_value: float
    seed: int
    full_utilization: float | None = None
    useful_utilization: float | None = None
    avg_queue_time_s: float | None = None
    median_queue_time_s: float | None = None
    avg_queue_length: float | None = None
    window_start_s: float | None = None
    window_end_s: float | None = None
    status: str = "ok"
    error: str = ""
    wall_time_s: float = 0.0


def expand_grid(config: SweepConfig) -> list[ExperimentSpec]:
    """All grid cells in results order: workload, policy, S, k, seed.

    The k axis applies to the packet policy only; baseline policies get a
    single cell per (workload, S, seed) with k recorded as 0.
    """
    specs = []
    for workload in sorted(config.workloads, key=lambda w: w.workload_id):
        for policy in sorted(config.policies):
            ks = config.k_grid if policy == "packet" else (BASELINE_K,)
            for s_value in config.s_grid:
                for k in ks:
                    for seed in config.seeds:
                        specs.append(
                            ExperimentSpec(
                                workload=workload,
                                policy=policy,
                                k=k,
                                s_value=s_value,
                                seed=seed,
                                t_max_s=config.t_max_s,
                                wait_endpoint=config.wait_endpoint,
                            )
                        )
    return specs


def _build_jobs(spec: ExperimentSpec):
    workload = spec.workload
    if workload.path is not None:
        jobs, meta = read_workload(workload.path)
        if "M" in meta and meta["M"] != workload.nodes:
            warnings.warn(
                f"workload file {workload.path} was written for M={meta['M']} "
                f"but the sweep runs on M={workload.nodes}; the sweep value wins"
            )
        return set_initialization_proportion(jobs, spec.s_value)
    gen = dataclasses.replace(workload.generator, seed=spec.seed, nodes=workload.nodes)
    return build_workload(gen, s_target=spec.s_value)


def run_experiment(spec: ExperimentSpec) -> ResultRow:
    """Run one grid cell; failures become an error row, never an abort."""
    t0 = time.perf_counter()
    try:
        jobs = _build_jobs(spec)
        policy = make_policy(
            spec.policy,
            k=spec.k if spec.policy == "packet" else None,
            t_max_s=spec.t_max_s,
        )
        trace = run_simulation(jobs, policy, spec.workload.nodes, seed=spec.seed)
        window = measurement_window(jobs)
        report = metrics_report(trace, window, wait_endpoint=spec.wait_endpoint)
    except Exception as exc:
        return ResultRow(
            workload=spec.workload.workload_id,
            policy=spec.policy,
            k=spec.k,
            s_value=spec.s_value,
            seed=spec.seed,
            status="error",
            error=f"{type(exc).__name__}: {exc}",
            wall_time_s=time.perf_counter() - t0,
        )
    return ResultRow(
        workload=spec.workload.workload_id,
        policy=spec.policy,
        k=spec.k,
        s_value=spec.s_value,
        seed=spec.seed,
        full_utilization=report.full_utilization,
        useful_utilization=report.useful_utilization,
        avg_queue_time_s=report.avg_queue_time_s,
        median_queue_time_s=report.median_queue_time_s,
        avg_queue_length=report.avg_queue_length,
        window_start_s=report.window_start_s,
        window_end_s=report.window_end_s,
        status="ok",
        wall_time_s=time.perf_counter() - t0,
    )


def _row_key(row: ResultRow):
    return (row.workload, row.policy, row.s_value, row.k, row.seed)


def run_sweep(config: SweepConfig, workers: int = 1) -> list[ResultRow]:
    """Execute the whole grid and write results under config.out_dir.

    Workloads are regenerated inside each worker from the cell's seed, so
    splitting the grid across processes cannot change any result: the
    results CSV is byte-identical for any worker count.
    """
    specs = expand_grid(config)
    if workers <= 1:
        rows = [run_experiment(spec) for spec in specs]
    else:
        chunk = max(1, len(specs) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_experiment, specs, chunksize=chunk))
    rows.sort(key=_row_key)
    os.makedirs(config.out_dir, exist_ok=True)
    write_results_csv(rows, os.path.join(config.out_dir, "results.csv"))
    write_timing_csv(rows, os.path.join(config.out_dir, "timing.csv"))
    return rows


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def write_results_csv(rows, path) -> None:
    """Deterministic results table, sorted by (workload, policy, S, k, seed)."""
    ordered = sorted(rows, key=_row_key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in ordered:
            writer.writerow([
                row.workload, row.policy, f"{row.k:g}", f"{row.s_value:g}",
                row.seed, _fmt(row.full_utilization), _fmt(row.useful_utilization),
                _fmt(row.avg_queue_time_s), _fmt(row.median_queue_time_s),
                _fmt(row.avg_queue_length), _fmt(row.window_start_s),
                _fmt(row.window_end_s), row.status, row.error,
            ])


def write_timing_csv(rows, path) -> None:
    """Per-cell wall-clock cost; machine dependent, kept out of results.csv."""
    ordered = sorted(rows, key=_row_key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["workload", "policy", "k", "s", "seed", "wall_time_s"])
        for row in ordered:
            writer.writerow([
                row.workload, row.policy, f"{row.k:g}", f"{row.s_value:g}",
                row.seed, f"{row.wall_time_s:.3f}",
            ])


def read_results_csv(path) -> list[ResultRow]:
    """Load a results table written by write_results_csv."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise ParseError(f"{path}: unexpected results columns")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(ResultRow(
                    workload=rec["workload"],
                    policy=rec["policy"],
                    k=float(rec["k"]),
                    s_value=float(rec["s"]),
                    seed=int(rec["seed"]),
                    full_utilization=float(rec["full_utilization"]) if rec["full_utilization"] else None,
                    useful_utilization=float(rec["useful_utilization"]) if rec["useful_utilization"] else None,
                    avg_queue_time_s=float(rec["avg_queue_time_s"]) if rec["avg_queue_time_s"] else None,
                    median_queue_time_s=float(rec["median_queue_time_s"]) if rec["median_queue_time_s"] else None,
                    avg_queue_length=float(rec["avg_queue_length"]) if rec["avg_queue_length"] else None,
                    window_start_s=float(rec["window_start_s"]) if rec["window_start_s"] else None,
                    window_end_s=float(rec["window_end_s"]) if rec["window_end_s"] else None,
                    status=rec["status"],
                    error=rec["error"],
                ))
            except (KeyError, ValueError) as exc:
                raise ParseError(f"{path} line {lineno}: {exc}") from exc
    return rows


def detect_plateau(ks, values, rel_tol: float, abs_floor: float = 0.0) -> float | None:
    """Smallest k from which the series stays within tolerance of its final value.

    Tolerance is max(rel_tol * |final|, abs_floor); the absolute floor
    keeps near-zero series from demanding microsecond agreement.  Returns
    None when only the very last point qualifies, i.e. no plateau found.
    """
    ks = list(ks)
    values = list(values)
    if len(ks) != len(values):
        raise ValueError("ks and values must have the same length")
    if len(ks) < 3:
        raise ValueError("plateau detection needs at least 3 points")
    for i in range(1, len(ks)):
        if ks[i] <= ks[i - 1]:
            raise ValueError("ks must be strictly increasing")
    if not (rel_tol > 0.0):
        raise ValueError("rel_tol must be positive")
    final = values[-1]
    tol = max(rel_tol * abs(final), abs_floor)
    idx = len(values) - 1
    for j in range(len(values) - 2, -1, -1):
        if abs(values[j] - final) <= tol:
            idx = j
        else:
            break
    if idx == len(values) - 1:
        return None
    return ks[idx]


def _check_metric(metric: str) -> None:
    if metric not in METRIC_NAMES:
        raise ConfigError(
            f"unknown metric {metric!r}; expected one of {', '.join(METRIC_NAMES)}"
        )


def aggregate_series(rows, metric: str):
    """Group ok-rows by (workload, policy, S) into per-k value lists.

    Returns a dict keyed by that triple; each value is a list of
    (k, [metric value per seed, ascending seed]) sorted by k.
    """
    _check_metric(metric)
    usable = [r for r in rows if r.status == "ok"]
    if not usable:
        raise ConfigError("no successful rows to aggregate")
    series: dict = {}
    for row in sorted(usable, key=_row_key):
        key = (row.workload, row.policy, row.s_value)
        series.setdefault(key, {}).setdefault(row.k, []).append(getattr(row, metric))
    out = {}
    for key, by_k in series.items():
        out[key] = [(k, by_k[k]) for k in sorted(by_k)]
    return out


def emit_plot_series(rows, metric: str, out_dir) -> list[str]:
    """Write one plot-ready CSV per (workload, policy, S) for a metric.

    Multi-seed series carry mean, min, and max columns; single-seed series
    carry the bare value.  Returns the written paths.
    """
    series = aggregate_series(rows, metric)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for (workload, policy, s_value), points in sorted(series.items()):
        multi = any(len(vals) > 1 for _, vals in points)
        name = f"{workload}_{policy}_S{s_value:g}_{metric}.csv"
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if multi:
                writer.writerow(["k", f"{metric}_mean", f"{metric}_min", f"{metric}_max"])
                for k, vals in points:
                    writer.writerow([
                        f"{k:g}", f"{sum(vals) / len(vals):.6f}",
                        f"{min(vals):.6f}", f"{max(vals):.6f}",
                    ])
            else:
                writer.writerow(["k", metric])
                for k, vals in points:
                    writer.writerow([f"{k:g}", f"{vals[0]:.6f}"])
        paths.append(path)
    return paths


def plateau_report(rows, metric: str, rel_tol: float = 0.05):
    """Plateau onset of the seed-mean series per (workload, policy, S).

    Baseline rows have no k axis and are skipped.  Time metrics get a one
    second absolute floor so an all-zero tail counts as flat.
    """
    series = aggregate_series(rows, metric)
    abs_floor = 1.0 if metric in TIME_METRICS else 0.0
    report = []
    for (workload, policy, s_value), points in sorted(series.items()):
        if policy != "packet" or len(points) < 3:
            continue
        ks = [k for k, _ in points]
        means = [sum(vals) / len(vals) for _, vals in points]
        k_star = detect_plateau(ks, means, rel_tol=rel_tol, abs_floor=abs_floor)
        report.append({
            "workload": workload, "policy": policy, "s": s_value,
            "metric": metric, "k_star": k_star,
        })
    return report


def write_plateau_csv(report, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["workload", "policy", "s", "metric", "k_star"])
        for entry in report:
            k_star = entry["k_star"]
            writer.writerow([
                entry["workload"], entry["policy"], f"{entry['s']:g}",
                entry["metric"], "" if k_star is None else f"{k_star:g}",
            ])


def _generator_from_mapping(data: dict, nodes: int) -> GeneratorConfig:
    kwargs = dict(data)
    if "runtime_bounds_s" in kwargs:
        lo, hi = kwargs["runtime_bounds_s"]
        kwargs["runtime_bounds_s"] = (float(lo), float(hi))
    kwargs.setdefault("nodes", nodes)
    try:
        return GeneratorConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad generator settings: {exc}") from exc


def load_sweep_config(path) -> SweepConfig:
    """Parse a sweep configuration from a YAML file."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: sweep config must be a mapping")
    known = {"workloads", "policies", "k_grid", "s_grid", "seeds",
             "t_max_s", "wait_endpoint", "out_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    if "workloads" not in data or not isinstance(data["workloads"], list):
        raise ConfigError(f"{path}: workloads must be a list")
    workloads = []
    for entry in data["workloads"]:
        if not isinstance(entry, dict) or "id" not in entry:
            raise ConfigError(f"{path}: each workload needs an id")
        nodes = int(entry.get("nodes", 100))
        generator = None
        if "generator" in entry:
            generator = _generator_from_mapping(entry["generator"] or {}, nodes)
        workloads.append(WorkloadSpec(
            workload_id=str(entry["id"]),
            nodes=nodes,
            generator=generator,
            path=entry.get("file"),
        ))
    kwargs: dict = {"workloads": tuple(workloads)}
    if "policies" in data:
        kwargs["policies"] = tuple(str(p) for p in data["policies"])
    if "k_grid" in data:
        kwargs["k_grid"] = tuple(float(k) for k in data["k_grid"])
    if "s_grid" in data:
        kwargs["s_grid"] = tuple(float(s) for s in data["s_grid"])
    if "seeds" in data:
        kwargs["seeds"] = tuple(int(s) for s in data["seeds"])
    if "t_max_s" in data:
        kwargs["t_max_s"] = float(data["t_max_s"])
    if "wait_endpoint" in data:
        kwargs["wait_endpoint"] = str(data["wait_endpoint"])
    if "out_dir" in data:
        kwargs["out_dir"] = str(data["out_dir"])
    return SweepConfig(**kwargs)
