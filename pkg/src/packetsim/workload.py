"""Synthetic workload generation, load calibration, and workload files.

Workloads are lists of jobs sorted by submit time.  The generator draws
exponential inter-arrival gaps, log-uniform runtimes with a bias toward
power-of-two node counts, and uniform type ids.  Two post-passes shape a
drawn workload without touching its structure: calibrate_load rescales
every runtime by one common factor until the offered load hits a target,
and set_initialization_proportion assigns the single per-job init time
that makes initialization a chosen share of all compute.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .sim import Job, SimulationTrace, US_PER_S, s_to_us

FORMAT_VERSION = "1"
WORKLOAD_COLUMNS = ("job_id", "submit_us", "req_nodes", "runtime_us", "type_id", "init_us")

# Homogeneous mode keeps every draw at mean + 0.25 * (draw - mean).
HOMOGENEOUS_SPREAD = 0.25


@dataclass(frozen=True)
class GeneratorConfig:
    n_jobs: int = 1000
    span_s: float = 86_400.0
    h_types: int = 8
    nodes: int = 100
    load: float | None = 0.9
    homogeneity: str = "heterogeneous"
    runtime_bounds_s: tuple[float, float] = (30.0, 7200.0)
    req_cap: int | None = None
    p_power_of_two: float = 0.75
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        if self.span_s <= 0:
            raise ConfigError("span_s must be positive")
        if self.h_types < 1:
            raise ConfigError("h_types must be >= 1")
        if self.nodes < 1:
            raise ConfigError("nodes must be >= 1")
        if self.load is not None and not (0.0 < self.load < 1.0):
            raise ConfigError("load must lie in (0, 1)")
        if self.homogeneity not in ("heterogeneous", "homogeneous"):
            raise ConfigError("homogeneity must be heterogeneous or homogeneous")
        lo, hi = self.runtime_bounds_s
        if not (0 < lo <= hi):
            raise ConfigError("runtime bounds must satisfy 0 < low <= high")
        if self.req_cap is not None and self.req_cap < 1:
            raise ConfigError("req_cap must be >= 1")
        if not (0.0 <= self.p_power_of_two <= 1.0):
            raise ConfigError("p_power_of_two must lie in [0, 1]")


def generate_workload(config: GeneratorConfig) -> list[Job]:
    """Draw a raw workload; init times start at zero.

    The draw order is fixed (gaps, runtimes, node counts, types) so a seed
    reproduces the same workload across releases of this format version.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_jobs
    gaps = rng.exponential(config.span_s / n, size=n)
    submits = np.cumsum(gaps)

    lo, hi = config.runtime_bounds_s
    runtimes = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))
    if config.homogeneity == "homogeneous":
        if hi > lo:
            mean = (hi - lo) / (math.log(hi) - math.log(lo))
        else:
            mean = lo
        runtimes = mean + HOMOGENEOUS_SPREAD * (runtimes - mean)

    cap = config.req_cap if config.req_cap is not None else min(config.nodes, 64)
    cap = min(cap, config.nodes)
    powers = [1 << p for p in range(cap.bit_length()) if (1 << p) <= cap]
    use_power = rng.random(n) < config.p_power_of_two
    power_pick = rng.choice(np.array(powers), size=n)
    uniform_pick = rng.integers(1, cap + 1, size=n)
    reqs = np.where(use_power, power_pick, uniform_pick)

    types = rng.integers(0, config.h_types, size=n)

    jobs = []
    for i in range(n):
        runtime_us = max(1, s_to_us(float(runtimes[i])))
        req = int(reqs[i])
        jobs.append(
            Job(
                id=i,
                submit_us=s_to_us(float(submits[i])),
                work_1node_us=runtime_us * req,
                req_nodes=req,
                type_id=int(types[i]),
                init_us=0,
            )
        )
    return jobs


def submit_span_us(jobs) -> int:
    """Length of the submission period, from time zero to the last submit."""
    if not jobs:
        raise ValidationError("empty workload has no submit span")
    return max(job.submit_us for job in jobs)


def measured_load(jobs, nodes: int) -> float:
    """Offered load: requested node-seconds over cluster capacity."""
    span = submit_span_us(jobs)
    if span <= 0:
        raise ValidationError("submit span must be positive to measure load")
    total_work = sum(job.work_1node_us for job in jobs)
    return total_work / (nodes * span)


def calibrate_load(jobs, target_load: float, nodes: int, *,
                   tol: float = 1e-9, max_rounds: int = 16) -> list[Job]:
    """Rescale every runtime by one common factor until load hits target_load.

    Node counts, submits, and types are untouched.  Runtimes are rounded
    to whole microseconds, which leaves a small residual after each pass,
    so the common factor is reapplied until the measured load lands within
    tol of the target; realistic workloads converge in two or three rounds.
    Once every per-job adjustment rounds below half a microsecond the pass
    is a fixed point, so the factor is nudged just past the largest
    runtime's rounding threshold to keep closing in.
    """
    if not (target_load > 0.0):
        raise ValueError("target load must be positive")

    def rescaled(src, factor):
        scaled = []
        for job in src:
            runtime = job.work_1node_us // job.req_nodes
            if runtime * job.req_nodes != job.work_1node_us:
                raise ValidationError(f"job {job.id}: work not divisible by req_nodes")
            new_runtime = max(1, int(round(runtime * factor)))
            scaled.append(dataclasses.replace(job, work_1node_us=new_runtime * job.req_nodes))
        return scaled

    out = list(jobs)
    best, best_err = out, math.inf
    for _ in range(max_rounds):
        current = measured_load(out, nodes)
        if current <= 0:
            raise ValidationError("cannot calibrate a workload with no work")
        err = abs(current - target_load)
        if err < best_err:
            best, best_err = out, err
        if err <= tol:
            return out
        scaled = rescaled(out, target_load / current)
        if scaled == out:
            r_max = max(job.work_1node_us // job.req_nodes for job in out)
            nudged = 1.0 + math.copysign(0.75 / r_max, target_load - current)
            scaled = rescaled(out, nudged)
            if scaled == out:
                break
        out = scaled
    if abs(measured_load(out, nodes) - target_load) < best_err:
        best = out
    return best


def init_proportion(jobs) -> float:
    """Share of all compute spent initializing: sum(s) / (sum(s) + sum(e))."""
    total_init = sum(job.init_us for job in jobs)
    total_work = sum(job.work_1node_us for job in jobs)
    if total_init + total_work <= 0:
        raise ValidationError("workload carries no time at all")
    return total_init / (total_init + total_work)


def set_initialization_proportion(jobs, s_target: float) -> list[Job]:
    """Give every job the constant init time that realizes s_target.

    Solving s_target = n*s / (n*s + sum(e)) for s yields
    s = s_target * sum(e) / (n * (1 - s_target)); the same value is
    assigned to each job so types stay interchangeable in cost.
    """
    if not (0.0 < s_target < 1.0):
        raise ValueError("initialization proportion must lie in (0, 1)")
    if not jobs:
        raise ValidationError("empty workload")
    total_work = sum(job.work_1node_us for job in jobs)
    s_us = int(round(s_target * total_work / (len(jobs) * (1.0 - s_target))))
    return [dataclasses.replace(job, init_us=s_us) for job in jobs]


def build_workload(config: GeneratorConfig, s_target: float | None = None) -> list[Job]:
    """Generate, calibrate to config.load if set, then apply s_target."""
    jobs = generate_workload(config)
    if config.load is not None:
        jobs = calibrate_load(jobs, config.load, config.nodes)
    if s_target is not None:
        jobs = set_initialization_proportion(jobs, s_target)
    return jobs


def write_workload(jobs, path, *, nodes: int, h_types: int, seed: int) -> None:
    """Write a workload file: '# key=value' header lines, then CSV rows."""
    s_share = init_proportion(jobs) if jobs else 0.0
    with open(path, "w", newline="") as fh:
        fh.write(f"# M={nodes}\n")
        fh.write(f"# h={h_types}\n")
        fh.write(f"# S={s_share:.9g}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(f"# version={FORMAT_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(WORKLOAD_COLUMNS)
        for job in jobs:
            runtime = job.work_1node_us // job.req_nodes
            if runtime * job.req_nodes != job.work_1node_us:
                raise ValidationError(f"job {job.id}: work not divisible by req_nodes")
            writer.writerow(
                [job.id, job.submit_us, job.req_nodes, runtime, job.type_id, job.init_us]
            )


def read_workload(path) -> tuple[list[Job], dict]:
    """Read a workload file back; returns (jobs, header metadata).

    Parse failures name the offending line.  Rows must arrive sorted by
    submit time with positive runtimes and node counts.
    """
    meta: dict = {}
    jobs: list[Job] = []
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    raise ParseError(f"line {lineno}: malformed header {line!r}")
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if tuple(fields) != WORKLOAD_COLUMNS:
                    raise ParseError(
                        f"line {lineno}: expected columns {','.join(WORKLOAD_COLUMNS)}"
                    )
                header_seen = True
                continue
            if len(fields) != len(WORKLOAD_COLUMNS):
                raise ParseError(f"line {lineno}: expected {len(WORKLOAD_COLUMNS)} fields")
            try:
                job_id, submit, req, runtime, type_id, init = (int(f) for f in fields)
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
            if submit < 0:
                raise ParseError(f"line {lineno}: negative submit time")
            if runtime <= 0:
                raise ParseError(f"line {lineno}: runtime must be positive")
            if req < 1:
                raise ParseError(f"line {lineno}: req_nodes must be >= 1")
            if type_id < 0:
                raise ParseError(f"line {lineno}: negative type id")
            if init < 0:
                raise ParseError(f"line {lineno}: negative init time")
            jobs.append(
                Job(
                    id=job_id,
                    submit_us=submit,
                    work_1node_us=runtime * req,
                    req_nodes=req,
                    type_id=type_id,
                    init_us=init,
                )
            )
    if not header_seen:
        raise ParseError("file has no column header")
    for i in range(1, len(jobs)):
        if jobs[i].submit_us < jobs[i - 1].submit_us:
            raise ValidationError("workload rows are not sorted by submit time")
    for key in ("M", "h", "seed"):
        if key in meta:
            meta[key] = int(meta[key])
    if "S" in meta:
        meta["S"] = float(meta["S"])
    return jobs, meta


def write_trace_csv(trace: SimulationTrace, path) -> None:
    """Dump per-job lifecycle rows of a finished run."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# M={trace.total_nodes}\n")
        fh.write(f"# policy={trace.policy}\n")
        fh.write(f"# seed={trace.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["job_id", "submit_us", "dispatch_us", "run_start_us",
             "run_end_us", "alloc_id", "node_count"]
        )
        for job_id in sorted(trace.jobs):
            rec = trace.jobs[job_id]
            writer.writerow(
                [rec.job_id, rec.submit_us, rec.dispatch_us, rec.run_start_us,
                 rec.run_end_us, rec.alloc_id, rec.node_count]
            )
