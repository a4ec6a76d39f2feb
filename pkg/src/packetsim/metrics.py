"""Efficiency metrics over a finished simulation trace.

All metrics are taken over the measurement window (0, last submit time):
activity after the last submission reflects queue drain, not steady
operation, so it is clipped away.  Utilizations are node-second shares of
cluster capacity; queue times and lengths are reported in seconds.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass

from .errors import MetricsError
from .sim import SimulationTrace, US_PER_S

WAIT_ENDPOINTS = ("group", "job")


def measurement_window(jobs) -> tuple[int, int]:
    """Window (0, last submit) in microseconds."""
    if not jobs:
        raise MetricsError("cannot take a window over an empty workload")
    return 0, max(job.submit_us for job in jobs)


def _window_from_trace(trace: SimulationTrace) -> tuple[int, int]:
    if not trace.jobs:
        raise MetricsError("trace holds no jobs")
    return 0, max(rec.submit_us for rec in trace.jobs.values())


def _overlap(lo: int, hi: int, start: int, end: int) -> int:
    return max(0, min(hi, end) - max(lo, start))


def utilization(trace: SimulationTrace, window: tuple[int, int],
                count_init: bool) -> float:
    """Busy node-seconds inside the window over cluster capacity.

    With count_init the init phase of each allocation counts as busy
    (full utilization); without it only run phases count (useful
    utilization).
    """
    start, end = window
    if end <= start:
        raise MetricsError("measurement window is empty")
    busy = 0
    for alloc in trace.allocations:
        span = _overlap(alloc.run_start_us, alloc.run_end_us, start, end)
        if count_init:
            span += _overlap(alloc.init_start_us, alloc.run_start_us, start, end)
        busy += alloc.node_count * span
    return busy / (trace.total_nodes * (end - start))


def queue_time_stats(trace: SimulationTrace, window: tuple[int, int],
                     wait_endpoint: str = "group") -> tuple[float, float]:
    """Mean and median queue time in seconds over jobs submitted in window.

    The wait of a job ends at its group's dispatch instant ("group") or at
    its own run start inside the allocation ("job"); waits are clipped at
    the window end.
    """
    if wait_endpoint not in WAIT_ENDPOINTS:
        raise ValueError(f"wait_endpoint must be one of {WAIT_ENDPOINTS}")
    start, end = window
    if end <= start:
        raise MetricsError("measurement window is empty")
    waits = []
    for rec in trace.jobs.values():
        if rec.submit_us > end:
            continue
        done = rec.dispatch_us if wait_endpoint == "group" else rec.run_start_us
        waits.append(max(0, min(done, end) - rec.submit_us))
    if not waits:
        raise MetricsError("no jobs were submitted inside the window")
    mean_s = sum(waits) / len(waits) / US_PER_S
    median_s = statistics.median(waits) / US_PER_S
    return mean_s, median_s


def avg_queue_length(trace: SimulationTrace, window: tuple[int, int]) -> float:
    """Time-weighted average count of submitted-but-not-yet-dispatched jobs."""
    start, end = window
    if end <= start:
        raise MetricsError("measurement window is empty")
    waiting_us = 0
    for rec in trace.jobs.values():
        waiting_us += _overlap(rec.submit_us, rec.dispatch_us, start, end)
    return waiting_us / (end - start)


@dataclass(frozen=True)
class MetricsReport:
    full_utilization: float
    useful_utilization: float
    avg_queue_time_s: float
    median_queue_time_s: float
    avg_queue_length: float
    window_start_s: float
    window_end_s: float


def metrics_report(trace: SimulationTrace, window: tuple[int, int] | None = None,
                   wait_endpoint: str = "group") -> MetricsReport:
    """All efficiency metrics of one run in a single report."""
    if window is None:
        window = _window_from_trace(trace)
    full = utilization(trace, window, count_init=True)
    useful = utilization(trace, window, count_init=False)
    avg_wait, median_wait = queue_time_stats(trace, window, wait_endpoint)
    length = avg_queue_length(trace, window)
    return MetricsReport(
        full_utilization=full,
        useful_utilization=useful,
        avg_queue_time_s=avg_wait,
        median_queue_time_s=median_wait,
        avg_queue_length=length,
        window_start_s=window[0] / US_PER_S,
        window_end_s=window[1] / US_PER_S,
    )
