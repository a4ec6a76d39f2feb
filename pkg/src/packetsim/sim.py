"""Deterministic discrete-event engine for a space-shared cluster.

All simulated times are integer microseconds.  The event queue orders by
(time, kind, seq) where completions sort before submits at the same
timestamp, so nodes freed at time t are visible to the scheduler before a
job arriving at t is considered.  The scheduling policy is consulted after
every single event; with a fixed workload and policy a run is reproducible
bit for bit on any platform.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import EngineInvariantError, JobRejectedError, ValidationError

US_PER_S = 1_000_000

# Event kinds, also the tie-break priority at equal timestamps.
COMPLETION = 0
SUBMIT = 1


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def s_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


@dataclass(frozen=True)
class Job:
    """One moldable job; work_1node_us is its execution time on one node."""

    id: int
    submit_us: int
    work_1node_us: int
    req_nodes: int
    type_id: int
    init_us: int

    def __post_init__(self) -> None:
        if self.submit_us < 0:
            raise ValidationError(f"job {self.id}: negative submit time")
        if self.work_1node_us <= 0:
            raise ValidationError(f"job {self.id}: work must be positive")
        if self.req_nodes < 1:
            raise ValidationError(f"job {self.id}: req_nodes must be >= 1")
        if self.init_us < 0:
            raise ValidationError(f"job {self.id}: negative init time")
        if self.type_id < 0:
            raise ValidationError(f"job {self.id}: negative type id")


@dataclass(frozen=True)
class JobGroup:
    """Jobs of one type packed into a single allocation.

    Members run back to back on all assigned nodes, so the group behaves
    like one moldable job of total_work_us with a single initialization.
    """

    type_id: int
    jobs: tuple[Job, ...]
    total_work_us: int

    @classmethod
    def from_jobs(cls, jobs: tuple[Job, ...]) -> "JobGroup":
        if not jobs:
            raise ValidationError("a group needs at least one job")
        type_id = jobs[0].type_id
        init_us = jobs[0].init_us
        for job in jobs:
            if job.type_id != type_id:
                raise ValidationError("group mixes job types")
            if job.init_us != init_us:
                raise ValidationError("group mixes init times within a type")
        total = 0
        for job in jobs:
            total += job.work_1node_us
        return cls(type_id=type_id, jobs=jobs, total_work_us=total)

    @property
    def init_us(self) -> int:
        return self.jobs[0].init_us


def group_span(group: JobGroup, node_count: int) -> tuple[int, int]:
    """Init and run durations of a group executed on node_count nodes.

    Linear speedup: the run phase lasts ceil(total_work / node_count)
    microseconds.  Initialization is paid once regardless of node count.
    """
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    return group.init_us, ceil_div(group.total_work_us, node_count)


def member_run_bounds(group: JobGroup, node_count: int) -> list[tuple[int, int]]:
    """Per-member (start, end) offsets inside the run phase, in submit order.

    Member i ends at ceil(prefix_work_i / node_count), so the boundaries
    never drift more than one microsecond per member from the exact
    rationals and the last end equals the group run duration.
    """
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    bounds = []
    prefix = 0
    prev = 0
    for job in group.jobs:
        prefix += job.work_1node_us
        end = ceil_div(prefix, node_count)
        bounds.append((prev, end))
        prev = end
    return bounds


@dataclass
class Allocation:
    """A contiguous reservation of node_count nodes until end_us."""

    id: int
    node_count: int
    start_us: int
    end_us: int


class ClusterState:
    """Free-node accounting for a homogeneous cluster."""

    def __init__(self, total_nodes: int):
        if total_nodes < 1:
            raise ValidationError("cluster needs at least one node")
        self.total_nodes = total_nodes
        self.free_nodes = total_nodes
        self.running: dict[int, Allocation] = {}
        self._next_id = 0

    def allocate(self, node_count: int, start_us: int, end_us: int) -> Allocation:
        if node_count < 1 or node_count > self.free_nodes:
            raise EngineInvariantError(
                f"allocation of {node_count} nodes with {self.free_nodes} free"
            )
        alloc = Allocation(self._next_id, node_count, start_us, end_us)
        self._next_id += 1
        self.free_nodes -= node_count
        self.running[alloc.id] = alloc
        return alloc

    def release(self, alloc_id: int) -> Allocation:
        alloc = self.running.pop(alloc_id, None)
        if alloc is None:
            raise EngineInvariantError(f"release of unknown allocation {alloc_id}")
        self.free_nodes += alloc.node_count
        if self.free_nodes > self.total_nodes:
            raise EngineInvariantError("free nodes exceed cluster size")
        return alloc


@dataclass(frozen=True)
class JobRecord:
    """Lifecycle of one job as observed in a finished run."""

    job_id: int
    submit_us: int
    dispatch_us: int
    run_start_us: int
    run_end_us: int
    alloc_id: int
    node_count: int


@dataclass(frozen=True)
class AllocationRecord:
    alloc_id: int
    type_id: int
    node_count: int
    init_start_us: int
    run_start_us: int
    run_end_us: int
    job_ids: tuple[int, ...]


@dataclass
class SimulationTrace:
    """Complete, deterministic record of one simulation run."""

    total_nodes: int
    policy: str
    seed: int
    jobs: dict[int, JobRecord] = field(default_factory=dict)
    allocations: list[AllocationRecord] = field(default_factory=list)
    # (time_us, queued job count) sampled after each event settles
    queue_samples: list[tuple[int, int]] = field(default_factory=list)


def run_simulation(workload, policy, total_nodes: int, seed: int = 0) -> SimulationTrace:
    """Run one experiment to completion and return its trace.

    The policy object exposes name, requires_req_fit, enqueue(job, now_us)
    and dispatch(cluster, now_us) -> list of decisions carrying a group and
    a node count.  dispatch is called after every event; the engine applies
    every decision at the current timestamp.
    """
    jobs = list(workload)
    for i in range(1, len(jobs)):
        if jobs[i].submit_us < jobs[i - 1].submit_us:
            raise ValidationError("workload must be sorted by submit time")
    seen: set[int] = set()
    for job in jobs:
        if job.id in seen:
            raise ValidationError(f"duplicate job id {job.id}")
        seen.add(job.id)
    if policy.requires_req_fit:
        for job in jobs:
            if job.req_nodes > total_nodes:
                raise JobRejectedError(
                    f"job {job.id} requests {job.req_nodes} nodes "
                    f"but the cluster has {total_nodes}"
                )

    cluster = ClusterState(total_nodes)
    trace = SimulationTrace(total_nodes=total_nodes, policy=policy.name, seed=seed)
    events: list[tuple[int, int, int, object]] = []
    seq = 0
    for job in jobs:
        heapq.heappush(events, (job.submit_us, SUBMIT, seq, job))
        seq += 1
    queued = 0

    while events:
        now, kind, _, payload = heapq.heappop(events)
        if kind == COMPLETION:
            cluster.release(payload)
        else:
            policy.enqueue(payload, now)
            queued += 1
        for decision in policy.dispatch(cluster, now):
            group = decision.group
            m = decision.node_count
            init, run = group_span(group, m)
            run_start = now + init
            run_end = run_start + run
            alloc = cluster.allocate(m, now, run_end)
            heapq.heappush(events, (run_end, COMPLETION, seq, alloc.id))
            seq += 1
            for job, (lo, hi) in zip(group.jobs, member_run_bounds(group, m)):
                trace.jobs[job.id] = JobRecord(
                    job_id=job.id,
                    submit_us=job.submit_us,
                    dispatch_us=now,
                    run_start_us=run_start + lo,
                    run_end_us=run_start + hi,
                    alloc_id=alloc.id,
                    node_count=m,
                )
            trace.allocations.append(
                AllocationRecord(
                    alloc_id=alloc.id,
                    type_id=group.type_id,
                    node_count=m,
                    init_start_us=now,
                    run_start_us=run_start,
                    run_end_us=run_end,
                    job_ids=tuple(job.id for job in group.jobs),
                )
            )
            queued -= len(group.jobs)
            if queued < 0:
                raise EngineInvariantError("dispatched more jobs than queued")
        trace.queue_samples.append((now, queued))

    if queued != 0 or cluster.running:
        raise EngineInvariantError("simulation ended with work in flight")
    if len(trace.jobs) != len(jobs):
        raise EngineInvariantError("some jobs never ran")
    return trace
