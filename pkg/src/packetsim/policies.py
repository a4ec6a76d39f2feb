"""Scheduling policies: group-based packing plus two classic baselines.

The group-based policy keeps one FIFO queue per job type.  Whenever nodes
are free it repeatedly picks the queue with the highest weight, packs all
of its jobs into a single allocation, and sizes that allocation from the
scale ratio k: larger k trades parallelism for fewer repeated
initializations.  The baselines treat jobs individually and honor their
requested node counts.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .errors import ConfigError, ValidationError
from .sim import Job, JobGroup, US_PER_S, ceil_div

DEFAULT_T_MAX_US = 24 * 3600 * US_PER_S


@dataclass(frozen=True)
class PacketConfig:
    """Tuning knobs of the group-based policy."""

    k: float
    t_max_us: int = DEFAULT_T_MAX_US

    def __post_init__(self) -> None:
        if not (self.k > 0.0) or not math.isfinite(self.k):
            raise ConfigError("scale ratio k must be a positive finite number")
        if self.t_max_us <= 0:
            raise ConfigError("t_max must be positive")


class TypeQueue:
    """FIFO queue of waiting jobs that share one type."""

    def __init__(self, type_id: int, priority: float = 1.0,
                 t_max_us: int = DEFAULT_T_MAX_US):
        if not (priority > 0.0):
            raise ConfigError(f"type {type_id}: priority must be positive")
        self.type_id = type_id
        self.priority = priority
        self.t_max_us = t_max_us
        self.jobs: deque[Job] = deque()
        self.total_work_us = 0

    def __len__(self) -> int:
        return len(self.jobs)

    def append(self, job: Job) -> None:
        if job.type_id != self.type_id:
            raise ValidationError(
                f"job {job.id} of type {job.type_id} pushed to queue {self.type_id}"
            )
        self.jobs.append(job)
        self.total_work_us += job.work_1node_us

    def take_all(self) -> tuple[Job, ...]:
        """Remove and return every queued job; the queue becomes empty."""
        taken = tuple(self.jobs)
        self.jobs.clear()
        self.total_work_us = 0
        return taken

    @property
    def init_us(self) -> int:
        return self.jobs[0].init_us


def grouping_advisability(queue: TypeQueue) -> float:
    """How much work one initialization of this type would amortize.

    Sum of queued single-node work divided by the type's init time.  A
    zero-cost init makes grouping infinitely advisable.
    """
    if not queue.jobs:
        raise ValueError("advisability of an empty queue is undefined")
    s = queue.init_us
    if s == 0:
        return math.inf
    return queue.total_work_us / s


def queue_weight(queue: TypeQueue, now_us: int) -> float:
    """Advisability scaled by priority and by how long the head has waited.

    The wait factor grows linearly and doubles the weight once the head
    job has waited t_max, so no queue starves forever.
    """
    advisability = grouping_advisability(queue)
    waited = now_us - queue.jobs[0].submit_us
    return advisability * queue.priority * (1.0 + waited / queue.t_max_us)


def select_queue(queues, now_us: int):
    """Pick the non-empty queue with the highest weight.

    Ties go to the lowest type id; returns None when every queue is empty.
    """
    best = None
    best_weight = -math.inf
    for queue in sorted(queues, key=lambda q: q.type_id):
        if not queue.jobs:
            continue
        weight = queue_weight(queue, now_us)
        if weight > best_weight:
            best = queue
            best_weight = weight
    return best


def group_node_demand(total_work_us: int, init_us: int, k: float) -> int:
    """Node count that makes the run phase k times the init time.

    floor(W / (k * s)), clamped to at least one node.  With this size the
    run lasts at least k*s, so the single initialization stays a bounded
    fraction of the allocation.
    """
    if total_work_us <= 0:
        raise ValueError("total work must be positive")
    if init_us <= 0:
        raise ValueError("init time must be positive")
    if not (k > 0.0):
        raise ValueError("k must be positive")
    return max(1, math.floor(total_work_us / (k * init_us)))


@dataclass(frozen=True)
class DispatchDecision:
    """One allocation the engine should start now."""

    group: JobGroup
    node_count: int


class PacketPolicy:
    """Group-based scheduler with per-type queues and a scale ratio k."""

    name = "packet"
    requires_req_fit = False

    def __init__(self, config: PacketConfig, priorities: dict[int, float] | None = None):
        self.config = config
        self.priorities = dict(priorities or {})
        self.queues: dict[int, TypeQueue] = {}

    def enqueue(self, job: Job, now_us: int) -> None:
        queue = self.queues.get(job.type_id)
        if queue is None:
            queue = TypeQueue(
                job.type_id,
                priority=self.priorities.get(job.type_id, 1.0),
                t_max_us=self.config.t_max_us,
            )
            self.queues[job.type_id] = queue
        queue.append(job)

    def dispatch(self, cluster, now_us: int) -> list[DispatchDecision]:
        free = cluster.free_nodes
        decisions = []
        while free > 0:
            queue = select_queue(self.queues.values(), now_us)
            if queue is None:
                break
            s = queue.init_us
            if s == 0:
                demand = free
            else:
                demand = group_node_demand(queue.total_work_us, s, self.config.k)
            m = min(demand, free)
            group = JobGroup.from_jobs(queue.take_all())
            decisions.append(DispatchDecision(group=group, node_count=m))
            free -= m
        return decisions


class FcfsPolicy:
    """First come, first served with head-of-line blocking."""

    name = "fcfs"
    requires_req_fit = True

    def __init__(self):
        self.queue: deque[Job] = deque()

    def enqueue(self, job: Job, now_us: int) -> None:
        self.queue.append(job)

    def dispatch(self, cluster, now_us: int) -> list[DispatchDecision]:
        free = cluster.free_nodes
        decisions = []
        while self.queue and self.queue[0].req_nodes <= free:
            job = self.queue.popleft()
            decisions.append(
                DispatchDecision(group=JobGroup.from_jobs((job,)),
                                 node_count=job.req_nodes)
            )
            free -= job.req_nodes
        return decisions


class EasyBackfillPolicy:
    """FCFS with aggressive backfilling under an exact head reservation.

    Runtimes are known exactly, so the head's reservation (shadow time)
    is the earliest instant enough nodes accumulate.  A later job may jump
    ahead only if it fits now and either finishes by the shadow time or
    uses nodes the head leaves over.
    """

    name = "easy-backfill"
    requires_req_fit = True

    def __init__(self):
        self.queue: deque[Job] = deque()

    def enqueue(self, job: Job, now_us: int) -> None:
        self.queue.append(job)

    @staticmethod
    def _job_end(job: Job, now_us: int) -> int:
        return now_us + job.init_us + ceil_div(job.work_1node_us, job.req_nodes)

    @staticmethod
    def _reservation(req_nodes: int, free: int, releases) -> tuple[int, int]:
        """Shadow time and leftover nodes for a head needing req_nodes.

        releases is a list of (end_us, node_count) for everything running.
        Nodes freed at the same instant are pooled before the test.
        """
        avail = free
        i = 0
        ordered = sorted(releases)
        while i < len(ordered):
            t = ordered[i][0]
            while i < len(ordered) and ordered[i][0] == t:
                avail += ordered[i][1]
                i += 1
            if avail >= req_nodes:
                return t, avail - req_nodes
        raise ValidationError(
            f"reservation for {req_nodes} nodes can never be met"
        )

    def dispatch(self, cluster, now_us: int) -> list[DispatchDecision]:
        free = cluster.free_nodes
        releases = [(a.end_us, a.node_count) for a in cluster.running.values()]
        decisions = []

        def start(job: Job) -> None:
            nonlocal free
            decisions.append(
                DispatchDecision(group=JobGroup.from_jobs((job,)),
                                 node_count=job.req_nodes)
            )
            free -= job.req_nodes
            releases.append((self._job_end(job, now_us), job.req_nodes))

        while self.queue and self.queue[0].req_nodes <= free:
            start(self.queue.popleft())
        if not self.queue:
            return decisions
        head = self.queue[0]
        for job in list(self.queue)[1:]:
            if job.req_nodes > free:
                continue
            shadow, extra = self._reservation(head.req_nodes, free, releases)
            if self._job_end(job, now_us) <= shadow or job.req_nodes <= extra:
                self.queue.remove(job)
                start(job)
        return decisions


POLICY_NAMES = ("packet", "fcfs", "easy-backfill")


def make_policy(name: str, k: float | None = None,
                t_max_s: float = 24 * 3600.0,
                priorities: dict[int, float] | None = None):
    """Build a fresh policy instance by name."""
    if name == "packet":
        if k is None:
            raise ConfigError("the packet policy requires a scale ratio k")
        return PacketPolicy(PacketConfig(k=k, t_max_us=int(round(t_max_s * US_PER_S))),
                            priorities=priorities)
    if name == "fcfs":
        return FcfsPolicy()
    if name == "easy-backfill":
        return EasyBackfillPolicy()
    raise ConfigError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")
