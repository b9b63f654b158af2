"""Eviction-based defragmentation for unschedulable tasks.

When a task cannot be placed, a rescheduler may free room on one node by
evicting moveable services that provably fit elsewhere.  The non-binding
variant only evicts (the regular placement pass re-places everything next
cycle); the binding variant immediately binds the evicted services to their
chosen destinations and the stuck task to the freed node.

Both variants are gated on the task having waited at least ``max_pod_age_s``
since it last became pending.  A younger task yields DEFERRED, which tells
the engine to keep waiting instead of escalating to the autoscaler; this is
what gives running batch work a chance to finish and free room before any
remedy is attempted.
"""

import functools
from dataclasses import dataclass
from enum import Enum

from .cluster import ClusterState, NodeState, ResourceVector, TaskInstance, ZERO


class RescheduleOutcome(Enum):
    RESCHEDULED = "rescheduled"
    DEFERRED = "deferred"
    FAILED = "failed"


@dataclass(slots=True)
class ReschedulePlan:
    """A feasible eviction set freeing enough memory on ``target_node``.

    ``evictions`` maps each evicted task to the destination node that proved
    it can live elsewhere.  The non-binding variant treats destinations as
    feasibility witnesses only.
    """

    target_node: str
    evictions: list[tuple[str, str]]
    freed: ResourceVector


def find_relocation_target(
    cluster: ClusterState,
    task: TaskInstance,
    exclude: set[str],
    committed: dict[str, ResourceVector],
) -> str | None:
    """Best-fit destination for ``task`` among ready nodes outside ``exclude``.

    ``committed`` holds resources already promised to earlier evictions in the
    same plan, so successive placements do not double-book a destination.
    """
    req = task.spec.request
    best = None
    best_key = None
    for node in cluster.nodes.values():
        if node.state is not NodeState.READY or node.node_id in exclude:
            continue
        effective = cluster.available(node.node_id) - committed.get(node.node_id, ZERO)
        if not req.fits_within(effective):
            continue
        key = (effective.mem_mib, effective.cpu_m, node.node_id)
        if best_key is None or key < best_key:
            best, best_key = node.node_id, key
    return best


def build_plan(
    cluster: ClusterState, task: TaskInstance, order: str = "descending"
) -> ReschedulePlan | None:
    """Search for a node whose moveable services can make room for ``task``.

    Candidate nodes are the ready nodes with enough free CPU, visited in
    ``order`` of available memory (descending by default).  On each node the
    moveable services are scanned largest-memory first and greedily marked
    for eviction as long as each one can be placed on some other ready node;
    the scan stops as soon as free-plus-freed memory covers the request.
    """
    req = task.spec.request
    candidates = []
    for node in cluster.nodes.values():
        if node.state is not NodeState.READY:
            continue
        avail = cluster.available(node.node_id)
        if avail.cpu_m >= req.cpu_m:
            candidates.append((node, avail))
    if order == "descending":
        candidates.sort(key=lambda pair: (-pair[1].mem_mib, pair[0].node_id))
    elif order == "ascending":
        candidates.sort(key=lambda pair: (pair[1].mem_mib, pair[0].node_id))
    else:
        raise ValueError(f"unknown candidate order {order!r}")

    for node, avail in candidates:
        moveable = [cluster.tasks[tid] for tid in sorted(node.running_tasks)]
        moveable = [t for t in moveable if t.is_moveable]
        if not moveable:
            continue
        moveable.sort(key=lambda t: (-t.spec.request.mem_mib, t.task_id))
        marked: list[tuple[str, str]] = []
        committed: dict[str, ResourceVector] = {}
        freed = ZERO
        for victim in moveable:
            dest = find_relocation_target(cluster, victim, {node.node_id}, committed)
            if dest is None:
                continue
            marked.append((victim.task_id, dest))
            committed[dest] = committed.get(dest, ZERO) + victim.spec.request
            freed = freed + victim.spec.request
            if avail.mem_mib + freed.mem_mib >= req.mem_mib:
                return ReschedulePlan(node.node_id, marked, freed)
    return None


def _aged(cluster: ClusterState, task: TaskInstance, max_pod_age_s: float) -> bool:
    return cluster.clock_s - task.pending_since_s >= max_pod_age_s


def void_reschedule(cluster, task, max_pod_age_s=60.0, order="descending") -> RescheduleOutcome:
    """No rescheduling: every request fails outright (and may escalate)."""
    return RescheduleOutcome.FAILED


def nonbinding_reschedule(
    cluster: ClusterState,
    task: TaskInstance,
    max_pod_age_s: float = 60.0,
    order: str = "descending",
) -> RescheduleOutcome:
    """Evict a feasible set of services; everything re-enters the pending queue."""
    if not _aged(cluster, task, max_pod_age_s):
        return RescheduleOutcome.DEFERRED
    plan = build_plan(cluster, task, order)
    if plan is None:
        return RescheduleOutcome.FAILED
    cluster.log_action(
        "reschedule",
        task=task.task_id,
        target=plan.target_node,
        evictions=len(plan.evictions),
        freed_mem_mib=plan.freed.mem_mib,
        mode="non_binding",
    )
    for task_id, _ in plan.evictions:
        cluster.evict(task_id)
    return RescheduleOutcome.RESCHEDULED


def binding_reschedule(
    cluster: ClusterState,
    task: TaskInstance,
    max_pod_age_s: float = 60.0,
    order: str = "descending",
) -> RescheduleOutcome:
    """Evict, then immediately bind evictees to their destinations and the
    stuck task to the freed node.  All-or-nothing: a failed plan changes nothing."""
    if not _aged(cluster, task, max_pod_age_s):
        return RescheduleOutcome.DEFERRED
    plan = build_plan(cluster, task, order)
    if plan is None:
        return RescheduleOutcome.FAILED
    cluster.log_action(
        "reschedule",
        task=task.task_id,
        target=plan.target_node,
        evictions=len(plan.evictions),
        freed_mem_mib=plan.freed.mem_mib,
        mode="binding",
    )
    for task_id, _ in plan.evictions:
        cluster.evict(task_id)
    for task_id, dest in plan.evictions:
        cluster.bind(task_id, dest, via="reschedule")
    cluster.bind(task.task_id, plan.target_node, via="reschedule_target")
    return RescheduleOutcome.RESCHEDULED


RESCHEDULERS = {
    "void": void_reschedule,
    "non_binding": nonbinding_reschedule,
    "binding": binding_reschedule,
}


def make_rescheduler(name: str, max_pod_age_s: float = 60.0, order: str = "descending"):
    try:
        fn = RESCHEDULERS[name]
    except KeyError:
        raise ValueError(f"unknown rescheduler {name!r}; choose from {sorted(RESCHEDULERS)}") from None
    return functools.partial(fn, max_pod_age_s=max_pod_age_s, order=order)
