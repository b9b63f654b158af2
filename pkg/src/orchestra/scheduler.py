"""Placement policies.

``best_fit`` packs tasks onto the feasible node with the least free memory;
``k8s_default`` emulates a least-requested spread and is meant for static
baseline clusters.  Both consider tainted nodes only when no ready node
fits (strict necessity).
"""

from dataclasses import dataclass

from .cluster import ClusterState, NodeState, TaskInstance


@dataclass(frozen=True, slots=True)
class SchedulerDecision:
    node_id: str | None

    @property
    def placed(self) -> bool:
        return self.node_id is not None


UNSCHEDULABLE = SchedulerDecision(None)


def suitable_nodes(cluster: ClusterState, task: TaskInstance) -> list[str]:
    """Node ids with enough free CPU and memory, ordered by id.

    Ready nodes are preferred; tainted nodes appear only when no ready node
    is feasible.
    """
    req = task.spec.request
    ready, tainted = [], []
    for node in cluster.schedulable_nodes():
        if req.fits_within(cluster.available(node.node_id)):
            (ready if node.state is NodeState.READY else tainted).append(node.node_id)
    chosen = ready if ready else tainted
    chosen.sort()
    return chosen


def _best_fit_choice(cluster: ClusterState, task: TaskInstance) -> str | None:
    candidates = suitable_nodes(cluster, task)
    if not candidates:
        return None

    def key(node_id: str):
        avail = cluster.available(node_id)
        return (avail.mem_mib, avail.cpu_m, node_id)

    return min(candidates, key=key)


def best_fit_place(cluster: ClusterState, task: TaskInstance) -> SchedulerDecision:
    """Bind the task to the feasible node with the least available memory.

    Ties fall back to least available CPU, then lowest node id.
    """
    choice = _best_fit_choice(cluster, task)
    if choice is None:
        return UNSCHEDULABLE
    cluster.bind(task.task_id, choice, via="schedule")
    return SchedulerDecision(choice)


def _k8s_default_choice(cluster: ClusterState, task: TaskInstance) -> str | None:
    candidates = suitable_nodes(cluster, task)
    if not candidates:
        return None
    req = task.spec.request
    best, best_score = None, -1.0
    for node_id in candidates:  # already sorted, so first strict max wins ties by id
        node = cluster.nodes[node_id]
        after = cluster.available(node_id) - req
        score = (after.cpu_m / node.capacity.cpu_m + after.mem_mib / node.capacity.mem_mib) / 2
        if score > best_score:
            best, best_score = node_id, score
    return best


def k8s_default_place(cluster: ClusterState, task: TaskInstance) -> SchedulerDecision:
    """Bind the task to the node with the highest mean free-capacity fraction
    after placement (spreads load instead of packing)."""
    choice = _k8s_default_choice(cluster, task)
    if choice is None:
        return UNSCHEDULABLE
    cluster.bind(task.task_id, choice, via="schedule")
    return SchedulerDecision(choice)


SCHEDULERS = {
    "best_fit": best_fit_place,
    "k8s_default": k8s_default_place,
}


def make_scheduler(name: str):
    try:
        return SCHEDULERS[name]
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}; choose from {sorted(SCHEDULERS)}") from None
