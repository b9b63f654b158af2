"""Autoscaling policies: scale-out on unschedulable tasks, scale-in of idle capacity.

The simple policy launches at most one node per ``provisioning_interval_s``.
The binding policy instead tracks which pending tasks are already covered by
a node that is still booting and only launches when a task fits no booting
node's remaining capacity; this deduplicates launches without a rate limit.

Scale-in is shared by both active policies and runs only after a cycle that
left nothing pending.  Per invocation it acts on at most ``scale_in_batch``
nodes per category: (1) deprovision empty autoscaled nodes, (2) drain and
deprovision autoscaled nodes running only relocatable services, (3) drain the
services off mixed service+batch autoscaled nodes and taint them so they can
empty out as their batch work finishes.
"""

from dataclasses import dataclass, field
from typing import Callable

from .cluster import (
    ClusterState,
    Node,
    NodeState,
    Provenance,
    ResourceVector,
    TaskInstance,
    ZERO,
)
from .rescheduler import find_relocation_target

LAUNCHED = "launched"
ASSIGNED = "assigned"
IGNORED = "ignored"


@dataclass(slots=True)
class ProvisioningNode:
    """A node that has been requested but is not ready yet."""

    node_id: str
    requested_at_s: float
    ready_at_s: float
    assigned: list[tuple[str, ResourceVector]] = field(default_factory=list)

    def residual(self, capacity: ResourceVector) -> ResourceVector:
        total = ZERO
        for _, req in self.assigned:
            total = total + req
        return capacity - total


class Autoscaler:
    """Base policy: ignores scale-out and scale-in requests."""

    policy_name = "void"

    def __init__(
        self,
        capacity: ResourceVector,
        provisioning_interval_s: float = 60.0,
        provisioning_delay_s: float = 60.0,
        scale_in_batch: int = 1,
        on_launch: Callable[[str, float, str], None] | None = None,
    ):
        self.capacity = capacity
        self.provisioning_interval_s = provisioning_interval_s
        self.provisioning_delay_s = provisioning_delay_s
        self.scale_in_batch = scale_in_batch
        self.on_launch = on_launch
        self.last_launch_time_s: float | None = None
        self.provisioning_nodes: list[ProvisioningNode] = []
        self.launch_count = 0

    def scale_out(self, cluster: ClusterState, task: TaskInstance) -> str:
        return IGNORED

    def notify_node_ready(self, node_id: str) -> None:
        self.provisioning_nodes = [p for p in self.provisioning_nodes if p.node_id != node_id]

    def scale_in(self, cluster: ClusterState) -> None:
        return

    # -- shared machinery -------------------------------------------------

    def _launch(self, cluster: ClusterState, trigger: TaskInstance) -> ProvisioningNode:
        self.launch_count += 1
        node_id = f"auto-{self.launch_count:03d}"
        ready_at = cluster.clock_s + self.provisioning_delay_s
        cluster.add_node(
            Node(
                node_id=node_id,
                capacity=self.capacity,
                state=NodeState.PROVISIONING,
                provenance=Provenance.AUTOSCALED,
                provision_request_time_s=cluster.clock_s,
            )
        )
        entry = ProvisioningNode(node_id, cluster.clock_s, ready_at)
        self.provisioning_nodes.append(entry)
        self.last_launch_time_s = cluster.clock_s
        if self.on_launch is not None:
            self.on_launch(node_id, ready_at, trigger.task_id)
        return entry


class _ActiveAutoscaler(Autoscaler):
    """Adds the shared scale-in behaviour."""

    def _budget(self) -> float:
        return float("inf") if self.scale_in_batch <= 0 else float(self.scale_in_batch)

    def _relocation_witnesses(
        self, cluster: ClusterState, node: Node, victims: list[TaskInstance]
    ) -> list[tuple[TaskInstance, str]] | None:
        """Prove every victim can live on another ready node, or return None."""
        committed: dict[str, ResourceVector] = {}
        out = []
        ordered = sorted(victims, key=lambda t: (-t.spec.request.mem_mib, t.task_id))
        for victim in ordered:
            dest = find_relocation_target(cluster, victim, {node.node_id}, committed)
            if dest is None:
                return None
            committed[dest] = committed.get(dest, ZERO) + victim.spec.request
            out.append((victim, dest))
        return out

    def scale_in(self, cluster: ClusterState) -> None:
        budget = self._budget()

        def request_key(node: Node):
            used = cluster.requested(node.node_id)
            return (used.mem_mib, used.cpu_m, node.node_id)

        # Empty autoscaled nodes (ready or tainted) can go immediately.
        empties = [
            n
            for n in cluster.nodes.values()
            if n.provenance is Provenance.AUTOSCALED
            and n.state in (NodeState.READY, NodeState.TAINTED)
            and not n.running_tasks
        ]
        empties.sort(key=lambda n: n.node_id)
        for node in empties[: int(min(budget, len(empties)))]:
            cluster.deprovision(node.node_id)

        candidates = [
            n
            for n in cluster.nodes.values()
            if n.provenance is Provenance.AUTOSCALED
            and n.state is NodeState.READY
            and n.running_tasks
        ]
        candidates.sort(key=request_key)  # emptiest first
        drained = tainted = 0
        for node in candidates:
            tasks = [cluster.tasks[tid] for tid in sorted(node.running_tasks)]
            moveable = [t for t in tasks if t.is_moveable]
            pinned = [t for t in tasks if not t.is_moveable and t.spec.kind.value == "service"]
            batch = [t for t in tasks if t.spec.kind.value == "batch"]
            if pinned or not moveable:
                continue  # a non-moveable service pins the node forever; all-batch drains on its own
            if not batch:
                if drained >= budget:
                    continue
                witnesses = self._relocation_witnesses(cluster, node, moveable)
                if witnesses is None:
                    continue
                for victim, dest in witnesses:
                    cluster.log_action(
                        "scale_in_evict", task=victim.task_id, node=node.node_id, witness=dest
                    )
                    cluster.evict(victim.task_id)
                cluster.deprovision(node.node_id)
                drained += 1
            else:
                if tainted >= budget:
                    continue
                witnesses = self._relocation_witnesses(cluster, node, moveable)
                if witnesses is None:
                    continue
                for victim, dest in witnesses:
                    cluster.log_action(
                        "scale_in_evict", task=victim.task_id, node=node.node_id, witness=dest
                    )
                    cluster.evict(victim.task_id)
                cluster.taint(node.node_id)
                tainted += 1


class SimpleAutoscaler(_ActiveAutoscaler):
    """Launch one node per unschedulable report, rate-limited to one launch
    per provisioning interval."""

    policy_name = "simple"

    def scale_out(self, cluster: ClusterState, task: TaskInstance) -> str:
        now = cluster.clock_s
        if (
            self.last_launch_time_s is None
            or now - self.last_launch_time_s >= self.provisioning_interval_s
        ):
            self._launch(cluster, task)
            return LAUNCHED
        return IGNORED


class BindingAutoscaler(_ActiveAutoscaler):
    """Assign each stuck task to a booting node; launch only when none fits."""

    policy_name = "binding"

    def _prune_assignments(self, cluster: ClusterState) -> None:
        # A task placed since it was assigned no longer needs its reservation;
        # keeping it would overstate demand and trigger needless launches.
        for entry in self.provisioning_nodes:
            entry.assigned = [
                (tid, req)
                for tid, req in entry.assigned
                if tid in cluster.tasks and cluster.tasks[tid].is_pending
            ]

    def scale_out(self, cluster: ClusterState, task: TaskInstance) -> str:
        self._prune_assignments(cluster)
        for entry in self.provisioning_nodes:
            if any(tid == task.task_id for tid, _ in entry.assigned):
                return IGNORED
        for entry in self.provisioning_nodes:
            if task.spec.request.fits_within(entry.residual(self.capacity)):
                entry.assigned.append((task.task_id, task.spec.request))
                cluster.log_action("assign", task=task.task_id, node=entry.node_id)
                return ASSIGNED
        entry = self._launch(cluster, task)
        entry.assigned.append((task.task_id, task.spec.request))
        cluster.log_action("assign", task=task.task_id, node=entry.node_id)
        return LAUNCHED


AUTOSCALERS = {
    "void": Autoscaler,
    "simple": SimpleAutoscaler,
    "binding": BindingAutoscaler,
}


def make_autoscaler(name: str, capacity: ResourceVector, **kwargs) -> Autoscaler:
    try:
        cls = AUTOSCALERS[name]
    except KeyError:
        raise ValueError(f"unknown autoscaler {name!r}; choose from {sorted(AUTOSCALERS)}") from None
    return cls(capacity, **kwargs)
