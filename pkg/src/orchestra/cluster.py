"""Cluster state model: resource vectors, tasks, nodes and the mutations on them.

All resource bookkeeping is integer (CPU millicores, memory MiB) so capacity
sums are exact and independent of iteration order.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable


class InvariantError(RuntimeError):
    """A state transition violated a simulator invariant.

    Raised for contract violations (simulator bugs or misuse of the API),
    never for ordinary policy outcomes such as "no node fits".
    """


@dataclass(frozen=True, slots=True)
class ResourceVector:
    """A CPU/memory pair in millicores and MiB. Components are never negative."""

    cpu_m: int
    mem_mib: int

    def __post_init__(self):
        if self.cpu_m < 0 or self.mem_mib < 0:
            raise InvariantError(f"negative resource vector: {self.cpu_m}m/{self.mem_mib}MiB")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.cpu_m + other.cpu_m, self.mem_mib + other.mem_mib)

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(self.cpu_m - other.cpu_m, self.mem_mib - other.mem_mib)

    def fits_within(self, other: "ResourceVector") -> bool:
        """Componentwise <= comparison."""
        return self.cpu_m <= other.cpu_m and self.mem_mib <= other.mem_mib


ZERO = ResourceVector(0, 0)


class TaskKind(str, Enum):
    BATCH = "batch"
    SERVICE = "service"


class TaskState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    EVICTED_PENDING = "evicted-pending"


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """Immutable description of a job template.

    Batch tasks have a fixed duration and are never moveable; services run
    until the end of the simulation and may opt in to relocation.
    """

    template_name: str
    kind: TaskKind
    moveable: bool
    request: ResourceVector
    duration_s: float | None = None

    def __post_init__(self):
        if self.kind is TaskKind.BATCH:
            if self.moveable:
                raise InvariantError(f"{self.template_name}: batch tasks cannot be moveable")
            if self.duration_s is None or self.duration_s <= 0:
                raise InvariantError(f"{self.template_name}: batch tasks need a positive duration")
        else:
            if self.duration_s is not None:
                raise InvariantError(f"{self.template_name}: services have no duration")


@dataclass(slots=True)
class Placement:
    """One bind interval of a task on a node. ``unbound_at_s`` stays None while active."""

    node_id: str
    bound_at_s: float
    unbound_at_s: float | None = None


@dataclass(slots=True)
class TaskInstance:
    task_id: str
    spec: TaskSpec
    arrival_time_s: float
    state: TaskState = TaskState.PENDING
    placed_on: str | None = None
    pending_since_s: float = 0.0
    placement_history: list[Placement] = field(default_factory=list)

    @property
    def is_moveable(self) -> bool:
        return self.spec.kind is TaskKind.SERVICE and self.spec.moveable

    @property
    def is_pending(self) -> bool:
        return self.state in (TaskState.PENDING, TaskState.EVICTED_PENDING)


class NodeState(str, Enum):
    PROVISIONING = "provisioning"
    READY = "ready"
    TAINTED = "tainted"
    DEPROVISIONED = "deprovisioned"


class Provenance(str, Enum):
    STATIC = "static"
    AUTOSCALED = "autoscaled"


@dataclass(slots=True)
class Node:
    node_id: str
    capacity: ResourceVector
    state: NodeState
    provenance: Provenance
    provision_request_time_s: float
    ready_time_s: float | None = None
    deprovision_request_time_s: float | None = None
    running_tasks: set[str] = field(default_factory=set)


_SCHEDULABLE = (NodeState.READY, NodeState.TAINTED)


@dataclass
class ClusterState:
    """All nodes and tasks plus the simulation clock.

    Mutations go through the methods below, which enforce the state machines
    and capacity safety.  ``on_action`` is an optional hook the engine uses to
    build its event log; it never affects behaviour or equality.
    """

    nodes: dict[str, Node] = field(default_factory=dict)
    tasks: dict[str, TaskInstance] = field(default_factory=dict)
    clock_s: float = 0.0
    pending_intervals: list[float] = field(default_factory=list)
    queue_version: int = 0
    on_action: Callable | None = field(default=None, compare=False, repr=False)

    # -- registration -----------------------------------------------------

    def add_node(self, node: Node) -> None:
        if node.node_id in self.nodes:
            raise InvariantError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node

    def add_task(self, task: TaskInstance) -> None:
        if task.task_id in self.tasks:
            raise InvariantError(f"duplicate task id {task.task_id}")
        self.tasks[task.task_id] = task
        self.queue_version += 1

    # -- queries ----------------------------------------------------------

    def requested(self, node_id: str) -> ResourceVector:
        """Sum of resource requests of tasks currently running on the node."""
        node = self.nodes[node_id]
        total = ZERO
        for tid in node.running_tasks:
            total = total + self.tasks[tid].spec.request
        return total

    def available(self, node_id: str) -> ResourceVector:
        """Capacity minus current requests. Only meaningful for ready/tainted nodes."""
        node = self.nodes[node_id]
        if node.state not in _SCHEDULABLE:
            raise InvariantError(f"available() on {node.state.value} node {node_id}")
        return node.capacity - self.requested(node_id)

    def pending_tasks(self) -> list[TaskInstance]:
        """Pending queue ordered by time entered (ties broken by task id)."""
        out = [t for t in self.tasks.values() if t.is_pending]
        out.sort(key=lambda t: (t.pending_since_s, t.task_id))
        return out

    def schedulable_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.state in _SCHEDULABLE]

    # -- transitions ------------------------------------------------------

    def bind(self, task_id: str, node_id: str, via: str = "schedule") -> None:
        """Place a pending task on a node.

        A tainted node may only be used when no ready node could host the
        task; choosing one anyway is a policy bug and raises.
        """
        task = self.tasks[task_id]
        node = self.nodes[node_id]
        if not task.is_pending:
            raise InvariantError(f"bind of {task_id} in state {task.state.value}")
        if node.state is NodeState.TAINTED:
            for other in self.nodes.values():
                if other.state is NodeState.READY and task.spec.request.fits_within(
                    self.available(other.node_id)
                ):
                    raise InvariantError(
                        f"bind of {task_id} to tainted {node_id} while ready "
                        f"{other.node_id} is feasible"
                    )
        elif node.state is not NodeState.READY:
            raise InvariantError(f"bind of {task_id} to {node.state.value} node {node_id}")
        if not task.spec.request.fits_within(self.available(node_id)):
            raise InvariantError(f"bind of {task_id} to {node_id} would exceed capacity")
        waited = self.clock_s - task.pending_since_s
        task.state = TaskState.RUNNING
        task.placed_on = node_id
        task.placement_history.append(Placement(node_id, self.clock_s))
        node.running_tasks.add(task_id)
        self.pending_intervals.append(waited)
        self.queue_version += 1
        self.log_action("bind", task=task_id, node=node_id, via=via, pending_s=f"{waited:.3f}")

    def evict(self, task_id: str) -> None:
        """Remove a moveable service from its node; it re-enters the pending queue."""
        task = self.tasks[task_id]
        if task.state is not TaskState.RUNNING:
            raise InvariantError(f"evict of {task_id} in state {task.state.value}")
        if not task.is_moveable:
            raise InvariantError(f"evict of non-moveable task {task_id}")
        node_id = task.placed_on
        self.nodes[node_id].running_tasks.discard(task_id)
        task.placement_history[-1].unbound_at_s = self.clock_s
        task.state = TaskState.EVICTED_PENDING
        task.placed_on = None
        task.pending_since_s = self.clock_s
        self.queue_version += 1
        self.log_action("evict", task=task_id, node=node_id)

    def complete(self, task_id: str) -> None:
        task = self.tasks[task_id]
        if task.state is not TaskState.RUNNING or task.spec.kind is not TaskKind.BATCH:
            raise InvariantError(f"complete of {task_id} ({task.state.value}, {task.spec.kind.value})")
        node_id = task.placed_on
        self.nodes[node_id].running_tasks.discard(task_id)
        task.placement_history[-1].unbound_at_s = self.clock_s
        task.state = TaskState.COMPLETED
        task.placed_on = None
        self.log_action("complete", task=task_id, node=node_id)

    def taint(self, node_id: str) -> None:
        node = self.nodes[node_id]
        if node.state is not NodeState.READY:
            raise InvariantError(f"taint of {node.state.value} node {node_id}")
        node.state = NodeState.TAINTED
        self.log_action("taint", node=node_id)

    def deprovision(self, node_id: str) -> None:
        """Shut an autoscaled node down. Only legal once it runs nothing."""
        node = self.nodes[node_id]
        if node.provenance is not Provenance.AUTOSCALED:
            raise InvariantError(f"deprovision of static node {node_id}")
        if node.state not in _SCHEDULABLE:
            raise InvariantError(f"deprovision of {node.state.value} node {node_id}")
        if node.running_tasks:
            raise InvariantError(f"deprovision of non-empty node {node_id}")
        node.state = NodeState.DEPROVISIONED
        node.deprovision_request_time_s = self.clock_s
        self.log_action("deprovision", node=node_id)

    # -- helpers ----------------------------------------------------------

    def log_action(self, kind: str, /, **fields) -> None:
        if self.on_action is not None:
            self.on_action(kind, **fields)

    def check_capacity(self) -> None:
        """Assert the capacity invariant on every schedulable node."""
        for node in self.schedulable_nodes():
            used = self.requested(node.node_id)
            if not used.fits_within(node.capacity):
                raise InvariantError(
                    f"node {node.node_id} over capacity: {used} > {node.capacity}"
                )
