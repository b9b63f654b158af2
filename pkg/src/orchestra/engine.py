"""Deterministic discrete-event simulation engine.

Events at the same timestamp are ordered so that capacity freed by finishing
batch work and newly ready nodes are visible before new placements happen:
batch completion, then node ready, then task arrival, then metric sample,
then the periodic cycle tick.  Within a kind, insertion order decides.

Every state-changing event (arrival, completion, node ready) triggers a
control cycle, as does the periodic tick.  A cycle walks the pending queue in
order and, per task: try to place it; on failure ask the rescheduler; only if
the rescheduler actually failed (not merely deferred a too-young task) report
the task to the autoscaler.  When the cycle ends with nothing pending, the
autoscaler gets one scale-in opportunity.

A run ends normally when no arrivals, batch completions or node-ready events
remain and nothing is pending; services still running are torn down and only
close their billing intervals.  If the pending queue can provably never move
again (no such events in flight), or it stays unchanged for
``guard_horizon_s`` of simulated time with no node booting, the run aborts
with an "unschedulable forever" diagnosis.
"""

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Any

from . import metrics
from .autoscaler import make_autoscaler, AUTOSCALERS
from .cluster import (
    ClusterState,
    InvariantError,
    Node,
    NodeState,
    Provenance,
    ResourceVector,
    TaskInstance,
    TaskKind,
    TaskState,
)
from .rescheduler import make_rescheduler, RescheduleOutcome, RESCHEDULERS
from .scheduler import make_scheduler, SCHEDULERS
from .workload import WorkloadSpec, WorkloadTrace, generate


class ConfigError(ValueError):
    """Invalid run configuration (reported as a usage error, exit code 1)."""


class AbortedRun(RuntimeError):
    """The non-termination guard stopped the run; carries the event log."""

    def __init__(self, message: str, event_log: list[str] | None = None, pending: int = 0):
        super().__init__(message)
        self.event_log = event_log or []
        self.pending = pending


class EventKind(IntEnum):
    # Numeric value doubles as same-timestamp priority.
    BATCH_COMPLETION = 0
    NODE_READY = 1
    TASK_ARRIVAL = 2
    METRIC_SAMPLE = 3
    CYCLE_TICK = 4


_STATE_EVENTS = (EventKind.BATCH_COMPLETION, EventKind.NODE_READY, EventKind.TASK_ARRIVAL)


@dataclass(frozen=True, slots=True)
class Event:
    time_s: float
    kind: EventKind
    seq: int
    payload: Any = None


class EventQueue:
    """Min-heap ordered by (time, kind priority, insertion sequence)."""

    def __init__(self):
        self._heap: list[tuple[float, int, int, Any]] = []
        self._seq = 0

    def push(self, time_s: float, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self._heap, (time_s, kind.value, self._seq, payload))
        self._seq += 1

    def pop(self) -> Event:
        time_s, kind, seq, payload = heapq.heappop(self._heap)
        return Event(time_s, EventKind(kind), seq, payload)

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(slots=True)
class BillingLedger:
    """Per-node billable intervals; an end of None means open until run end."""

    price_per_second: float
    intervals: dict[str, tuple[float, float | None]] = field(default_factory=dict)


def _billable_seconds(length_s: float) -> int:
    # Tiny slack absorbs float summation noise in interval ends; every
    # provisioned node is billed at least one second.
    if length_s < -1e-9:
        raise InvariantError(f"negative billing interval: {length_s}")
    return max(1, math.ceil(length_s - 1e-9))


def compute_cost(ledger: BillingLedger, run_end_s: float) -> float:
    """Total cost: per node, ceil(interval seconds) times the per-second price."""
    total = 0.0
    for node_id in sorted(ledger.intervals):
        start, end = ledger.intervals[node_id]
        closed = end if end is not None else run_end_s
        total += _billable_seconds(closed - start) * ledger.price_per_second
    return total


@dataclass
class RunConfig:
    """Everything one run needs. Exactly one of ``workload``/``trace`` is set.

    When a WorkloadSpec is given the trace is generated with ``seed``
    (overriding the WorkloadSpec's own seed field), so one knob drives
    sweep variation.
    """

    workload: WorkloadSpec | None = None
    trace: WorkloadTrace | None = None
    label: str = ""
    seed: int = 0
    scheduler: str = "best_fit"
    rescheduler: str = "void"
    autoscaler: str = "void"
    static_nodes: int = 1
    worker_cpu_m: int = 1000
    worker_mem_mib: int = 4096
    max_pod_age_s: float = 60.0
    reschedule_order: str = "descending"
    provisioning_interval_s: float = 60.0
    provisioning_delay_s: float = 60.0
    scale_in_batch: int = 1
    price_per_second: float = 0.011
    metric_sample_period_s: float = 20.0
    cycle_tick_period_s: float = 10.0
    guard_horizon_s: float = 7200.0

    def validate(self) -> None:
        if (self.workload is None) == (self.trace is None):
            raise ConfigError("exactly one of workload spec or trace must be provided")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.rescheduler not in RESCHEDULERS:
            raise ConfigError(f"unknown rescheduler {self.rescheduler!r}")
        if self.autoscaler not in AUTOSCALERS:
            raise ConfigError(f"unknown autoscaler {self.autoscaler!r}")
        if self.static_nodes < 0:
            raise ConfigError("static_nodes must be >= 0")
        if self.worker_cpu_m <= 0 or self.worker_mem_mib <= 0:
            raise ConfigError("worker capacity must be positive")
        if self.reschedule_order not in ("descending", "ascending"):
            raise ConfigError(f"unknown reschedule_order {self.reschedule_order!r}")
        if self.max_pod_age_s < 0 or self.provisioning_delay_s < 0:
            raise ConfigError("ages and delays must be >= 0")
        if min(
            self.provisioning_interval_s,
            self.metric_sample_period_s,
            self.cycle_tick_period_s,
            self.guard_horizon_s,
        ) <= 0:
            raise ConfigError("periods and the guard horizon must be positive")
        if self.price_per_second < 0:
            raise ConfigError("price_per_second must be >= 0")
        if self.workload is not None:
            try:
                self.workload.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    def worker_capacity(self) -> ResourceVector:
        return ResourceVector(self.worker_cpu_m, self.worker_mem_mib)


class _Simulation:
    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        if config.trace is not None:
            self.trace = config.trace
        else:
            self.trace = generate(replace(config.workload, seed=config.seed))
        if not self.trace.entries:
            raise ConfigError("trace contains no jobs")
        capacity = config.worker_capacity()
        for time_s, spec in self.trace.entries:
            if not spec.request.fits_within(capacity):
                raise ConfigError(
                    f"template {spec.template_name} requests more than a worker holds"
                )

        self.log: list[str] = []
        self.cluster = ClusterState(on_action=self._log_action)
        for i in range(config.static_nodes):
            self.cluster.add_node(
                Node(
                    node_id=f"static-{i + 1:02d}",
                    capacity=capacity,
                    state=NodeState.READY,
                    provenance=Provenance.STATIC,
                    provision_request_time_s=0.0,
                    ready_time_s=0.0,
                )
            )

        self.scheduler_fn = make_scheduler(config.scheduler)
        self.rescheduler_fn = make_rescheduler(
            config.rescheduler, config.max_pod_age_s, config.reschedule_order
        )
        self.autoscaler = make_autoscaler(
            config.autoscaler,
            capacity,
            provisioning_interval_s=config.provisioning_interval_s,
            provisioning_delay_s=config.provisioning_delay_s,
            scale_in_batch=config.scale_in_batch,
            on_launch=self._on_launch,
        )

        self.queue = EventQueue()
        self.state_events = 0
        for i, (time_s, spec) in enumerate(self.trace.entries):
            self._push(time_s, EventKind.TASK_ARRIVAL, (f"task-{i:04d}", spec))
        self._push(0.0, EventKind.METRIC_SAMPLE)
        self._push(config.cycle_tick_period_s, EventKind.CYCLE_TICK)

        self.samples: list[metrics.Sample] = []
        self.first_arrival_s = self.trace.first_arrival_s()
        self.last_batch_completion_s: float | None = None
        # Last instant something real happened: an arrival, a completion, a
        # node coming up, or the pending queue draining.  Bind/evict churn is
        # deliberately not progress: a rescheduler can rotate services through
        # an over-committed cluster forever without getting anywhere.
        self._last_progress_s = 0.0

    # -- plumbing ---------------------------------------------------------

    def _push(self, time_s: float, kind: EventKind, payload: Any = None) -> None:
        self.queue.push(time_s, kind, payload)
        if kind in _STATE_EVENTS:
            self.state_events += 1

    def _log_line(self, kind: str, /, **fields) -> None:
        detail = " ".join(f"{k}={v}" for k, v in fields.items())
        self.log.append(f"{self.cluster.clock_s:.3f}\t{kind}\t{detail}")

    def _log_action(self, kind: str, /, **fields) -> None:
        self._log_line(kind, **fields)

    def _on_launch(self, node_id: str, ready_at_s: float, trigger_task: str) -> None:
        capacity = self.config.worker_capacity()
        self._push(ready_at_s, EventKind.NODE_READY, node_id)
        self._log_line(
            "launch",
            node=node_id,
            cap_cpu_m=capacity.cpu_m,
            cap_mem_mib=capacity.mem_mib,
            ready_at=f"{ready_at_s:.3f}",
            trigger=trigger_task,
        )

    # -- run loop ---------------------------------------------------------

    def run(self) -> metrics.RunReport:
        while True:
            if self.state_events == 0 and not self.cluster.pending_tasks():
                break
            self._check_guard()
            event = self.queue.pop()
            if event.kind in _STATE_EVENTS:
                self.state_events -= 1
            self.cluster.clock_s = event.time_s
            self._dispatch(event)
        return self._finish()

    def _dispatch(self, event: Event) -> None:
        kind = event.kind
        if kind in _STATE_EVENTS:
            self._last_progress_s = event.time_s
        if kind is EventKind.TASK_ARRIVAL:
            task_id, spec = event.payload
            task = TaskInstance(
                task_id=task_id,
                spec=spec,
                arrival_time_s=event.time_s,
                pending_since_s=event.time_s,
            )
            self.cluster.add_task(task)
            self._log_line(
                "arrival",
                task=task_id,
                template=spec.template_name,
                kind=spec.kind.value,
                cpu_m=spec.request.cpu_m,
                mem_mib=spec.request.mem_mib,
                moveable=int(spec.moveable),
            )
            self._cycle()
        elif kind is EventKind.BATCH_COMPLETION:
            self.cluster.complete(event.payload)
            self.last_batch_completion_s = event.time_s
            self._cycle()
        elif kind is EventKind.NODE_READY:
            node = self.cluster.nodes[event.payload]
            if node.state is not NodeState.PROVISIONING:
                raise InvariantError(f"ready event for {node.state.value} node {node.node_id}")
            node.state = NodeState.READY
            node.ready_time_s = event.time_s
            self.autoscaler.notify_node_ready(node.node_id)
            self._log_line("node_ready", node=node.node_id)
            self._cycle()
        elif kind is EventKind.METRIC_SAMPLE:
            self._sample()
            self._push(event.time_s + self.config.metric_sample_period_s, EventKind.METRIC_SAMPLE)
        elif kind is EventKind.CYCLE_TICK:
            self._cycle()
            self._push(event.time_s + self.config.cycle_tick_period_s, EventKind.CYCLE_TICK)

    def _sample(self) -> None:
        sample = metrics.record_sample(self.cluster)
        self.samples.append(sample)
        detail = (
            ",".join(
                f"{n.node_id}:{n.cpu_req_m}/{n.cpu_cap_m}/{n.ram_req_mib}/{n.ram_cap_mib}/{n.pods}"
                for n in sample.nodes
            )
            or "-"
        )
        self._log_line("sample", nodes=sample.node_count, detail=detail)

    def _cycle(self) -> None:
        for task in self.cluster.pending_tasks():
            if not task.is_pending:
                continue
            decision = self.scheduler_fn(self.cluster, task)
            if decision.placed:
                self._after_bind(task)
                continue
            outcome = self.rescheduler_fn(self.cluster, task)
            if outcome is RescheduleOutcome.RESCHEDULED:
                if task.state is TaskState.RUNNING:
                    self._after_bind(task)
                continue
            if outcome is RescheduleOutcome.DEFERRED:
                continue
            self.autoscaler.scale_out(self.cluster, task)
        if not self.cluster.pending_tasks():
            self.autoscaler.scale_in(self.cluster)

    def _after_bind(self, task: TaskInstance) -> None:
        if task.spec.kind is TaskKind.BATCH:
            self._push(
                self.cluster.clock_s + task.spec.duration_s,
                EventKind.BATCH_COMPLETION,
                task.task_id,
            )

    def _check_guard(self) -> None:
        pending = self.cluster.pending_tasks()
        if not pending:
            self._last_progress_s = self.cluster.clock_s
            return
        if any(n.state is NodeState.PROVISIONING for n in self.cluster.nodes.values()):
            return
        stalled_for = self.cluster.clock_s - self._last_progress_s
        # Once no arrival/completion/ready event is in flight, the only
        # remedies left are time-gated (pod age, launch interval).  Give them
        # one full window plus some ticks; if the queue still has not moved,
        # no future cycle can move it either.
        fast_horizon = (
            max(self.config.max_pod_age_s, self.config.provisioning_interval_s)
            + 2 * self.config.cycle_tick_period_s
        )
        if stalled_for >= self.config.guard_horizon_s or (
            self.state_events == 0 and stalled_for >= fast_horizon
        ):
            msg = (
                f"unschedulable forever: {len(pending)} pending task(s) "
                f"(first: {pending[0].task_id}) with no capacity change possible"
            )
            self._log_line("abort", reason="unschedulable_forever", pending=len(pending))
            raise AbortedRun(msg, event_log=self.log, pending=len(pending))

    # -- wrap-up ----------------------------------------------------------

    def _finish(self) -> metrics.RunReport:
        run_end = self.cluster.clock_s
        self._sample()  # final snapshot so short runs always have in-window data
        self._log_line("end", clock=f"{run_end:.3f}")

        window_end = (
            self.last_batch_completion_s if self.last_batch_completion_s is not None else run_end
        )
        duration = max(0.0, window_end - self.first_arrival_s)

        ledger = BillingLedger(price_per_second=self.config.price_per_second)
        for node in self.cluster.nodes.values():
            if node.provenance is Provenance.STATIC:
                ledger.intervals[node.node_id] = (0.0, duration)
            else:
                ledger.intervals[node.node_id] = (
                    node.provision_request_time_s,
                    node.deprovision_request_time_s,
                )
        cost = compute_cost(ledger, run_end)

        in_window = [
            s for s in self.samples if self.first_arrival_s <= s.time_s <= window_end
        ]
        if not in_window:
            in_window = self.samples[-1:]

        tasks = self.cluster.tasks.values()
        report = metrics.aggregate(
            in_window,
            self.cluster.pending_intervals,
            total_cost=cost,
            scheduling_duration_s=duration,
            workload=self.config.label
            or (self.config.workload.name if self.config.workload else "trace"),
            scheduler=self.config.scheduler,
            rescheduler=self.config.rescheduler,
            autoscaler=self.config.autoscaler,
            seed=self.config.seed,
            tasks_arrived=len(self.cluster.tasks),
            batch_completed=sum(1 for t in tasks if t.state is TaskState.COMPLETED),
            services_running_at_end=sum(
                1
                for t in tasks
                if t.state is TaskState.RUNNING and t.spec.kind is TaskKind.SERVICE
            ),
            nodes_launched=self.autoscaler.launch_count,
            run_end_s=run_end,
            event_log=self.log,
        )
        report.ledger = ledger  # attached for cost introspection
        return report


def run(config: RunConfig) -> metrics.RunReport:
    """Execute one simulation run. Deterministic for identical configs."""
    return _Simulation(config).run()


def find_min_static_nodes(
    trace: WorkloadTrace,
    scheduler: str = "k8s_default",
    base: RunConfig | None = None,
    max_nodes: int = 50,
) -> int:
    """Smallest static cluster (no rescheduling, no autoscaling) that finishes
    the trace with every task placed.  Linear search from one node up."""
    for n in range(1, max_nodes + 1):
        config = replace(
            base if base is not None else RunConfig(),
            workload=None,
            trace=trace,
            scheduler=scheduler,
            rescheduler="void",
            autoscaler="void",
            static_nodes=n,
        )
        try:
            run(config)
        except AbortedRun:
            continue
        return n
    raise ConfigError(f"workload does not fit on any static cluster up to {max_nodes} nodes")
