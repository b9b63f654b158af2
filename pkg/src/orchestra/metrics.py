"""Periodic cluster samples, end-of-run aggregation and CSV emission."""

import csv
import statistics
from dataclasses import dataclass, field

from .cluster import ClusterState, InvariantError


@dataclass(frozen=True, slots=True)
class NodeSample:
    node_id: str
    cpu_req_m: int
    cpu_cap_m: int
    ram_req_mib: int
    ram_cap_mib: int
    pods: int


@dataclass(frozen=True, slots=True)
class Sample:
    """Per-node utilisation snapshot over the schedulable (ready or tainted)
    part of the cluster. Provisioning and deprovisioned nodes are excluded."""

    time_s: float
    nodes: tuple[NodeSample, ...]

    @property
    def node_count(self) -> int:
        return len(self.nodes)


def record_sample(cluster: ClusterState) -> Sample:
    nodes = []
    for node in cluster.schedulable_nodes():
        used = cluster.requested(node.node_id)
        if not used.fits_within(node.capacity):
            raise InvariantError(f"sample caught node {node.node_id} over capacity")
        nodes.append(
            NodeSample(
                node_id=node.node_id,
                cpu_req_m=used.cpu_m,
                cpu_cap_m=node.capacity.cpu_m,
                ram_req_mib=used.mem_mib,
                ram_cap_mib=node.capacity.mem_mib,
                pods=len(node.running_tasks),
            )
        )
    return Sample(cluster.clock_s, tuple(nodes))


@dataclass(slots=True)
class RunReport:
    """Scalar results of one run plus the raw samples and event log."""

    workload: str = ""
    scheduler: str = ""
    rescheduler: str = ""
    autoscaler: str = ""
    seed: int = 0
    total_cost: float = 0.0
    scheduling_duration_s: float = 0.0
    median_pending_time_s: float = 0.0
    avg_ram_req_cap_ratio: float = 0.0
    avg_cpu_req_cap_ratio: float = 0.0
    avg_pods_per_node: float = 0.0
    tasks_arrived: int = 0
    batch_completed: int = 0
    services_running_at_end: int = 0
    nodes_launched: int = 0
    run_end_s: float = 0.0
    sample_count: int = 0
    samples: list[Sample] = field(default_factory=list, repr=False)
    event_log: list[str] = field(default_factory=list, repr=False)
    ledger: object | None = field(default=None, repr=False)


def aggregate(
    samples: list[Sample],
    pending_times: list[float],
    *,
    total_cost: float,
    scheduling_duration_s: float,
    workload: str = "",
    scheduler: str = "",
    rescheduler: str = "",
    autoscaler: str = "",
    seed: int = 0,
    tasks_arrived: int = 0,
    batch_completed: int = 0,
    services_running_at_end: int = 0,
    nodes_launched: int = 0,
    run_end_s: float = 0.0,
    event_log: list[str] | None = None,
) -> RunReport:
    """Reduce raw samples and pending intervals to a RunReport.

    Ratio and pods-per-node averages are plain means over the samples; samples
    with zero schedulable nodes are excluded from them (there is nothing to
    divide by).  The median pending time covers one value per placement, so a
    task that was evicted and re-placed contributes several intervals.
    """
    if not samples:
        raise ValueError("aggregate needs at least one sample")
    usable = [s for s in samples if s.node_count > 0]
    if usable:
        ram = statistics.fmean(
            sum(n.ram_req_mib for n in s.nodes) / sum(n.ram_cap_mib for n in s.nodes)
            for s in usable
        )
        cpu = statistics.fmean(
            sum(n.cpu_req_m for n in s.nodes) / sum(n.cpu_cap_m for n in s.nodes)
            for s in usable
        )
        pods = statistics.fmean(
            sum(n.pods for n in s.nodes) / s.node_count for s in usable
        )
    else:
        ram = cpu = pods = 0.0
    median_pending = statistics.median(pending_times) if pending_times else 0.0
    return RunReport(
        workload=workload,
        scheduler=scheduler,
        rescheduler=rescheduler,
        autoscaler=autoscaler,
        seed=seed,
        total_cost=total_cost,
        scheduling_duration_s=scheduling_duration_s,
        median_pending_time_s=median_pending,
        avg_ram_req_cap_ratio=ram,
        avg_cpu_req_cap_ratio=cpu,
        avg_pods_per_node=pods,
        tasks_arrived=tasks_arrived,
        batch_completed=batch_completed,
        services_running_at_end=services_running_at_end,
        nodes_launched=nodes_launched,
        run_end_s=run_end_s,
        sample_count=len(samples),
        samples=list(samples),
        event_log=list(event_log or []),
    )


REPORT_FIELDS = [
    "workload",
    "scheduler",
    "rescheduler",
    "autoscaler",
    "seed",
    "total_cost",
    "scheduling_duration_s",
    "median_pending_time_s",
    "avg_ram_req_cap_ratio",
    "avg_cpu_req_cap_ratio",
    "avg_pods_per_node",
    "tasks_arrived",
    "batch_completed",
    "services_running_at_end",
    "nodes_launched",
    "run_end_s",
    "sample_count",
]


def format_report(report: RunReport) -> str:
    """Serialize the scalar part of a report as ``key = value`` lines."""
    lines = [f"{name} = {getattr(report, name)}" for name in REPORT_FIELDS]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines (comments and blanks skipped)."""
    out: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


CSV_COLUMNS = [
    "workload",
    "scheduler",
    "rescheduler",
    "autoscaler",
    "seed",
    "cost",
    "duration_s",
    "median_pending_s",
    "ram_ratio",
    "cpu_ratio",
    "pods_per_node",
]


def emit_csv(reports: list[RunReport], path: str) -> None:
    """Write one row per report. ``str(float)`` keeps round trips exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    r.workload,
                    r.scheduler,
                    r.rescheduler,
                    r.autoscaler,
                    r.seed,
                    r.total_cost,
                    r.scheduling_duration_s,
                    r.median_pending_time_s,
                    r.avg_ram_req_cap_ratio,
                    r.avg_cpu_req_cap_ratio,
                    r.avg_pods_per_node,
                ]
            )
