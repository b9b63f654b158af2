"""Workload templates, seeded trace generation and the trace file format.

A workload trace is an ordered list of ``(arrival_time_s, TaskSpec)`` pairs.
Traces are either generated from a :class:`WorkloadSpec` or loaded from a
tab-separated text file (see :data:`TRACE_HEADER`).

Generation rules
----------------
* Inter-arrival gaps are exponential, sampled by inverse CDF as
  ``-mean * ln(u)`` with ``u`` uniform in ``(0, 1]`` drawn from a seeded
  Mersenne Twister (``random.Random``), so traces are reproducible on any
  platform.
* Each job draws its template uniformly from the six catalog entries.
* ``mixed`` mode alternates bursty and slow periods.  The first period's mode
  comes from one random bit; every period holds at least ``min_period_jobs``
  jobs except a final shorter remainder.
* Per job the draw order is: gap, template, then (for services) one uniform
  draw against ``moveable_fraction``.
* Arrival times are quantized to milliseconds when recorded, which makes
  save/load a lossless round trip.
"""

import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

from .cluster import ResourceVector, TaskKind, TaskSpec

TRACE_HEADER = "#orchestra-trace v1"


class TraceFormatError(ValueError):
    """Raised for malformed trace files; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def gib_to_mib(gib: float) -> int:
    """Convert GiB to MiB, rounded to the nearest integer."""
    return round(gib * 1024)


def default_catalog() -> dict[str, TaskSpec]:
    """The six job templates used throughout: three batch sizes, three service sizes.

    Batch durations are 5/10/15 minutes of simulated sleep; services run until
    the end of the simulation and are moveable by default.
    """
    specs = [
        TaskSpec("batch_small", TaskKind.BATCH, False, ResourceVector(100, gib_to_mib(0.3)), 300.0),
        TaskSpec("batch_med", TaskKind.BATCH, False, ResourceVector(200, gib_to_mib(0.6)), 600.0),
        TaskSpec("batch_large", TaskKind.BATCH, False, ResourceVector(300, gib_to_mib(0.9)), 900.0),
        TaskSpec("service_small", TaskKind.SERVICE, True, ResourceVector(100, gib_to_mib(1.0))),
        TaskSpec("service_med", TaskKind.SERVICE, True, ResourceVector(200, gib_to_mib(1.4))),
        TaskSpec("service_large", TaskKind.SERVICE, True, ResourceVector(300, gib_to_mib(2.359))),
    ]
    return {s.template_name: s for s in specs}


def task_spec_from_labels(
    template_name: str,
    labels: Mapping[str, str],
    request: ResourceVector,
    duration_s: float | None = None,
) -> TaskSpec:
    """Build a TaskSpec from the deployment label convention.

    ``labels['type'] == 'batch'`` marks batch jobs (which then need a
    duration); anything else is a service, moveable when
    ``labels['rescheduling'] == 'moveable'``.
    """
    if labels.get("type") == "batch":
        return TaskSpec(template_name, TaskKind.BATCH, False, request, duration_s)
    moveable = labels.get("rescheduling") == "moveable"
    return TaskSpec(template_name, TaskKind.SERVICE, moveable, request)


class WorkloadMode(str, Enum):
    BURSTY = "bursty"
    SLOW = "slow"
    MIXED = "mixed"


@dataclass(frozen=True, slots=True)
class WorkloadSpec:
    """Parameters for trace generation.

    The bursty mean defaults to 10 s between jobs and the slow mean to 60 s.
    """

    name: str = ""
    mode: WorkloadMode = WorkloadMode.SLOW
    total_jobs: int = 50
    mean_interarrival_bursty_s: float = 10.0
    mean_interarrival_slow_s: float = 60.0
    min_period_jobs: int = 10
    seed: int = 0
    moveable_fraction: float = 1.0

    def validate(self) -> None:
        if self.total_jobs < 1:
            raise ValueError("total_jobs must be at least 1")
        if self.mean_interarrival_bursty_s <= 0 or self.mean_interarrival_slow_s <= 0:
            raise ValueError("inter-arrival means must be positive")
        if self.min_period_jobs < 1:
            raise ValueError("min_period_jobs must be at least 1")
        if not 0.0 <= self.moveable_fraction <= 1.0:
            raise ValueError("moveable_fraction must lie in [0, 1]")


@dataclass(slots=True)
class WorkloadTrace:
    """Arrival-ordered job list."""

    entries: list[tuple[float, TaskSpec]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for _, spec in self.entries:
            out[spec.template_name] = out.get(spec.template_name, 0) + 1
        return out

    def first_arrival_s(self) -> float:
        return self.entries[0][0] if self.entries else 0.0


def _period_plan(rng: random.Random, total_jobs: int, min_period_jobs: int) -> list[tuple[WorkloadMode, int]]:
    """Split ``total_jobs`` into alternating bursty/slow periods.

    Period lengths are uniform in [min_period_jobs, remaining]; once fewer
    than ``min_period_jobs`` jobs remain they form one final short period.
    """
    mode = WorkloadMode.BURSTY if rng.getrandbits(1) else WorkloadMode.SLOW
    plan: list[tuple[WorkloadMode, int]] = []
    remaining = total_jobs
    while remaining > 0:
        if remaining <= min_period_jobs:
            n = remaining
        else:
            n = rng.randint(min_period_jobs, remaining)
        plan.append((mode, n))
        remaining -= n
        mode = WorkloadMode.SLOW if mode is WorkloadMode.BURSTY else WorkloadMode.BURSTY
    return plan


def generate(spec: WorkloadSpec, catalog: Mapping[str, TaskSpec] | None = None) -> WorkloadTrace:
    """Generate a trace from ``spec``. Deterministic for a given seed."""
    spec.validate()
    templates = list((catalog or default_catalog()).values())
    rng = random.Random(spec.seed)

    if spec.mode is WorkloadMode.MIXED:
        plan = _period_plan(rng, spec.total_jobs, spec.min_period_jobs)
        modes = [m for m, n in plan for _ in range(n)]
    else:
        modes = [spec.mode] * spec.total_jobs

    entries: list[tuple[float, TaskSpec]] = []
    t = 0.0
    for mode in modes:
        mean = (
            spec.mean_interarrival_bursty_s
            if mode is WorkloadMode.BURSTY
            else spec.mean_interarrival_slow_s
        )
        u = 1.0 - rng.random()  # uniform in (0, 1]: keeps ln() finite
        t += -mean * math.log(u)
        tmpl = templates[rng.randrange(len(templates))]
        if tmpl.kind is TaskKind.SERVICE:
            moveable = rng.random() < spec.moveable_fraction
            if moveable != tmpl.moveable:
                tmpl = replace(tmpl, moveable=moveable)
        entries.append((round(t, 3), tmpl))
    return WorkloadTrace(entries)


def save_trace(trace: WorkloadTrace, path: str) -> None:
    """Write a trace file: header line, then ``arrival<TAB>template`` records.

    Only the template name is recorded, so specs must come from the catalog
    used at load time for the round trip to be faithful.
    """
    lines = [TRACE_HEADER]
    for time_s, spec in trace.entries:
        lines.append(f"{time_s:.3f}\t{spec.template_name}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_trace(path: str, catalog: Mapping[str, TaskSpec] | None = None) -> WorkloadTrace:
    """Parse a trace file, validating header, fields, templates and ordering."""
    catalog = catalog or default_catalog()
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0] != TRACE_HEADER:
        raise TraceFormatError(f"missing header {TRACE_HEADER!r}", line=1)
    entries: list[tuple[float, TaskSpec]] = []
    prev = 0.0
    for i, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise TraceFormatError(f"expected 2 tab-separated fields, got {len(parts)}", line=i)
        try:
            time_s = float(parts[0])
        except ValueError:
            raise TraceFormatError(f"bad arrival time {parts[0]!r}", line=i) from None
        if time_s < prev:
            raise TraceFormatError(f"arrival times decrease ({time_s} after {prev})", line=i)
        if parts[1] not in catalog:
            raise TraceFormatError(f"unknown template {parts[1]!r}", line=i)
        entries.append((time_s, catalog[parts[1]]))
        prev = time_s
    if not entries:
        raise TraceFormatError("trace contains no records")
    return WorkloadTrace(entries)
