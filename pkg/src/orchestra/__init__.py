"""Deterministic discrete-event simulator for container cluster scheduling,
rescheduling and autoscaling policies."""

from .cluster import (
    ClusterState,
    InvariantError,
    Node,
    NodeState,
    Provenance,
    ResourceVector,
    TaskInstance,
    TaskKind,
    TaskSpec,
    TaskState,
)
from .engine import AbortedRun, ConfigError, RunConfig, find_min_static_nodes, run
from .metrics import RunReport
from .workload import WorkloadMode, WorkloadSpec, WorkloadTrace, generate, load_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "AbortedRun",
    "ClusterState",
    "ConfigError",
    "InvariantError",
    "Node",
    "NodeState",
    "Provenance",
    "ResourceVector",
    "RunConfig",
    "RunReport",
    "TaskInstance",
    "TaskKind",
    "TaskSpec",
    "TaskState",
    "WorkloadMode",
    "WorkloadSpec",
    "WorkloadTrace",
    "find_min_static_nodes",
    "generate",
    "load_trace",
    "run",
    "save_trace",
    "__version__",
]
