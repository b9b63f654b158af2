"""Placement policy tests: feasibility filter, best-fit choice, spread baseline."""

import random

import pytest

from orchestra.cluster import (
    ClusterState,
    Node,
    NodeState,
    Provenance,
    ResourceVector,
    TaskInstance,
    TaskKind,
    TaskSpec,
    TaskState,
)
from orchestra.scheduler import (
    UNSCHEDULABLE,
    _best_fit_choice,
    _k8s_default_choice,
    best_fit_place,
    k8s_default_place,
    make_scheduler,
    suitable_nodes,
)

WORKER = ResourceVector(1000, 4096)


def add_node(cluster, node_id, used_cpu=0, used_mem=0, state=NodeState.READY, cap=WORKER):
    """Add a node whose available capacity is cap minus the given load."""
    cluster.add_node(
        Node(
            node_id=node_id,
            capacity=cap,
            state=NodeState.READY,
            provenance=Provenance.STATIC,
            provision_request_time_s=0.0,
            ready_time_s=0.0,
        )
    )
    if used_cpu or used_mem:
        hog = TaskSpec(f"hog-{node_id}", TaskKind.SERVICE, False, ResourceVector(used_cpu, used_mem))
        tid = f"hog-{node_id}"
        cluster.add_task(TaskInstance(task_id=tid, spec=hog, arrival_time_s=0.0))
        cluster.bind(tid, node_id)
    if state is NodeState.TAINTED:
        cluster.taint(node_id)
    return cluster.nodes[node_id]


def pending(cluster, cpu, mem, task_id="t"):
    spec = TaskSpec("probe", TaskKind.SERVICE, True, ResourceVector(cpu, mem))
    task = TaskInstance(task_id=task_id, spec=spec, arrival_time_s=0.0)
    cluster.add_task(task)
    return task


def three_node_cluster():
    # Available capacity: A = (500m, 2048), B = (200m, 1024), C = (50m, 512).
    cluster = ClusterState()
    add_node(cluster, "A", used_cpu=500, used_mem=2048)
    add_node(cluster, "B", used_cpu=800, used_mem=3072)
    add_node(cluster, "C", used_cpu=950, used_mem=3584)
    return cluster


# -- feasibility filter ---------------------------------------------------


def test_filter_checks_both_dimensions():
    cluster = three_node_cluster()
    task = pending(cluster, 100, 922)
    assert suitable_nodes(cluster, task) == ["A", "B"]  # C fails the CPU filter


def test_filter_empty_cluster():
    cluster = ClusterState()
    task = pending(cluster, 100, 100)
    assert suitable_nodes(cluster, task) == []


def test_filter_uses_tainted_only_when_no_ready_fits():
    cluster = ClusterState()
    add_node(cluster, "drain", state=NodeState.TAINTED)
    add_node(cluster, "full", used_cpu=1000, used_mem=4096)
    task = pending(cluster, 100, 100)
    assert suitable_nodes(cluster, task) == ["drain"]


def test_filter_hides_tainted_while_ready_fits():
    cluster = ClusterState()
    add_node(cluster, "drain", state=NodeState.TAINTED)
    add_node(cluster, "open")
    task = pending(cluster, 100, 100)
    assert suitable_nodes(cluster, task) == ["open"]


# -- best fit -------------------------------------------------------------


def test_best_fit_picks_least_available_memory():
    cluster = three_node_cluster()
    task = pending(cluster, 100, 922)
    decision = best_fit_place(cluster, task)
    assert decision.node_id == "B"
    assert cluster.tasks["t"].placed_on == "B"


def test_best_fit_skips_memory_infeasible_nodes():
    cluster = three_node_cluster()
    task = pending(cluster, 100, 1536)
    assert best_fit_place(cluster, task).node_id == "A"


def test_best_fit_unschedulable_when_cpu_short():
    cluster = three_node_cluster()
    task = pending(cluster, 600, 100)
    decision = best_fit_place(cluster, task)
    assert decision is UNSCHEDULABLE
    assert cluster.tasks["t"].state is TaskState.PENDING


def test_best_fit_tie_breaks_on_cpu_then_id():
    cluster = ClusterState()
    add_node(cluster, "slack", used_cpu=100, used_mem=2048)
    add_node(cluster, "tight", used_cpu=600, used_mem=2048)
    task = pending(cluster, 100, 100)
    assert _best_fit_choice(cluster, task) == "tight"

    cluster2 = ClusterState()
    add_node(cluster2, "b", used_cpu=600, used_mem=2048)
    add_node(cluster2, "a", used_cpu=600, used_mem=2048)
    task2 = pending(cluster2, 100, 100)
    assert _best_fit_choice(cluster2, task2) == "a"


def test_best_fit_prefers_ready_even_when_tainted_is_tighter():
    cluster = ClusterState()
    add_node(cluster, "drain", used_cpu=800, used_mem=3500, state=NodeState.TAINTED)
    add_node(cluster, "open", used_cpu=100, used_mem=100)
    task = pending(cluster, 100, 100)
    assert _best_fit_choice(cluster, task) == "open"


def test_choice_is_pure():
    cluster = three_node_cluster()
    task = pending(cluster, 100, 922)
    assert _best_fit_choice(cluster, task) == _best_fit_choice(cluster, task)


def test_best_fit_matches_brute_force_on_random_states():
    rng = random.Random(2024)
    checked = 0
    for _ in range(300):
        cluster = ClusterState()
        for i in range(rng.randint(1, 6)):
            add_node(
                cluster,
                f"n{i}",
                used_cpu=rng.randrange(0, 1001, 50),
                used_mem=rng.randrange(0, 4097, 128),
                state=NodeState.TAINTED if rng.random() < 0.2 else NodeState.READY,
            )
        task = pending(cluster, rng.randrange(50, 1001, 50), rng.randrange(64, 4097, 64))
        choice = _best_fit_choice(cluster, task)

        req = task.spec.request
        feasible = {
            state: [
                n
                for n in cluster.nodes.values()
                if n.state is state and req.fits_within(cluster.available(n.node_id))
            ]
            for state in (NodeState.READY, NodeState.TAINTED)
        }
        pool = feasible[NodeState.READY] or feasible[NodeState.TAINTED]
        if not pool:
            assert choice is None
            continue
        best = min(
            pool,
            key=lambda n: (
                cluster.available(n.node_id).mem_mib,
                cluster.available(n.node_id).cpu_m,
                n.node_id,
            ),
        )
        assert choice == best.node_id
        checked += 1
    assert checked > 100


# -- spread baseline ------------------------------------------------------


def test_k8s_default_spreads_identical_tasks():
    cluster = ClusterState()
    add_node(cluster, "a")
    add_node(cluster, "b")
    t1 = pending(cluster, 200, 1434, task_id="t1")
    assert k8s_default_place(cluster, t1).node_id == "a"
    t2 = pending(cluster, 200, 1434, task_id="t2")
    assert k8s_default_place(cluster, t2).node_id == "b"


def test_k8s_default_prefers_least_utilized():
    cluster = ClusterState()
    add_node(cluster, "hot", used_cpu=800, used_mem=3277)  # ~80% memory
    add_node(cluster, "cool", used_cpu=200, used_mem=819)  # ~20% memory
    task = pending(cluster, 100, 307)
    assert _k8s_default_choice(cluster, task) == "cool"


def test_k8s_default_single_feasible_node():
    cluster = ClusterState()
    add_node(cluster, "only", used_cpu=500, used_mem=2048)
    add_node(cluster, "full", used_cpu=1000, used_mem=4096)
    task = pending(cluster, 100, 100)
    assert _k8s_default_choice(cluster, task) == "only"


def test_k8s_default_unschedulable():
    cluster = ClusterState()
    add_node(cluster, "full", used_cpu=1000, used_mem=4096)
    task = pending(cluster, 100, 100)
    assert k8s_default_place(cluster, task) is UNSCHEDULABLE


# -- registry -------------------------------------------------------------


def test_make_scheduler_names():
    assert make_scheduler("best_fit") is best_fit_place
    assert make_scheduler("k8s_default") is k8s_default_place
    with pytest.raises(ValueError):
        make_scheduler("first_fit")
