"""Trace generation, statistics and file-format tests."""

import math
import random
import statistics

import pytest

from orchestra.cluster import ResourceVector, TaskKind
from orchestra.workload import (
    TRACE_HEADER,
    TraceFormatError,
    WorkloadMode,
    WorkloadSpec,
    WorkloadTrace,
    _period_plan,
    default_catalog,
    generate,
    gib_to_mib,
    load_trace,
    save_trace,
    task_spec_from_labels,
)


# -- catalog --------------------------------------------------------------


def test_gib_to_mib_rounds_to_nearest():
    assert gib_to_mib(0.3) == 307
    assert gib_to_mib(0.6) == 614
    assert gib_to_mib(0.9) == 922
    assert gib_to_mib(1.0) == 1024
    assert gib_to_mib(1.4) == 1434
    assert gib_to_mib(2.359) == 2416
    assert gib_to_mib(4.0) == 4096


def test_catalog_has_six_templates():
    catalog = default_catalog()
    assert sorted(catalog) == [
        "batch_large",
        "batch_med",
        "batch_small",
        "service_large",
        "service_med",
        "service_small",
    ]
    durations = {name: s.duration_s for name, s in catalog.items() if s.kind is TaskKind.BATCH}
    assert durations == {"batch_small": 300.0, "batch_med": 600.0, "batch_large": 900.0}
    for name, spec in catalog.items():
        if spec.kind is TaskKind.SERVICE:
            assert spec.moveable and spec.duration_s is None


def test_catalog_requests():
    catalog = default_catalog()
    assert catalog["batch_small"].request == ResourceVector(100, 307)
    assert catalog["batch_med"].request == ResourceVector(200, 614)
    assert catalog["batch_large"].request == ResourceVector(300, 922)
    assert catalog["service_small"].request == ResourceVector(100, 1024)
    assert catalog["service_med"].request == ResourceVector(200, 1434)
    assert catalog["service_large"].request == ResourceVector(300, 2416)


def test_task_spec_from_labels():
    req = ResourceVector(100, 307)
    job = task_spec_from_labels("j", {"type": "batch"}, req, duration_s=300.0)
    assert job.kind is TaskKind.BATCH and job.duration_s == 300.0
    svc = task_spec_from_labels("s", {"rescheduling": "moveable"}, req)
    assert svc.kind is TaskKind.SERVICE and svc.moveable
    pinned = task_spec_from_labels("p", {}, req)
    assert pinned.kind is TaskKind.SERVICE and not pinned.moveable


# -- spec validation ------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"total_jobs": 0},
        {"mean_interarrival_bursty_s": 0.0},
        {"mean_interarrival_slow_s": -1.0},
        {"min_period_jobs": 0},
        {"moveable_fraction": 1.5},
    ],
)
def test_spec_validation_rejects(kwargs):
    with pytest.raises(ValueError):
        WorkloadSpec(**kwargs).validate()


# -- generation -----------------------------------------------------------


def test_generation_is_deterministic():
    spec = WorkloadSpec(mode=WorkloadMode.MIXED, total_jobs=80, seed=7)
    assert generate(spec).entries == generate(spec).entries


def test_different_seeds_differ():
    a = generate(WorkloadSpec(total_jobs=50, seed=1))
    b = generate(WorkloadSpec(total_jobs=50, seed=2))
    assert a.entries != b.entries


def test_arrivals_non_decreasing_and_millisecond_quantized():
    trace = generate(WorkloadSpec(mode=WorkloadMode.BURSTY, total_jobs=200, seed=3))
    times = [t for t, _ in trace.entries]
    assert times == sorted(times)
    assert all(t == round(t, 3) for t in times)


def test_moveable_fraction_consumes_one_draw_per_service():
    # Turning the fraction from 1 to 0 must not shift gaps or templates:
    # only the moveable flag of services may change.
    base = WorkloadSpec(mode=WorkloadMode.SLOW, total_jobs=120, seed=11)
    all_moveable = generate(base)
    none_moveable = generate(
        WorkloadSpec(mode=WorkloadMode.SLOW, total_jobs=120, seed=11, moveable_fraction=0.0)
    )
    assert [t for t, _ in all_moveable.entries] == [t for t, _ in none_moveable.entries]
    for (_, a), (_, b) in zip(all_moveable.entries, none_moveable.entries):
        assert a.template_name == b.template_name
        if a.kind is TaskKind.SERVICE:
            assert a.moveable and not b.moveable


def test_slow_interarrival_mean_and_template_frequencies():
    jobs = 10_000
    trace = generate(WorkloadSpec(mode=WorkloadMode.SLOW, total_jobs=jobs, seed=42))
    times = [t for t, _ in trace.entries]
    gaps = [times[0]] + [b - a for a, b in zip(times, times[1:])]
    mean = statistics.fmean(gaps)
    assert abs(mean - 60.0) / 60.0 < 0.05
    counts = trace.counts()
    assert sum(counts.values()) == jobs
    for name in default_catalog():
        assert abs(counts.get(name, 0) / jobs - 1 / 6) < 0.03


def test_bursty_mean_is_six_times_faster():
    jobs = 10_000
    trace = generate(WorkloadSpec(mode=WorkloadMode.BURSTY, total_jobs=jobs, seed=42))
    last = trace.entries[-1][0]
    assert abs(last / jobs - 10.0) / 10.0 < 0.05


def test_period_plan_alternates_and_respects_minimum():
    for seed in range(30):
        rng = random.Random(seed)
        plan = _period_plan(rng, total_jobs=100, min_period_jobs=10)
        assert sum(n for _, n in plan) == 100
        for (mode_a, _), (mode_b, _) in zip(plan, plan[1:]):
            assert mode_a != mode_b
        assert all(n >= 10 for _, n in plan[:-1])
        assert plan[-1][1] >= 1


def test_mixed_mode_draws_from_both_means():
    # With two 60 s-mean and 10 s-mean regimes the long-run gap average must
    # sit strictly between the two pure modes.
    trace = generate(WorkloadSpec(mode=WorkloadMode.MIXED, total_jobs=5_000, seed=9))
    mean_gap = trace.entries[-1][0] / len(trace)
    assert 15.0 < mean_gap < 55.0


def test_counts_and_first_arrival():
    trace = generate(WorkloadSpec(total_jobs=50, seed=4))
    assert sum(trace.counts().values()) == len(trace) == 50
    assert trace.first_arrival_s() == trace.entries[0][0]
    assert WorkloadTrace().first_arrival_s() == 0.0


# -- trace files ----------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    trace = generate(WorkloadSpec(mode=WorkloadMode.MIXED, total_jobs=60, seed=5))
    path = tmp_path / "t.trace"
    save_trace(trace, str(path))
    loaded = load_trace(str(path))
    assert [(t, s.template_name) for t, s in loaded.entries] == [
        (t, s.template_name) for t, s in trace.entries
    ]
    # Re-saving the loaded trace is byte-identical.
    path2 = tmp_path / "t2.trace"
    save_trace(loaded, str(path2))
    assert path.read_text() == path2.read_text()


def test_load_rejects_missing_header(tmp_path):
    path = tmp_path / "bad.trace"
    path.write_text("0.000\tbatch_small\n")
    with pytest.raises(TraceFormatError) as err:
        load_trace(str(path))
    assert err.value.line == 1
    assert "header" in str(err.value)


@pytest.mark.parametrize(
    "record,problem",
    [
        ("1.000\tbatch_small\textra", "fields"),
        ("abc\tbatch_small", "arrival time"),
        ("6.000\tno_such_template", "template"),
    ],
)
def test_load_rejects_bad_records(tmp_path, record, problem):
    path = tmp_path / "bad.trace"
    path.write_text(f"{TRACE_HEADER}\n5.000\tbatch_small\n{record}\n")
    with pytest.raises(TraceFormatError) as err:
        load_trace(str(path))
    assert err.value.line == 3
    assert problem in str(err.value)


def test_load_rejects_decreasing_times(tmp_path):
    path = tmp_path / "bad.trace"
    path.write_text(f"{TRACE_HEADER}\n5.000\tbatch_small\n4.000\tbatch_small\n")
    with pytest.raises(TraceFormatError) as err:
        load_trace(str(path))
    assert err.value.line == 3


def test_load_rejects_empty_trace(tmp_path):
    path = tmp_path / "empty.trace"
    path.write_text(f"{TRACE_HEADER}\n\n")
    with pytest.raises(TraceFormatError):
        load_trace(str(path))


def test_load_skips_blank_lines(tmp_path):
    path = tmp_path / "gaps.trace"
    path.write_text(f"{TRACE_HEADER}\n\n1.000\tbatch_small\n\n2.000\tservice_med\n")
    loaded = load_trace(str(path))
    assert [(t, s.template_name) for t, s in loaded.entries] == [
        (1.0, "batch_small"),
        (2.0, "service_med"),
    ]


def test_documented_draw_order_reproduces_the_trace():
    # Re-derive the whole trace from the documented recipe: per job one gap
    # draw (-mean * ln(1 - U)), one template draw, and one moveable draw for
    # services only.  Any change to the consumption order would break this.
    spec = WorkloadSpec(mode=WorkloadMode.SLOW, total_jobs=50, seed=123)
    templates = list(default_catalog().values())
    rng = random.Random(123)
    t = 0.0
    expected = []
    for _ in range(50):
        t += -60.0 * math.log(1.0 - rng.random())
        tmpl = templates[rng.randrange(len(templates))]
        if tmpl.kind is TaskKind.SERVICE:
            rng.random()
        expected.append((round(t, 3), tmpl.template_name))
    got = [(time, s.template_name) for time, s in generate(spec).entries]
    assert got == expected
