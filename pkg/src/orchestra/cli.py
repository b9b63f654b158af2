"""Command line interface.

Subcommands
-----------
``run``       one simulation run from a config file plus flag overrides
``sweep``     a policy/seed matrix of runs with combined CSV and ranking
``baseline``  static-cluster reference run (optionally sizing the cluster first)
``gen-trace`` write a workload trace file

Config files are line oriented ``key = value`` text; ``#`` starts a comment.
Recognized keys (defaults in parentheses):

    workload = slow | bursty | mixed     generated workload mode (slow)
    trace = PATH                         use a trace file instead of generating
    total_jobs (50)          mean_bursty_s (10)        mean_slow_s (60)
    min_period_jobs (10)     moveable_fraction (1.0)   seed (0)
    scheduler (best_fit)     rescheduler (void)        autoscaler (void)
    static_nodes (1)         worker_cpu_m (1000)       worker_mem_mib (4096)
    max_pod_age_s (60)       reschedule_order (descending)
    provisioning_interval_s (60)         provisioning_delay_s (60)
    scale_in_batch (1)       price_per_second (0.011)
    metric_sample_period_s (20)          cycle_tick_period_s (10)
    guard_horizon_s (7200)

Sweep matrix files use the same keys plus comma separated lists:

    workloads = bursty, slow, mixed      (modes or .trace paths)
    reschedulers = void, non_binding, binding
    autoscalers = simple, binding
    seeds = 1, 2, 3

Exit codes: 0 success, 1 usage or configuration error, 2 aborted run.
"""

import argparse
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

from .engine import AbortedRun, ConfigError, RunConfig, find_min_static_nodes, run
from .metrics import CSV_COLUMNS, RunReport, emit_csv, format_report, parse_report
from .workload import (
    TraceFormatError,
    WorkloadMode,
    WorkloadSpec,
    generate,
    load_trace,
    save_trace,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORTED = 2


def _write_text(path: str, text: str) -> None:
    """Write via a temp file and rename so readers never see partial output."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def parse_kv_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out: dict[str, str] = {}
    for i, line in enumerate(raw, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{i}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_WORKLOAD_KEYS = {
    "total_jobs": int,
    "mean_bursty_s": float,
    "mean_slow_s": float,
    "min_period_jobs": int,
    "moveable_fraction": float,
}

_RUN_KEYS = {
    "seed": int,
    "scheduler": str,
    "rescheduler": str,
    "autoscaler": str,
    "static_nodes": int,
    "worker_cpu_m": int,
    "worker_mem_mib": int,
    "max_pod_age_s": float,
    "reschedule_order": str,
    "provisioning_interval_s": float,
    "provisioning_delay_s": float,
    "scale_in_batch": int,
    "price_per_second": float,
    "metric_sample_period_s": float,
    "cycle_tick_period_s": float,
    "guard_horizon_s": float,
}

_MATRIX_KEYS = ("workloads", "reschedulers", "autoscalers", "seeds")


def _cast(key: str, value: str, caster):
    try:
        return caster(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def build_run_config(kv: dict[str, str], allow_matrix_keys: bool = False) -> RunConfig:
    """Translate key/value settings into a RunConfig."""
    config = RunConfig()
    workload_kwargs = {}
    for key, value in kv.items():
        if key in ("workload", "trace"):
            continue
        if allow_matrix_keys and key in _MATRIX_KEYS:
            continue
        if key in _WORKLOAD_KEYS:
            field = {
                "mean_bursty_s": "mean_interarrival_bursty_s",
                "mean_slow_s": "mean_interarrival_slow_s",
            }.get(key, key)
            workload_kwargs[field] = _cast(key, value, _WORKLOAD_KEYS[key])
        elif key in _RUN_KEYS:
            setattr(config, key, _cast(key, value, _RUN_KEYS[key]))
        else:
            raise ConfigError(f"unknown config key {key!r}")

    if "trace" in kv:
        if "workload" in kv:
            raise ConfigError("give either workload or trace, not both")
        try:
            config.trace = load_trace(kv["trace"])
        except (OSError, TraceFormatError) as exc:
            raise ConfigError(f"cannot load trace {kv['trace']}: {exc}") from None
        config.label = os.path.splitext(os.path.basename(kv["trace"]))[0]
    else:
        mode_name = kv.get("workload", "slow")
        try:
            mode = WorkloadMode(mode_name)
        except ValueError:
            raise ConfigError(f"unknown workload mode {mode_name!r}") from None
        config.workload = WorkloadSpec(name=mode_name, mode=mode, **workload_kwargs)
        config.label = mode_name
    return config


def _apply_overrides(config: RunConfig, args) -> None:
    for attr in ("seed", "scheduler", "rescheduler", "autoscaler", "static_nodes"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(config, attr, value)


def _config_dump(config: RunConfig) -> str:
    lines = ["# effective configuration"]
    if config.trace is not None:
        lines.append(f"config.workload = trace:{config.label}")
    else:
        w = config.workload
        lines.append(f"config.workload = {w.mode.value}")
        lines.append(f"config.total_jobs = {w.total_jobs}")
        lines.append(f"config.mean_bursty_s = {w.mean_interarrival_bursty_s}")
        lines.append(f"config.mean_slow_s = {w.mean_interarrival_slow_s}")
        lines.append(f"config.min_period_jobs = {w.min_period_jobs}")
        lines.append(f"config.moveable_fraction = {w.moveable_fraction}")
    for key in _RUN_KEYS:
        lines.append(f"config.{key} = {getattr(config, key)}")
    return "\n".join(lines) + "\n"


def _write_run_artifacts(out_dir: str, config: RunConfig, report: RunReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_text(
        os.path.join(out_dir, "report.txt"),
        format_report(report) + "\n" + _config_dump(config),
    )
    _write_text(os.path.join(out_dir, "events.log"), "\n".join(report.event_log) + "\n")
    emit_csv([report], os.path.join(out_dir, "metrics.csv"))


def _write_abort_artifacts(out_dir: str, config: RunConfig, exc: AbortedRun) -> None:
    os.makedirs(out_dir, exist_ok=True)
    text = f"status = aborted\nreason = {exc}\npending = {exc.pending}\n\n" + _config_dump(config)
    _write_text(os.path.join(out_dir, "report.txt"), text)
    _write_text(os.path.join(out_dir, "events.log"), "\n".join(exc.event_log) + "\n")


def cmd_run(args) -> int:
    kv = parse_kv_file(args.config) if args.config else {}
    config = build_run_config(kv)
    _apply_overrides(config, args)
    try:
        report = run(config)
    except AbortedRun as exc:
        _write_abort_artifacts(args.out_dir, config, exc)
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    _write_run_artifacts(args.out_dir, config, report)
    print(
        f"cost = {report.total_cost}\n"
        f"duration_s = {report.scheduling_duration_s}\n"
        f"median_pending_s = {report.median_pending_time_s}"
    )
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    spec = WorkloadSpec(
        name=args.mode,
        mode=WorkloadMode(args.mode),
        total_jobs=args.jobs,
        mean_interarrival_bursty_s=args.mean_bursty,
        mean_interarrival_slow_s=args.mean_slow,
        min_period_jobs=args.min_period,
        seed=args.seed,
        moveable_fraction=args.moveable_fraction,
    )
    trace = generate(spec)
    save_trace(trace, args.out)
    print(f"wrote {len(trace)} jobs to {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    kv = parse_kv_file(args.config) if args.config else {}
    base = build_run_config(kv)
    _apply_overrides(base, args)
    if args.trace:
        try:
            trace = load_trace(args.trace)
        except (OSError, TraceFormatError) as exc:
            raise ConfigError(f"cannot load trace {args.trace}: {exc}") from None
        base.label = os.path.splitext(os.path.basename(args.trace))[0]
    elif args.workload:
        spec = WorkloadSpec(name=args.workload, mode=WorkloadMode(args.workload), seed=base.seed)
        trace = generate(spec)
        base.label = args.workload
    else:
        raise ConfigError("baseline needs --workload or --trace")
    base.workload = None
    base.trace = trace
    scheduler = args.scheduler or "k8s_default"

    if args.static_nodes is not None:
        if args.static_nodes < 1:
            raise ConfigError("a static baseline needs at least one node")
        n = args.static_nodes
    else:
        n = find_min_static_nodes(trace, scheduler=scheduler, base=base)

    from dataclasses import replace

    config = replace(
        base, scheduler=scheduler, rescheduler="void", autoscaler="void", static_nodes=n
    )
    try:
        report = run(config)
    except AbortedRun as exc:
        _write_abort_artifacts(args.out_dir, config, exc)
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    _write_run_artifacts(args.out_dir, config, report)
    print(
        f"min_static_nodes = {n}\n"
        f"cost = {report.total_cost}\n"
        f"duration_s = {report.scheduling_duration_s}"
    )
    return EXIT_OK


def _sweep_cell(config: RunConfig, out_dir: str):
    """Run one sweep cell and write its artifacts. Returns (report, aborted)."""
    try:
        report = run(config)
    except AbortedRun as exc:
        _write_abort_artifacts(out_dir, config, exc)
        return None, str(exc)
    _write_run_artifacts(out_dir, config, report)
    return report, None


def _report_from_files(cell_dir: str) -> RunReport | None:
    path = os.path.join(cell_dir, "report.txt")
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        kv = parse_report(fh.read())
    if kv.get("status") == "aborted" or "total_cost" not in kv:
        return None
    return RunReport(
        workload=kv["workload"],
        scheduler=kv["scheduler"],
        rescheduler=kv["rescheduler"],
        autoscaler=kv["autoscaler"],
        seed=int(kv["seed"]),
        total_cost=float(kv["total_cost"]),
        scheduling_duration_s=float(kv["scheduling_duration_s"]),
        median_pending_time_s=float(kv["median_pending_time_s"]),
        avg_ram_req_cap_ratio=float(kv["avg_ram_req_cap_ratio"]),
        avg_cpu_req_cap_ratio=float(kv["avg_cpu_req_cap_ratio"]),
        avg_pods_per_node=float(kv["avg_pods_per_node"]),
    )


def _rank_summary(reports: list[RunReport]) -> str:
    """Per workload, rank policy combos by median cost rank plus median
    duration rank (equal weight), lowest score first."""
    lines = []
    workloads = sorted({r.workload for r in reports})
    for workload in workloads:
        combo_stats = {}
        for r in reports:
            if r.workload != workload:
                continue
            combo_stats.setdefault(f"{r.rescheduler}+{r.autoscaler}", []).append(r)
        rows = []
        for combo, rs in combo_stats.items():
            rows.append(
                (
                    combo,
                    statistics.median(r.total_cost for r in rs),
                    statistics.median(r.scheduling_duration_s for r in rs),
                )
            )
        by_cost = sorted(rows, key=lambda r: (r[1], r[0]))
        by_duration = sorted(rows, key=lambda r: (r[2], r[0]))
        scored = []
        for row in rows:
            score = by_cost.index(row) + by_duration.index(row)
            scored.append((score, row))
        scored.sort(key=lambda s: (s[0], s[1][1], s[1][0]))
        lines.append(f"[{workload}]")
        for rank, (score, (combo, cost, duration)) in enumerate(scored, start=1):
            lines.append(
                f"{rank}. {combo} score={score} median_cost={cost} median_duration_s={duration}"
            )
        lines.append("")
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    kv = parse_kv_file(args.config)
    base_kv = {k: v for k, v in kv.items() if k not in _MATRIX_KEYS}
    workloads = [w.strip() for w in kv.get("workloads", "slow").split(",") if w.strip()]
    reschedulers = [r.strip() for r in kv.get("reschedulers", "void").split(",") if r.strip()]
    autoscalers = [a.strip() for a in kv.get("autoscalers", "void").split(",") if a.strip()]
    seeds = [
        _cast("seeds", s.strip(), int) for s in kv.get("seeds", "0").split(",") if s.strip()
    ]

    cells = []
    for workload in workloads:
        for rescheduler in reschedulers:
            for autoscaler in autoscalers:
                for seed in seeds:
                    cell_kv = dict(base_kv)
                    if workload.endswith(".trace"):
                        cell_kv["trace"] = workload
                    else:
                        cell_kv["workload"] = workload
                    config = build_run_config(cell_kv, allow_matrix_keys=True)
                    config.rescheduler = rescheduler
                    config.autoscaler = autoscaler
                    config.seed = seed
                    label = config.label
                    cell_dir = os.path.join(
                        args.out_dir, f"{label}-{rescheduler}-{autoscaler}-s{seed}"
                    )
                    cells.append((config, cell_dir))

    reports: list[RunReport] = []
    failures = []
    todo = []
    for config, cell_dir in cells:
        existing = _report_from_files(cell_dir)
        if existing is not None:
            reports.append(existing)
        else:
            todo.append((config, cell_dir))

    if args.parallel > 1 and todo:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futures = [pool.submit(_sweep_cell, config, cell_dir) for config, cell_dir in todo]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_cell(config, cell_dir) for config, cell_dir in todo]
    for (config, cell_dir), (report, error) in zip(todo, results):
        if report is None:
            failures.append((cell_dir, error))
        else:
            reports.append(report)

    os.makedirs(args.out_dir, exist_ok=True)

    def order(r: RunReport):
        return (r.workload, r.rescheduler, r.autoscaler, r.seed)

    reports.sort(key=order)
    emit_csv(reports, os.path.join(args.out_dir, "sweep.csv"))
    _write_text(os.path.join(args.out_dir, "summary.txt"), _rank_summary(reports))
    for cell_dir, error in failures:
        print(f"aborted cell {cell_dir}: {error}", file=sys.stderr)
    print(f"{len(reports)} runs -> {os.path.join(args.out_dir, 'sweep.csv')}")
    if not reports:
        return EXIT_ABORTED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orchestra",
        description="Discrete-event simulator for cluster scheduling, "
        "rescheduling and autoscaling policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_config=True):
        if with_config:
            p.add_argument("--config", help="key = value config file")
        p.add_argument("--out-dir", default="out", help="artifact directory (default: out)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--scheduler", default=None)
        p.add_argument("--rescheduler", default=None)
        p.add_argument("--autoscaler", default=None)
        p.add_argument("--static-nodes", type=int, default=None, dest="static_nodes")

    p_run = sub.add_parser("run", help="execute one simulation run")
    add_common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a policy/seed matrix")
    p_sweep.add_argument("--config", required=True, help="matrix file")
    p_sweep.add_argument("--out-dir", default="out", help="artifact directory")
    p_sweep.add_argument("--parallel", type=int, default=1, help="worker processes")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_base = sub.add_parser("baseline", help="static-cluster reference run")
    p_base.add_argument("--workload", help="bursty | slow | mixed")
    p_base.add_argument("--trace", help="trace file path")
    add_common(p_base)
    p_base.set_defaults(fn=cmd_baseline)

    p_gen = sub.add_parser("gen-trace", help="write a workload trace file")
    p_gen.add_argument("--mode", required=True, choices=[m.value for m in WorkloadMode])
    p_gen.add_argument("--jobs", type=int, default=50)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--mean-bursty", type=float, default=10.0, dest="mean_bursty")
    p_gen.add_argument("--mean-slow", type=float, default=60.0, dest="mean_slow")
    p_gen.add_argument("--min-period", type=int, default=10, dest="min_period")
    p_gen.add_argument("--moveable-fraction", type=float, default=1.0, dest="moveable_fraction")
    p_gen.set_defaults(fn=cmd_gen_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
