"""Command-line interface: run benchmarks, lint harness files, execute single
pipelines, replay recorded traces and serve the HTTP orchestrator."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .assets import harness_path
from .bench import BUILTIN_BENCHES, resolve_bench, run_benchmark
from .controller import (
    AgentSet,
    RunConfig,
    check_monotonic,
    load_problem,
    read_trace,
    run_pipeline,
)
from .harness import load_registry_file, meta_validate, validate_registry


def _cmd_bench(args) -> int:
    spec = resolve_bench(args.name)
    report = run_benchmark(spec, n=args.n, seed_base=args.seed, out_dir=args.out)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    expected = report.status_counts.get(spec.expected_status, 0)
    return 0 if expected == report.n else 1


def _cmd_lint(args) -> int:
    reg = load_registry_file(args.harness)
    report = validate_registry(reg)
    for finding in report.findings:
        print(f"finding: {finding}")
    meta = meta_validate(reg)
    for result in meta.results:
        status = "ok" if result.passed else "FLAGGED"
        detail = ""
        if result.missed_detection:
            detail += f" missed={sorted(result.missed_detection)}"
        if result.unexpected_fail:
            detail += f" unexpected={sorted(result.unexpected_fail)}"
        print(f"meta-test [{result.kind.value}] {result.label}: {status}{detail}")
    ok = report.ok and meta.ok
    print("lint:", "clean" if ok else "issues found")
    return 0 if ok else 1


def _cmd_run(args) -> int:
    problem = load_problem(args.problem)
    reg = load_registry_file(harness_path(args.harness))
    agents = AgentSet.from_spec(args.agents)
    state = run_pipeline(
        problem, reg, agents, RunConfig(seed=args.seed, max_global_iters=args.max_global_iters)
    )
    print(json.dumps(state.summary_dict(), indent=2, sort_keys=True))
    if state.evidence:
        print(state.evidence)
    return 0 if state.status.value in ("SUCCESS", "FAILED_PARADOX") else 1


def _cmd_replay(args) -> int:
    trace_dir = Path(args.trace_dir)
    trace_file = trace_dir / "trace.jsonl" if trace_dir.is_dir() else trace_dir
    events = read_trace(trace_file)
    final_status = None
    for event in events:
        line = {"t": event.t, "kind": event.kind}
        if event.kind == "status":
            final_status = event.payload.get("status")
            line["status"] = final_status
        if args.verbose:
            line["payload"] = event.payload
        print(json.dumps(line, sort_keys=True))
    monotonic = check_monotonic(events)
    print(f"replay: {len(events)} events, final status {final_status}, "
          f"monotonic {'ok' if monotonic else 'VIOLATED'}")
    return 0 if monotonic else 1


def _cmd_serve(args) -> int:
    from .service import serve_forever

    serve_forever(port=args.port, data_dir=args.data, console_dir=args.console_dir)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lockstep",
        description="Deterministic constraint-convergence orchestrator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run a built-in benchmark")
    p.add_argument("name", choices=sorted(BUILTIN_BENCHES))
    p.add_argument("--n", type=int, default=None, help="trial count (env N_TRIALS honored)")
    p.add_argument("--seed", type=int, default=None, help="seed base")
    p.add_argument("--out", default=None, help="output directory for report files")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("lint", help="validate and meta-validate a harness file")
    p.add_argument("harness")
    p.set_defaults(func=_cmd_lint)

    p = sub.add_parser("run", help="run one pipeline")
    p.add_argument("problem", help="problem name or JSON path")
    p.add_argument("harness", help="harness name or YAML path")
    p.add_argument("--agents", default="boundary_chaser")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-global-iters", type=int, default=3)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("replay", help="replay a recorded trace")
    p.add_argument("trace_dir")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="start the HTTP orchestrator")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--data", default="data")
    p.add_argument("--console-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
