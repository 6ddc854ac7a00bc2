"""Benchmark harnesses: seeded batches of pipeline runs with failure
classification, exact confidence intervals and reproducible report files.

Output layout under the chosen directory:

    logs/<stamp>/results.json          aggregate metrics
    logs/<stamp>/<name>_runs.jsonl     one record per trial
    logs/<stamp>/<name>_traces/run_NN/trace.jsonl

Trial records are byte-reproducible for identical (spec, seeds); wall-clock
timestamps live in their own field so reproducibility checks can strip them.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .agents import AgentBackend, ScriptedPolicy, parse_facts, propose
from .assets import harness_path
from .controller import (
    AgentSet,
    ProblemSpec,
    RunConfig,
    RunState,
    RunStatus,
    check_monotonic,
    load_problem,
    run_pipeline,
    synthesize_gradient,
    write_trace,
)
from .engine import VerdictStatus, assert_all, probe_boundary
from .expr import Value
from .harness import HarnessRegistry, load_registry_file
from .planner import NodeContext
from .stats import clopper_pearson

N_TRIALS_ENV = "N_TRIALS"


@dataclass(frozen=True)
class BenchSpec:
    name: str
    harness: str
    problem: str
    agent_spec: str
    n_trials: int = 20
    seed_base: int = 0
    expected_status: str = "SUCCESS"
    kind: str = "pipeline"  # pipeline | oscillation | context_rot


BUILTIN_BENCHES: dict[str, BenchSpec] = {
    "ad_paradox": BenchSpec(
        "ad_paradox", "ad_paradox", "ad_paradox", "boundary_chaser",
        expected_status="FAILED_PARADOX",
    ),
    "ad_pass": BenchSpec(
        "ad_pass", "ad_pass", "ad_pass", "boundary_chaser", expected_status="SUCCESS"
    ),
    "pharma_paradox": BenchSpec(
        "pharma_paradox", "pharma_paradox", "pharma_paradox", "boundary_chaser",
        expected_status="FAILED_PARADOX",
    ),
    "pharma_pass": BenchSpec(
        "pharma_pass", "pharma_pass", "pharma_pass", "first_feasible",
        expected_status="SUCCESS",
    ),
    "ad_oscillation": BenchSpec(
        "ad_oscillation", "ad_paradox", "ad_paradox", "naive_reflection",
        expected_status="OSCILLATED", kind="oscillation",
    ),
    "ad_context_rot": BenchSpec(
        "ad_context_rot", "ad_paradox", "ad_context_rot", "boundary_chaser",
        expected_status="FAILED_PARADOX", kind="context_rot",
    ),
}

NOISE_FIELDS = frozenset(
    {"max_longitudinal_jerk_m_s3", "cpu_core_budget", "v2x_video_bandwidth_mbps"}
)


def classify_failure(artifact: dict, reg: HarnessRegistry) -> str:
    """Label an artifact by which principal rules it violates.

    Exactly one labeled rule failing maps to that rule's label; two or more
    failing (or a decision value outside its declared domain) map to the
    registry's dual label; no labeled failure maps to NONE.
    """
    for var in reg.variables:
        value = artifact.get(var.name)
        if value is not None and not (var.min <= float(value) <= var.max):
            return reg.dual_label
    env: dict[str, Value] = dict(reg.constants)
    env.update(artifact)
    verdicts = assert_all(reg, env)
    failing = [
        v.rule_id
        for v in verdicts
        if v.status is not VerdictStatus.PASS and v.rule_id in reg.failure_labels
    ]
    if not failing:
        return "NONE"
    if len(failing) == 1:
        return reg.failure_labels[failing[0]]
    return reg.dual_label


@dataclass
class TrialRecord:
    seed: int
    status: str
    iterations: int
    node_retries: int
    chosen: dict
    failure_label: Optional[str]
    cost_usd: float
    parse_excluded: bool
    monotonic: bool
    extra: dict = field(default_factory=dict)
    ts: str = ""

    def to_json(self) -> str:
        body = {
            "seed": self.seed,
            "status": self.status,
            "iterations": self.iterations,
            "node_retries": self.node_retries,
            "chosen": self.chosen,
            "failure_label": self.failure_label,
            "cost_usd": self.cost_usd,
            "parse_excluded": self.parse_excluded,
            "monotonic": self.monotonic,
            **self.extra,
            "ts": self.ts,
        }
        return json.dumps(body, sort_keys=True)


@dataclass
class BenchReport:
    spec: BenchSpec
    n: int
    records: list[TrialRecord]
    status_counts: dict[str, int]
    failure_counts: dict[str, int]
    expected_count: int
    ci: tuple[float, float]
    mean_node_retries: float
    monotonic_count: int
    elapsed_s: float
    extra: dict = field(default_factory=dict)
    states: list[RunState] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bench": self.spec.name,
            "n": self.n,
            "expected_status": self.spec.expected_status,
            "expected_count": self.expected_count,
            "ci95": [self.ci[0], self.ci[1]],
            "status_counts": self.status_counts,
            "failure_counts": self.failure_counts,
            "mean_node_retries": self.mean_node_retries,
            "monotonic_count": self.monotonic_count,
            "elapsed_s": self.elapsed_s,
            **self.extra,
        }


def resolve_bench(name: str) -> BenchSpec:
    if name not in BUILTIN_BENCHES:
        raise KeyError(f"unknown bench {name!r}; have {sorted(BUILTIN_BENCHES)}")
    return BUILTIN_BENCHES[name]


def _effective_n(spec: BenchSpec, n: Optional[int]) -> int:
    if n is not None:
        return n
    env = os.environ.get(N_TRIALS_ENV)
    if env:
        return int(env)
    return spec.n_trials


def run_benchmark(
    spec: BenchSpec,
    n: Optional[int] = None,
    seed_base: Optional[int] = None,
    out_dir: Optional[str | Path] = None,
) -> BenchReport:
    """Run n independent seeded trials of a benchmark and assemble the report
    (and report files, when an output directory is given)."""
    n = _effective_n(spec, n)
    if n < 1:
        raise ValueError("n_trials must be >= 1")
    base = spec.seed_base if seed_base is None else seed_base

    if spec.kind == "oscillation":
        return _run_oscillation(spec, n, base, out_dir)
    if spec.kind == "context_rot":
        return _run_context_rot(spec, n, base, out_dir)
    return _run_pipeline_bench(spec, n, base, out_dir)


def _finish_report(
    spec: BenchSpec,
    records: list[TrialRecord],
    states: list[RunState],
    started: float,
    out_dir,
    extra: Optional[dict] = None,
) -> BenchReport:
    status_counts: dict[str, int] = {}
    failure_counts: dict[str, int] = {}
    for record in records:
        status_counts[record.status] = status_counts.get(record.status, 0) + 1
        if record.failure_label:
            failure_counts[record.failure_label] = (
                failure_counts.get(record.failure_label, 0) + 1
            )
    expected = status_counts.get(spec.expected_status, 0)
    valid_n = len([r for r in records if not r.parse_excluded])
    ci = clopper_pearson(expected, valid_n) if valid_n else (0.0, 0.0)
    retries = [r.node_retries for r in records]
    report = BenchReport(
        spec=spec,
        n=len(records),
        records=records,
        status_counts=status_counts,
        failure_counts=failure_counts,
        expected_count=expected,
        ci=ci,
        mean_node_retries=sum(retries) / len(retries) if retries else 0.0,
        monotonic_count=sum(1 for r in records if r.monotonic),
        elapsed_s=round(time.perf_counter() - started, 3),
        extra=extra or {},
        states=states,
    )
    if out_dir is not None:
        _write_report(report, Path(out_dir))
    return report


def _run_pipeline_bench(spec: BenchSpec, n: int, base: int, out_dir) -> BenchReport:
    started = time.perf_counter()
    reg = load_registry_file(harness_path(spec.harness))
    problem = load_problem(spec.problem)
    agents = AgentSet.from_spec(spec.agent_spec)
    records: list[TrialRecord] = []
    states: list[RunState] = []
    for i in range(n):
        seed = base + i
        run_id = f"{spec.name}-seed{seed:04d}"
        ts = datetime.now(timezone.utc).isoformat(timespec="seconds")
        try:
            state = run_pipeline(
                problem, reg, agents, RunConfig(seed=seed, run_id=run_id)
            )
        except Exception as exc:  # a trial error is recorded, not fatal
            records.append(
                TrialRecord(
                    seed=seed, status="ERROR", iterations=0, node_retries=0,
                    chosen={}, failure_label=None, cost_usd=0.0,
                    parse_excluded=False, monotonic=True,
                    extra={"error": str(exc)}, ts=ts,
                )
            )
            continue
        states.append(state)
        chosen = {
            v.name: state.artifact[v.name]
            for v in reg.variables
            if v.name in state.artifact
        }
        label = None
        if state.status.value != spec.expected_status:
            label = classify_failure(state.artifact, reg)
        extra: dict = {}
        if state.mus:
            extra["mus"] = sorted(state.mus)
        records.append(
            TrialRecord(
                seed=seed,
                status=state.status.value,
                iterations=state.iteration,
                node_retries=state.node_retries,
                chosen=chosen,
                failure_label=label,
                cost_usd=0.0,
                parse_excluded=state.status is RunStatus.PARSE_EXCLUDED,
                monotonic=check_monotonic(state.trace),
                extra=extra,
                ts=ts,
            )
        )
    return _finish_report(spec, records, states, started, out_dir)


# ---------------------------------------------------------------------------
# Oscillation baseline: naive reflection with no state locking


def run_reflection_trial(
    reg: HarnessRegistry,
    initial: dict[str, Value],
    seed: int,
    iterations: int = 5,
) -> dict:
    """One naive-reflection trial: each round feeds only the most recent
    failure back to the executor, with no locking and no paradox exit."""
    backend = AgentBackend.scripted(ScriptedPolicy("NAIVE_REFLECTION"))
    schema = {v.name: ("int" if v.integer else "float") for v in reg.variables}
    ctx = NodeContext(
        node_id="monolith",
        description="single-context artifact generation",
        facts={},
        rules=reg.rules,
        expected_schema=schema,
        variables=reg.variables,
    )
    from .controller import build_oracle

    oracle = build_oracle(reg, ctx, initial)
    artifact: dict[str, Value] = {
        name: initial.get(name, 0) for name in schema
    }
    proposals: list[dict] = []
    converged = False
    for _ in range(iterations):
        env: dict[str, Value] = dict(reg.constants)
        env.update(artifact)
        verdicts = assert_all(reg, env)
        if all(v.status is VerdictStatus.PASS for v in verdicts):
            converged = True
            break
        boundaries: dict[str, float] = {}
        sides: dict[str, str] = {}
        variables = {v.name: v for v in reg.variables}
        for rule, verdict in zip(reg.rules, verdicts):
            if verdict.status is VerdictStatus.FAIL and rule.target_field in variables:
                probe = probe_boundary(
                    rule,
                    {k: v for k, v in env.items() if k != rule.target_field},
                    rule.target_field,
                    variables[rule.target_field],
                )
                if probe.found:
                    boundaries[rule.id] = probe.value
                    sides[rule.id] = probe.feasible_side
        audit = synthesize_gradient(verdicts, boundaries, sides)
        raw = propose(backend, ctx, audit, seed, oracle)
        artifact = dict(parse_facts(raw, schema))
        proposals.append(dict(artifact))
    return {"proposals": proposals, "converged": converged, "final": artifact}


def _run_oscillation(spec: BenchSpec, n: int, base: int, out_dir) -> BenchReport:
    started = time.perf_counter()
    reg = load_registry_file(harness_path(spec.harness))
    problem = load_problem(spec.problem)
    records: list[TrialRecord] = []
    all_proposals: list[int] = []
    for i in range(n):
        seed = base + i
        ts = datetime.now(timezone.utc).isoformat(timespec="seconds")
        trial = run_reflection_trial(reg, dict(problem.defaults), seed)
        speeds = [p.get("vehicle_speed_kmph_t5") for p in trial["proposals"]]
        all_proposals.extend(int(s) for s in speeds if s is not None)
        records.append(
            TrialRecord(
                seed=seed,
                status="CONVERGED" if trial["converged"] else "OSCILLATED",
                iterations=len(trial["proposals"]),
                node_retries=len(trial["proposals"]),
                chosen=trial["final"],
                failure_label=None if not trial["converged"] else "NONE",
                cost_usd=0.0,
                parse_excluded=False,
                monotonic=True,
                extra={"proposals": speeds},
                ts=ts,
            )
        )
    histogram: dict[str, int] = {}
    for s in all_proposals:
        histogram[str(s)] = histogram.get(str(s), 0) + 1
    boundary_hits = sum(1 for s in all_proposals if s in (55, 84))
    extra = {
        "proposal_histogram": histogram,
        "boundary_fraction": boundary_hits / len(all_proposals) if all_proposals else 0.0,
        "converged_count": sum(1 for r in records if r.status == "CONVERGED"),
    }
    return _finish_report(spec, records, [], started, out_dir, extra)


# ---------------------------------------------------------------------------
# Context-rot bench: inject labeled noise upstream, verify the firewall and
# that the paradox outcome is invariant to the noise


def _run_context_rot(spec: BenchSpec, n: int, base: int, out_dir) -> BenchReport:
    started = time.perf_counter()
    reg = load_registry_file(harness_path(spec.harness))
    noisy_problem = load_problem(spec.problem)
    clean_problem = load_problem("ad_paradox")
    agents = AgentSet.from_spec(spec.agent_spec)
    records: list[TrialRecord] = []
    states: list[RunState] = []
    leaks = 0
    invariant_breaks = 0
    for i in range(n):
        seed = base + i
        ts = datetime.now(timezone.utc).isoformat(timespec="seconds")
        noisy = run_pipeline(
            noisy_problem, reg, agents,
            RunConfig(seed=seed, run_id=f"{spec.name}-noisy{seed:04d}"),
        )
        clean = run_pipeline(
            clean_problem, reg, agents,
            RunConfig(seed=seed, run_id=f"{spec.name}-clean{seed:04d}"),
        )
        trial_leaks = 0
        for event in noisy.trace:
            if event.kind == "node_start" and event.payload["node"] == "Kinematics_Node":
                trial_leaks += len(NOISE_FIELDS & set(event.payload["context_keys"]))
        leaks += trial_leaks
        if noisy.status != clean.status:
            invariant_breaks += 1
        states.append(noisy)
        records.append(
            TrialRecord(
                seed=seed,
                status=noisy.status.value,
                iterations=noisy.iteration,
                node_retries=noisy.node_retries,
                chosen={
                    v.name: noisy.artifact[v.name]
                    for v in reg.variables
                    if v.name in noisy.artifact
                },
                failure_label=None,
                cost_usd=0.0,
                parse_excluded=False,
                monotonic=check_monotonic(noisy.trace),
                extra={"slice_leaks": trial_leaks, "clean_status": clean.status.value},
                ts=ts,
            )
        )
    extra = {"slice_leaks": leaks, "outcome_invariant_breaks": invariant_breaks}
    return _finish_report(spec, records, states, started, out_dir, extra)


# ---------------------------------------------------------------------------
# Report files


def _write_report(report: BenchReport, out_dir: Path) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    log_dir = out_dir / "logs" / stamp
    log_dir.mkdir(parents=True, exist_ok=True)
    (log_dir / "results.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    runs_path = log_dir / f"{report.spec.name}_runs.jsonl"
    with open(runs_path, "w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(record.to_json() + "\n")
    for idx, state in enumerate(report.states):
        trace_dir = log_dir / f"{report.spec.name}_traces" / f"run_{idx:02d}"
        trace_dir.mkdir(parents=True, exist_ok=True)
        write_trace(trace_dir / "trace.jsonl", state.trace)
        if state.evidence:
            (trace_dir / "evidence.txt").write_text(state.evidence, encoding="utf-8")
    return log_dir
