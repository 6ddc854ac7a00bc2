"""The closed convergence loop: per-node execute, assert, review, lock and
retry, then global integration review. Runs terminate in SUCCESS,
FAILED_PARADOX (oracle-proven), EXHAUSTED, or PARSE_EXCLUDED.

The invariant the whole loop protects: the set of verified rules recorded
across a run never shrinks. Verified dimensions are locked; an executor that
tries to rewrite a locked field has the write reverted and recorded as a
protocol violation, so the invariant holds even against adversarial
executors.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional

from . import assets
from .agents import (
    AgentBackend,
    ParseOutcome,
    PolicyOracle,
    ScriptedPolicy,
    parse_facts,
    parse_with_retry,
    propose,
)
from .engine import (
    Verdict,
    VerdictStatus,
    assert_all,
    assert_rule,
    probe_boundary,
)
from .expr import Value, free_vars
from .feasibility import (
    evidence_package,
    feasible,
    minimal_unsat_subset,
    resolution_menu,
)
from .harness import HarnessRegistry, Severity, validate_registry
from .planner import (
    NodeContext,
    RadNode,
    RadPlan,
    context_slice,
    plan_from_json,
    topo_order,
    validate_plan,
)

LOCK_INSTRUCTION = "LOCKED. Do not modify in next iteration."


class ConfigError(Exception):
    pass


class RegistryInvalid(Exception):
    pass


class PlanInvalid(Exception):
    pass


class Direction(Enum):
    INCREASE = "INCREASE"
    DECREASE = "DECREASE"
    SET = "SET"


class RunStatus(Enum):
    RUNNING = "RUNNING"
    SUCCESS = "SUCCESS"
    FAILED_PARADOX = "FAILED_PARADOX"
    EXHAUSTED = "EXHAUSTED"
    PARSE_EXCLUDED = "PARSE_EXCLUDED"


@dataclass(frozen=True)
class SemanticGradient:
    dimension: str
    direction: Direction
    magnitude: Optional[float]
    rationale: str = ""

    def to_json_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "direction": self.direction.value,
            "magnitude": self.magnitude,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class AuditEntry:
    dimension: str
    status: str  # PASS | FAIL
    instruction: str
    error_trace: Optional[str] = None
    semantic_gradient: Optional[SemanticGradient] = None


@dataclass(frozen=True)
class DimensionConflict:
    dimension: str
    bounds: tuple[tuple[str, str, Optional[float]], ...]  # (rule_id, direction, magnitude)


@dataclass(frozen=True)
class AuditResult:
    entries: Mapping[str, AuditEntry]
    conflicts: tuple[DimensionConflict, ...] = ()

    def all_pass(self) -> bool:
        return all(e.status == "PASS" for e in self.entries.values())

    def failing_dimensions(self) -> list[str]:
        return [d for d, e in self.entries.items() if e.status == "FAIL"]

    def to_json_dict(self) -> dict:
        out: dict = {"audit_results": {}}
        for dim, entry in self.entries.items():
            body: dict = {"status": entry.status, "instruction": entry.instruction}
            if entry.error_trace:
                body["error_trace"] = entry.error_trace
            if entry.semantic_gradient:
                body["semantic_gradient"] = entry.semantic_gradient.to_json_dict()
            out["audit_results"][dim] = body
        if self.conflicts:
            out["conflicts"] = [
                {"dimension": c.dimension, "bounds": [list(b) for b in c.bounds]}
                for c in self.conflicts
            ]
        return out


class LockConflict(Exception):
    pass


class LockSet:
    """Set of (node_id, field, locked_value) with an append-only history.

    A field holds at most one lock per node. The only legal supersession is
    an explicit release by the global review when a locked dimension fails a
    cross-node rule (FAIL wins); releases are recorded, never silent.
    """

    def __init__(self) -> None:
        self._locks: dict[tuple[str, str], Value] = {}
        self.history: list[tuple[str, str, str, Value]] = []  # (action, node, field, value)

    def add(self, node_id: str, fname: str, value: Value) -> None:
        key = (node_id, fname)
        if key in self._locks and self._locks[key] != value:
            raise LockConflict(f"{fname} already locked at {self._locks[key]!r} for {node_id}")
        self._locks[key] = value
        self.history.append(("lock", node_id, fname, value))

    def release(self, node_id: str, fname: str) -> None:
        key = (node_id, fname)
        if key in self._locks:
            self.history.append(("release", node_id, fname, self._locks[key]))
            del self._locks[key]

    def field_values(self) -> dict[str, Value]:
        return {fname: value for (_nid, fname), value in self._locks.items()}

    def items(self) -> list[tuple[str, str, Value]]:
        return [(nid, fname, value) for (nid, fname), value in sorted(self._locks.items())]

    def __len__(self) -> int:
        return len(self._locks)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._locks


@dataclass(frozen=True)
class TraceEvent:
    run_id: str
    t: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"run_id": self.run_id, "t": self.t, "kind": self.kind, "payload": self.payload},
            sort_keys=True,
        )


@dataclass
class RunState:
    run_id: str
    status: RunStatus = RunStatus.RUNNING
    iteration: int = 0
    verified_rules: frozenset[str] = frozenset()
    artifact: dict[str, Value] = field(default_factory=dict)
    locks: LockSet = field(default_factory=LockSet)
    trace: list[TraceEvent] = field(default_factory=list)
    mus: Optional[frozenset[str]] = None
    menu: Optional[list] = None
    evidence: Optional[str] = None
    node_retries: int = 0
    harness_name: str = ""
    harness_version: str = ""

    def summary_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "status": self.status.value,
            "iteration": self.iteration,
            "verified_rules": sorted(self.verified_rules),
            "artifact": self.artifact,
            "locks": [[n, f, v] for n, f, v in self.locks.items()],
            "mus": sorted(self.mus) if self.mus else None,
            "menu": [o.to_json_dict() for o in self.menu] if self.menu else None,
            "node_retries": self.node_retries,
            "harness_name": self.harness_name,
            "harness_version": self.harness_version,
        }


@dataclass(frozen=True)
class NodeResult:
    node_id: str
    status: str  # CONVERGED | FAILED | PARSE_EXCLUDED
    output: dict[str, Value]
    iterations: int
    last_audit: Optional[AuditResult] = None


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    description: str
    plan: RadPlan
    defaults: Mapping[str, Value]


def load_problem(name_or_path: str) -> ProblemSpec:
    path = assets.problem_path(name_or_path)
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    plan_ref = raw["plan"]
    if isinstance(plan_ref, str):
        plan = plan_from_json(Path(assets.plan_path(plan_ref)).read_text(encoding="utf-8"))
    else:
        from .planner import plan_from_obj

        plan = plan_from_obj(plan_ref)
    return ProblemSpec(
        name=str(raw.get("name", Path(path).stem)),
        description=str(raw.get("description", "")),
        plan=plan,
        defaults=dict(raw.get("defaults", {})),
    )


@dataclass(frozen=True)
class AgentSet:
    executor: AgentBackend
    per_node: Mapping[str, AgentBackend] = field(default_factory=dict)

    def for_node(self, node_id: str) -> AgentBackend:
        return self.per_node.get(node_id, self.executor)

    @staticmethod
    def from_spec(spec: str) -> "AgentSet":
        """Parse an agent-set name like ``boundary_chaser``, ``constant:120``
        or ``noisy:boundary_chaser`` into scripted backends."""
        name = spec.strip().lower()
        if name.startswith("constant:"):
            policy = ScriptedPolicy.constant(float(name.split(":", 1)[1]))
        elif name.startswith("noisy:"):
            inner = AgentSet.from_spec(name.split(":", 1)[1]).executor.policy
            policy = ScriptedPolicy.noisy(inner)
        else:
            key = name.upper()
            if key not in ("BOUNDARY_CHASER", "NAIVE_REFLECTION", "FIRST_FEASIBLE"):
                raise ConfigError(f"unknown agent spec {spec!r}")
            policy = ScriptedPolicy(key)
        return AgentSet(executor=AgentBackend.scripted(policy))


@dataclass(frozen=True)
class RunConfig:
    node_budget: int = 3
    max_global_iters: int = 3
    parse_attempts: int = 3
    seed: int = 0
    run_id: Optional[str] = None

    def validated(self) -> "RunConfig":
        if self.node_budget < 1 or self.max_global_iters < 1 or self.parse_attempts < 1:
            raise ConfigError("budgets must be >= 1")
        return self


# ---------------------------------------------------------------------------
# Gradient synthesis (engine-mode reviewer)

_DIRECTION_BY_OP_LHS = {
    "<": Direction.DECREASE,
    "<=": Direction.DECREASE,
    ">": Direction.INCREASE,
    ">=": Direction.INCREASE,
}


def _fail_direction(verdict: Verdict, feasible_side: Optional[str]) -> Direction:
    # The solved boundary's feasible side is authoritative: it captures
    # non-monotone appearances of the target (e.g. a negated term on the lhs)
    # that the operator shape alone cannot.
    if feasible_side == "above":
        return Direction.INCREASE
    if feasible_side == "below":
        return Direction.DECREASE
    if verdict.target_side == "lhs" and verdict.comparison in _DIRECTION_BY_OP_LHS:
        return _DIRECTION_BY_OP_LHS[verdict.comparison]
    if verdict.target_side == "rhs" and verdict.comparison in _DIRECTION_BY_OP_LHS:
        flipped = _DIRECTION_BY_OP_LHS[verdict.comparison]
        return Direction.INCREASE if flipped is Direction.DECREASE else Direction.DECREASE
    return Direction.SET


def synthesize_gradient(
    verdicts: list[Verdict],
    boundaries: Optional[Mapping[str, float]] = None,
    sides: Optional[Mapping[str, str]] = None,
) -> AuditResult:
    """Interpret deterministic verdicts into per-dimension audit entries.

    Dimension and direction are anchored by the boolean failure and the
    solved boundary's feasible side; the magnitude is the solved boundary
    when one exists. A dimension with both PASS and FAIL verdicts stays
    unlocked (FAIL wins); two failures demanding opposite directions become
    a conflict, reported upward as a paradox candidate rather than resolved
    here.
    """
    if not verdicts:
        raise ValueError("verdict list is empty")
    boundaries = boundaries or {}
    sides = sides or {}
    by_dim: dict[str, list[Verdict]] = {}
    for v in verdicts:
        by_dim.setdefault(v.target_field or v.rule_id, []).append(v)

    entries: dict[str, AuditEntry] = {}
    conflicts: list[DimensionConflict] = []
    for dim, vs in by_dim.items():
        failing = [v for v in vs if v.status is not VerdictStatus.PASS]
        if not failing:
            entries[dim] = AuditEntry(dimension=dim, status="PASS", instruction=LOCK_INSTRUCTION)
            continue
        gradients: list[tuple[str, SemanticGradient]] = []
        for v in failing:
            direction = _fail_direction(v, sides.get(v.rule_id))
            magnitude = boundaries.get(v.rule_id)
            if magnitude is None:
                if v.target_side == "lhs":
                    magnitude = v.rhs_value
                elif v.target_side == "rhs":
                    magnitude = v.lhs_value
            gradients.append(
                (
                    v.rule_id,
                    SemanticGradient(
                        dimension=dim,
                        direction=direction,
                        magnitude=magnitude,
                        rationale=v.trace,
                    ),
                )
            )
        directions = {g.direction for _, g in gradients if g.direction is not Direction.SET}
        if len(directions) > 1:
            conflicts.append(
                DimensionConflict(
                    dimension=dim,
                    bounds=tuple(
                        (rule_id, g.direction.value, g.magnitude) for rule_id, g in gradients
                    ),
                )
            )
        primary = gradients[0][1]
        entries[dim] = AuditEntry(
            dimension=dim,
            status="FAIL",
            instruction=f"Correct {dim} per semantic gradient.",
            error_trace="; ".join(v.trace for v in failing),
            semantic_gradient=primary,
        )
    return AuditResult(entries=entries, conflicts=tuple(conflicts))


# ---------------------------------------------------------------------------
# Lock enforcement


def enforce_locks(
    previous: Mapping[str, Value],
    proposed: Mapping[str, Value],
    locks: Mapping[str, Value],
) -> tuple[dict[str, Value], list[dict]]:
    """Revert any locked field whose proposed value differs from its locked
    value; unlocked fields pass through. Violations are recorded, not fatal."""
    merged: dict[str, Value] = dict(proposed)
    violations: list[dict] = []
    for fname, locked_value in locks.items():
        if fname in merged and merged[fname] != locked_value:
            violations.append(
                {"field": fname, "attempted": merged[fname], "locked": locked_value}
            )
            merged[fname] = locked_value
    return merged, violations


# ---------------------------------------------------------------------------
# Node loop


def _evaluable_rules(rules, env: Mapping[str, Value]):
    keys = frozenset(env)
    return [r for r in rules if free_vars(r.assertion) <= keys]


def build_oracle(
    reg: HarnessRegistry,
    ctx: NodeContext,
    defaults: Mapping[str, Value],
) -> PolicyOracle:
    """Boundary and witness access for scripted policies, restricted to the
    node's visible surface (its schema fields and declared context keys)."""
    variables = {v.name: v for v in ctx.variables}
    visible = set(ctx.expected_schema) | set(ctx.facts)
    restricted_defaults = {k: v for k, v in defaults.items() if k in visible}

    def solve(fname: str) -> Optional[tuple[str, float]]:
        if fname not in variables:
            return None
        env = dict(reg.constants)
        env.update(ctx.facts)
        for rule in ctx.rules:
            if rule.target_field != fname:
                continue
            probe = probe_boundary(rule, env, fname, variables[fname])
            if probe.found:
                return (probe.feasible_side, probe.value)
        return None

    memo: dict[str, Optional[dict]] = {}

    def witness() -> Optional[Mapping[str, float]]:
        if "w" not in memo:
            result = feasible(reg)
            memo["w"] = dict(result.witness) if result.sat else None
        return memo["w"]

    return PolicyOracle(
        solve=solve, witness=witness, defaults=restricted_defaults, variables=variables
    )


def run_node(
    node: RadNode,
    ctx: NodeContext,
    executor: AgentBackend,
    budget: int = 3,
    *,
    reg: HarnessRegistry,
    oracle: PolicyOracle,
    locks: LockSet,
    seed: int = 0,
    parse_attempts: int = 3,
    incoming_audit: Optional[AuditResult] = None,
    emit: Optional[Callable[[str, dict], None]] = None,
) -> NodeResult:
    """Execute one node's propose/assert/review loop under its firewalled
    context. Exits on an all-PASS audit (fields locked) or budget exhaustion."""
    if budget < 1:
        raise ConfigError("node budget must be >= 1")
    emit = emit or (lambda kind, payload: None)
    audit = incoming_audit
    output: dict[str, Value] = {}
    variables = {v.name: v for v in ctx.variables}
    last_audit: Optional[AuditResult] = None

    for iteration in range(1, budget + 1):
        producer = lambda attempt: propose(  # noqa: E731
            executor, ctx, audit, seed, oracle, attempt
        )
        outcome: ParseOutcome = parse_with_retry(
            producer, lambda text: parse_facts(text, ctx.expected_schema), parse_attempts
        )
        if outcome.excluded:
            emit(
                "node_parse_excluded",
                {"node": node.id, "iteration": iteration, "attempts": list(outcome.attempts)},
            )
            return NodeResult(node.id, "PARSE_EXCLUDED", output, iteration, last_audit)

        merged, violations = enforce_locks(output, outcome.facts, locks.field_values())
        env: dict[str, Value] = dict(reg.constants)
        env.update(ctx.facts)
        env.update(merged)
        rules = _evaluable_rules(ctx.rules, env)
        verdicts = [assert_rule(r, env) for r in rules]

        boundaries: dict[str, float] = {}
        sides: dict[str, str] = {}
        for rule, verdict in zip(rules, verdicts):
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

        audit = synthesize_gradient(verdicts, boundaries, sides) if verdicts else None
        last_audit = audit
        emit(
            "node_iteration",
            {
                "node": node.id,
                "iteration": iteration,
                "proposal": dict(outcome.facts),
                "merged": dict(merged),
                "lock_violations": violations,
                "verdicts": [v.to_json_dict() for v in verdicts],
                "audit": audit.to_json_dict() if audit else None,
            },
        )
        output = merged
        if audit is None or audit.all_pass():
            for fname in ctx.expected_schema:
                if fname in output:
                    locks.add(node.id, fname, output[fname])
            emit("node_converged", {"node": node.id, "iterations": iteration, "output": output})
            return NodeResult(node.id, "CONVERGED", output, iteration, audit)

    emit(
        "node_failed",
        {"node": node.id, "iterations": budget, "audit": last_audit.to_json_dict() if last_audit else None},
    )
    return NodeResult(node.id, "FAILED", output, budget, last_audit)


# ---------------------------------------------------------------------------
# Pipeline


def _passing_rule_ids(verdicts: list[Verdict]) -> frozenset[str]:
    return frozenset(v.rule_id for v in verdicts if v.status is VerdictStatus.PASS)


def _blocking_failures(verdicts: list[Verdict]) -> list[Verdict]:
    return [
        v
        for v in verdicts
        if v.status is not VerdictStatus.PASS and v.severity is not Severity.WARNING
    ]


def run_pipeline(
    problem: ProblemSpec,
    reg: HarnessRegistry,
    agents: AgentSet,
    config: RunConfig = RunConfig(),
    emit_external: Optional[Callable[[TraceEvent], None]] = None,
) -> RunState:
    """Drive the full closed loop over a validated plan and registry.

    Nodes execute in topological order; after all nodes converge, the merged
    artifact faces the full rule set. All-PASS terminates in SUCCESS. On
    failure, the feasibility oracle is the paradox gate: UNSAT terminates in
    FAILED_PARADOX with the minimal unsatisfiable subset, quantified
    resolution menu and evidence package; SAT feeds a global gradient back
    for bounded repair, then EXHAUSTED.
    """
    config = config.validated()
    plan_fields: set[str] = set()
    for node in problem.plan.nodes.values():
        plan_fields |= set(node.expected_schema)
    reg_report = validate_registry(reg, extra_fields=frozenset(plan_fields))
    if not reg_report.ok:
        raise RegistryInvalid(str([str(f) for f in reg_report.findings]))
    plan_report = validate_plan(problem.plan)
    if not plan_report.ok:
        raise PlanInvalid(str(plan_report.findings))

    run_id = config.run_id or f"run-{uuid.uuid4().hex[:12]}"
    state = RunState(run_id=run_id, harness_name=reg.name, harness_version=reg.version)
    seq = {"t": 0}

    def emit(kind: str, payload: dict) -> None:
        event = TraceEvent(run_id=run_id, t=seq["t"], kind=kind, payload=payload)
        seq["t"] += 1
        state.trace.append(event)
        if emit_external:
            emit_external(event)

    def record_verified(stage: str) -> None:
        emit("verified_set", {"stage": stage, "verified": sorted(state.verified_rules)})

    emit(
        "run_start",
        {
            "problem": problem.name,
            "harness": reg.name,
            "harness_version": reg.version,
            "seed": config.seed,
        },
    )
    record_verified("initial")

    order = topo_order(problem.plan)
    emit("plan_validated", {"order": order})
    in_scope = frozenset(reg.rule_ids())
    upstream: dict[str, Value] = {}

    def paradox_exit() -> RunState:
        state.status = RunStatus.FAILED_PARADOX
        # The oracle, not agent judgment, is the paradox authority: re-check.
        oracle_result = feasible(reg)
        if oracle_result.sat:
            state.status = RunStatus.EXHAUSTED
            emit("status", {"status": state.status.value, "note": "oracle refuted paradox"})
            return state
        state.mus = minimal_unsat_subset(reg)
        state.menu = resolution_menu(state.mus, reg)
        state.evidence = evidence_package(state, state.mus, state.menu, reg)
        emit("paradox", {"mus": sorted(state.mus)})
        emit("resolution_menu", {"menu": [o.to_json_dict() for o in state.menu]})
        emit("evidence", {"text": state.evidence})
        emit("status", {"status": state.status.value, "artifact": state.artifact})
        return state

    def run_one_node(nid: str, incoming_audit: Optional[AuditResult]) -> Optional[RunState]:
        """Run a node; a non-None return is a terminal state."""
        node = problem.plan.nodes[nid]
        ctx = context_slice(problem.plan, nid, upstream, reg)
        oracle = build_oracle(reg, ctx, problem.defaults)
        emit("node_start", {"node": nid, "context_keys": sorted(ctx.facts)})
        result = run_node(
            node,
            ctx,
            agents.for_node(nid),
            config.node_budget,
            reg=reg,
            oracle=oracle,
            locks=state.locks,
            seed=config.seed,
            parse_attempts=config.parse_attempts,
            incoming_audit=incoming_audit,
            emit=emit,
        )
        state.node_retries += result.iterations - 1
        upstream.update(result.output)
        state.artifact.update(result.output)
        if result.status == "PARSE_EXCLUDED":
            state.status = RunStatus.PARSE_EXCLUDED
            emit("status", {"status": state.status.value})
            return state
        if result.status == "FAILED":
            if not feasible(reg).sat:
                return paradox_exit()
            state.status = RunStatus.EXHAUSTED
            emit("status", {"status": state.status.value, "note": f"node {nid} exhausted budget"})
            return state
        env = dict(reg.constants)
        env.update(ctx.facts)
        env.update(result.output)
        node_verdicts = [
            assert_rule(r, env) for r in _evaluable_rules(ctx.rules, env)
        ]
        state.verified_rules = state.verified_rules | _passing_rule_ids(node_verdicts)
        record_verified(f"node:{nid}")
        return None

    for nid in order:
        terminal = run_one_node(nid, None)
        if terminal is not None:
            return terminal

    field_owner: dict[str, str] = {}
    for node in problem.plan.nodes.values():
        for fname in node.expected_schema:
            field_owner[fname] = node.id

    previous_passing: frozenset[str] = frozenset()
    snapshot: dict[str, Value] = {}
    for global_iter in range(1, config.max_global_iters + 1):
        state.iteration = global_iter
        env = dict(reg.constants)
        env.update(state.artifact)
        verdicts = assert_all(reg, env)
        passing = _passing_rule_ids(verdicts)

        # Regression guard: a repair round may never un-verify a rule that a
        # previous review verified. If it tries, the offending dimensions are
        # reverted to the last reviewed artifact and re-evaluated.
        regressed = previous_passing - passing
        if regressed:
            restore = {
                rule.target_field
                for rule in reg.rules
                if rule.id in regressed and rule.target_field in snapshot
            }
            for fname in restore:
                state.artifact[fname] = snapshot[fname]
                upstream[fname] = snapshot[fname]
            emit(
                "regression_reverted",
                {
                    "iteration": global_iter,
                    "rules": sorted(regressed),
                    "restored_fields": sorted(restore),
                },
            )
            env = dict(reg.constants)
            env.update(state.artifact)
            verdicts = assert_all(reg, env)
            passing = _passing_rule_ids(verdicts)

        blocking = _blocking_failures(verdicts)
        # Record the raw passing set at global review: the monotonicity check
        # must hold because of enforcement, not bookkeeping.
        state.verified_rules = passing
        previous_passing = passing
        snapshot = dict(state.artifact)
        emit(
            "global_review",
            {
                "iteration": global_iter,
                "verdicts": [v.to_json_dict() for v in verdicts],
                "passing": sorted(passing),
                "failing": sorted(v.rule_id for v in blocking),
            },
        )
        record_verified(f"global:{global_iter}")

        if not blocking:
            state.status = RunStatus.SUCCESS
            for v in verdicts:
                fname = v.target_field
                if fname in field_owner and fname in state.artifact:
                    state.locks.add(field_owner[fname], fname, state.artifact[fname])
            emit("status", {"status": state.status.value, "artifact": state.artifact})
            return state

        fixed = {
            k: v
            for k, v in state.artifact.items()
            if k not in reg.variable_names() and any(
                k in free_vars(r.assertion) for r in reg.rules
            )
        }
        oracle_result = feasible(reg, fixed=fixed)
        if not oracle_result.sat:
            return paradox_exit()

        # Satisfiable but failing: synthesize the global gradient and re-run
        # the nodes that own failing dimensions.
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
        # Passing dimensions lock at their current artifact values. Failing
        # dimensions stay unlocked (FAIL wins): a node-stage lock on a
        # dimension the global review failed is released for repair, and the
        # release is recorded. The regression guard above keeps the verified
        # set monotone regardless of what the repair proposes.
        for dim, entry in audit.entries.items():
            owner = field_owner.get(dim)
            if owner is None or dim not in state.artifact:
                continue
            if entry.status == "PASS":
                state.locks.add(owner, dim, state.artifact[dim])
            elif (owner, dim) in state.locks:
                state.locks.release(owner, dim)
                emit(
                    "lock_released",
                    {"node": owner, "field": dim, "reason": "global review FAIL supersedes lock"},
                )
        emit("gradient", {"iteration": global_iter, "audit": audit.to_json_dict()})

        failing_dims = set(audit.failing_dimensions())
        repair_nodes = [
            nid
            for nid in order
            if set(problem.plan.nodes[nid].expected_schema) & failing_dims
        ]
        if not repair_nodes:
            state.status = RunStatus.EXHAUSTED
            emit("status", {"status": state.status.value, "note": "no node owns failing dims"})
            return state
        if global_iter == config.max_global_iters:
            break
        for nid in repair_nodes:
            terminal = run_one_node(nid, audit)
            if terminal is not None:
                return terminal

    state.status = RunStatus.EXHAUSTED
    emit("status", {"status": state.status.value, "note": "global repair budget exhausted"})
    return state


def check_monotonic(trace: list[TraceEvent]) -> bool:
    """True iff every consecutive pair of recorded verified-rule sets in the
    trace is subset-ordered."""
    previous: Optional[frozenset[str]] = None
    for event in trace:
        if event.kind != "verified_set":
            continue
        current = frozenset(event.payload.get("verified", ()))
        if previous is not None and not previous <= current:
            return False
        previous = current
    return True


def write_trace(path: str | Path, trace: list[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in trace:
            fh.write(event.to_json() + "\n")


def read_trace(path: str | Path) -> list[TraceEvent]:
    events = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        events.append(TraceEvent(raw["run_id"], raw["t"], raw["kind"], raw["payload"]))
    return events
