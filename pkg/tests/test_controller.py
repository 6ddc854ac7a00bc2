import random

import pytest

from lockstep.agents import AgentBackend, ScriptedPolicy
from lockstep.assets import harness_path
from lockstep.controller import (
    LOCK_INSTRUCTION,
    AgentSet,
    AuditResult,
    ConfigError,
    Direction,
    LockSet,
    RunConfig,
    RunStatus,
    TraceEvent,
    check_monotonic,
    enforce_locks,
    load_problem,
    run_pipeline,
    synthesize_gradient,
)
from lockstep.engine import assert_all, solve_boundary
from lockstep.harness import load_registry, load_registry_file

REAR = "REAR_COLLISION_PREVENTION_DECELERATION"
FWD = "FORWARD_COLLISION_PREVENTION_PERCEPTION"
V = "vehicle_speed_kmph_t5"


@pytest.fixture(scope="module")
def ad():
    return load_registry_file(harness_path("ad_paradox"))


@pytest.fixture(scope="module")
def ad_pass():
    return load_registry_file(harness_path("ad_pass"))


def ad_verdicts(reg, v):
    env = dict(reg.constants)
    env[V] = float(v)
    return assert_all(reg, env)


class TestSynthesizeGradient:
    def test_pass_fail_mix_fail_wins_no_lock(self, ad):
        verdicts = ad_verdicts(ad, 84)  # rear PASS, forward FAIL
        domain = ad.variable(V)
        boundary = solve_boundary(ad.rule(FWD), dict(ad.constants), V, domain)
        audit = synthesize_gradient(verdicts, {FWD: boundary})
        entry = audit.entries[V]
        assert entry.status == "FAIL"
        grad = entry.semantic_gradient
        assert grad.direction is Direction.DECREASE
        assert grad.magnitude == pytest.approx(55.2104, abs=1e-3)
        assert not audit.conflicts

    def test_all_pass_locks_everything(self, ad_pass):
        verdicts = ad_verdicts(ad_pass, 84)
        audit = synthesize_gradient(verdicts, {})
        assert audit.all_pass()
        assert all(e.instruction == LOCK_INSTRUCTION for e in audit.entries.values())
        assert all(e.semantic_gradient is None for e in audit.entries.values())

    def test_opposing_failures_are_a_conflict(self, ad):
        from lockstep.engine import probe_boundary

        verdicts = ad_verdicts(ad, 70)  # both FAIL with opposite half-spaces
        domain = ad.variable(V)
        boundaries, sides = {}, {}
        for rule_id in (REAR, FWD):
            probe = probe_boundary(ad.rule(rule_id), dict(ad.constants), V, domain)
            boundaries[rule_id] = probe.value
            sides[rule_id] = probe.feasible_side
        audit = synthesize_gradient(verdicts, boundaries, sides)
        assert len(audit.conflicts) == 1
        conflict = audit.conflicts[0]
        assert conflict.dimension == V
        directions = {d for _, d, _ in conflict.bounds}
        assert directions == {"INCREASE", "DECREASE"}
        magnitudes = sorted(m for _, _, m in conflict.bounds)
        assert magnitudes[0] == pytest.approx(55.2104, abs=1e-3)
        assert magnitudes[1] == pytest.approx(84.0, abs=1e-6)

    def test_empty_verdicts_rejected(self):
        with pytest.raises(ValueError):
            synthesize_gradient([])

    def test_listing_shape_serialization(self, ad):
        audit = synthesize_gradient(ad_verdicts(ad, 84), {})
        doc = audit.to_json_dict()
        assert "audit_results" in doc
        assert doc["audit_results"][V]["status"] == "FAIL"


class TestEnforceLocks:
    def test_locked_field_reverted(self):
        merged, violations = enforce_locks({}, {"x": 7.0, "y": 2.0}, {"x": 5.0})
        assert merged == {"x": 5.0, "y": 2.0}
        assert violations == [{"field": "x", "attempted": 7.0, "locked": 5.0}]

    def test_empty_locks_pass_through(self):
        merged, violations = enforce_locks({}, {"x": 7.0}, {})
        assert merged == {"x": 7.0} and violations == []

    def test_matching_value_no_violation(self):
        merged, violations = enforce_locks({}, {"x": 5.0}, {"x": 5.0})
        assert merged == {"x": 5.0} and violations == []

    def test_lockset_monotone_and_single_entry_per_field(self):
        locks = LockSet()
        locks.add("n", "x", 5.0)
        locks.add("n", "x", 5.0)  # idempotent
        assert len(locks) == 1
        from lockstep.controller import LockConflict

        with pytest.raises(LockConflict):
            locks.add("n", "x", 6.0)


class TestRunPipeline:
    def test_ad_paradox_halts_first_global_review(self, ad):
        problem = load_problem("ad_paradox")
        state = run_pipeline(problem, ad, AgentSet.from_spec("boundary_chaser"), RunConfig(seed=1))
        assert state.status is RunStatus.FAILED_PARADOX
        assert state.iteration == 1
        assert state.mus == {REAR, FWD}
        assert state.menu is not None and state.menu[0].label == "A"
        assert state.evidence and state.evidence.startswith("[SYSTEM DEADLOCK]")

    def test_ad_pass_succeeds_first_iteration_no_retries(self, ad_pass):
        problem = load_problem("ad_pass")
        state = run_pipeline(problem, ad_pass, AgentSet.from_spec("boundary_chaser"), RunConfig(seed=1))
        assert state.status is RunStatus.SUCCESS
        assert state.iteration == 1
        assert state.node_retries == 0
        assert state.artifact[V] in (84, 90)  # inside the feasible window
        assert state.verified_rules == {REAR, FWD}
        assert ("Kinematics_Node", V) in state.locks

    def test_parse_excluded_propagates(self, ad_pass):
        problem = load_problem("ad_pass")
        agents = AgentSet(
            executor=AgentSet.from_spec("boundary_chaser").executor,
            per_node={"Kinematics_Node": AgentBackend.mock(["bad", "worse", "nope"])},
        )
        state = run_pipeline(problem, ad_pass, agents, RunConfig(seed=1))
        assert state.status is RunStatus.PARSE_EXCLUDED
        kinds = [e.kind for e in state.trace]
        assert "node_parse_excluded" in kinds

    def test_zero_budget_is_config_error(self, ad):
        problem = load_problem("ad_paradox")
        with pytest.raises(ConfigError):
            run_pipeline(
                problem, ad, AgentSet.from_spec("boundary_chaser"), RunConfig(node_budget=0)
            )

    def test_global_repair_converges_constant_then_gradient(self, ad_pass):
        # An executor that starts at the cruise speed converges only through
        # the global gradient feedback loop.
        problem = load_problem("ad_pass")
        agents = AgentSet(
            executor=AgentSet.from_spec("boundary_chaser").executor,
            per_node={"Kinematics_Node": AgentBackend.scripted(ScriptedPolicy("NAIVE_REFLECTION"))},
        )
        state = run_pipeline(problem, ad_pass, agents, RunConfig(seed=1))
        # naive reflection at node level: rear passes at 120 immediately,
        # then global review fails forward, gradient feeds back, and the
        # reflection executor chases the forward boundary to 95.
        assert state.status is RunStatus.SUCCESS
        assert state.artifact[V] == 95
        assert check_monotonic(state.trace)

    def test_no_false_paradox_on_satisfiable_variant(self, ad_pass):
        problem = load_problem("ad_pass")
        for seed in range(20):
            state = run_pipeline(
                problem, ad_pass, AgentSet.from_spec("boundary_chaser"), RunConfig(seed=seed)
            )
            assert state.status is RunStatus.SUCCESS

    def test_trace_sequence_numbers_are_gap_free(self, ad):
        problem = load_problem("ad_paradox")
        state = run_pipeline(problem, ad, AgentSet.from_spec("boundary_chaser"), RunConfig(seed=2))
        assert [e.t for e in state.trace] == list(range(len(state.trace)))


class TestCheckMonotonic:
    def _event(self, t, verified):
        return TraceEvent("r", t, "verified_set", {"verified": verified})

    def test_growing_sets_pass(self):
        trace = [self._event(0, []), self._event(1, ["A"]), self._event(2, ["A", "B"])]
        assert check_monotonic(trace)

    def test_shrinking_sets_fail(self):
        trace = [self._event(0, ["A"]), self._event(1, [])]
        assert not check_monotonic(trace)

    def test_single_state_trace_is_vacuous(self):
        assert check_monotonic([self._event(0, ["A"])])
        assert check_monotonic([])


class TestAdversarialLocking:
    """An executor that keeps rewriting locked fields cannot produce a trace
    with a shrinking verified set: lock enforcement reverts the writes and
    the global regression guard restores reviewed values."""

    # x is checked at node level and locks on convergence; y faces only the
    # global review, so global repair rounds re-run the node while x is held
    # locked, giving the adversary something to attack.
    REG_YAML = """
name: synthetic window
version: "1"
constants: {low: 40.0, high: 60.0}
variables:
  - {name: x, min: 0, max: 100, resolution: 1, integer: true}
  - {name: y, min: 0, max: 100, resolution: 1, integer: true}
rules:
  - {id: LOW, target_field: x, assertion: 'x >= low', severity: CRITICAL, scope: [exec]}
  - {id: HIGH, target_field: y, assertion: 'y <= high', severity: CRITICAL, scope: [integration]}
"""

    PLAN = """
{"nodes": {"exec": {"id": "exec", "parent_id": null, "description": "pick x and y",
 "context_keys": [], "expected_schema": {"x": "int", "y": "int"}, "role_tags": ["exec"]}}}
"""

    def test_thousand_randomized_adversarial_runs(self):
        from lockstep.controller import ProblemSpec
        from lockstep.planner import plan_from_json

        reg = load_registry(self.REG_YAML)
        plan = plan_from_json(self.PLAN)
        rng = random.Random(20260808)
        violations_seen = 0
        for case in range(1000):
            problem = ProblemSpec(
                "adv", "", plan, {"x": rng.randint(0, 100), "y": rng.randint(0, 100)}
            )
            agents = AgentSet(
                executor=AgentBackend.scripted(
                    ScriptedPolicy.noisy(ScriptedPolicy.constant(rng.randint(0, 100)))
                )
            )
            state = run_pipeline(problem, reg, agents, RunConfig(seed=case))
            assert check_monotonic(state.trace), f"case {case} broke monotonicity"
            for event in state.trace:
                if event.kind == "node_iteration":
                    violations_seen += len(event.payload["lock_violations"])
                    # Reverted: merged value must equal the locked value.
                    for violation in event.payload["lock_violations"]:
                        assert (
                            event.payload["merged"][violation["field"]]
                            == violation["locked"]
                        )
        assert violations_seen > 0  # the adversary really attempted rewrites
