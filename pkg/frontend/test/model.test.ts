import assert from "node:assert/strict";
import { test } from "node:test";

import {
  applyEvent,
  applyEvents,
  describeOverride,
  initialState,
  isTerminal,
  resolutionFormEnabled,
  validateAuthorization,
} from "../src/model.js";
import type { TraceEvent } from "../src/types.js";

let seq = 0;
function ev(kind: string, payload: Record<string, any>): TraceEvent {
  return { run_id: "r1", t: seq++, kind, payload };
}

function paradoxSequence(): TraceEvent[] {
  seq = 0;
  return [
    ev("run_start", { problem: "ad_paradox", harness: "ad", seed: 0 }),
    ev("verified_set", { stage: "initial", verified: [] }),
    ev("plan_validated", { order: ["Vision_Node", "Kinematics_Node"] }),
    ev("node_start", { node: "Vision_Node", context_keys: [] }),
    ev("node_converged", { node: "Vision_Node", iterations: 1, output: {} }),
    ev("node_start", { node: "Kinematics_Node", context_keys: ["perception_range_m"] }),
    ev("node_converged", { node: "Kinematics_Node", iterations: 1, output: {} }),
    ev("global_review", {
      iteration: 1,
      verdicts: [
        { id: "REAR", status: "PASS", lhs: 2.0, rhs: 2.0 },
        { id: "FWD", status: "FAIL", lhs: 69.44, rhs: 30.0, error: "trace" },
      ],
      passing: ["REAR"],
      failing: ["FWD"],
    }),
    ev("paradox", { mus: ["FWD", "REAR"] }),
    ev("resolution_menu", {
      menu: [
        { label: "A", kind: "REPORT_DEADLOCK", rule_id: null, parameter: null,
          minimal_new_value: null, resulting_witness: null, impact_note: "report" },
        { label: "B", kind: "RELAX_PARAMETER", rule_id: "REAR",
          parameter: "max_deceleration_limit", minimal_new_value: 3.6112,
          resulting_witness: { vehicle_speed_kmph_t5: 55 }, impact_note: "relax" },
      ],
    }),
    ev("evidence", { text: "[SYSTEM DEADLOCK] Formal Paradox Report\n..." }),
    ev("status", { status: "FAILED_PARADOX", artifact: { vehicle_speed_kmph_t5: 84 } }),
  ];
}

test("paradox sequence drives badges, table, panel and form enablement", () => {
  const state = applyEvents(initialState("r1"), paradoxSequence());
  assert.equal(state.status, "FAILED_PARADOX");
  assert.deepEqual(state.nodes, {
    Vision_Node: "converged",
    Kinematics_Node: "converged",
  });
  assert.equal(state.verdicts.length, 2);
  assert.equal(state.verdicts[1].status, "FAIL");
  assert.deepEqual(state.mus, ["FWD", "REAR"]);
  assert.ok(state.evidence?.startsWith("[SYSTEM DEADLOCK]"));
  assert.equal(state.awaiting, true);
  assert.equal(resolutionFormEnabled(state), true);
  assert.equal(isTerminal(state), false); // awaiting authorization keeps it live
  assert.equal(state.banner.kind, "paradox");
});

test("override then SUCCESS closes the loop with a success banner", () => {
  let state = applyEvents(initialState("r1"), paradoxSequence());
  state = applyEvents(state, [
    ev("override", {
      record: {
        timestamp: "2026-08-08T00:00:00+00:00",
        actor: "lead-engineer",
        rule_id: "REAR",
        parameter: "max_deceleration_limit",
        old_value: 2.0,
        new_value: 3.6112,
        justification: "comfort trade-off",
      },
    }),
    ev("run_start", { problem: "ad_paradox", harness: "ad", seed: 0 }),
    ev("global_review", {
      iteration: 1,
      verdicts: [
        { id: "REAR", status: "PASS" },
        { id: "FWD", status: "PASS" },
      ],
      passing: ["FWD", "REAR"],
      failing: [],
    }),
    ev("status", { status: "SUCCESS", artifact: { vehicle_speed_kmph_t5: 55 } }),
  ]);
  assert.equal(state.status, "SUCCESS");
  assert.equal(state.awaiting, false);
  assert.equal(state.authorizing, false);
  assert.equal(resolutionFormEnabled(state), false);
  assert.equal(state.banner.kind, "success");
  assert.match(describeOverride(state.override!), /max_deceleration_limit 2 -> 3.6112/);
  assert.equal(state.artifact?.vehicle_speed_kmph_t5, 55);
  assert.equal(isTerminal(state), true);
});

test("duplicate events from a reconnect replay are ignored", () => {
  const events = paradoxSequence();
  const once = applyEvents(initialState("r1"), events);
  const twice = applyEvents(once, events); // same sequence numbers again
  assert.deepEqual(twice, once);
});

test("pass-path run shows success without any paradox panel", () => {
  seq = 0;
  const state = applyEvents(initialState("r2"), [
    ev("run_start", {}),
    ev("plan_validated", { order: ["Vision_Node", "Kinematics_Node"] }),
    ev("node_converged", { node: "Vision_Node" }),
    ev("node_converged", { node: "Kinematics_Node" }),
    ev("verified_set", { stage: "global:1", verified: ["FWD", "REAR"] }),
    ev("status", { status: "SUCCESS", artifact: { vehicle_speed_kmph_t5: 84 } }),
  ]);
  assert.equal(state.banner.kind, "success");
  assert.deepEqual(state.mus, []);
  assert.equal(state.menu, null);
  assert.deepEqual(state.verified, ["FWD", "REAR"]);
  assert.equal(resolutionFormEnabled(state), false);
});

test("unknown event kinds are informational", () => {
  seq = 0;
  const base = applyEvent(initialState("r3"), ev("run_start", {}));
  const after = applyEvent(base, ev("lock_released", { node: "n", field: "x" }));
  assert.equal(after.status, base.status);
});

test("authorization validation rejects empty actor", () => {
  assert.equal(validateAuthorization("  "), "actor is required");
  assert.equal(validateAuthorization("lead-engineer"), null);
});
