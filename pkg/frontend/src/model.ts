// Pure view-model reducer: trace events in, console state out. Keeping this
// free of DOM and network makes the whole run-following behavior unit
// testable and guarantees the thin-client property (no computation beyond
// reshaping service payloads).

import type { MenuOption, NodeStatus, OverrideRecord, TraceEvent, VerdictRow } from "./types.js";

export type Banner =
  | { kind: "none" }
  | { kind: "success"; text: string }
  | { kind: "paradox"; text: string }
  | { kind: "authorizing"; text: string }
  | { kind: "disconnected"; text: string };

export interface ConsoleState {
  runId: string | null;
  status: string;
  lastSeq: number;
  nodeOrder: string[];
  nodes: Record<string, NodeStatus>;
  verdicts: VerdictRow[];
  verified: string[];
  mus: string[];
  evidence: string | null;
  menu: MenuOption[] | null;
  awaiting: boolean;
  authorizing: boolean;
  override: OverrideRecord | null;
  artifact: Record<string, unknown> | null;
  banner: Banner;
  connection: "idle" | "live" | "lost";
}

export function initialState(runId: string | null = null): ConsoleState {
  return {
    runId,
    status: "RUNNING",
    lastSeq: -1,
    nodeOrder: [],
    nodes: {},
    verdicts: [],
    verified: [],
    mus: [],
    evidence: null,
    menu: null,
    awaiting: false,
    authorizing: false,
    override: null,
    artifact: null,
    banner: { kind: "none" },
    connection: "idle",
  };
}

const TERMINAL = new Set(["SUCCESS", "EXHAUSTED", "PARSE_EXCLUDED"]);

export function applyEvent(state: ConsoleState, event: TraceEvent): ConsoleState {
  const s: ConsoleState = { ...state, nodes: { ...state.nodes } };
  if (event.t <= s.lastSeq) return state; // replayed duplicate
  s.lastSeq = event.t;
  const p = event.payload;
  switch (event.kind) {
    case "run_start":
      // A continuation (post-override) re-enters here; keep menu/evidence.
      s.status = "RUNNING";
      for (const id of s.nodeOrder) s.nodes[id] = "pending";
      s.verdicts = [];
      break;
    case "plan_validated":
      s.nodeOrder = [...(p.order ?? [])];
      for (const id of s.nodeOrder) if (!(id in s.nodes)) s.nodes[id] = "pending";
      break;
    case "node_start":
      s.nodes[p.node] = "running";
      break;
    case "node_converged":
      s.nodes[p.node] = "converged";
      break;
    case "node_failed":
      s.nodes[p.node] = "failed";
      break;
    case "node_parse_excluded":
      s.nodes[p.node] = "excluded";
      break;
    case "node_iteration":
      s.verdicts = (p.verdicts ?? []) as VerdictRow[];
      break;
    case "global_review":
      s.verdicts = (p.verdicts ?? []) as VerdictRow[];
      break;
    case "verified_set":
      s.verified = [...(p.verified ?? [])];
      break;
    case "paradox":
      s.mus = [...(p.mus ?? [])];
      break;
    case "resolution_menu":
      s.menu = (p.menu ?? []) as MenuOption[];
      break;
    case "evidence":
      s.evidence = p.text ?? null;
      break;
    case "override":
      s.override = p.record as OverrideRecord;
      s.authorizing = false;
      s.awaiting = false;
      break;
    case "status":
      s.status = p.status;
      if (p.artifact !== undefined) s.artifact = p.artifact;
      if (p.status === "FAILED_PARADOX" && !s.override) {
        s.awaiting = true;
        s.banner = { kind: "paradox", text: "FAILED_PARADOX: authorization required" };
      } else if (p.status === "SUCCESS") {
        s.awaiting = false;
        s.banner = {
          kind: "success",
          text: s.override ? "SUCCESS after authorized override" : "SUCCESS",
        };
      } else if (TERMINAL.has(p.status)) {
        s.awaiting = false;
        s.banner = { kind: "none" };
      }
      break;
    default:
      break; // gradient, lock_released, regression_reverted, ...: informational
  }
  return s;
}

export function applyEvents(state: ConsoleState, events: TraceEvent[]): ConsoleState {
  return events.reduce(applyEvent, state);
}

// -- selectors ---------------------------------------------------------------

export function resolutionFormEnabled(state: ConsoleState): boolean {
  return state.awaiting && !state.authorizing && state.menu !== null;
}

export function isTerminal(state: ConsoleState): boolean {
  if (TERMINAL.has(state.status)) return true;
  // A non-awaiting deadlock is final unless an override was applied, in
  // which case the relaxed convergence loop is still streaming.
  return state.status === "FAILED_PARADOX" && !state.awaiting && state.override === null;
}

export function validateAuthorization(actor: string): string | null {
  if (!actor.trim()) return "actor is required";
  return null;
}

export function describeOverride(record: OverrideRecord): string {
  return (
    `${record.timestamp} ${record.actor}: ${record.parameter} ` +
    `${record.old_value} -> ${record.new_value} on ${record.rule_id} ` +
    `(${record.justification})`
  );
}
