// Wire types mirrored from the orchestrator service payloads. The console
// computes nothing itself: every number shown comes from these payloads.

export interface RunHandle {
  run_id: string;
  created_at: string;
  status: string;
  problem: string;
  harness: string;
  harness_version: string;
  awaiting_authorization: boolean;
  degraded: boolean;
  events: number;
}

export interface TraceEvent {
  run_id: string;
  t: number;
  kind: string;
  // Payload shapes vary per kind; the reducer narrows them field by field.
  payload: Record<string, any>;
}

export interface MenuOption {
  label: string;
  kind: "REPORT_DEADLOCK" | "RELAX_PARAMETER" | "STRUCTURAL_CHANGE";
  rule_id: string | null;
  parameter: string | null;
  minimal_new_value: number | null;
  resulting_witness: Record<string, number> | null;
  impact_note: string;
}

export interface VerdictRow {
  id: string;
  status: "PASS" | "FAIL" | "ERROR";
  lhs?: number;
  rhs?: number;
  boundary?: number;
  error?: string;
}

export interface OverrideRecord {
  timestamp: string;
  actor: string;
  rule_id: string;
  parameter: string;
  old_value: number;
  new_value: number;
  justification: string;
}

export type NodeStatus = "pending" | "running" | "converged" | "failed" | "excluded";
