// DOM rendering. Read-only visualization plus the one interactive surface:
// the resolution authorization form.

import type { ConsoleState } from "./model.js";
import { describeOverride, resolutionFormEnabled } from "./model.js";
import type { RunHandle } from "./types.js";

function el(doc: Document, tag: string, className?: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderRunList(
  doc: Document,
  container: HTMLElement,
  runs: RunHandle[],
  selected: string | null,
  onSelect: (runId: string) => void,
): void {
  container.textContent = "";
  for (const run of runs) {
    const item = el(doc, "button", `run-item status-${run.status.toLowerCase()}`);
    item.setAttribute("data-run-id", run.run_id);
    if (run.run_id === selected) item.classList.add("selected");
    item.appendChild(el(doc, "span", "run-id", run.run_id));
    item.appendChild(el(doc, "span", "run-status", run.status));
    if (run.awaiting_authorization) {
      item.appendChild(el(doc, "span", "awaiting-chip", "awaiting authorization"));
    }
    item.addEventListener("click", () => onSelect(run.run_id));
    container.appendChild(item);
  }
}

export function renderBanner(doc: Document, container: HTMLElement, state: ConsoleState): void {
  container.textContent = "";
  container.className = "banner";
  if (state.connection === "lost") {
    container.classList.add("banner-disconnected");
    container.appendChild(el(doc, "span", undefined, "connection lost, retrying..."));
    return;
  }
  if (state.authorizing) {
    container.classList.add("banner-authorizing");
    container.appendChild(el(doc, "span", undefined, "authorizing..."));
    return;
  }
  if (state.banner.kind === "none") return;
  container.classList.add(`banner-${state.banner.kind}`);
  container.appendChild(el(doc, "span", undefined, state.banner.text));
}

export function renderDag(doc: Document, container: HTMLElement, state: ConsoleState): void {
  container.textContent = "";
  for (const nodeId of state.nodeOrder) {
    const badge = el(doc, "div", `node-badge node-${state.nodes[nodeId] ?? "pending"}`);
    badge.setAttribute("data-node", nodeId);
    badge.appendChild(el(doc, "span", "node-name", nodeId));
    badge.appendChild(el(doc, "span", "node-status", state.nodes[nodeId] ?? "pending"));
    container.appendChild(badge);
  }
}

export function renderVerdicts(doc: Document, container: HTMLElement, state: ConsoleState): void {
  container.textContent = "";
  const table = el(doc, "table", "verdict-table");
  const head = el(doc, "tr");
  for (const title of ["rule", "status", "lhs", "rhs", "boundary"]) {
    head.appendChild(el(doc, "th", undefined, title));
  }
  table.appendChild(head);
  for (const verdict of state.verdicts) {
    const row = el(doc, "tr", `verdict-${verdict.status.toLowerCase()}`);
    row.setAttribute("data-rule", verdict.id);
    row.appendChild(el(doc, "td", undefined, verdict.id));
    row.appendChild(el(doc, "td", undefined, verdict.status));
    row.appendChild(el(doc, "td", undefined, verdict.lhs !== undefined ? String(verdict.lhs) : ""));
    row.appendChild(el(doc, "td", undefined, verdict.rhs !== undefined ? String(verdict.rhs) : ""));
    row.appendChild(
      el(doc, "td", undefined, verdict.boundary !== undefined ? String(verdict.boundary) : ""),
    );
    table.appendChild(row);
  }
  container.appendChild(table);
}

export function renderParadoxPanel(doc: Document, container: HTMLElement, state: ConsoleState): void {
  container.textContent = "";
  if (state.mus.length === 0 && !state.evidence) return;
  const chips = el(doc, "div", "mus-chips");
  for (const ruleId of state.mus) {
    chips.appendChild(el(doc, "span", "mus-chip", ruleId));
  }
  container.appendChild(chips);
  if (state.evidence) {
    const pre = el(doc, "pre", "evidence-text");
    pre.textContent = state.evidence;
    container.appendChild(pre);
  }
}

export interface FormHandlers {
  onAuthorize(optionLabel: string, actor: string, justification: string): void;
}

export function renderResolutionForm(
  doc: Document,
  container: HTMLElement,
  state: ConsoleState,
  handlers: FormHandlers,
  inlineError: string | null,
): void {
  const previousActor =
    (container.querySelector("input[name=actor]") as HTMLInputElement | null)?.value ?? "";
  const previousJustification =
    (container.querySelector("textarea[name=justification]") as HTMLTextAreaElement | null)
      ?.value ?? "";
  const previousOption =
    (container.querySelector("input[name=option]:checked") as HTMLInputElement | null)?.value ??
    null;

  container.textContent = "";
  const enabled = resolutionFormEnabled(state);
  const form = el(doc, "form", "resolution-form") as HTMLFormElement;
  form.setAttribute("data-enabled", String(enabled));

  const options = el(doc, "div", "resolution-options");
  for (const option of state.menu ?? []) {
    const row = el(doc, "label", "resolution-option");
    const radio = doc.createElement("input");
    radio.type = "radio";
    radio.name = "option";
    radio.value = option.label;
    radio.disabled = !enabled;
    if (option.label === previousOption) radio.checked = true;
    row.appendChild(radio);
    row.appendChild(el(doc, "span", "option-label", `[${option.label}]`));
    row.appendChild(el(doc, "span", "option-note", option.impact_note));
    options.appendChild(row);
  }
  form.appendChild(options);

  const actor = doc.createElement("input");
  actor.type = "text";
  actor.name = "actor";
  actor.placeholder = "actor";
  actor.value = previousActor;
  actor.disabled = !enabled;
  form.appendChild(actor);

  const justification = doc.createElement("textarea");
  justification.name = "justification";
  justification.placeholder = "justification";
  justification.value = previousJustification;
  justification.disabled = !enabled;
  form.appendChild(justification);

  const submit = doc.createElement("button");
  submit.type = "submit";
  submit.textContent = "Authorize";
  submit.disabled = !enabled;
  form.appendChild(submit);

  const error = el(doc, "div", "form-error", inlineError ?? "");
  form.appendChild(error);

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const chosen = form.querySelector("input[name=option]:checked") as HTMLInputElement | null;
    handlers.onAuthorize(chosen?.value ?? "", actor.value, justification.value);
  });
  container.appendChild(form);

  if (state.override) {
    container.appendChild(el(doc, "div", "audit-line", describeOverride(state.override)));
  }
}
