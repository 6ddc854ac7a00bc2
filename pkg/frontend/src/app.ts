// Console controller: glues the API client, the event-stream reducer and the
// DOM renderers. Exported as a factory so the scripted browser session in
// the tests can drive exactly the code the bundle ships.

import { Api, streamEvents, type FetchLike, type Subscription } from "./api.js";
import {
  applyEvent,
  initialState,
  isTerminal,
  validateAuthorization,
  type ConsoleState,
} from "./model.js";
import {
  renderBanner,
  renderDag,
  renderParadoxPanel,
  renderResolutionForm,
  renderRunList,
  renderVerdicts,
} from "./view.js";
import type { RunHandle } from "./types.js";

export interface ConsoleElements {
  runList: HTMLElement;
  banner: HTMLElement;
  dag: HTMLElement;
  verdicts: HTMLElement;
  paradox: HTMLElement;
  resolution: HTMLElement;
}

export interface ConsoleOptions {
  base: string;
  fetchImpl?: FetchLike;
  pollMs?: number;
}

export class Console {
  state: ConsoleState = initialState();
  runs: RunHandle[] = [];
  private api: Api;
  private fetchImpl: FetchLike;
  private subscription: Subscription | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private inlineError: string | null = null;

  constructor(
    private doc: Document,
    private els: ConsoleElements,
    private opts: ConsoleOptions,
  ) {
    this.fetchImpl = opts.fetchImpl ?? fetch;
    this.api = new Api(opts.base, this.fetchImpl);
  }

  start(): void {
    void this.refreshRuns();
    this.pollTimer = setInterval(() => void this.refreshRuns(), this.opts.pollMs ?? 2000);
  }

  stop(): void {
    if (this.pollTimer) clearInterval(this.pollTimer);
    this.subscription?.stop();
  }

  async refreshRuns(): Promise<void> {
    try {
      const { body } = await this.api.listRuns();
      this.runs = body;
      this.render();
    } catch {
      // listing failures surface through the connection banner on the
      // subscribed run; the list simply stays stale
    }
  }

  select(runId: string): void {
    this.subscription?.stop();
    this.state = initialState(runId);
    this.inlineError = null;
    this.render();
    this.subscription = streamEvents(
      this.opts.base,
      runId,
      {
        onEvent: (event) => {
          this.state = applyEvent(this.state, event);
          this.render();
        },
        onConnection: (connection) => {
          if (this.state.connection !== connection) {
            this.state = { ...this.state, connection };
            this.render();
          }
        },
        isDone: () => isTerminal(this.state),
      },
      this.fetchImpl,
    );
  }

  async authorize(optionLabel: string, actor: string, justification: string): Promise<void> {
    const validation = validateAuthorization(actor);
    if (validation) {
      this.inlineError = validation;
      this.render();
      return; // inline validation: no request leaves the console
    }
    if (!optionLabel) {
      this.inlineError = "select a resolution option";
      this.render();
      return;
    }
    this.inlineError = null;
    this.state = { ...this.state, authorizing: true };
    this.render();
    const runId = this.state.runId;
    if (!runId) return;
    const { status, body } = await this.api.postResolution(runId, {
      option_label: optionLabel,
      actor,
      justification,
    });
    if (status === 202) {
      // stay optimistic: the override event will clear `authorizing`
      return;
    }
    // 409/422 surface inline without losing form input
    this.state = { ...this.state, authorizing: false };
    this.inlineError = `${status}: ${(body as any)?.error ?? "request rejected"}`;
    this.render();
  }

  render(): void {
    renderRunList(this.doc, this.els.runList, this.runs, this.state.runId, (id) =>
      this.select(id),
    );
    renderBanner(this.doc, this.els.banner, this.state);
    renderDag(this.doc, this.els.dag, this.state);
    renderVerdicts(this.doc, this.els.verdicts, this.state);
    renderParadoxPanel(this.doc, this.els.paradox, this.state);
    renderResolutionForm(this.doc, this.els.resolution, this.state, {
      onAuthorize: (label, actor, justification) =>
        void this.authorize(label, actor, justification),
    }, this.inlineError);
  }
}

export function createConsole(doc: Document, opts: ConsoleOptions): Console {
  const byId = (id: string): HTMLElement => {
    const node = doc.getElementById(id);
    if (!node) throw new Error(`missing container #${id}`);
    return node;
  };
  return new Console(
    doc,
    {
      runList: byId("run-list"),
      banner: byId("banner"),
      dag: byId("dag"),
      verdicts: byId("verdicts"),
      paradox: byId("paradox"),
      resolution: byId("resolution"),
    },
    opts,
  );
}
