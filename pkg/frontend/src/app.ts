/** Session UI wiring: upload, ask, review, override. One question in flight. */

import { ApiClient, ApiError } from "./api.js";
import type { OverrideRequest, SessionPayload } from "./types.js";
import {
  renderCaptionPanel,
  renderErrorPlaceholder,
  renderExchange,
} from "./view.js";

interface AppState {
  sessionId: string | null;
  inFlight: boolean;
  /** caption_recomputed flags for exchanges asked in this tab, by index. */
  recomputedByIndex: Map<number, boolean>;
  history: { session_id: string; image: string }[];
}

export class SessionApp {
  private readonly state: AppState = {
    sessionId: null,
    inFlight: false,
    recomputedByIndex: new Map(),
    history: [],
  };

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
  ) {}

  mount(): void {
    this.root.innerHTML = "";
    this.root.append(this.buildChrome());
    this.renderHistory();
  }

  private query<T extends HTMLElement>(selector: string): T {
    const node = this.root.querySelector<T>(selector);
    if (!node) throw new Error(`missing UI node ${selector}`);
    return node;
  }

  private buildChrome(): HTMLElement {
    const wrap = document.createElement("div");
    wrap.innerHTML = `
      <header>
        <h1>Diagnostic session console</h1>
      </header>
      <section class="start-panel" data-testid="start-panel">
        <h2>New session</h2>
        <form data-testid="start-form">
          <input type="file" name="image-file" data-testid="image-file" accept="image/*" />
          <input type="text" name="image-path" data-testid="image-path"
                 placeholder="...or a server-side image path" />
          <button type="submit" data-testid="start-button">Start session</button>
        </form>
        <div class="inline-error" data-testid="start-error" hidden></div>
        <ul class="session-history" data-testid="session-history"></ul>
      </section>
      <main data-testid="session-view" hidden>
        <div data-testid="caption-slot"></div>
        <form class="ask-form" data-testid="ask-form">
          <input type="text" name="question" data-testid="question-input"
                 placeholder="Ask about this image" />
          <button type="submit" data-testid="ask-button">Ask</button>
        </form>
        <div class="inline-error" data-testid="ask-error" hidden></div>
        <div data-testid="exchange-list"></div>
      </main>
    `;
    const startForm = wrap.querySelector<HTMLFormElement>("[data-testid=start-form]")!;
    startForm.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.startSession();
    });
    const askForm = wrap.querySelector<HTMLFormElement>("[data-testid=ask-form]")!;
    askForm.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.ask();
    });
    return wrap;
  }

  // -- session lifecycle ----------------------------------------------------

  async startSession(): Promise<void> {
    const fileInput = this.query<HTMLInputElement>("[data-testid=image-file]");
    const pathInput = this.query<HTMLInputElement>("[data-testid=image-path]");
    const errorBox = this.query<HTMLElement>("[data-testid=start-error]");
    errorBox.hidden = true;
    try {
      const file = fileInput.files?.[0];
      const created = file
        ? await this.client.createSessionFromFile(file)
        : await this.client.createSessionFromPath(pathInput.value.trim());
      this.state.sessionId = created.session_id;
      this.state.recomputedByIndex = new Map();
      this.state.history.push(created);
      this.renderHistory();
      await this.refresh();
      this.query<HTMLElement>("[data-testid=session-view]").hidden = false;
    } catch (error) {
      // Upload rejection stays inline; the form is untouched for retry.
      errorBox.textContent =
        error instanceof ApiError ? error.detail : String(error);
      errorBox.hidden = false;
    }
  }

  async openSession(sessionId: string): Promise<void> {
    this.state.sessionId = sessionId;
    this.state.recomputedByIndex = new Map();
    await this.refresh();
    this.query<HTMLElement>("[data-testid=session-view]").hidden = false;
  }

  async ask(): Promise<void> {
    if (this.state.inFlight || !this.state.sessionId) return;
    const input = this.query<HTMLInputElement>("[data-testid=question-input]");
    const button = this.query<HTMLButtonElement>("[data-testid=ask-button]");
    const errorBox = this.query<HTMLElement>("[data-testid=ask-error]");
    const question = input.value.trim();
    if (!question) return;
    this.state.inFlight = true;
    button.disabled = true;
    errorBox.hidden = true;
    try {
      const response = await this.client.ask(this.state.sessionId, question);
      this.state.recomputedByIndex.set(response.index, response.caption_recomputed);
      input.value = "";
      await this.refresh();
    } catch (error) {
      errorBox.textContent =
        error instanceof ApiError
          ? `Stage failure: ${error.detail}. Partial record shown below.`
          : String(error);
      errorBox.hidden = false;
      await this.refresh(); // show whatever the backend persisted
    } finally {
      this.state.inFlight = false;
      button.disabled = false;
    }
  }

  async applyOverride(index: number, override: OverrideRequest): Promise<void> {
    if (!this.state.sessionId) return;
    await this.client.recordOverride(this.state.sessionId, index, override);
    await this.refresh();
  }

  /** Re-fetch the session and re-render; the API is the source of truth. */
  async refresh(): Promise<void> {
    if (!this.state.sessionId) return;
    const session = await this.client.getSession(this.state.sessionId);
    this.renderSession(session);
  }

  // -- rendering ---------------------------------------------------------------

  private renderHistory(): void {
    const list = this.query<HTMLUListElement>("[data-testid=session-history]");
    list.innerHTML = "";
    for (const entry of this.state.history) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = "#";
      link.textContent = `${entry.session_id} (${entry.image})`;
      link.addEventListener("click", (event) => {
        event.preventDefault();
        void this.openSession(entry.session_id);
      });
      item.append(link);
      list.append(item);
    }
  }

  private renderSession(session: SessionPayload): void {
    const captionSlot = this.query<HTMLElement>("[data-testid=caption-slot]");
    captionSlot.innerHTML = "";
    if (session.caption_trace) {
      const accepted = session.caption_trace.iterations[session.caption_trace.accepted_index];
      captionSlot.append(
        renderCaptionPanel({
          caption: accepted.caption,
          score: accepted.assessment.aggregate,
          dimensionScores: accepted.assessment.dimension_scores,
          trace: session.caption_trace,
        }),
      );
    } else {
      captionSlot.append(
        renderErrorPlaceholder(
          "Caption pending - it is refined when the first question is asked.",
        ),
      );
    }

    const list = this.query<HTMLElement>("[data-testid=exchange-list]");
    list.innerHTML = "";
    session.exchanges.forEach((exchange, index) => {
      const rendered = renderExchange(exchange, {
        index,
        captionRecomputed: this.state.recomputedByIndex.get(index) ?? null,
      });
      rendered.append(this.buildOverrideForm(index));
      list.append(rendered);
    });
  }

  private buildOverrideForm(index: number): HTMLElement {
    const form = document.createElement("form");
    form.className = "override-form";
    form.dataset.testid = "override-form";
    form.innerHTML = `
      <fieldset>
        <legend>Accept or override</legend>
        <label><input type="radio" name="chosen" value="answer1" checked /> Answer 1</label>
        <label><input type="radio" name="chosen" value="answer2" /> Answer 2</label>
        <label><input type="radio" name="chosen" value="external" /> External</label>
        <input type="text" name="text" placeholder="Replacement answer (external only)" />
        <input type="text" name="note" placeholder="Why are you overriding?" />
        <button type="submit">Record override</button>
      </fieldset>
    `;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const data = new FormData(form);
      const chosen = data.get("chosen") as OverrideRequest["chosen"];
      const text = (data.get("text") as string) || undefined;
      const note = (data.get("note") as string) || "";
      void this.applyOverride(index, { chosen, text, note });
    });
    return form;
  }
}

export function bootstrap(rootId = "app", baseUrl = ""): SessionApp {
  const root = document.getElementById(rootId);
  if (!root) throw new Error(`no element with id ${rootId}`);
  const app = new SessionApp(root, new ApiClient(baseUrl));
  app.mount();
  return app;
}
