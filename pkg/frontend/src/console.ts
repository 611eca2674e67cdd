// Wizard-of-oz session screen: chat pane, interface pane, action composer,
// goal card and rating form. One session per screen; two seats (user and
// wizard) toggled per tab. The interface pane always shows the exact
// markdown string last returned by the gateway.

import { ApiError, GatewayClient, Rating, StatePayload } from "./api";
import {
  BOOKABLE,
  BOOKING_SLOTS,
  DOMAINS,
  SEARCH_SLOTS,
  SlotPair,
  buildBookCommand,
  buildSearchCommand,
} from "./composer";

export interface ScreenOptions {
  pollMs?: number;
}

const TEMPLATE = `
<div class="console">
  <header>
    <span id="session-label"></span>
    <label>seat
      <select id="role-select">
        <option value="wizard">wizard</option>
        <option value="user">user</option>
      </select>
    </label>
    <span id="status-line"></span>
  </header>
  <div id="error-bar" hidden></div>
  <main>
    <section class="left">
      <div id="goal-card"><h3>Goal</h3><pre id="goal-body">(none)</pre></div>
      <div id="chat-pane-wrap">
        <h3>Chat</h3>
        <ul id="chat-pane"></ul>
      </div>
      <div id="user-seat">
        <input id="user-input" placeholder="user message" />
        <button id="user-send">send as user</button>
      </div>
      <div id="wizard-chat-seat">
        <input id="agent-input" placeholder="agent reply" />
        <button id="agent-send">chat as agent</button>
      </div>
    </section>
    <section class="right">
      <h3>Interface</h3>
      <pre id="interface-pane"></pre>
      <div id="composer">
        <h3>Composer</h3>
        <label>mode
          <select id="composer-mode">
            <option value="search">search</option>
            <option value="booking">booking</option>
          </select>
        </label>
        <label>domain
          <select id="composer-domain"></select>
        </label>
        <div id="composer-slots"></div>
        <code id="composer-preview"></code>
        <button id="composer-send">send command</button>
      </div>
      <form id="rating-form">
        <h3>Rate session</h3>
        <label><input type="checkbox" id="rating-success" /> goal success</label>
        <label>coherence
          <select id="rating-coherence">
            <option value="win">win</option>
            <option value="lose">lose</option>
            <option value="tie">tie</option>
          </select>
        </label>
        <input id="rating-comparison" placeholder="compared against" />
        <textarea id="rating-notes" placeholder="notes"></textarea>
        <button id="rating-submit" type="submit">submit rating</button>
      </form>
    </section>
  </main>
</div>`;

const SLOT_ROWS = 4;

export class SessionScreen {
  readonly root: HTMLElement;
  readonly client: GatewayClient;
  readonly sessionId: string;
  lastMarkdown = "";
  locked = false;
  // Resolves when the most recent user-triggered operation settles; lets
  // scripted tests await DOM-driven clicks.
  lastOp: Promise<void> = Promise.resolve();
  private timer: ReturnType<typeof setInterval> | null = null;

  private constructor(root: HTMLElement, client: GatewayClient, sessionId: string, goal: unknown) {
    this.root = root;
    this.client = client;
    this.sessionId = sessionId;
    root.innerHTML = TEMPLATE;
    this.el<HTMLElement>("#session-label").textContent = `session ${sessionId}`;
    this.el<HTMLElement>("#goal-body").textContent = goal ? JSON.stringify(goal, null, 2) : "(none)";
    this.buildComposer();
    this.wire();
    this.setRole("wizard");
  }

  static async create(
    root: HTMLElement,
    client: GatewayClient,
    options: { sessionId?: string; goal?: unknown } & ScreenOptions = {},
  ): Promise<SessionScreen> {
    let sessionId = options.sessionId;
    let goal: unknown = options.goal ?? null;
    if (!sessionId) {
      const created = await client.createSession(options.goal);
      sessionId = created.id;
      goal = created.goal;
    } else {
      goal = (await client.log(sessionId)).goal;
    }
    const screen = new SessionScreen(root, client, sessionId, goal);
    await screen.refresh();
    if (options.pollMs && options.pollMs > 0) {
      screen.timer = setInterval(() => void screen.refresh().catch(() => undefined), options.pollMs);
    }
    return screen;
  }

  el<T extends Element>(selector: string): T {
    const found = this.root.querySelector(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found as T;
  }

  // -- rendering ------------------------------------------------------------

  render(payload: StatePayload): void {
    // Single source of truth: the pane shows the gateway's markdown verbatim.
    this.lastMarkdown = payload.markdown;
    this.el<HTMLPreElement>("#interface-pane").textContent = payload.markdown;
    const chat = this.el<HTMLUListElement>("#chat-pane");
    chat.innerHTML = "";
    for (const [speaker, text] of payload.json.chat_log) {
      const item = document.createElement("li");
      item.className = `turn ${speaker}`;
      item.textContent = `${speaker}: ${text}`;
      chat.appendChild(item);
    }
    const count = payload.json.result_count;
    const domain = payload.json.active_domain;
    this.el<HTMLElement>("#status-line").textContent = domain
      ? `${domain}: ${count} found`
      : "no active domain";
  }

  async refresh(): Promise<void> {
    this.render(await this.client.state(this.sessionId));
  }

  // -- seats ------------------------------------------------------------------

  setRole(role: "user" | "wizard"): void {
    this.el<HTMLSelectElement>("#role-select").value = role;
    this.el<HTMLElement>("#user-seat").toggleAttribute("hidden", role !== "user");
    this.el<HTMLElement>("#wizard-chat-seat").toggleAttribute("hidden", role !== "wizard");
    this.el<HTMLElement>("#composer").toggleAttribute("hidden", role !== "wizard");
  }

  // -- composer ------------------------------------------------------------------

  private buildComposer(): void {
    const domainSelect = this.el<HTMLSelectElement>("#composer-domain");
    domainSelect.innerHTML = "";
    for (const domain of DOMAINS) {
      const option = document.createElement("option");
      option.value = domain;
      option.textContent = domain;
      domainSelect.appendChild(option);
    }
    const slots = this.el<HTMLElement>("#composer-slots");
    slots.innerHTML = "";
    for (let i = 0; i < SLOT_ROWS; i++) {
      const row = document.createElement("div");
      row.className = "slot-row";
      const slotSelect = document.createElement("select");
      slotSelect.className = "slot-name";
      slotSelect.id = `slot-name-${i}`;
      const valueInput = document.createElement("input");
      valueInput.className = "slot-value";
      valueInput.id = `slot-value-${i}`;
      valueInput.placeholder = "value";
      row.appendChild(slotSelect);
      row.appendChild(valueInput);
      slots.appendChild(row);
      slotSelect.addEventListener("change", () => this.updatePreview());
      valueInput.addEventListener("input", () => this.updatePreview());
    }
    this.refreshSlotOptions();
  }

  private refreshSlotOptions(): void {
    const mode = this.el<HTMLSelectElement>("#composer-mode").value;
    const domain = this.el<HTMLSelectElement>("#composer-domain").value;
    const names =
      mode === "booking"
        ? (BOOKING_SLOTS[domain] ?? BOOKING_SLOTS.restaurant)
        : (SEARCH_SLOTS[domain as keyof typeof SEARCH_SLOTS] ?? []);
    for (const select of this.root.querySelectorAll<HTMLSelectElement>(".slot-name")) {
      const previous = select.value;
      select.innerHTML = "";
      const blank = document.createElement("option");
      blank.value = "";
      blank.textContent = "(slot)";
      select.appendChild(blank);
      for (const name of names) {
        const option = document.createElement("option");
        option.value = name;
        option.textContent = name;
        select.appendChild(option);
      }
      if (names.includes(previous)) select.value = previous;
    }
    this.updatePreview();
  }

  composerPairs(): SlotPair[] {
    const pairs: SlotPair[] = [];
    for (const row of this.root.querySelectorAll(".slot-row")) {
      const slot = (row.querySelector(".slot-name") as HTMLSelectElement).value;
      const value = (row.querySelector(".slot-value") as HTMLInputElement).value;
      if (slot) pairs.push({ slot, value });
    }
    return pairs;
  }

  composerCommand(): string | null {
    const mode = this.el<HTMLSelectElement>("#composer-mode").value;
    const domain = this.el<HTMLSelectElement>("#composer-domain").value;
    if (mode === "booking") {
      if (!BOOKABLE.has(domain)) return null;
      return buildBookCommand(this.composerPairs());
    }
    return buildSearchCommand(domain, this.composerPairs());
  }

  updatePreview(): void {
    this.el<HTMLElement>("#composer-preview").textContent = this.composerCommand() ?? "";
  }

  // -- operations ----------------------------------------------------------------

  async sendUser(text: string): Promise<void> {
    await this.guarded(async () => this.render(await this.client.userTurn(this.sessionId, text)));
  }

  async sendAgentChat(text: string): Promise<void> {
    await this.guarded(async () => this.render(await this.client.agentChat(this.sessionId, text)));
  }

  async sendCommand(command: string): Promise<void> {
    await this.guarded(async () => this.render(await this.client.command(this.sessionId, command)));
  }

  async submitRating(rating: Rating): Promise<void> {
    await this.guarded(async () => {
      await this.client.rate(this.sessionId, rating);
      this.locked = true;
      for (const control of this.root.querySelectorAll("input, select, textarea, button")) {
        (control as HTMLInputElement).disabled = true;
      }
      this.el<HTMLElement>("#status-line").textContent = "session rated and locked";
    });
  }

  private guarded(op: () => Promise<void>): Promise<void> {
    const run = async (): Promise<void> => {
      const bar = this.el<HTMLElement>("#error-bar");
      bar.hidden = true;
      this.el<HTMLElement>("#composer-preview").classList.remove("invalid");
      try {
        await op();
      } catch (error) {
        if (error instanceof ApiError) {
          bar.textContent = `gateway rejected the request: ${JSON.stringify(error.detail)}`;
          bar.hidden = false;
          if (error.status === 422) {
            this.el<HTMLElement>("#composer-preview").classList.add("invalid");
          }
          return;
        }
        throw error;
      }
    };
    this.lastOp = run();
    return this.lastOp;
  }

  // -- wiring ----------------------------------------------------------------------

  private wire(): void {
    this.el<HTMLSelectElement>("#role-select").addEventListener("change", (event) => {
      this.setRole((event.target as HTMLSelectElement).value as "user" | "wizard");
    });
    this.el<HTMLSelectElement>("#composer-mode").addEventListener("change", () => this.refreshSlotOptions());
    this.el<HTMLSelectElement>("#composer-domain").addEventListener("change", () => this.refreshSlotOptions());
    this.el<HTMLButtonElement>("#composer-send").addEventListener("click", () => {
      const command = this.composerCommand();
      if (command) void this.sendCommand(command);
    });
    this.el<HTMLButtonElement>("#user-send").addEventListener("click", () => {
      const input = this.el<HTMLInputElement>("#user-input");
      if (input.value.trim()) {
        void this.sendUser(input.value.trim());
        input.value = "";
      }
    });
    this.el<HTMLButtonElement>("#agent-send").addEventListener("click", () => {
      const input = this.el<HTMLInputElement>("#agent-input");
      if (input.value.trim()) {
        void this.sendAgentChat(input.value.trim());
        input.value = "";
      }
    });
    this.el<HTMLFormElement>("#rating-form").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitRating({
        goal_success: this.el<HTMLInputElement>("#rating-success").checked,
        coherence: this.el<HTMLSelectElement>("#rating-coherence").value as Rating["coherence"],
        comparison: this.el<HTMLInputElement>("#rating-comparison").value,
        notes: this.el<HTMLTextAreaElement>("#rating-notes").value,
      });
    });
  }

  dispose(): void {
    if (this.timer) clearInterval(this.timer);
  }
}
