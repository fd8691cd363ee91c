// Application wiring: a hash router over the page renderers, with every
// state-changing interaction mapped to exactly one API call.

import { ApiClient, ApiFailure } from "./api.js";
import type { AuditEventRecord, RegisterFields } from "./api.js";
import { clearTable, initialState, pageAllowed } from "./state.js";
import type { Page, ViewState } from "./state.js";
import {
  el,
  renderAdmin,
  renderAlreadyVoted,
  renderBallot,
  renderHome,
  renderLogin,
  renderNav,
  renderOtpEntry,
  renderOtpRequest,
  renderReceipt,
  renderRegister,
  renderResults,
  renderTutorial,
} from "./views.js";

const RESULTS_POLL_MS = 5000;

export class App {
  readonly api: ApiClient;
  readonly state: ViewState;
  private readonly root: HTMLElement;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private rendering: Promise<void> = Promise.resolve();
  private readonly pending = new Set<Promise<unknown>>();

  constructor(root: HTMLElement, baseUrl = "") {
    this.root = root;
    this.api = new ApiClient(baseUrl);
    this.state = initialState();
  }

  private track<T>(work: Promise<T>): Promise<T> {
    this.pending.add(work);
    void work.finally(() => this.pending.delete(work));
    return work;
  }

  start(): Promise<void> {
    window.addEventListener("hashchange", () => {
      const page = (window.location.hash.replace(/^#\//, "") || "home") as Page;
      void this.navigate(page);
    });
    const page = (window.location.hash.replace(/^#\//, "") || "home") as Page;
    return this.navigate(page);
  }

  /** Resolves once in-flight actions and renders have settled. */
  async idle(): Promise<void> {
    for (let round = 0; round < 50; round += 1) {
      await Promise.allSettled([...this.pending, this.rendering]);
      await new Promise((resolve) => setTimeout(resolve, 0));
      if (this.pending.size === 0) {
        await this.rendering;
        return;
      }
    }
  }

  navigate(page: Page, noticeText: string | null = null): Promise<void> {
    if (!pageAllowed(this.state, page)) {
      page = this.state.level === "anonymous" ? "login" : "home";
    }
    this.state.page = page;
    this.state.notice = noticeText;
    this.rendering = this.rendering.then(() => this.render());
    return this.rendering;
  }

  private stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private async render(): Promise<void> {
    this.stopPolling();
    const view = await this.buildView();
    this.root.replaceChildren(
      renderNav(this.state, (page) => void this.navigate(page)),
      view,
    );
  }

  private async buildView(): Promise<HTMLElement> {
    const state = this.state;
    switch (state.page) {
      case "home":
        return renderHome(state, (page) => void this.navigate(page));
      case "tutorial":
        return renderTutorial();
      case "register":
        return renderRegister(state, { onSubmit: (fields) => void this.track(this.doRegister(fields)) });
      case "login":
        return renderLogin(state, { onSubmit: (id, pw) => void this.track(this.doLogin(id, pw)) });
      case "otp_request":
        return renderOtpRequest(state, { onRequest: (id) => void this.track(this.doRequestOtp(id)) });
      case "otp_entry":
        return renderOtpEntry(state, {
          onSubmit: (code) => void this.track(this.doConfirmOtp(code)),
          onRetryTable: () => void this.track(this.doFetchTable()),
        });
      case "ballot":
        return this.buildBallot();
      case "receipt":
        return renderReceipt(state);
      case "already_voted":
        return renderAlreadyVoted();
      case "results":
        return this.buildResults();
      case "admin":
        return this.buildAdmin();
    }
  }

  // -- voter actions -------------------------------------------------------

  private async doRegister(fields: RegisterFields): Promise<void> {
    try {
      await this.api.register(fields);
      await this.navigate("login",
        "Registered. You can log in once the administrator approves you.");
    } catch (error) {
      await this.fail(error, "register");
    }
  }

  private async doLogin(employeeId: string, password: string): Promise<void> {
    try {
      const session = await this.api.login(employeeId, password);
      this.state.level = "password_only";
      this.state.employeeId = employeeId;
      this.state.isAdmin = session.is_admin;
      await this.navigate(session.is_admin ? "admin" : "otp_request");
    } catch (error) {
      await this.fail(error, "login");
    }
  }

  private async doRequestOtp(employeeId: string): Promise<void> {
    try {
      await this.api.requestOtp(employeeId);
      await this.doFetchTable();
    } catch (error) {
      await this.fail(error, "otp_request");
    }
  }

  private async doFetchTable(): Promise<void> {
    try {
      const table = await this.api.getTable();
      this.state.table = table.cells;
      this.state.tableId = table.table_id;
      await this.navigate("otp_entry",
        "Check your email for the positions and your phone for the values.");
    } catch {
      // Retry affordance: otp_entry renders a reload button without a table.
      clearTable(this.state);
      await this.navigate("otp_entry", "Could not load the code table.");
    }
  }

  private async doConfirmOtp(code: string): Promise<void> {
    try {
      await this.api.confirmOtp(code);
      this.state.level = "otp_verified";
      await this.navigate("ballot");
    } catch (error) {
      await this.fail(error, "otp_entry");
    } finally {
      // The table is single-purpose; drop it as soon as the challenge is
      // spent either way.
      clearTable(this.state);
    }
  }

  private async buildBallot(): Promise<HTMLElement> {
    try {
      const ballot = await this.api.getBallot();
      const view = renderBallot(this.state, ballot, {
        onSelect: (office, candidateId) => {
          // Radio semantics: a second pick in the same office replaces the
          // first.
          this.state.selections[office] = candidateId;
          void this.navigate("ballot");
        },
        onCast: () => void this.track(this.doCast()),
      });
      this.pollTimer = setInterval(() => void this.refreshSummary(view), RESULTS_POLL_MS);
      return view;
    } catch (error) {
      return this.errorView(error);
    }
  }

  private async refreshSummary(view: HTMLElement): Promise<void> {
    try {
      const results = await this.api.getResults();
      const summary = view.querySelector("#live-summary p");
      if (summary) {
        summary.textContent = `Turnout so far: ${(results.turnout * 100).toFixed(1)}%`;
      }
    } catch {
      // Polling is best effort; the next tick retries.
    }
  }

  private async doCast(): Promise<void> {
    try {
      const receipt = await this.api.castVotes(this.state.selections);
      this.state.receiptId = receipt.receipt_id;
      this.state.level = "password_only";
      this.state.selections = {};
      await this.navigate("receipt");
    } catch (error) {
      if (error instanceof ApiFailure && error.code === "already_voted") {
        this.state.level = "password_only";
        await this.navigate("already_voted");
        return;
      }
      await this.fail(error, "ballot");
    }
  }

  private async buildResults(): Promise<HTMLElement> {
    try {
      const results = await this.api.getResults();
      const view = renderResults(results);
      this.pollTimer = setInterval(() => void this.reloadResults(), RESULTS_POLL_MS);
      return view;
    } catch (error) {
      return this.errorView(error);
    }
  }

  private async reloadResults(): Promise<void> {
    if (this.state.page !== "results") {
      this.stopPolling();
      return;
    }
    await this.navigate("results");
  }

  // -- admin actions -----------------------------------------------------------

  private async buildAdmin(): Promise<HTMLElement> {
    try {
      const [audit, results] = await Promise.all([
        this.api.getAudit(),
        this.api.getResults(),
      ]);
      const pending = pendingFromAudit(audit.events);
      return renderAdmin(this.state, pending, results.election_status,
        audit.events, audit.chain_valid, {
          onDecision: (employeeId, decision) => void this.track(this.doDecide(employeeId, decision)),
          onOpen: () => void this.track(this.doTransition("open")),
          onClose: () => void this.track(this.doTransition("close")),
        });
    } catch (error) {
      return this.errorView(error);
    }
  }

  private async doDecide(employeeId: string, decision: "approve" | "reject"): Promise<void> {
    try {
      await this.api.approve(employeeId, decision);
      await this.navigate("admin", `${employeeId}: ${decision}d`);
    } catch (error) {
      await this.fail(error, "admin");
    }
  }

  private async doTransition(action: "open" | "close"): Promise<void> {
    try {
      if (action === "open") await this.api.openElection();
      else await this.api.closeElection();
      await this.navigate("admin", `Election ${action}ed.`);
    } catch (error) {
      await this.fail(error, "admin");
    }
  }

  // -- shared -----------------------------------------------------------------

  private async fail(error: unknown, stayOn: Page): Promise<void> {
    if (error instanceof ApiFailure) {
      if (error.status === 401 && error.code === "unauthorized") {
        // Session gone: back to login.
        this.state.level = "anonymous";
        this.state.isAdmin = false;
        this.api.token = null;
        await this.navigate("login", "Your session ended. Log in again.");
        return;
      }
      if (error.code === "already_voted") {
        await this.navigate("already_voted");
        return;
      }
      await this.navigate(stayOn, error.message);
      return;
    }
    await this.navigate(stayOn, "Something went wrong. Try again.");
  }

  private errorView(error: unknown): HTMLElement {
    const message = error instanceof ApiFailure ? error.message : "unexpected error";
    return el("section", { class: "page", "data-view": "error" }, [
      el("p", { class: "error" }, [message]),
    ]);
  }
}

/**
 * Pending registrations derived from the audit tail: everyone with a
 * `registered` event and no `approved`/`rejected` decision yet. Event actors
 * name the voter the event concerns, so no extra API surface is needed.
 */
export function pendingFromAudit(events: AuditEventRecord[]): string[] {
  const pending: string[] = [];
  const decided = new Set<string>();
  for (const event of events) {
    if (event.event_type === "approved" || event.event_type === "rejected") {
      decided.add(event.actor);
    }
  }
  for (const event of events) {
    if (event.event_type === "registered" && !decided.has(event.actor)
        && !pending.includes(event.actor)) {
      pending.push(event.actor);
    }
  }
  return pending;
}

export function mount(rootId = "app", baseUrl = ""): App {
  const root = document.getElementById(rootId);
  if (!root) throw new Error(`no #${rootId} element to mount on`);
  const app = new App(root, baseUrl);
  void app.start();
  return app;
}

declare global {
  interface Window {
    votegrid?: App;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) window.votegrid = mount("app", root.dataset.apiBase ?? "");
}
