// DOM builders for every page. Pure functions: state in, elements out;
// behaviour is injected through handler callbacks.

import type {
  AuditEventRecord,
  BallotResponse,
  RegisterFields,
  ResultsResponse,
} from "./api.js";
import type { Page, ViewState } from "./state.js";

type Child = Node | string;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    if (name === "class") node.className = value;
    else node.setAttribute(name, value);
  }
  for (const child of children) node.append(child);
  return node;
}

function formRow(labelText: string, input: HTMLElement): HTMLElement {
  return el("label", { class: "row" }, [labelText, input]);
}

function notice(text: string | null): HTMLElement {
  const box = el("p", { class: "notice", id: "notice" });
  if (text) box.textContent = text;
  else box.style.display = "none";
  return box;
}

export function renderNav(state: ViewState, navigate: (page: Page) => void): HTMLElement {
  const links: [Page, string][] = [
    ["home", "Home"],
    ["register", "Register"],
    ["login", "Log in"],
    ["results", "Live results"],
    ["tutorial", "Tutorial"],
  ];
  if (state.isAdmin) links.push(["admin", "Admin"]);
  const nav = el("nav", { id: "nav" });
  for (const [page, label] of links) {
    const link = el("a", { href: `#/${page}`, "data-page": page }, [label]);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      navigate(page);
    });
    nav.append(link);
  }
  return nav;
}

export function renderHome(state: ViewState, navigate: (page: Page) => void): HTMLElement {
  const start = el("button", { id: "start-voting" }, ["Start voting"]);
  start.addEventListener("click", () =>
    navigate(state.level === "anonymous" ? "login" : "otp_request"));
  return el("section", { class: "page", "data-view": "home" }, [
    el("h1", {}, ["Union election"]),
    el("p", {}, [
      "Register, get approved, and vote from wherever you are. " +
      "Voting needs your password plus a one-time code built from the " +
      "code table shown after you log in.",
    ]),
    notice(state.notice),
    start,
  ]);
}

export function renderTutorial(): HTMLElement {
  const steps = [
    "Register with your employee details and wait for the administrator's approval email.",
    "Log in with your employee ID and password, then request a one-time code.",
    "We email you three positions like R2C3 and text you the matching characters.",
    "Find each position in the 4x4 code table on screen and type the six characters.",
    "Pick at most one candidate per office and cast your ballot. You can vote exactly once.",
    "Watch the live results page for the running counts and turnout.",
  ];
  return el("section", { class: "page", "data-view": "tutorial" }, [
    el("h1", {}, ["How voting works"]),
    el("ol", {}, steps.map((step) => el("li", {}, [step]))),
  ]);
}

export interface RegisterHandlers {
  onSubmit(fields: RegisterFields): void;
}

const REGISTER_FIELDS: [keyof RegisterFields, string, string][] = [
  ["employee_id", "Employee ID", "text"],
  ["password", "Password", "password"],
  ["lastname", "Last name", "text"],
  ["firstname", "First name", "text"],
  ["college", "College", "text"],
  ["position", "Position", "text"],
  ["contact_number", "Contact number (SMS)", "text"],
  ["email", "Email address", "email"],
];

export function renderRegister(state: ViewState, handlers: RegisterHandlers): HTMLElement {
  const form = el("form", { id: "register-form" });
  const inputs = new Map<keyof RegisterFields, HTMLInputElement>();
  for (const [name, label, type] of REGISTER_FIELDS) {
    const input = el("input", { name, type, id: `reg-${name}` });
    inputs.set(name, input);
    form.append(formRow(label, input));
  }
  const submit = el("button", { type: "submit", id: "register-submit" }, ["Register"]);
  form.append(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const fields = {} as RegisterFields;
    for (const [name, input] of inputs) fields[name] = input.value;
    handlers.onSubmit(fields);
  });
  return el("section", { class: "page", "data-view": "register" }, [
    el("h1", {}, ["Voter registration"]),
    notice(state.notice),
    form,
  ]);
}

export interface LoginHandlers {
  onSubmit(employeeId: string, password: string): void;
}

export function renderLogin(state: ViewState, handlers: LoginHandlers): HTMLElement {
  const employee = el("input", { id: "login-employee", type: "text" });
  const password = el("input", { id: "login-password", type: "password" });
  const form = el("form", { id: "login-form" }, [
    formRow("Employee ID", employee),
    formRow("Password", password),
    el("button", { type: "submit", id: "login-submit" }, ["Log in"]),
  ]);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    handlers.onSubmit(employee.value, password.value);
  });
  return el("section", { class: "page", "data-view": "login" }, [
    el("h1", {}, ["Log in"]),
    notice(state.notice),
    form,
  ]);
}

export interface OtpRequestHandlers {
  onRequest(employeeId: string): void;
}

export function renderOtpRequest(state: ViewState, handlers: OtpRequestHandlers): HTMLElement {
  const employee = el("input", {
    id: "otp-employee",
    type: "text",
    value: state.employeeId ?? "",
  });
  if (state.employeeId) employee.value = state.employeeId;
  const form = el("form", { id: "otp-request-form" }, [
    formRow("Confirm your employee ID", employee),
    el("button", { type: "submit", id: "otp-request-submit" }, ["Send me a code"]),
  ]);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    handlers.onRequest(employee.value);
  });
  return el("section", { class: "page", "data-view": "otp_request" }, [
    el("h1", {}, ["Request a one-time code"]),
    el("p", {}, [
      "We will email you the table positions and text you the matching " +
      "characters. The code table itself appears on the next screen.",
    ]),
    notice(state.notice),
    form,
  ]);
}

export interface OtpEntryHandlers {
  onSubmit(code: string): void;
  onRetryTable(): void;
}

export function renderOtpEntry(state: ViewState, handlers: OtpEntryHandlers): HTMLElement {
  const page = el("section", { class: "page", "data-view": "otp_entry" }, [
    el("h1", {}, ["Your One Time Password"]),
    notice(state.notice),
  ]);

  if (!state.table) {
    const retry = el("button", { id: "table-retry" }, ["Reload code table"]);
    retry.addEventListener("click", () => handlers.onRetryTable());
    page.append(
      el("p", { class: "error" }, ["The code table could not be loaded."]),
      retry,
    );
    return page;
  }

  // 4x4 grid with 1-based row and column labels; the challenged positions
  // are only in the voter's email, never on this screen.
  const header = el("tr", {}, [el("th", {}, [""])]);
  for (let col = 1; col <= 4; col += 1) header.append(el("th", {}, [String(col)]));
  const table = el("table", { id: "otp-table" }, [header]);
  for (let row = 1; row <= 4; row += 1) {
    const tr = el("tr", {}, [el("th", {}, [String(row)])]);
    for (let col = 1; col <= 4; col += 1) {
      tr.append(el("td", {
        "data-row": String(row),
        "data-col": String(col),
      }, [state.table[(row - 1) * 4 + (col - 1)]!]));
    }
    table.append(tr);
  }

  const input = el("input", {
    id: "otp-input",
    type: "text",
    maxlength: "6",
    autocomplete: "one-time-code",
    placeholder: "6 characters",
  });
  const submit = el("button", { type: "submit", id: "otp-submit" }, ["Confirm code"]);
  submit.disabled = true;
  input.addEventListener("input", () => {
    submit.disabled = input.value.length !== 6;
  });
  const form = el("form", { id: "otp-entry-form" }, [
    formRow("Your One Time Password", input),
    submit,
  ]);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (input.value.length === 6) handlers.onSubmit(input.value);
  });

  page.append(
    el("p", {}, [
      "Find the positions from your email in this table and type the six " +
      "characters, left to right.",
    ]),
    table,
    form,
  );
  return page;
}

export interface BallotHandlers {
  onSelect(office: string, candidateId: string): void;
  onCast(): void;
}

export function renderBallot(
  state: ViewState,
  ballot: BallotResponse,
  handlers: BallotHandlers,
): HTMLElement {
  const page = el("section", { class: "page", "data-view": "ballot" }, [
    el("h1", {}, ["Cast your ballot"]),
    notice(state.notice),
  ]);

  for (const block of ballot.offices) {
    const cards = el("div", { class: "cards", "data-office": block.office });
    for (const candidate of block.candidates) {
      const selected = state.selections[block.office] === candidate.candidate_id;
      const card = el("button", {
        class: selected ? "card selected" : "card",
        "data-office": block.office,
        "data-candidate": candidate.candidate_id,
        type: "button",
      }, [
        el("img", { src: candidate.photo_ref || "placeholder.svg", alt: "" }),
        el("strong", {}, [candidate.name]),
        el("small", {}, [candidate.platform_text]),
        el("span", { class: "votes" }, [`${candidate.votes} votes`]),
      ]);
      card.addEventListener("click", () =>
        handlers.onSelect(block.office, candidate.candidate_id));
      cards.append(card);
    }
    page.append(el("h2", {}, [block.office]), cards);
  }

  const summary = el("aside", { id: "live-summary" }, [
    el("h2", {}, ["Running summary"]),
    el("p", {}, [`Turnout so far: ${(ballot.turnout * 100).toFixed(1)}%`]),
  ]);
  page.append(summary);

  const cast = el("button", { id: "cast-votes" }, ["Cast Votes"]);
  const confirmBox = el("div", { id: "cast-confirm", class: "confirm hidden" }, [
    el("p", {}, ["Casting is final: you vote exactly once. Continue?"]),
  ]);
  const confirmYes = el("button", { id: "confirm-cast" }, ["Yes, cast my ballot"]);
  const confirmNo = el("button", { id: "cancel-cast" }, ["Go back"]);
  confirmBox.append(confirmYes, confirmNo);
  cast.addEventListener("click", () => confirmBox.classList.remove("hidden"));
  confirmNo.addEventListener("click", () => confirmBox.classList.add("hidden"));
  confirmYes.addEventListener("click", () => handlers.onCast());
  page.append(cast, confirmBox);
  return page;
}

export function renderReceipt(state: ViewState): HTMLElement {
  return el("section", { class: "page", "data-view": "receipt" }, [
    el("h1", {}, ["Ballot received"]),
    el("p", {}, ["Your ballot was recorded anonymously. Keep this receipt:"]),
    el("code", { id: "receipt-id" }, [state.receiptId ?? ""]),
    el("p", {}, ["The receipt is not linked to your identity or your choices."]),
  ]);
}

export function renderAlreadyVoted(): HTMLElement {
  return el("section", { class: "page", "data-view": "already_voted" }, [
    el("h1", { id: "already-voted" }, ["You have already voted"]),
    el("p", {}, [
      "Each member casts exactly one ballot. Your earlier ballot is in the " +
      "count; the live results page shows the running totals.",
    ]),
  ]);
}

export function renderResults(results: ResultsResponse): HTMLElement {
  const names = new Map(results.candidates.map((c) => [c.candidate_id, c.name]));
  const page = el("section", { class: "page", "data-view": "results" }, [
    el("h1", {}, ["Live results"]),
    el("p", { id: "election-status" }, [`Election is ${results.election_status}.`]),
  ]);
  for (const [office, counts] of Object.entries(results.offices)) {
    const list = el("ul", { "data-office": office });
    const ordered = Object.entries(counts).sort((a, b) => b[1] - a[1]);
    for (const [candidateId, votes] of ordered) {
      list.append(el("li", { "data-candidate": candidateId }, [
        `${names.get(candidateId) ?? candidateId}: `,
        el("span", { class: "count" }, [String(votes)]),
      ]));
    }
    page.append(el("h2", {}, [office]), list);
  }
  page.append(el("p", { id: "turnout" }, [
    `Turnout: ${results.voted_count}/${results.approved_voters} ` +
    `(${(results.turnout * 100).toFixed(1)}%)`,
  ]));
  return page;
}

export interface AdminHandlers {
  onDecision(employeeId: string, decision: "approve" | "reject"): void;
  onOpen(): void;
  onClose(): void;
}

export function renderAdmin(
  state: ViewState,
  pending: string[],
  electionStatus: string,
  audit: AuditEventRecord[],
  chainValid: boolean,
  handlers: AdminHandlers,
): HTMLElement {
  const page = el("section", { class: "page", "data-view": "admin" }, [
    el("h1", {}, ["Election administration"]),
    notice(state.notice),
    el("p", { id: "admin-status" }, [`Election is ${electionStatus}.`]),
  ]);

  const controls = el("div", { id: "election-controls" });
  if (electionStatus === "setup") {
    const open = el("button", { id: "open-election" }, ["Open election"]);
    open.addEventListener("click", () => handlers.onOpen());
    controls.append(open);
  }
  if (electionStatus === "open") {
    const close = el("button", { id: "close-election" }, ["Close election"]);
    close.addEventListener("click", () => handlers.onClose());
    controls.append(close);
  }
  page.append(controls);

  const pendingList = el("ul", { id: "pending-voters" });
  for (const employeeId of pending) {
    const approve = el("button", { class: "approve", "data-employee": employeeId }, ["Approve"]);
    approve.addEventListener("click", () => handlers.onDecision(employeeId, "approve"));
    const reject = el("button", { class: "reject", "data-employee": employeeId }, ["Reject"]);
    reject.addEventListener("click", () => handlers.onDecision(employeeId, "reject"));
    pendingList.append(el("li", { "data-employee": employeeId }, [
      employeeId, " ", approve, " ", reject,
    ]));
  }
  page.append(
    el("h2", {}, [`Pending registrations (${pending.length})`]),
    pendingList,
  );

  const tail = el("ol", { id: "audit-tail" });
  for (const event of audit.slice(-50)) {
    tail.append(el("li", { "data-seq": String(event.seq) }, [
      `#${event.seq} ${event.event_type} (${event.actor})`,
    ]));
  }
  page.append(
    el("h2", {}, ["Audit trail"]),
    el("p", { id: "chain-state" }, [chainValid ? "Hash chain intact." : "HASH CHAIN BROKEN"]),
    tail,
  );
  return page;
}
