// In-memory view state. Nothing here is ever written to persistent storage:
// the session token and the cached code table live and die with the tab, and
// challenge coordinates never reach the client at all (they go by email).

export type Page =
  | "home"
  | "register"
  | "login"
  | "otp_request"
  | "otp_entry"
  | "ballot"
  | "receipt"
  | "results"
  | "tutorial"
  | "admin"
  | "already_voted";

export type SessionLevel = "anonymous" | "password_only" | "otp_verified";

export interface ViewState {
  page: Page;
  level: SessionLevel;
  employeeId: string | null;
  isAdmin: boolean;
  table: string[] | null;
  tableId: string | null;
  selections: Record<string, string>;
  receiptId: string | null;
  notice: string | null;
}

export function initialState(): ViewState {
  return {
    page: "home",
    level: "anonymous",
    employeeId: null,
    isAdmin: false,
    table: null,
    tableId: null,
    selections: {},
    receiptId: null,
    notice: null,
  };
}

// Pages a session level may reach; anything else falls back to login.
const PAGE_GUARDS: Record<Page, SessionLevel[]> = {
  home: ["anonymous", "password_only", "otp_verified"],
  register: ["anonymous", "password_only", "otp_verified"],
  login: ["anonymous", "password_only", "otp_verified"],
  tutorial: ["anonymous", "password_only", "otp_verified"],
  results: ["anonymous", "password_only", "otp_verified"],
  otp_request: ["password_only", "otp_verified"],
  otp_entry: ["password_only"],
  ballot: ["otp_verified"],
  receipt: ["password_only", "otp_verified"],
  already_voted: ["anonymous", "password_only", "otp_verified"],
  admin: ["password_only", "otp_verified"],
};

export function pageAllowed(state: ViewState, page: Page): boolean {
  if (page === "admin" && !state.isAdmin) return false;
  return PAGE_GUARDS[page].includes(state.level);
}

export function clearTable(state: ViewState): void {
  state.table = null;
  state.tableId = null;
}
