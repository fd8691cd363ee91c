// Typed client for the votegrid JSON API. One method per route.

export class ApiFailure extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface LoginResponse {
  token: string;
  level: string;
  is_admin: boolean;
  expires_at: number;
}

export interface RegisterFields {
  employee_id: string;
  password: string;
  lastname: string;
  firstname: string;
  college: string;
  position: string;
  contact_number: string;
  email: string;
}

export interface TableResponse {
  table_id: string;
  cells: string[];
  rows: number;
  cols: number;
}

export interface ChallengeIssuedResponse {
  table_id: string;
  expires_at: number;
  warnings: string[];
}

export interface BallotCandidate {
  candidate_id: string;
  name: string;
  photo_ref: string;
  platform_text: string;
  votes: number;
}

export interface BallotOffice {
  office: string;
  candidates: BallotCandidate[];
}

export interface BallotResponse {
  offices: BallotOffice[];
  turnout: number;
}

export interface ResultsResponse {
  offices: Record<string, Record<string, number>>;
  candidates: { candidate_id: string; name: string; office: string }[];
  total_ballots: number;
  approved_voters: number;
  voted_count: number;
  turnout: number;
  election_status: string;
}

export interface AuditEventRecord {
  seq: number;
  at: number;
  actor: string;
  event_type: string;
  detail_digest: string;
  prev_hash: string;
  this_hash: string;
}

export interface AuditResponse {
  events: AuditEventRecord[];
  chain_valid: boolean;
  chain_broken_seq: number | null;
}

export class ApiClient {
  token: string | null = null;

  constructor(private readonly baseUrl: string = "") {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch {
      throw new ApiFailure(0, "network", "server unreachable");
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const error = (payload as { error?: { code?: string; message?: string } })?.error;
      throw new ApiFailure(
        response.status,
        error?.code ?? "unknown",
        error?.message ?? `request failed with ${response.status}`,
      );
    }
    return payload as T;
  }

  register(fields: RegisterFields): Promise<{ employee_id: string; status: string }> {
    return this.call("POST", "/api/register", fields);
  }

  async login(employeeId: string, password: string): Promise<LoginResponse> {
    const response = await this.call<LoginResponse>("POST", "/api/login", {
      employee_id: employeeId,
      password,
    });
    this.token = response.token;
    return response;
  }

  requestOtp(employeeId: string): Promise<ChallengeIssuedResponse> {
    return this.call("POST", "/api/otp/request", { employee_id: employeeId });
  }

  getTable(): Promise<TableResponse> {
    return this.call("GET", "/api/otp/table");
  }

  confirmOtp(otp: string): Promise<{ level: string }> {
    return this.call("POST", "/api/otp/confirm", { otp });
  }

  getBallot(): Promise<BallotResponse> {
    return this.call("GET", "/api/ballot");
  }

  castVotes(selections: Record<string, string>): Promise<{ receipt_id: string }> {
    return this.call("POST", "/api/votes", { selections });
  }

  getResults(): Promise<ResultsResponse> {
    return this.call("GET", "/api/results");
  }

  approve(employeeId: string, decision: "approve" | "reject"): Promise<{ employee_id: string; status: string }> {
    return this.call("POST", "/api/admin/approve", {
      employee_id: employeeId,
      decision,
    });
  }

  openElection(): Promise<{ status: string }> {
    return this.call("POST", "/api/admin/election/open");
  }

  closeElection(): Promise<{ status: string }> {
    return this.call("POST", "/api/admin/election/close");
  }

  getAudit(): Promise<AuditResponse> {
    return this.call("GET", "/api/admin/audit");
  }
}
