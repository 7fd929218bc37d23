import type {
  DecisionOut,
  ReportsBundle,
  SessionRow,
  SessionSnapshot,
} from "./types.js";

export class ApiFailure extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function detailOf(response: Response): Promise<string> {
  try {
    const body = await response.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private token: string | null = null,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.fetchImpl(`${this.base}/api/v1${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init.headers ?? {}) },
    });
    if (!response.ok) {
      throw new ApiFailure(response.status, await detailOf(response));
    }
    return (await response.json()) as T;
  }

  listSessions(): Promise<{ sessions: SessionRow[] }> {
    return this.request("/sessions");
  }

  getQueue(sessionId: string): Promise<SessionSnapshot> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/queue`);
  }

  postDecisions(sessionId: string, decisions: DecisionOut[]): Promise<{ accepted: number }> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/decisions`, {
      method: "POST",
      body: JSON.stringify({ decisions }),
    });
  }

  advance(sessionId: string): Promise<SessionSnapshot> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/advance`, {
      method: "POST",
    });
  }

  getReports(sessionId: string, cycle: number): Promise<ReportsBundle> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/reports?cycle=${cycle}`);
  }
}
