import type {
  AlertView,
  ApiError,
  DetectionMetricsView,
  EvidenceEnvelope,
  ImageView,
  IncidentView,
  SessionInfo,
  TriageAction,
} from "./types.js";

export class GatewayError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiError,
  ) {
    super(`${status}: ${body.error}${body.detail ? ` (${body.detail})` : ""}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client over the gateway endpoints. Holds only the session
 * token; no keys, no raw PII ever land in client state.
 */
export class ApiClient {
  private sessionId: string | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  get authenticated(): boolean {
    return this.sessionId !== null;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.sessionId) {
      headers["Authorization"] = `Bearer ${this.sessionId}`;
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const doc = await response.json();
    if (!response.ok) {
      throw new GatewayError(response.status, doc as ApiError);
    }
    return doc as T;
  }

  async login(principalId: string, secret: string, remote = false): Promise<SessionInfo> {
    const session = await this.request<SessionInfo>("POST", "/auth", {
      principal_id: principalId,
      secret,
      remote,
    });
    this.sessionId = session.session_id;
    return session;
  }

  logout(): void {
    this.sessionId = null;
  }

  async alerts(filter: { origin?: string; severity?: string; state?: string } = {}): Promise<AlertView[]> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filter)) {
      if (value) params.set(key, value);
    }
    const suffix = params.toString() ? `?${params}` : "";
    const doc = await this.request<{ alerts: AlertView[] }>("GET", `/alerts${suffix}`);
    return doc.alerts;
  }

  incident(incidentId: string): Promise<IncidentView> {
    return this.request<IncidentView>("GET", `/incidents/${incidentId}`);
  }

  transition(incidentId: string, action: TriageAction, note?: string): Promise<IncidentView> {
    return this.request<IncidentView>("POST", `/incidents/${incidentId}/${action}`, {
      note: note ?? null,
    });
  }

  evidence(recordId: string): Promise<{ record: EvidenceEnvelope }> {
    return this.request<{ record: EvidenceEnvelope }>("GET", `/evidence/${recordId}`);
  }

  requestImage(group: string, selection?: string[]): Promise<ImageView> {
    return this.request<ImageView>("POST", "/images", { group, selection: selection ?? null });
  }

  image(imageId: string): Promise<ImageView> {
    return this.request<ImageView>("GET", `/images/${imageId}`);
  }

  transitionTable(): Promise<{ transitions: Record<string, string[]> }> {
    return this.request<{ transitions: Record<string, string[]> }>("GET", "/meta/transitions");
  }

  metricsRuns(): Promise<{ runs: Record<string, DetectionMetricsView> }> {
    return this.request<{ runs: Record<string, DetectionMetricsView> }>("GET", "/metrics");
  }
}
