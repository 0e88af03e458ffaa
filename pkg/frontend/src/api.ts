import type { MedicationIn, PatientIn, TimelinePayload, TriagePayload } from "./types.js";

export interface ApiConfig {
  baseUrl: string;
  token?: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client. Concurrent fetches are allowed; ``latest`` tags each
 * request per resource key with a sequence number so stale responses are
 * discarded instead of overwriting newer data. */
export class ApiClient {
  private seq = new Map<string, number>();

  constructor(
    public config: ApiConfig,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { Accept: "application/json" };
    if (this.config.token) headers["Authorization"] = `Bearer ${this.config.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const base = this.config.baseUrl.replace(/\/$/, "");
    const resp = await this.fetchFn(`${base}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const doc = await resp.json();
        if (doc && typeof doc.detail === "string") detail = doc.detail;
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  getTimeline(patientId: string, opts: { forecast?: boolean; horizon?: number } = {}): Promise<TimelinePayload> {
    const params = new URLSearchParams();
    if (opts.forecast !== undefined) params.set("forecast", String(opts.forecast));
    if (opts.horizon !== undefined) params.set("horizon", String(opts.horizon));
    const query = params.toString();
    return this.request("GET", `/patients/${encodeURIComponent(patientId)}/timeline${query ? `?${query}` : ""}`);
  }

  getTriage(): Promise<TriagePayload> {
    return this.request("GET", "/triage");
  }

  registerPatient(body: PatientIn): Promise<{ patient_id: string }> {
    return this.request("POST", "/patients", body);
  }

  addMedication(patientId: string, body: MedicationIn): Promise<unknown> {
    return this.request("POST", `/patients/${encodeURIComponent(patientId)}/medications`, body);
  }

  healthz(): Promise<{ status: string; model_loaded: boolean }> {
    return this.request("GET", "/healthz");
  }

  /** Run ``loader`` tagged with a per-key sequence number; resolves to null
   * when a newer request on the same key was issued in the meantime. */
  async latest<T>(key: string, loader: () => Promise<T>): Promise<T | null> {
    const ticket = (this.seq.get(key) ?? 0) + 1;
    this.seq.set(key, ticket);
    const value = await loader();
    return this.seq.get(key) === ticket ? value : null;
  }
}
