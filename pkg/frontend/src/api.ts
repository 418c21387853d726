import type {
  AlertsPage,
  Health,
  InteractiveAnswer,
  KgPage,
  Metrics,
  QueryInfo,
  ThreadView,
} from "./types.js";

/** Error carrying the HTTP status and the server's `detail` message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function throwFrom(res: Response): Promise<never> {
  let detail = `${res.status} ${res.statusText}`;
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string" && body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(res.status, detail);
}

export interface KgFilter {
  predicate?: string;
  entity?: string;
  since_s?: number;
  until_s?: number;
  epoch?: number;
}

/** Thin typed client over the engine's REST endpoints. */
export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.baseUrl + path);
    if (!res.ok) await throwFrom(res);
    return (await res.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) await throwFrom(res);
    return (await res.json()) as T;
  }

  healthz(): Promise<Health> {
    return this.getJson("/healthz");
  }

  metrics(): Promise<Metrics> {
    return this.getJson("/metrics");
  }

  alerts(since = 0): Promise<AlertsPage> {
    return this.getJson(`/alerts?since=${since}`);
  }

  kg(filter: KgFilter = {}): Promise<KgPage> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filter)) {
      if (value !== undefined) params.set(key, String(value));
    }
    const qs = params.toString();
    return this.getJson(`/kg${qs ? `?${qs}` : ""}`);
  }

  queries(): Promise<{ queries: QueryInfo[] }> {
    return this.getJson("/queries");
  }

  submitQuery(query: string): Promise<QueryInfo> {
    return this.postJson("/queries", { query });
  }

  submitInteractive(query: string): Promise<InteractiveAnswer> {
    return this.postJson("/interactive", { query });
  }

  refine(queryId: string, refinement: string): Promise<InteractiveAnswer> {
    return this.postJson(`/interactive/${queryId}/refine`, { refinement });
  }

  thread(queryId: string): Promise<ThreadView> {
    return this.getJson(`/interactive/${queryId}`);
  }
}
