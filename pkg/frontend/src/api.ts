/**
 * Thin typed client for the /v1 HTTP API. Every mutation the console makes
 * goes through here; the console keeps no authoritative state of its own.
 */

export interface ModerationResponse {
  scores: Record<string, number>;
  flagged: Record<string, boolean>;
  checkpoint_id: string;
}

export interface QueueItemView {
  id: string;
  text: string;
  scores: Record<string, number>;
  lease_expires_in: number;
}

export interface QueueStats {
  pending: number;
  leased: number;
  completed: number;
}

export interface RegressionCaseView {
  id: string;
  text: string;
  expected: Record<string, string>;
  scores: Record<string, number>;
  pass: boolean;
  failures: string[];
}

export interface RegressionView {
  cases: RegressionCaseView[];
  passed: number;
  total: number;
}

export interface SelectionEntryView {
  id: string;
  strategy: string;
  category: string | null;
  scores: Record<string, number>;
  weight?: number;
}

export interface SelectionBatchView {
  entries: SelectionEntryView[];
  warnings: string[];
}

export interface MetaView {
  categories: string[];
  thresholds: Record<string, number>;
  checkpoint_id: string;
  lease_seconds: number;
  queue: QueueStats;
}

export interface RedTeamReceipt {
  id: string;
  duplicate: boolean;
  scores: Record<string, number>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    public baseUrl: string,
    public token: string | null = null,
  ) {}

  private headers(hasBody: boolean): Record<string, string> {
    const out: Record<string, string> = {};
    if (hasBody) {
      out["Content-Type"] = "application/json";
    }
    if (this.token) {
      out["Authorization"] = `Bearer ${this.token}`;
    }
    return out;
  }

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T | null> {
    const url = this.baseUrl.replace(/\/$/, "") + path;
    const response = await fetch(url, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.status === 204) {
      return null;
    }
    const payload = (await response.json().catch(() => null)) as { error?: string } | null;
    if (!response.ok) {
      const message = payload && payload.error ? payload.error : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return payload as T;
  }

  moderate(text: string): Promise<ModerationResponse> {
    return this.request<ModerationResponse>("POST", "/v1/moderate", { text }) as Promise<ModerationResponse>;
  }

  queueNext(): Promise<QueueItemView | null> {
    return this.request<QueueItemView>("GET", "/v1/queue/next");
  }

  queueStats(): Promise<QueueStats> {
    return this.request<QueueStats>("GET", "/v1/queue/stats") as Promise<QueueStats>;
  }

  enqueue(ids: string[]): Promise<{ queued: number }> {
    return this.request<{ queued: number }>("POST", "/v1/queue", { ids }) as Promise<{ queued: number }>;
  }

  submitLabel(
    id: string,
    vector: Record<string, string>,
    annotator: string,
  ): Promise<{ id: string; status: string }> {
    return this.request<{ id: string; status: string }>("POST", "/v1/labels", {
      id,
      vector,
      annotator,
    }) as Promise<{ id: string; status: string }>;
  }

  submitRedTeam(text: string, expected: Record<string, string>, note: string): Promise<RedTeamReceipt> {
    return this.request<RedTeamReceipt>("POST", "/v1/redteam", { text, expected, note }) as Promise<RedTeamReceipt>;
  }

  regression(): Promise<RegressionView> {
    return this.request<RegressionView>("GET", "/v1/eval/regression") as Promise<RegressionView>;
  }

  selectNext(n: number, seed?: number): Promise<SelectionBatchView> {
    const body: Record<string, number> = { n };
    if (seed !== undefined) {
      body["seed"] = seed;
    }
    return this.request<SelectionBatchView>("POST", "/v1/select/next", body) as Promise<SelectionBatchView>;
  }

  auditReport(): Promise<unknown> {
    return this.request<unknown>("GET", "/v1/audit/report");
  }

  meta(): Promise<MetaView> {
    return this.request<MetaView>("GET", "/v1/meta") as Promise<MetaView>;
  }
}
