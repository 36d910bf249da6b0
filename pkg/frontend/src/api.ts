// Typed client for the scoring service. Every number shown in the UI is
// traceable to one of these response bodies; the client never computes
// scores locally.

export interface SchemaFeature {
  name: string;
  kind: 'continuous' | 'discrete';
  categories: string[] | null;
  units: string | null;
}

export interface SchemaResponse {
  schema_version: number;
  features: SchemaFeature[];
  tasks: string[];
}

export interface Attribution {
  feature: string;
  delta: number;
}

export interface TaskScore {
  probability: number;
  operating_threshold: number;
  triage_flag: boolean;
  attributions: Attribution[];
  attribution_degenerate: boolean;
  model_hash: string | null;
}

export interface ScoreResponse {
  schema_version: number;
  tasks: Record<string, TaskScore>;
  all_missing: boolean;
  attribution_basis: string;
}

export type FeatureMap = Record<string, number | string | null>;

export class ServiceError extends Error {
  readonly status: number;
  readonly key: string | null;

  constructor(message: string, status: number, key: string | null = null) {
    super(message);
    this.status = status;
    this.key = key;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, '');
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceError(`service unreachable: ${String(err)}`, 0);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const error = body && typeof body === 'object' ? (body as any).error : null;
      throw new ServiceError(
        error?.message ?? `service returned ${response.status}`,
        response.status,
        error?.key ?? null,
      );
    }
    return body as T;
  }

  getSchema(): Promise<SchemaResponse> {
    return this.request<SchemaResponse>('/schema');
  }

  score(features: FeatureMap, tasks?: string[]): Promise<ScoreResponse> {
    return this.request<ScoreResponse>('/score', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(tasks ? { features, tasks } : { features }),
    });
  }

  health(): Promise<{ status: string; model_hashes: Record<string, string> }> {
    return this.request('/health');
  }
}
