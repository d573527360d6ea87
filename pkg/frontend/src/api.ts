/** Typed client for the checkpoint service. */
import type {
  ActionSpec,
  GraphPayload,
  HealthPayload,
  IntervenePayload,
  PnsRow,
  StatesPayload,
} from "./types.js";

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, body === undefined ? undefined : {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(`service unreachable: ${err}`, 0);
    }
    const payload = await resp.json().catch(() => ({ error: "invalid JSON from service" }));
    if (!resp.ok) {
      throw new ServiceError((payload as { error?: string }).error ?? resp.statusText, resp.status);
    }
    return payload as T;
  }

  health(): Promise<HealthPayload> {
    return this.request<HealthPayload>("/health");
  }

  graph(): Promise<GraphPayload> {
    return this.request<GraphPayload>("/graph");
  }

  setSample(features: number[]): Promise<{ status: string }> {
    return this.request<{ status: string }>("/sample", { features });
  }

  predict(features?: number[]): Promise<StatesPayload> {
    return this.request<StatesPayload>("/predict", features ? { features } : {});
  }

  intervene(spec: ActionSpec[]): Promise<IntervenePayload> {
    return this.request<IntervenePayload>("/intervene", { spec });
  }

  counterfactual(spec: ActionSpec[]): Promise<{
    kind: string;
    nodes: string[];
    factual: number[];
    counterfactual: number[];
    difference: number[];
  }> {
    return this.request("/counterfactual", { spec });
  }

  pns(): Promise<{ rows: PnsRow[] }> {
    return this.request("/pns");
  }
}
