/** Thin typed client for the playground HTTP API.
 *
 * Every latent-space operation goes through these endpoints; the UI never
 * does vector math itself, so the service stays the single source of truth.
 */

export interface InterpolationRow {
  tau: number;
  text: string;
}

export interface InterpolateResponse {
  rows: InterpolationRow[];
}

export interface ArithResponse {
  z_d: number[];
  text: string;
}

export interface ModelInfo {
  config: Record<string, unknown>;
  step: number;
  vocab_size: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = (...a) => fetch(...a),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const data = (await res.json()) as Record<string, unknown>;
    if (!res.ok) {
      throw new ApiError(res.status, String(data.error ?? `HTTP ${res.status}`));
    }
    return data as T;
  }

  encode(text: string): Promise<{ z: number[] }> {
    return this.post("/encode", { text });
  }

  decode(z: number[]): Promise<{ text: string }> {
    return this.post("/decode", { z });
  }

  interpolate(a: string, b: string, steps = 11): Promise<InterpolateResponse> {
    return this.post("/interpolate", { a, b, steps });
  }

  arith(a: string, b: string, c: string): Promise<ArithResponse> {
    return this.post("/arith", { a, b, c });
  }

  async modelInfo(): Promise<ModelInfo> {
    const res = await this.fetchImpl(this.baseUrl + "/model/info");
    const data = (await res.json()) as Record<string, unknown>;
    if (!res.ok) {
      throw new ApiError(res.status, String(data.error ?? `HTTP ${res.status}`));
    }
    return data as unknown as ModelInfo;
  }
}
