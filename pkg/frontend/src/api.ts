// Thin client over the prediction service. The fetch implementation is
// injected so tests can mock the network.

import {
  ModelInfo,
  PredictionResponse,
  parseApiError,
  validatePrediction,
} from "./schema.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  /** POST the image; resolves to a schema-valid PredictionResponse or
   * rejects with a human-readable message. */
  async predict(file: Blob, fileName: string): Promise<PredictionResponse> {
    const form = new FormData();
    form.append("image", file, fileName);
    let res: Response;
    try {
      res = await this.fetchImpl(this.url("/api/v1/predict"), { method: "POST", body: form });
    } catch {
      throw new Error("Could not reach the server. Check that the service is running.");
    }
    let body: unknown;
    try {
      body = await res.json();
    } catch {
      throw new Error("unexpected server response: not JSON");
    }
    if (!res.ok) {
      throw new Error(parseApiError(body, res.status));
    }
    const violations = validatePrediction(body);
    if (violations.length > 0) {
      throw new Error(`unexpected server response: ${violations[0]}`);
    }
    return body as PredictionResponse;
  }

  /** Model metadata, or null when the endpoint is unavailable (the UI
   * hides the panel and carries on). */
  async modelInfo(): Promise<ModelInfo | null> {
    try {
      const res = await this.fetchImpl(this.url("/api/v1/model"));
      if (!res.ok) {
        return null;
      }
      const body = (await res.json()) as Record<string, unknown>;
      if (typeof body.extractor !== "string" || typeof body.classifier !== "string") {
        return null;
      }
      return body as unknown as ModelInfo;
    } catch {
      return null;
    }
  }
}
