import type { PredictionResponse } from "../src/schema.js";

export function validResponse(overrides: Partial<PredictionResponse> = {}): PredictionResponse {
  return {
    label: "COVID-19 Positive",
    probability_positive: 0.97,
    model: {
      extractor: "DenseNet121",
      classifier: "bagging",
      provenance: { report_checksum: "abc123" },
    },
    timing_ms: { decode: 4.2, preprocess: 11.0, extract: 35.5, predict: 1.3 },
    disclaimer:
      "Research prototype. This output has not been clinically validated and " +
      "is not approved for diagnostic use; it may only serve as an aid for a " +
      "qualified medical imaging specialist.",
    request_id: "req-1",
    ...overrides,
  };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function fakeImageBlob(): Blob {
  return new Blob([new Uint8Array([137, 80, 78, 71])], { type: "image/png" });
}
