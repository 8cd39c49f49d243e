// Response contracts of the prediction API, validated client-side before
// anything is rendered. Mirrors the schema the service publishes at
// /api/v1/schema/prediction.

export const LABEL_POSITIVE = "COVID-19 Positive";
export const LABEL_NEGATIVE = "COVID-19 Negative";

export interface ModelInfo {
  extractor: string;
  classifier: string;
  provenance?: Record<string, unknown>;
}

export interface PredictionResponse {
  label: string;
  probability_positive: number;
  model: ModelInfo;
  timing_ms: Record<string, number>;
  disclaimer: string;
  request_id?: string;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

function isObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

/** Returns a list of violations; empty means the value is a valid
 * PredictionResponse. */
export function validatePrediction(value: unknown): string[] {
  const errors: string[] = [];
  if (!isObject(value)) {
    return ["response is not an object"];
  }
  const label = value["label"];
  if (label !== LABEL_POSITIVE && label !== LABEL_NEGATIVE) {
    errors.push(`label must be "${LABEL_POSITIVE}" or "${LABEL_NEGATIVE}"`);
  }
  const p = value["probability_positive"];
  if (typeof p !== "number" || !isFinite(p) || p < 0 || p > 1) {
    errors.push("probability_positive must be a number in [0, 1]");
  }
  const model = value["model"];
  if (!isObject(model)) {
    errors.push("model must be an object");
  } else {
    if (typeof model["extractor"] !== "string") errors.push("model.extractor must be a string");
    if (typeof model["classifier"] !== "string") errors.push("model.classifier must be a string");
  }
  const timing = value["timing_ms"];
  if (!isObject(timing)) {
    errors.push("timing_ms must be an object");
  } else {
    for (const key of ["decode", "preprocess", "extract", "predict"]) {
      const t = timing[key];
      if (typeof t !== "number" || !isFinite(t) || t < 0) {
        errors.push(`timing_ms.${key} must be a nonnegative number`);
      }
    }
  }
  if (typeof value["disclaimer"] !== "string" || !value["disclaimer"]) {
    errors.push("disclaimer must be a nonempty string");
  }
  return errors;
}

export function parseApiError(body: unknown, status: number): string {
  if (isObject(body) && isObject(body["error"])) {
    const err = body["error"] as Record<string, unknown>;
    const code = typeof err["code"] === "string" ? err["code"] : `HTTP_${status}`;
    const message = typeof err["message"] === "string" ? err["message"] : "request failed";
    switch (code) {
      case "BAD_IMAGE":
        return "The server could not decode that file as an image. Upload a PNG or JPEG scan.";
      case "PAYLOAD_TOO_LARGE":
        return "That file is too large for the server. Try a smaller image.";
      case "MODEL_NOT_LOADED":
        return "The server has no model loaded yet. Try again shortly.";
      default:
        return `${code}: ${message}`;
    }
  }
  return `The server answered with status ${status}.`;
}
