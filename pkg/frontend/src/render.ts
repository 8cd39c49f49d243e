// Pure HTML-string rendering of the UI state; the controller swaps the
// result into the page. Keeping this a pure function makes the whole view
// testable without a DOM.

import type { ModelInfo } from "./schema.js";
import { LABEL_POSITIVE } from "./schema.js";
import type { UiState } from "./state.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatPercent(probability: number): string {
  return `${(probability * 100).toFixed(1)}%`;
}

function renderUploadPanel(state: UiState): string {
  const busy = state.phase === "uploading";
  const file = state.selectedFileName ? escapeHtml(state.selectedFileName) : "no file selected";
  return `
  <section class="upload" data-testid="upload-panel">
    <label class="dropzone${busy ? " busy" : ""}" for="file-input">
      <strong>Upload a chest X-ray or CT image</strong>
      <span>PNG or JPEG. Drag and drop works too.</span>
      <span class="filename">${file}</span>
    </label>
    <input id="file-input" type="file" accept="image/png,image/jpeg" ${busy ? "disabled" : ""} />
    <button id="submit-button" ${busy || !state.selectedFileName ? "disabled" : ""}>
      ${busy ? "Analyzing…" : "Analyze image"}
    </button>
  </section>`;
}

function renderResult(state: UiState): string {
  if (state.phase !== "done" || !state.response) {
    return "";
  }
  const r = state.response;
  const positive = r.label === LABEL_POSITIVE;
  const timings = Object.entries(r.timing_ms)
    .map(([stage, ms]) => `<li>${escapeHtml(stage)}: ${ms.toFixed(1)} ms</li>`)
    .join("");
  return `
  <section class="result ${positive ? "positive" : "negative"}" data-testid="result-view">
    <h2 data-testid="result-label">${escapeHtml(r.label)}</h2>
    <p class="probability" data-testid="result-probability">
      ${formatPercent(r.probability_positive)} probability of COVID-19
    </p>
    <ul class="timings" data-testid="timings">${timings}</ul>
    <p class="disclaimer" data-testid="disclaimer">${escapeHtml(r.disclaimer)}</p>
  </section>`;
}

function renderErrorBanner(state: UiState): string {
  if (state.phase !== "error" || !state.errorMessage) {
    return "";
  }
  return `
  <div class="banner error" role="alert" data-testid="error-banner">
    <span>${escapeHtml(state.errorMessage)}</span>
    <button id="dismiss-error">Dismiss and retry</button>
  </div>`;
}

export function renderModelPanel(info: ModelInfo | null): string {
  if (!info) {
    return ""; // metadata fetch failed: hide the panel, uploads still work
  }
  const checksum =
    info.provenance && typeof info.provenance["report_checksum"] === "string"
      ? `<li>report checksum: <code>${escapeHtml(info.provenance["report_checksum"] as string)}</code></li>`
      : "";
  return `
  <aside class="model-info" data-testid="model-panel">
    <h3>Deployed model</h3>
    <ul>
      <li>feature extractor: ${escapeHtml(info.extractor)}</li>
      <li>classifier: ${escapeHtml(info.classifier)}</li>
      ${checksum}
    </ul>
  </aside>`;
}

export function renderApp(state: UiState, modelInfo: ModelInfo | null): string {
  return `
  <main>
    <h1>COVID-19 image screening</h1>
    ${renderErrorBanner(state)}
    ${renderUploadPanel(state)}
    ${renderResult(state)}
    ${renderModelPanel(modelInfo)}
  </main>`;
}
