// Upload flow state machine. Exactly one phase at a time; a response is
// present if and only if the phase is "done".

import type { PredictionResponse } from "./schema.js";

export type Phase = "idle" | "uploading" | "done" | "error";

export interface UiState {
  phase: Phase;
  selectedFileName: string | null;
  response: PredictionResponse | null;
  errorMessage: string | null;
}

export function initialState(): UiState {
  return { phase: "idle", selectedFileName: null, response: null, errorMessage: null };
}

export function startUpload(state: UiState, fileName: string): UiState {
  if (state.phase === "uploading") {
    return state; // one in-flight upload at a time
  }
  return { phase: "uploading", selectedFileName: fileName, response: null, errorMessage: null };
}

export function uploadSucceeded(state: UiState, response: PredictionResponse): UiState {
  return { ...state, phase: "done", response, errorMessage: null };
}

export function uploadFailed(state: UiState, message: string): UiState {
  return { ...state, phase: "error", response: null, errorMessage: message };
}

export function dismissError(state: UiState): UiState {
  if (state.phase !== "error") {
    return state;
  }
  return { ...initialState(), selectedFileName: state.selectedFileName };
}

export function checkInvariants(state: UiState): void {
  const hasResponse = state.response !== null;
  if (hasResponse !== (state.phase === "done")) {
    throw new Error(`invariant violated: response present in phase ${state.phase}`);
  }
  if (state.phase === "error" && !state.errorMessage) {
    throw new Error("invariant violated: error phase without a message");
  }
}
