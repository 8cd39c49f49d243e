// Controller: owns the state, talks to the API client, notifies the view.

import { ApiClient } from "./api.js";
import type { ModelInfo } from "./schema.js";
import {
  UiState,
  checkInvariants,
  dismissError,
  initialState,
  startUpload,
  uploadFailed,
  uploadSucceeded,
} from "./state.js";

export class App {
  state: UiState = initialState();
  modelInfo: ModelInfo | null = null;
  private pendingFile: { blob: Blob; name: string } | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly onChange: (state: UiState, modelInfo: ModelInfo | null) => void,
  ) {}

  private setState(next: UiState): void {
    checkInvariants(next);
    this.state = next;
    this.onChange(this.state, this.modelInfo);
  }

  async loadModelInfo(): Promise<void> {
    this.modelInfo = await this.client.modelInfo();
    this.onChange(this.state, this.modelInfo);
  }

  selectFile(blob: Blob, name: string): void {
    if (this.state.phase === "uploading") {
      return;
    }
    this.pendingFile = { blob, name };
    this.setState({ ...this.state, phase: "idle", response: null, selectedFileName: name });
  }

  async submit(): Promise<void> {
    if (this.state.phase === "uploading" || !this.pendingFile) {
      return;
    }
    const { blob, name } = this.pendingFile;
    this.setState(startUpload(this.state, name));
    try {
      const response = await this.client.predict(blob, name);
      this.setState(uploadSucceeded(this.state, response));
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      this.setState(uploadFailed(this.state, message));
    }
  }

  dismiss(): void {
    this.setState(dismissError(this.state));
  }
}
