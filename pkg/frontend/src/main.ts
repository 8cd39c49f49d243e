// Browser bootstrap: bind the controller to the real DOM and fetch impl.
// The API origin defaults to the page origin and can be overridden by
// setting window.COVIFEX_API_BASE before this module loads.

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { renderApp } from "./render.js";

declare global {
  interface Window {
    COVIFEX_API_BASE?: string;
  }
}

function mount(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const base = window.COVIFEX_API_BASE ?? window.location.origin;
  const app = new App(new ApiClient(base), (state, modelInfo) => {
    root.innerHTML = renderApp(state, modelInfo);
    bind();
  });

  function bind(): void {
    const input = document.getElementById("file-input") as HTMLInputElement | null;
    input?.addEventListener("change", () => {
      const file = input.files?.[0];
      if (file) {
        app.selectFile(file, file.name);
      }
    });
    document.getElementById("submit-button")?.addEventListener("click", () => {
      void app.submit();
    });
    document.getElementById("dismiss-error")?.addEventListener("click", () => app.dismiss());
    const zone = document.querySelector(".dropzone");
    zone?.addEventListener("dragover", (e) => e.preventDefault());
    zone?.addEventListener("drop", (e) => {
      e.preventDefault();
      const file = (e as DragEvent).dataTransfer?.files?.[0];
      if (file) {
        app.selectFile(file, file.name);
      }
    });
  }

  root.innerHTML = renderApp(app.state, app.modelInfo);
  bind();
  void app.loadModelInfo();
}

mount();
