/** Browser bootstrap: wire the controller to the DOM and the keyboard. */

import { ReviewApi } from "./api.js";
import { QueueController } from "./queue.js";
import { renderApp } from "./render.js";

export function mount(doc: Document, root: HTMLElement, baseUrl = ""): QueueController {
  const api = new ReviewApi(baseUrl);
  const reviewer =
    new URL(doc.location?.href ?? "http://localhost/").searchParams.get("reviewer");
  const controller = new QueueController(api, reviewer);
  controller.subscribe((state) => renderApp(doc, root, api, controller, state));
  doc.addEventListener("keydown", (event: KeyboardEvent) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "TEXTAREA" || target.tagName === "INPUT")) return;
    if (["a", "s", "e", "r", "j", "k"].includes(event.key)) {
      event.preventDefault();
      void controller.handleKey(event.key);
    }
  });
  void controller.load();
  return controller;
}

declare const window: any;
if (typeof window !== "undefined" && window.document?.getElementById) {
  const root = window.document.getElementById("app");
  if (root) mount(window.document, root);
}
