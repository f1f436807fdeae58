/** Wire the API client, session controller and view together. */

import { ApiError, Client } from "./api.js";
import { SessionController } from "./session.js";
import { SessionView } from "./view.js";

export function boot(root: HTMLElement): SessionController {
  const client = new Client("");
  const controller = new SessionController(client);

  const shell = document.createElement("div");
  shell.innerHTML = `
    <div class="opener">
      <input data-role="source-input" placeholder="sentence to translate" size="48">
      <button data-role="start">Translate</button>
    </div>
    <div data-role="session-root"></div>`;
  root.appendChild(shell);
  const sessionRoot = shell.querySelector('[data-role="session-root"]') as HTMLElement;

  const view = new SessionView(sessionRoot, {
    onKeystroke: (position, character, finish) => controller.typeCharacter(position, character, finish),
    onAccept: (learn) => {
      void controller.accept(learn).then((state) => {
        if (state && !state.closed) {
          view.showBanner("accept failed", () => view.el("accept").click());
        }
      });
    },
    onNewSentence: () => {
      controller.reset();
      sessionRoot.classList.add("idle");
    },
  });

  controller.onChange = (state) => view.render(state);
  controller.onError = (err) => {
    const detail = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    view.showBanner(detail);
  };

  const input = shell.querySelector('[data-role="source-input"]') as HTMLInputElement;
  const start = shell.querySelector('[data-role="start"]') as HTMLButtonElement;
  start.addEventListener("click", () => {
    const source = input.value.trim();
    if (!source) return;
    sessionRoot.classList.remove("idle");
    void controller.open(source).catch((err) => controller.onError(err));
  });

  // refreshing mid-session restores the display from the cached responses
  controller.rehydrate();
  return controller;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app") as HTMLElement);
}
