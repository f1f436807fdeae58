// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { UiSession } from "../src/session.js";
import { SessionView, ViewHandlers } from "../src/view.js";

function makeState(overrides: Partial<UiSession> = {}): UiSession {
  return {
    sessionId: "s",
    source: "They are lost forever .",
    hypothesis: "Ils sont perdus pour toujours .",
    validatedPrefixLen: 0,
    pending: false,
    closed: false,
    final: null,
    counters: null,
    ...overrides,
  };
}

describe("SessionView", () => {
  let root: HTMLElement;
  let handlers: { [K in keyof ViewHandlers]: ReturnType<typeof vi.fn> };
  let view: SessionView;

  beforeEach(() => {
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById("root") as HTMLElement;
    handlers = {
      onKeystroke: vi.fn(),
      onAccept: vi.fn(),
      onNewSentence: vi.fn(),
    };
    view = new SessionView(root, handlers);
  });

  it("renders source and hypothesis panes with the controls", () => {
    view.render(makeState());
    expect(view.el("source").textContent).toBe("They are lost forever .");
    expect(view.el("hypothesis").textContent).toContain("Ils sont perdus pour toujours .");
    expect(root.querySelector('[data-role="accept"]')).not.toBeNull();
    expect(root.querySelector('[data-role="learn"]')).not.toBeNull();
  });

  it("a fresh session has a zero-length highlight", () => {
    view.render(makeState());
    expect(view.validatedLength()).toBe(0);
  });

  it("mirrors the server-reported prefix length exactly", () => {
    view.render(makeState({ hypothesis: "Ils sont perdus à jamais .", validatedPrefixLen: 17 }));
    expect(view.validatedLength()).toBe(17);
    const validated = Array.from(root.querySelectorAll(".validated"))
      .map((n) => n.textContent)
      .join("");
    expect(validated).toBe("Ils sont perdus à");
  });

  it("places the caret at the end of the validated prefix", () => {
    view.render(makeState({ hypothesis: "Ils sont perdus à jamais .", validatedPrefixLen: 17 }));
    const caret = root.querySelector(".caret") as HTMLElement;
    expect(caret.dataset.pos).toBe("17");
  });

  it("typing a printable key reports position and character", () => {
    view.render(makeState());
    const hyp = view.el("hypothesis");
    (hyp.querySelector('[data-pos="16"]') as HTMLElement).click();
    hyp.dispatchEvent(new KeyboardEvent("keydown", { key: "à", bubbles: true }));
    expect(handlers.onKeystroke).toHaveBeenCalledWith(16, "à", false);
  });

  it("Enter issues the end-of-text action at the caret", () => {
    view.render(makeState());
    const hyp = view.el("hypothesis");
    (hyp.querySelector('[data-pos="8"]') as HTMLElement).click();
    hyp.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter", bubbles: true }));
    expect(handlers.onKeystroke).toHaveBeenCalledWith(8, "", true);
  });

  it("accept button forwards the learn checkbox", () => {
    view.render(makeState());
    (view.el("learn") as HTMLInputElement).checked = true;
    (view.el("accept") as HTMLButtonElement).click();
    expect(handlers.onAccept).toHaveBeenCalledWith(true);
  });

  it("a closed session disables editing and shows the final text", () => {
    view.render(
      makeState({
        closed: true,
        final: "Ils sont perdus à jamais .",
        hypothesis: "Ils sont perdus à jamais .",
        counters: { keystrokes: 1, mouse_actions: 2, iterations: 1 },
      }),
    );
    expect((view.el("accept") as HTMLButtonElement).disabled).toBe(true);
    expect(view.el("hypothesis").tabIndex).toBe(-1);
    expect((view.el("new") as HTMLElement).hidden).toBe(false);
    expect(view.el("counters").textContent).toContain("keystrokes 1");
    expect(view.el("counters").textContent).toContain("Ils sont perdus à jamais .");
  });

  it("error banner renders and the retry affordance fires", () => {
    const retry = vi.fn();
    view.showBanner("accept failed", retry);
    const banner = view.el("banner");
    expect(banner.hidden).toBe(false);
    (banner.querySelector("button") as HTMLButtonElement).click();
    expect(retry).toHaveBeenCalled();
    expect(banner.hidden).toBe(true);
  });
});
