/** DOM rendering: source pane on the left, editable hypothesis on the
 * right with the validated prefix highlighted, accept + learn controls. */

import { UiSession } from "./session.js";

export interface ViewHandlers {
  onKeystroke: (position: number, character: string, finish: boolean) => void;
  onAccept: (learn: boolean) => void;
  onNewSentence: () => void;
}

export class SessionView {
  private caret = 0;

  constructor(
    private root: HTMLElement,
    private handlers: ViewHandlers,
  ) {
    root.innerHTML = `
      <div class="panes">
        <div class="pane"><h3>Source</h3><div class="source" data-role="source"></div></div>
        <div class="pane"><h3>Translation</h3>
          <div class="hypothesis" data-role="hypothesis" tabindex="0"></div>
          <div class="hint">click a character, then type its correction; Enter ends the sentence here</div>
        </div>
      </div>
      <div class="controls">
        <label><input type="checkbox" data-role="learn"> Learn from sample</label>
        <button data-role="accept">Accept translation</button>
        <button data-role="new" hidden>New sentence</button>
      </div>
      <div class="counters" data-role="counters"></div>
      <div class="banner" data-role="banner" hidden></div>`;
    const hyp = this.el("hypothesis");
    hyp.addEventListener("keydown", (ev) => this.handleKey(ev as KeyboardEvent));
    hyp.addEventListener("click", (ev) => {
      const target = ev.target as HTMLElement;
      if (target.dataset.pos !== undefined) {
        this.caret = Number(target.dataset.pos);
        this.moveCaretMarker();
      }
    });
    this.el("accept").addEventListener("click", () => {
      this.handlers.onAccept((this.el("learn") as HTMLInputElement).checked);
    });
    this.el("new").addEventListener("click", () => this.handlers.onNewSentence());
  }

  el(role: string): HTMLElement {
    return this.root.querySelector(`[data-role="${role}"]`) as HTMLElement;
  }

  private handleKey(ev: KeyboardEvent): void {
    if (ev.key === "Enter") {
      ev.preventDefault();
      this.handlers.onKeystroke(this.caret, "", true);
      return;
    }
    if (ev.key === "ArrowLeft") {
      this.caret = Math.max(0, this.caret - 1);
      this.moveCaretMarker();
      return;
    }
    if (ev.key === "ArrowRight") {
      this.caret += 1;
      this.moveCaretMarker();
      return;
    }
    if (ev.key.length === 1 && !ev.ctrlKey && !ev.metaKey) {
      ev.preventDefault();
      this.handlers.onKeystroke(this.caret, ev.key, false);
    }
  }

  private moveCaretMarker(): void {
    const hyp = this.el("hypothesis");
    hyp.querySelectorAll(".caret").forEach((n) => n.classList.remove("caret"));
    const span = hyp.querySelector(`[data-pos="${this.caret}"]`);
    span?.classList.add("caret");
  }

  /** Mirror one server-reported state into the document. */
  render(state: UiSession): void {
    this.el("source").textContent = state.source;
    const hyp = this.el("hypothesis");
    hyp.innerHTML = "";
    const chars = [...state.hypothesis];
    chars.forEach((ch, i) => {
      const span = document.createElement("span");
      span.textContent = ch;
      span.dataset.pos = String(i);
      if (i < state.validatedPrefixLen) span.classList.add("validated");
      hyp.appendChild(span);
    });
    // one trailing slot so corrections can append at the end
    const tail = document.createElement("span");
    tail.dataset.pos = String(chars.length);
    tail.textContent = " ";
    hyp.appendChild(tail);
    this.caret = Math.min(state.validatedPrefixLen, chars.length);
    this.moveCaretMarker();

    hyp.classList.toggle("pending", state.pending);
    hyp.classList.toggle("closed", state.closed);
    (hyp as HTMLElement).tabIndex = state.closed ? -1 : 0;
    (this.el("accept") as HTMLButtonElement).disabled = state.closed;
    (this.el("new") as HTMLElement).hidden = !state.closed;
    const counters = this.el("counters");
    if (state.counters) {
      counters.textContent =
        `final: "${state.final}" — keystrokes ${state.counters.keystrokes}, ` +
        `mouse actions ${state.counters.mouse_actions}, iterations ${state.counters.iterations}`;
    } else {
      counters.textContent = "";
    }
    this.hideBanner();
  }

  showBanner(message: string, retry: (() => void) | null = null): void {
    const banner = this.el("banner");
    banner.hidden = false;
    banner.textContent = message;
    if (retry) {
      const button = document.createElement("button");
      button.textContent = "retry";
      button.addEventListener("click", () => {
        this.hideBanner();
        retry();
      });
      banner.appendChild(button);
    }
  }

  hideBanner(): void {
    const banner = this.el("banner");
    banner.hidden = true;
    banner.textContent = "";
  }

  validatedLength(): number {
    return this.el("hypothesis").querySelectorAll(".validated").length;
  }
}
