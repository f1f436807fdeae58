/** Client-side session state machine.
 *
 * All displayed state originates from server responses; the controller only
 * mirrors them. At most one request is in flight per session: keystrokes
 * arriving while one is pending are queued with latest-wins semantics per
 * position, then sent one at a time in arrival order, so every accepted
 * keystroke turns into exactly one serialized correction request.
 */

import { ApiError, Client, KsmrCounters } from "./api.js";

export interface UiSession {
  sessionId: string;
  source: string;
  hypothesis: string;
  validatedPrefixLen: number;
  pending: boolean;
  closed: boolean;
  final: string | null;
  counters: KsmrCounters | null;
}

interface QueuedKey {
  position: number;
  character: string;
  finish: boolean;
}

const STORAGE_KEY = "inmt-session";

export class SessionController {
  state: UiSession | null = null;
  onChange: (state: UiSession) => void = () => {};
  onError: (error: ApiError | Error) => void = () => {};

  private queue: QueuedKey[] = [];
  private inFlight = false;
  private storage: Storage | null;

  constructor(
    private client: Client,
    storage: Storage | null = typeof sessionStorage === "undefined" ? null : sessionStorage,
  ) {
    this.storage = storage;
  }

  private emit(): void {
    if (this.state) {
      if (this.state.hypothesis.slice(0, this.state.validatedPrefixLen).length !== this.state.validatedPrefixLen) {
        throw new Error("display would not contain the validated prefix");
      }
      this.persist();
      this.onChange(this.state);
    }
  }

  private persist(): void {
    // the snapshot is a cache of the last server responses, nothing more;
    // reloading the page rehydrates the same display from it
    if (this.storage && this.state) {
      this.storage.setItem(STORAGE_KEY, JSON.stringify(this.state));
    }
  }

  /** Restore the last server-reported state (after a page refresh). */
  rehydrate(): UiSession | null {
    if (!this.storage) return null;
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return null;
    this.state = JSON.parse(raw) as UiSession;
    this.state.pending = false;
    this.onChange(this.state);
    return this.state;
  }

  clearStored(): void {
    this.storage?.removeItem(STORAGE_KEY);
  }

  async open(source: string): Promise<UiSession> {
    const created = await this.client.createSession(source);
    this.state = {
      sessionId: created.session_id,
      source,
      hypothesis: created.hypothesis,
      validatedPrefixLen: 0,
      pending: false,
      closed: false,
      final: null,
      counters: null,
    };
    this.queue = [];
    this.emit();
    return this.state;
  }

  /** One keystroke: substitute `character` at `position` of the hypothesis.
   * An empty character with finish=true is the end-of-text action. */
  typeCharacter(position: number, character: string, finish = false): void {
    if (!this.state || this.state.closed) return;
    const existing = this.queue.findIndex((k) => k.position === position);
    if (existing >= 0) {
      this.queue[existing] = { position, character, finish }; // latest wins
    } else {
      this.queue.push({ position, character, finish });
    }
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.inFlight || !this.state || this.state.closed) return;
    const next = this.queue.shift();
    if (!next) return;
    this.inFlight = true;
    this.state.pending = true;
    this.emit();
    try {
      const res = await this.client.correct(
        this.state.sessionId,
        next.position,
        next.character,
        next.finish,
      );
      this.state.hypothesis = res.hypothesis;
      this.state.validatedPrefixLen = res.validated_prefix_len;
    } catch (err) {
      // 4xx: report and leave the display untouched
      this.onError(err as Error);
    } finally {
      this.inFlight = false;
      if (this.state) {
        this.state.pending = this.queue.length > 0;
        this.emit();
      }
    }
    void this.pump();
  }

  async accept(learn: boolean): Promise<UiSession | null> {
    if (!this.state || this.state.closed) return this.state;
    try {
      const res = await this.client.accept(this.state.sessionId, learn);
      this.state.closed = true;
      this.state.final = res.final;
      this.state.hypothesis = res.final;
      this.state.counters = res.ksmr_counters;
      this.emit();
      return this.state;
    } catch (err) {
      this.onError(err as Error); // leaves a retry affordance to the view
      return this.state;
    }
  }

  reset(): void {
    this.state = null;
    this.queue = [];
    this.clearStored();
  }
}
