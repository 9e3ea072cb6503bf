/**
 * Write-behind queue for answer saves.
 *
 * Objective picks go to the server immediately; essay text waits out a
 * debounce window so we do not PUT on every keystroke. Per question there is
 * at most one request in flight; edits made while a save is outstanding are
 * coalesced and the newest value is sent when the in-flight request settles
 * (last write wins). The server receipt is the only thing that marks a
 * question "saved".
 */

import { AnswerReceipt } from "./api.js";

export type SaveFn = (questionId: string, value: string) => Promise<AnswerReceipt>;

export interface SaverOptions {
  save: SaveFn;
  /** receipt handed back by the service for a stored value */
  onSaved?: (questionId: string, value: string, receipt: AnswerReceipt) => void;
  /** server refused the write (deadline passed, bad label, session gone) */
  onRejected?: (questionId: string, err: unknown) => void;
  essayDebounceMs?: number;
}

const ESSAY_DEBOUNCE_MS = 2000;

interface QuestionChannel {
  debounce: ReturnType<typeof setTimeout> | null;
  /** value waiting out the debounce window */
  staged: string | null;
  inFlight: boolean;
  /** newest value typed while a request was outstanding */
  queued: string | null;
}

export class AnswerSaver {
  private readonly opts: SaverOptions;
  private readonly debounceMs: number;
  private readonly channels = new Map<string, QuestionChannel>();
  private stopped = false;

  constructor(opts: SaverOptions) {
    this.opts = opts;
    this.debounceMs = opts.essayDebounceMs ?? ESSAY_DEBOUNCE_MS;
  }

  /** Objective choice: no debounce, the click is the commit gesture. */
  stageObjective(questionId: string, label: string): void {
    if (this.stopped) return;
    const ch = this.channel(questionId);
    this.cancelDebounce(ch);
    ch.staged = null;
    this.dispatch(questionId, ch, label);
  }

  /** Essay text: waits for a pause in typing before writing through. */
  stageEssay(questionId: string, text: string): void {
    if (this.stopped) return;
    const ch = this.channel(questionId);
    this.cancelDebounce(ch);
    ch.staged = text;
    ch.debounce = setTimeout(() => {
      ch.debounce = null;
      if (ch.staged !== null) {
        const value = ch.staged;
        ch.staged = null;
        this.dispatch(questionId, ch, value);
      }
    }, this.debounceMs);
  }

  /** True while any question has unsent or unacknowledged edits. */
  hasPendingWork(): boolean {
    for (const ch of this.channels.values()) {
      if (ch.debounce !== null || ch.staged !== null || ch.inFlight ||
          ch.queued !== null) return true;
    }
    return false;
  }

  /**
   * Force every staged value to the server now and wait for the dust to
   * settle. Used right before submit so nothing is lost in a debounce window.
   */
  async flush(): Promise<void> {
    for (const [qid, ch] of this.channels) {
      this.cancelDebounce(ch);
      if (ch.staged !== null) {
        const value = ch.staged;
        ch.staged = null;
        this.dispatch(qid, ch, value);
      }
    }
    while (this.hasPendingWork()) {
      await new Promise((resolve) => setTimeout(resolve, 10));
    }
  }

  /** Drop all timers and queues; used when the session leaves "active". */
  stop(): void {
    this.stopped = true;
    for (const ch of this.channels.values()) {
      this.cancelDebounce(ch);
      ch.staged = null;
      ch.queued = null;
    }
  }

  private channel(questionId: string): QuestionChannel {
    let ch = this.channels.get(questionId);
    if (!ch) {
      ch = { debounce: null, staged: null, inFlight: false, queued: null };
      this.channels.set(questionId, ch);
    }
    return ch;
  }

  private cancelDebounce(ch: QuestionChannel): void {
    if (ch.debounce !== null) {
      clearTimeout(ch.debounce);
      ch.debounce = null;
    }
  }

  private dispatch(questionId: string, ch: QuestionChannel, value: string): void {
    if (ch.inFlight) {
      ch.queued = value; // overwrite: only the newest edit matters
      return;
    }
    ch.inFlight = true;
    this.opts
      .save(questionId, value)
      .then((receipt) => {
        if (!this.stopped) this.opts.onSaved?.(questionId, value, receipt);
      })
      .catch((err) => {
        ch.queued = null; // a refused write will not succeed on retry-as-is
        if (!this.stopped) this.opts.onRejected?.(questionId, err);
      })
      .finally(() => {
        ch.inFlight = false;
        if (this.stopped) return;
        if (ch.queued !== null) {
          const next = ch.queued;
          ch.queued = null;
          this.dispatch(questionId, ch, next);
        }
      });
  }
}
