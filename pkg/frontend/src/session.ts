/**
 * Client-side mirror of one candidate's exam session.
 *
 * The mirror only ever moves on a server acknowledgement: authenticate,
 * begin, answer receipts, submit, and rejections all originate server-side.
 * The single local transition allowed is the countdown lock, which disables
 * inputs when the displayed timer reaches zero; it does not pretend the
 * session ended, it just stops accepting keystrokes until the server
 * confirms expiry.
 */

import {
  AnswerReceipt,
  ApiError,
  AuthResponse,
  BeginResponse,
  ExamApi,
  LockdownSelfReport,
  PaperQuestion,
  SessionView,
  SubmitResponse,
} from "./api.js";

export type ClientState =
  | "anonymous"
  | "authenticated"
  | "lockdown-pending"
  | "active"
  | "submitted"
  | "expired";

/** server rejections that mean the attempt is over, not merely mistyped */
const TERMINAL_CODES = new Set(["PastDeadline", "SessionNotActive"]);

export interface SessionSnapshot {
  state: ClientState;
  regNo: string | null;
  sittingId: string | null;
  examId: string | null;
  deadline: string | null;
  remainingSeconds: number | null;
  answered: Set<string>;
  timerLocked: boolean;
}

export interface SessionEvents {
  onStateChange?: (state: ClientState) => void;
  onAnswered?: (questionId: string, receipt: AnswerReceipt) => void;
}

export class ExamSession {
  private readonly api: ExamApi;
  private readonly events: SessionEvents;

  private _state: ClientState = "anonymous";
  private token: string | null = null;
  private view: SessionView | null = null;
  private _answered = new Set<string>();
  private _timerLocked = false;
  private _lastBegin: BeginResponse | null = null;
  private _lastSubmit: SubmitResponse | null = null;

  constructor(api: ExamApi, events: SessionEvents = {}) {
    this.api = api;
    this.events = events;
  }

  get state(): ClientState {
    return this._state;
  }

  get answered(): ReadonlySet<string> {
    return this._answered;
  }

  get deadline(): string | null {
    return this._lastBegin?.deadline ?? this.view?.deadline ?? null;
  }

  get lastSubmit(): SubmitResponse | null {
    return this._lastSubmit;
  }

  get sessionToken(): string | null {
    return this.token;
  }

  /** Inputs are live only while the server says active and the timer has
   * not been run down locally. Everything else renders read-only. */
  inputsEnabled(): boolean {
    return this._state === "active" && !this._timerLocked;
  }

  snapshot(): SessionSnapshot {
    return {
      state: this._state,
      regNo: this.view?.reg_no ?? null,
      sittingId: this.view?.sitting_id ?? null,
      examId: this.view?.exam_id ?? null,
      deadline: this.deadline,
      remainingSeconds: this.view?.remaining_seconds ?? null,
      answered: new Set(this._answered),
      timerLocked: this._timerLocked,
    };
  }

  async authenticate(regNo: string, identityNo: string,
                     sittingId: string): Promise<AuthResponse> {
    const resp = await this.api.authenticate(regNo, identityNo, sittingId);
    this.token = resp.token;
    this.view = resp;
    this.adoptServerState(resp.state);
    this._answered = new Set(resp.answered);
    return resp;
  }

  async begin(report: LockdownSelfReport): Promise<BeginResponse> {
    const token = this.requireToken();
    try {
      const resp = await this.api.begin(token, report);
      this._lastBegin = resp;
      this.adoptServerState(resp.state);
      return resp;
    } catch (err) {
      if (err instanceof ApiError && err.code === "LockdownRejected") {
        // server parked the attempt at lockdown-pending; mirror that
        this.moveTo("lockdown-pending");
      }
      this.noteRejection(err);
      throw err;
    }
  }

  async fetchPaper(): Promise<PaperQuestion[]> {
    const token = this.requireToken();
    try {
      const resp = await this.api.paper(token);
      this.view = resp.session;
      this.adoptServerState(resp.session.state);
      this._answered = new Set(resp.session.answered);
      return resp.questions;
    } catch (err) {
      this.noteRejection(err);
      throw err;
    }
  }

  /** Raw save used by the autosave queue; acks update answered markers. */
  async saveAnswer(questionId: string, value: string): Promise<AnswerReceipt> {
    const token = this.requireToken();
    try {
      const receipt = await this.api.saveAnswer(token, questionId, value);
      this._answered.add(questionId);
      this.events.onAnswered?.(questionId, receipt);
      return receipt;
    } catch (err) {
      this.noteRejection(err);
      throw err;
    }
  }

  async submit(): Promise<SubmitResponse> {
    const token = this.requireToken();
    try {
      const resp = await this.api.submit(token);
      this._lastSubmit = resp;
      this.adoptServerState(resp.state);
      return resp;
    } catch (err) {
      this.noteRejection(err);
      throw err;
    }
  }

  /** Re-pull the authoritative view; used on resync and after reconnects. */
  async refresh(): Promise<SessionView> {
    const token = this.requireToken();
    const view = await this.api.sessionView(token);
    this.view = view;
    this._answered = new Set(view.answered);
    this.adoptServerState(view.state);
    return view;
  }

  /** Countdown hit zero locally: stop accepting input, ask the server. */
  lockOnTimer(): void {
    if (this._state !== "active") return;
    this._timerLocked = true;
    this.events.onStateChange?.(this._state);
  }

  private requireToken(): string {
    if (this.token === null) throw new Error("not authenticated");
    return this.token;
  }

  private adoptServerState(state: string): void {
    const known: ClientState[] = [
      "authenticated", "lockdown-pending", "active", "submitted", "expired",
    ];
    if ((known as string[]).includes(state)) {
      this.moveTo(state as ClientState);
    }
  }

  private moveTo(state: ClientState): void {
    if (state === this._state) return;
    this._state = state;
    if (state !== "active") this._timerLocked = false;
    this.events.onStateChange?.(state);
  }

  private noteRejection(err: unknown): void {
    if (err instanceof ApiError && TERMINAL_CODES.has(err.code)) {
      this.moveTo("expired");
    }
  }
}
