/**
 * Candidate-facing screens, framework-free DOM.
 *
 * Screen flow: sign-in -> environment check (security image + measured
 * lockdown report) -> paper (navigator, one question at a time, timer strip)
 * -> submitted receipt, with an expiry screen reachable from any point the
 * server declares the attempt over. Inputs are writable only while the
 * mirrored session state is "active" and the countdown has not hit zero;
 * every other state renders the paper read-only.
 */

import {
  ApiError,
  ExamApi,
  PaperQuestion,
  SecurityImageInfo,
  TransportError,
} from "./api.js";
import { AnswerSaver } from "./autosave.js";
import { formatRemaining, ServerCountdown } from "./countdown.js";
import { ClientState, ExamSession } from "./session.js";

export interface PageConfig {
  sittingId?: string;
  /** measured by the sanctioned launcher, not asserted by the candidate */
  communicationsDisabled?: boolean;
  externalStorageBlocked?: boolean;
  environmentDigest?: string;
  /** test hook: shrink the resync/tick intervals */
  tickIntervalMs?: number;
  resyncIntervalMs?: number;
  essayDebounceMs?: number;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export class CandidatePage {
  readonly session: ExamSession;
  private readonly api: ExamApi;
  private readonly root: HTMLElement;
  private readonly config: PageConfig;
  private readonly saver: AnswerSaver;
  private countdown: ServerCountdown | null = null;

  private paper: PaperQuestion[] = [];
  private current = 0;
  /** local echo of inputs; server acks drive the answered markers instead */
  private drafts = new Map<string, string>();
  private notice = "";
  private offline = false;
  private securityImage: SecurityImageInfo | null = null;
  private confirmingSubmit = false;

  constructor(root: HTMLElement, api: ExamApi, config: PageConfig = {}) {
    this.root = root;
    this.api = api;
    this.config = config;
    this.session = new ExamSession(api, {
      onStateChange: () => this.render(),
      onAnswered: () => this.renderNavigator(),
    });
    this.saver = new AnswerSaver({
      save: (qid, value) => this.session.saveAnswer(qid, value),
      onSaved: () => {
        this.setOffline(false);
      },
      onRejected: (_qid, err) => this.handleSaveRejection(err),
      essayDebounceMs: config.essayDebounceMs,
    });
  }

  start(): void {
    this.render();
  }

  // -- screens ----------------------------------------------------------------

  render(): void {
    const state = this.session.state;
    if (state !== "active") this.stopTimer();
    this.root.textContent = "";
    this.root.append(this.banner());
    switch (state) {
      case "anonymous":
        this.root.append(this.signInScreen());
        break;
      case "authenticated":
      case "lockdown-pending":
        this.root.append(this.lockdownScreen(state));
        break;
      case "active":
        this.root.append(this.examScreen());
        break;
      case "submitted":
        this.root.append(this.submittedScreen());
        break;
      case "expired":
        this.root.append(this.expiredScreen());
        break;
    }
  }

  private banner(): HTMLElement {
    const bar = el("div", { id: "status-bar" });
    bar.append(el("span", { id: "session-state" }, this.session.state));
    if (this.offline) {
      bar.append(el("span", { id: "offline-banner", class: "warning" },
                    "connection lost; retrying"));
    }
    if (this.notice) {
      bar.append(el("span", { id: "notice" }, this.notice));
    }
    return bar;
  }

  private signInScreen(): HTMLElement {
    const pane = el("section", { id: "sign-in" });
    pane.append(el("h1", {}, "Examination sign-in"));
    const form = el("form", { id: "auth-form" });
    const reg = el("input", { id: "reg-no", name: "reg_no",
                              placeholder: "registration number" });
    const idn = el("input", { id: "identity-no", name: "identity_no",
                              placeholder: "identity number", type: "password" });
    const sit = el("input", { id: "sitting-id", name: "sitting_id",
                              placeholder: "sitting" });
    if (this.config.sittingId) sit.value = this.config.sittingId;
    const go = el("button", { id: "auth-submit", type: "submit" }, "Sign in");
    form.append(reg, idn, sit, go);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.doAuthenticate(reg.value.trim(), idn.value.trim(),
                               sit.value.trim());
    });
    pane.append(form);
    return pane;
  }

  private lockdownScreen(state: ClientState): HTMLElement {
    const pane = el("section", { id: "lockdown" });
    pane.append(el("h1", {}, "Environment check"));
    pane.append(el("p", {},
      "Confirm with the invigilator that the image on the hall screen "
      + "matches your workstation before starting."));
    const imageBox = el("div", { id: "security-image" });
    if (this.securityImage) {
      imageBox.append(el("p", { class: "glyph" },
        `Sitting image ${this.securityImage.image_index}: `
        + this.securityImage.glyph_name));
    } else {
      imageBox.append(el("p", {}, "fetching the sitting image..."));
      void this.loadSecurityImage();
    }
    pane.append(imageBox);
    if (state === "lockdown-pending") {
      pane.append(el("p", { id: "lockdown-refused", class: "warning" },
        "This workstation did not pass the environment check. "
        + "Call the invigilator."));
    }
    const report = el("ul", { id: "lockdown-report" });
    report.append(
      el("li", {}, `communications disabled: ${this.measuredReport().communications_disabled}`),
      el("li", {}, `external storage blocked: ${this.measuredReport().external_storage_blocked}`),
    );
    pane.append(report);
    const go = el("button", { id: "begin-exam" }, "Begin exam");
    go.addEventListener("click", () => void this.doBegin());
    pane.append(go);
    return pane;
  }

  private async loadSecurityImage(): Promise<void> {
    const sittingId = this.session.snapshot().sittingId;
    if (!sittingId || this.securityImage) return;
    try {
      const status = await this.api.sittingStatus(sittingId);
      this.securityImage = status.security_image;
      const box = this.root.querySelector("#security-image");
      if (box) {
        box.textContent = "";
        box.append(el("p", { class: "glyph" },
          `Sitting image ${this.securityImage.image_index}: `
          + this.securityImage.glyph_name));
      }
    } catch {
      // the invigilator announcement still covers the hall; retry on rerender
    }
  }

  private examScreen(): HTMLElement {
    const pane = el("section", { id: "exam" });
    const strip = el("div", { id: "timer-strip" });
    strip.append(el("span", { id: "timer" }, "--:--"));
    pane.append(strip);
    pane.append(el("nav", { id: "navigator" }));
    pane.append(el("div", { id: "question-pane" }));
    const controls = el("div", { id: "controls" });
    if (this.confirmingSubmit) {
      controls.append(el("span", { id: "submit-question" },
        `Submit now? ${this.session.answered.size} of `
        + `${this.paper.length} questions answered.`));
      const yes = el("button", { id: "confirm-submit" }, "Yes, submit");
      yes.addEventListener("click", () => void this.doSubmit());
      const no = el("button", { id: "cancel-submit" }, "Keep working");
      no.addEventListener("click", () => {
        this.confirmingSubmit = false;
        this.render();
      });
      controls.append(yes, no);
    } else {
      const submit = el("button", { id: "submit-exam" }, "Submit exam");
      submit.addEventListener("click", () => {
        if (!this.session.inputsEnabled()) return;
        this.confirmingSubmit = true;
        this.render();
      });
      controls.append(submit);
    }
    pane.append(controls);
    queueMicrotask(() => {
      this.renderNavigator();
      this.renderQuestion();
      this.ensureTimer();
      const node = this.root.querySelector("#timer");
      if (node && this.countdown) {
        node.textContent = formatRemaining(this.countdown.remainingSeconds());
      }
    });
    return pane;
  }

  private submittedScreen(): HTMLElement {
    const pane = el("section", { id: "submitted" });
    pane.append(el("h1", {}, "Script submitted"));
    const receipt = this.session.lastSubmit;
    if (receipt) {
      pane.append(el("p", { id: "submit-receipt" },
        `Recorded ${receipt.answered} answered question(s) at `
        + `${receipt.submitted_at} (${receipt.termination}).`));
    }
    pane.append(el("p", {},
      "Results are released after marking closes; check with your "
      + "scratch card PIN."));
    return pane;
  }

  private expiredScreen(): HTMLElement {
    const pane = el("section", { id: "expired" });
    pane.append(el("h1", {}, "Time is up"));
    pane.append(el("p", { id: "expiry-notice" },
      "The examination window has closed. Answers saved before the "
      + "deadline were kept; nothing after it was accepted."));
    return pane;
  }

  // -- actions ------------------------------------------------------------------

  private async doAuthenticate(regNo: string, identityNo: string,
                               sittingId: string): Promise<void> {
    this.notice = "";
    try {
      await this.session.authenticate(regNo, identityNo, sittingId);
      this.setOffline(false);
    } catch (err) {
      this.showError(err);
    }
    this.render();
  }

  private async doBegin(): Promise<void> {
    this.notice = "";
    try {
      await this.session.begin(this.reportForServer());
      this.paper = await this.session.fetchPaper();
      this.current = 0;
      this.setOffline(false);
    } catch (err) {
      this.showError(err);
    }
    this.render();
  }

  private async doSubmit(): Promise<void> {
    this.notice = "";
    this.confirmingSubmit = false;
    try {
      await this.saver.flush();
      await this.session.submit();
      this.setOffline(false);
    } catch (err) {
      this.showError(err);
    }
    this.render();
  }

  private measuredReport() {
    return {
      communications_disabled: this.config.communicationsDisabled ?? false,
      external_storage_blocked: this.config.externalStorageBlocked ?? false,
    };
  }

  private reportForServer() {
    return {
      communicationsDisabled: this.config.communicationsDisabled ?? false,
      externalStorageBlocked: this.config.externalStorageBlocked ?? false,
      environmentDigest: this.config.environmentDigest ?? "",
    };
  }

  // -- paper rendering ---------------------------------------------------------

  private renderNavigator(): void {
    const nav = this.root.querySelector("#navigator");
    if (!nav) return;
    nav.textContent = "";
    this.paper.forEach((q, idx) => {
      const cls = ["nav-cell"];
      if (idx === this.current) cls.push("current");
      if (this.session.answered.has(q.id)) cls.push("answered");
      const cell = el("button", {
        class: cls.join(" "),
        "data-question": q.id,
        type: "button",
      }, String(idx + 1));
      cell.addEventListener("click", () => {
        this.current = idx;
        this.renderNavigator();
        this.renderQuestion();
      });
      nav.append(cell);
    });
  }

  private renderQuestion(): void {
    const pane = this.root.querySelector("#question-pane");
    if (!pane) return;
    pane.textContent = "";
    const q = this.paper[this.current];
    if (!q) return;
    const enabled = this.session.inputsEnabled();

    pane.append(el("h2", { id: "question-number" },
                   `Question ${this.current + 1} of ${this.paper.length}`));
    pane.append(el("p", { id: "question-prompt" }, q.prompt));

    if (q.kind === "objective") {
      const list = el("div", { id: "options", role: "radiogroup" });
      for (const opt of q.options ?? []) {
        const row = el("label", { class: "option-row" });
        const radio = el("input", {
          type: "radio",
          name: `answer-${q.id}`,
          value: opt.label,
        });
        if (this.drafts.get(q.id) === opt.label) radio.checked = true;
        if (!enabled) radio.disabled = true;
        radio.addEventListener("change", () => {
          if (!this.session.inputsEnabled()) return;
          this.drafts.set(q.id, opt.label);
          this.saver.stageObjective(q.id, opt.label);
        });
        row.append(radio, el("span", {}, `${opt.label}. ${opt.text}`));
        list.append(row);
      }
      pane.append(list);
    } else {
      pane.append(el("p", { class: "sentinel" },
                     q.answer_sentinel ?? "Please type your answer below this line"));
      const area = el("textarea", {
        id: `essay-${q.id}`,
        rows: "14",
        "data-question": q.id,
      });
      area.value = this.drafts.get(q.id) ?? "";
      if (!enabled) area.disabled = true;
      area.addEventListener("input", () => {
        if (!this.session.inputsEnabled()) return;
        this.drafts.set(q.id, area.value);
        this.saver.stageEssay(q.id, area.value);
      });
      pane.append(area);
      if (q.max_marks !== undefined) {
        pane.append(el("p", { class: "marks-note" },
                       `worth ${q.max_marks} marks`));
      }
    }

    for (const id of ["#submit-exam", "#confirm-submit", "#cancel-submit"]) {
      const btn = this.root.querySelector<HTMLButtonElement>(id);
      if (btn) btn.disabled = !enabled;
    }
  }

  // -- timer --------------------------------------------------------------------

  private ensureTimer(): void {
    if (this.countdown) return;
    this.countdown = new ServerCountdown({
      fetchRemaining: async () => {
        const view = await this.session.refresh();
        return { remainingSeconds: view.remaining_seconds ?? 0 };
      },
      onTick: (remaining) => {
        const node = this.root.querySelector("#timer");
        if (node) node.textContent = formatRemaining(remaining);
      },
      onExpired: () => void this.onTimerZero(),
      onSyncError: (err) => {
        if (err instanceof TransportError) this.setOffline(true);
      },
      tickIntervalMs: this.config.tickIntervalMs,
      resyncIntervalMs: this.config.resyncIntervalMs,
    });
    const snap = this.session.snapshot();
    if (snap.remainingSeconds !== null) {
      this.countdown.prime(snap.remainingSeconds);
    }
    this.countdown.start();
    void this.countdown.resyncNow();
  }

  private stopTimer(): void {
    if (this.countdown) {
      this.countdown.stop();
      this.countdown = null;
    }
  }

  /** Local zero: lock inputs at once, then let the server state the truth. */
  private async onTimerZero(): Promise<void> {
    this.saver.stop();
    this.session.lockOnTimer();
    this.notice = "Time is up. Saved answers are already with the server.";
    this.render();
    try {
      await this.session.refresh(); // server flips active -> expired lazily
    } catch {
      // next resync or action will surface the terminal state
    }
    this.render();
  }

  private handleSaveRejection(err: unknown): void {
    if (err instanceof TransportError) {
      this.setOffline(true);
      return;
    }
    this.showError(err);
    this.render();
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError) {
      this.notice = `${err.code}: ${err.message}`;
    } else if (err instanceof TransportError) {
      this.setOffline(true);
      this.notice = "Cannot reach the exam server.";
    } else {
      this.notice = String(err);
    }
  }

  private setOffline(offline: boolean): void {
    if (this.offline === offline) return;
    this.offline = offline;
    const bar = this.root.querySelector("#status-bar");
    if (bar) {
      const existing = bar.querySelector("#offline-banner");
      if (offline && !existing) {
        bar.append(el("span", { id: "offline-banner", class: "warning" },
                      "connection lost; retrying"));
      } else if (!offline && existing) {
        existing.remove();
      }
    }
  }
}
