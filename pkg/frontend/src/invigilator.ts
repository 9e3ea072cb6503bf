/**
 * Invigilator console model: live per-candidate progress for one sitting
 * plus the security-image confirmation step performed at hall opening.
 */

import { ExamApi, SittingStatus } from "./api.js";

export interface InvigilatorEvents {
  onStatus?: (status: SittingStatus) => void;
  onError?: (err: unknown) => void;
}

const REFRESH_INTERVAL_MS = 5000;

export class InvigilatorConsole {
  private readonly api: ExamApi;
  private readonly sittingId: string;
  private readonly events: InvigilatorEvents;
  private timer: ReturnType<typeof setInterval> | null = null;
  private _last: SittingStatus | null = null;

  constructor(api: ExamApi, sittingId: string, events: InvigilatorEvents = {}) {
    this.api = api;
    this.sittingId = sittingId;
    this.events = events;
  }

  get last(): SittingStatus | null {
    return this._last;
  }

  async refresh(): Promise<SittingStatus> {
    const status = await this.api.sittingStatus(this.sittingId);
    this._last = status;
    this.events.onStatus?.(status);
    return status;
  }

  startPolling(intervalMs: number = REFRESH_INTERVAL_MS): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => {
      this.refresh().catch((err) => this.events.onError?.(err));
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  /** Report the image index and code as read off the projector screen. */
  confirmImage(observedIndex: number, observedCode: string) {
    return this.api.confirmImage(this.sittingId, observedIndex, observedCode);
  }
}

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

/** Roster rows for the console table; handles full-hall sized lists. */
export function rosterRowsHtml(
  candidates: { reg_no: string; state: string }[],
): string {
  return candidates
    .map((c) => `<tr><td>${escapeHtml(c.reg_no)}</td>`
                + `<td>${escapeHtml(c.state)}</td></tr>`)
    .join("");
}

/** Roll the per-state counts into the strip shown above the roster table. */
export function formatCounts(counts: Record<string, number>): string {
  const order = ["not-authenticated", "authenticated", "lockdown-pending",
                 "active", "submitted", "expired"];
  const parts: string[] = [];
  for (const state of order) {
    if (counts[state]) parts.push(`${state}: ${counts[state]}`);
  }
  for (const [state, n] of Object.entries(counts)) {
    if (!order.includes(state)) parts.push(`${state}: ${n}`);
  }
  return parts.join("  |  ");
}
