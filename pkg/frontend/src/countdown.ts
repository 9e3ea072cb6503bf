/**
 * Wall-clock countdown pinned to the server's idea of remaining time.
 *
 * The browser clock is never trusted for the deadline itself. Each sync
 * records (serverRemaining, localReferenceTime); display time is then
 *     remaining = serverRemaining - (now - localReferenceTime)
 * so only drift accumulated since the last sync can show up, and a resync
 * every RESYNC_INTERVAL_MS truncates that error.
 */

export interface CountdownSync {
  /** seconds left as the server reported them */
  remainingSeconds: number;
}

export interface CountdownOptions {
  /** asks the server how much time is left; rejects bubble to onSyncError */
  fetchRemaining: () => Promise<CountdownSync>;
  onTick?: (remainingSeconds: number) => void;
  /** fired exactly once, the first time the display value reaches zero */
  onExpired?: () => void;
  onSyncError?: (err: unknown) => void;
  tickIntervalMs?: number;
  resyncIntervalMs?: number;
  /** injectable clock for tests; milliseconds */
  nowMs?: () => number;
}

const TICK_INTERVAL_MS = 250;
const RESYNC_INTERVAL_MS = 30_000;

export class ServerCountdown {
  private readonly opts: Required<Pick<CountdownOptions, "fetchRemaining">> &
    CountdownOptions;
  private readonly nowMs: () => number;
  private readonly tickMs: number;
  private readonly resyncMs: number;

  private serverRemainingSec = 0;
  private syncedAtMs = 0;
  /** no expiry verdicts until at least one server figure has arrived */
  private primed = false;
  private timer: ReturnType<typeof setInterval> | null = null;
  private resyncTimer: ReturnType<typeof setInterval> | null = null;
  private expiredFired = false;
  private syncInFlight = false;

  constructor(opts: CountdownOptions) {
    this.opts = opts;
    this.nowMs = opts.nowMs ?? (() => Date.now());
    this.tickMs = opts.tickIntervalMs ?? TICK_INTERVAL_MS;
    this.resyncMs = opts.resyncIntervalMs ?? RESYNC_INTERVAL_MS;
  }

  /** Prime from a value already in hand (begin/session receipts carry one). */
  prime(remainingSeconds: number): void {
    this.serverRemainingSec = remainingSeconds;
    this.syncedAtMs = this.nowMs();
    this.primed = true;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => this.tick(), this.tickMs);
    this.resyncTimer = setInterval(() => void this.resyncNow(), this.resyncMs);
    this.tick();
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    if (this.resyncTimer !== null) clearInterval(this.resyncTimer);
    this.timer = null;
    this.resyncTimer = null;
  }

  get running(): boolean {
    return this.timer !== null;
  }

  async resyncNow(): Promise<void> {
    if (this.syncInFlight) return;
    this.syncInFlight = true;
    try {
      const sync = await this.opts.fetchRemaining();
      this.serverRemainingSec = sync.remainingSeconds;
      this.syncedAtMs = this.nowMs();
      this.primed = true;
      this.tick();
    } catch (err) {
      // stale local extrapolation is still better than nothing
      this.opts.onSyncError?.(err);
    } finally {
      this.syncInFlight = false;
    }
  }

  remainingSeconds(): number {
    if (!this.primed) return NaN;
    const elapsed = (this.nowMs() - this.syncedAtMs) / 1000;
    return Math.max(0, this.serverRemainingSec - elapsed);
  }

  private tick(): void {
    if (!this.primed) return; // nothing to count yet
    const remaining = this.remainingSeconds();
    this.opts.onTick?.(remaining);
    if (remaining <= 0 && !this.expiredFired) {
      this.expiredFired = true;
      this.stop();
      this.opts.onExpired?.();
    }
  }
}

/** "1:02:09" / "12:05" style rendering for the timer strip. */
export function formatRemaining(seconds: number): string {
  if (!Number.isFinite(seconds)) return "--:--";
  const total = Math.max(0, Math.floor(seconds));
  const h = Math.floor(total / 3600);
  const m = Math.floor((total % 3600) / 60);
  const s = total % 60;
  const mm = String(m).padStart(2, "0");
  const ss = String(s).padStart(2, "0");
  return h > 0 ? `${h}:${mm}:${ss}` : `${mm}:${ss}`;
}
