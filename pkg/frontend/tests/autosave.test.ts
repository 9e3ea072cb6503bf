import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { AnswerReceipt } from "../src/api.js";
import { AnswerSaver } from "../src/autosave.js";

function receipt(qid: string): AnswerReceipt {
  return { question_id: qid, recorded_at: "2016-07-01T09:00:00+00:00", answered: 1 };
}

interface Controlled {
  saver: AnswerSaver;
  sent: { qid: string; value: string }[];
  saved: { qid: string; value: string }[];
  rejected: { qid: string; err: unknown }[];
  /** resolves the oldest unresolved save */
  release: (ok?: boolean) => void;
}

function controlledSaver(): Controlled {
  const sent: { qid: string; value: string }[] = [];
  const saved: { qid: string; value: string }[] = [];
  const rejected: { qid: string; err: unknown }[] = [];
  const pending: { qid: string; resolve: (r: AnswerReceipt) => void;
                   reject: (e: unknown) => void }[] = [];
  const saver = new AnswerSaver({
    save: (qid, value) => {
      sent.push({ qid, value });
      return new Promise((resolve, reject) => pending.push({ qid, resolve, reject }));
    },
    onSaved: (qid, value) => saved.push({ qid, value }),
    onRejected: (qid, err) => rejected.push({ qid, err }),
    essayDebounceMs: 2000,
  });
  return {
    saver, sent, saved, rejected,
    release: (ok = true) => {
      const p = pending.shift();
      if (!p) throw new Error("nothing pending");
      if (ok) p.resolve(receipt(p.qid));
      else p.reject(new Error("PastDeadline"));
    },
  };
}

describe("AnswerSaver", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("sends objective choices immediately", () => {
    const c = controlledSaver();
    c.saver.stageObjective("q01", "B");
    expect(c.sent).toEqual([{ qid: "q01", value: "B" }]);
  });

  it("debounces essay text for the configured window", async () => {
    const c = controlledSaver();
    c.saver.stageEssay("e01", "first dr");
    await vi.advanceTimersByTimeAsync(1500);
    expect(c.sent.length).toBe(0); // still inside the window
    c.saver.stageEssay("e01", "first draft done");
    await vi.advanceTimersByTimeAsync(1999);
    expect(c.sent.length).toBe(0); // window restarted by the second edit
    await vi.advanceTimersByTimeAsync(1);
    expect(c.sent).toEqual([{ qid: "e01", value: "first draft done" }]);
  });

  it("keeps one request in flight and replays only the newest edit", async () => {
    const c = controlledSaver();
    c.saver.stageObjective("q01", "A");
    c.saver.stageObjective("q01", "B");
    c.saver.stageObjective("q01", "C");
    expect(c.sent.length).toBe(1); // A is in flight; B was discarded for C
    c.release();
    await vi.advanceTimersByTimeAsync(1);
    expect(c.sent).toEqual([
      { qid: "q01", value: "A" },
      { qid: "q01", value: "C" },
    ]);
    c.release();
    await vi.advanceTimersByTimeAsync(1);
    expect(c.saved.map((s) => s.value)).toEqual(["A", "C"]);
  });

  it("tracks questions independently", async () => {
    const c = controlledSaver();
    c.saver.stageObjective("q01", "A");
    c.saver.stageObjective("q02", "D");
    expect(c.sent.length).toBe(2);
  });

  it("marks saved only on the server receipt", async () => {
    const c = controlledSaver();
    c.saver.stageObjective("q01", "A");
    expect(c.saved.length).toBe(0); // request sent, no ack yet
    c.release();
    await vi.advanceTimersByTimeAsync(1);
    expect(c.saved).toEqual([{ qid: "q01", value: "A" }]);
  });

  it("reports rejections and drops the queued retry", async () => {
    const c = controlledSaver();
    c.saver.stageObjective("q01", "A");
    c.saver.stageObjective("q01", "B"); // queued behind the in-flight A
    c.release(false);
    await vi.advanceTimersByTimeAsync(50);
    expect(c.rejected.length).toBe(1);
    expect(c.sent.length).toBe(1); // the queued B must not chase a dead session
  });

  it("flush pushes out a value still inside its debounce window", async () => {
    vi.useRealTimers();
    const sent: string[] = [];
    const saver = new AnswerSaver({
      save: async (qid, value) => {
        sent.push(value);
        return receipt(qid);
      },
      essayDebounceMs: 60_000, // would never fire on its own in this test
    });
    saver.stageEssay("e01", "half-typed paragraph");
    await saver.flush();
    expect(sent).toEqual(["half-typed paragraph"]);
  });

  it("flush waits for in-flight and queued work", async () => {
    vi.useRealTimers();
    let resolveFirst: ((r: AnswerReceipt) => void) | null = null;
    const sent: string[] = [];
    const saver = new AnswerSaver({
      save: (qid, value) => {
        sent.push(value);
        if (resolveFirst === null) {
          return new Promise((res) => {
            resolveFirst = res;
          });
        }
        return Promise.resolve(receipt(qid));
      },
    });
    saver.stageObjective("q01", "A");
    saver.stageObjective("q01", "B");
    const flushed = saver.flush();
    setTimeout(() => resolveFirst!(receipt("q01")), 20);
    await flushed;
    expect(sent).toEqual(["A", "B"]);
    expect(saver.hasPendingWork()).toBe(false);
  });

  it("stop() silences callbacks and timers", async () => {
    const c = controlledSaver();
    c.saver.stageEssay("e01", "text");
    c.saver.stageObjective("q01", "A");
    c.saver.stop();
    c.release();
    await vi.advanceTimersByTimeAsync(5000);
    expect(c.sent.length).toBe(1); // the in-flight write, nothing after stop
    expect(c.saved.length).toBe(0);
  });
});
