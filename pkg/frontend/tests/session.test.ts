import { describe, expect, it, vi } from "vitest";

import { debounce } from "../src/api.js";
import { ConsoleSession } from "../src/session.js";
import type { QueryResponse } from "../src/types.js";

const response: QueryResponse = {
  answer: "x",
  route: {
    path: "general",
    sql_score: 0,
    keyword_score: 0,
    event_score: 0,
    matched_patterns: [],
    p7_passed: false,
    extracted_search_term: null,
  },
  l2: null,
  evidence: [],
  sql_text: null,
  latencies: { total: 0.001 },
  trace_id: "t-1",
  degraded: false,
  degraded_reason: null,
};

function memoryStorage() {
  const data = new Map<string, string>();
  return {
    getItem: (k: string) => data.get(k) ?? null,
    setItem: (k: string, v: string) => void data.set(k, v),
  };
}

describe("ConsoleSession", () => {
  it("history is append-only", () => {
    const session = new ConsoleSession();
    session.append("q1", response);
    session.append("q2", response);
    expect(session.history.map((e) => e.question)).toEqual(["q1", "q2"]);
  });

  it("round-trips through storage", () => {
    const storage = memoryStorage();
    const session = new ConsoleSession();
    session.append("q1", response);
    session.setToggle("ablation", "no_l2");
    session.setToggle("dataset", "sample_linux");
    session.save(storage);
    const restored = ConsoleSession.load(storage);
    expect(restored.history.length).toBe(1);
    expect(restored.toggles.ablation).toBe("no_l2");
    expect(restored.toggles.dataset).toBe("sample_linux");
  });

  it("starts fresh on corrupted storage", () => {
    const storage = memoryStorage();
    storage.setItem("logrouter-console-session", "{not json");
    const session = ConsoleSession.load(storage);
    expect(session.history.length).toBe(0);
    expect(session.toggles.strategy).toBe("hybrid");
  });
});

describe("debounce", () => {
  it("fires only the last call after the wait", () => {
    vi.useFakeTimers();
    const calls: string[] = [];
    const d = debounce((s: string) => calls.push(s), 200);
    d.call("a");
    d.call("b");
    vi.advanceTimersByTime(150);
    d.call("c");
    vi.advanceTimersByTime(199);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual(["c"]);
    vi.useRealTimers();
  });

  it("cancel suppresses the pending call", () => {
    vi.useFakeTimers();
    const calls: string[] = [];
    const d = debounce((s: string) => calls.push(s), 100);
    d.call("a");
    d.cancel();
    vi.advanceTimersByTime(500);
    expect(calls).toEqual([]);
    vi.useRealTimers();
  });
});
