import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ModerationResponse, RedTeamReceipt } from "../src/api.js";
import { RedTeamController } from "../src/redteam.js";
import { CATEGORIES } from "../src/taxonomy.js";

interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (err: unknown) => void;
}

function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (err: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

function response(high: string[]): ModerationResponse {
  const scores: Record<string, number> = {};
  const flagged: Record<string, boolean> = {};
  for (const cat of CATEGORIES) {
    scores[cat] = high.includes(cat) ? 0.9 : 0.05;
    flagged[cat] = high.includes(cat);
  }
  return { scores, flagged, checkpoint_id: "abc" };
}

class FakeApi {
  moderateCalls: { text: string; d: Deferred<ModerationResponse> }[] = [];
  redteamCalls: { text: string; expected: Record<string, string>; note: string }[] = [];

  moderate(text: string): Promise<ModerationResponse> {
    const d = deferred<ModerationResponse>();
    this.moderateCalls.push({ text, d });
    return d.promise;
  }

  async submitRedTeam(text: string, expected: Record<string, string>, note: string): Promise<RedTeamReceipt> {
    this.redteamCalls.push({ text, expected, note });
    return { id: "rt-1", duplicate: false, scores: {} };
  }
}

function thresholds(): Record<string, number> {
  const out: Record<string, number> = {};
  for (const cat of CATEGORIES) {
    out[cat] = 0.5;
  }
  return out;
}

async function flush() {
  await Promise.resolve();
  await Promise.resolve();
}

describe("live scoring", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("scores once per typing pause, not per keystroke", async () => {
    const fake = new FakeApi();
    const c = new RedTeamController(fake as unknown as ApiClient, thresholds());
    c.onInput("h");
    vi.advanceTimersByTime(100);
    c.onInput("he");
    vi.advanceTimersByTime(100);
    c.onInput("hello");
    expect(fake.moderateCalls).toHaveLength(0);
    expect(c.state.scoring).toBe(true);
    vi.advanceTimersByTime(300);
    expect(fake.moderateCalls).toHaveLength(1);
    expect(fake.moderateCalls[0].text).toBe("hello");
    fake.moderateCalls[0].d.resolve(response(["H"]));
    await flush();
    expect(c.state.scores?.H).toBe(0.9);
    expect(c.state.scoredText).toBe("hello");
    expect(c.state.scoring).toBe(false);
  });

  it("drops a stale response that arrives after a newer revision", async () => {
    const fake = new FakeApi();
    const c = new RedTeamController(fake as unknown as ApiClient, thresholds());
    c.onInput("first");
    vi.advanceTimersByTime(300);
    c.onInput("second");
    vi.advanceTimersByTime(300);
    expect(fake.moderateCalls.map((call) => call.text)).toEqual(["first", "second"]);
    // the newer request resolves before the older one
    fake.moderateCalls[1].d.resolve(response(["V"]));
    await flush();
    fake.moderateCalls[0].d.resolve(response(["H"]));
    await flush();
    expect(c.state.scoredText).toBe("second");
    expect(c.state.scores?.V).toBe(0.9);
    expect(c.state.scores?.H).toBe(0.05);
  });

  it("clears scores and cancels the pending request when the text is blanked", async () => {
    const fake = new FakeApi();
    const c = new RedTeamController(fake as unknown as ApiClient, thresholds());
    c.onInput("draft");
    vi.advanceTimersByTime(100);
    c.onInput("");
    vi.advanceTimersByTime(1000);
    expect(fake.moderateCalls).toHaveLength(0);
    expect(c.state.scores).toBeNull();
    expect(c.state.scoring).toBe(false);
  });

  it("keeps old scores and shows a banner when scoring fails", async () => {
    const fake = new FakeApi();
    const c = new RedTeamController(fake as unknown as ApiClient, thresholds());
    c.onInput("draft");
    vi.advanceTimersByTime(300);
    fake.moderateCalls[0].d.reject(new Error("boom"));
    await flush();
    expect(c.state.banner).toContain("boom");
    expect(c.state.scoring).toBe(false);
  });
});

describe("verdicts", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("compares expectations against the thresholded scores", async () => {
    const fake = new FakeApi();
    const c = new RedTeamController(fake as unknown as ApiClient, thresholds());
    c.onInput("probe text");
    vi.advanceTimersByTime(300);
    fake.moderateCalls[0].d.resolve(response(["H"]));
    await flush();
    c.setExpected("H", "positive"); // score 0.9 > 0.5 -> pass
    c.setExpected("V", "positive"); // score 0.05 -> fail
    c.setExpected("S", "negative"); // score 0.05 -> pass
    const v = c.verdicts();
    expect(v.H).toBe("pass");
    expect(v.V).toBe("fail");
    expect(v.S).toBe("pass");
    expect(v.HR).toBe("none");
  });

  it("reports none for every category until scores exist", () => {
    const c = new RedTeamController(new FakeApi() as unknown as ApiClient, thresholds());
    c.setExpected("H", "positive");
    expect(c.verdicts().H).toBe("none");
  });
});

describe("submission", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("records the case with the expected labels and keeps the receipt", async () => {
    const fake = new FakeApi();
    const c = new RedTeamController(fake as unknown as ApiClient, thresholds());
    c.onInput("a sly probe");
    expect(c.canSubmit()).toBe(false);
    c.setExpected("H2", "positive");
    expect(c.canSubmit()).toBe(true);
    await c.submit("tricky phrasing");
    expect(fake.redteamCalls).toEqual([
      { text: "a sly probe", expected: { H: "positive", H2: "positive" }, note: "tricky phrasing" },
    ]);
    expect(c.state.submitState).toBe("submitted");
    expect(c.state.receipt?.id).toBe("rt-1");
  });
});
