/**
 * Red-team session: live model scores for the text being drafted, an
 * expected-label selector, and submission into the regression store. Scoring
 * is debounced and revision-guarded so the panel always shows scores for the
 * latest text revision, even when responses arrive out of order.
 */

import { ApiClient, RedTeamReceipt } from "./api.js";
import { Debounced, debounce } from "./debounce.js";
import { Assignments, CATEGORIES, Category, Ternary, emptyAssignments, hasAnyLabel, labeledEntries, withLabel } from "./taxonomy.js";

export const DEFAULT_DEBOUNCE_MS = 300;

export type SubmitState = "idle" | "submitting" | "submitted";

export interface RedTeamState {
  text: string;
  scores: Record<string, number> | null;
  scoredText: string | null;
  scoring: boolean;
  expected: Assignments;
  submitState: SubmitState;
  receipt: RedTeamReceipt | null;
  banner: string | null;
}

export type Verdict = "pass" | "fail" | "none";

export class RedTeamController {
  state: RedTeamState = {
    text: "",
    scores: null,
    scoredText: null,
    scoring: false,
    expected: emptyAssignments(),
    submitState: "idle",
    receipt: null,
    banner: null,
  };

  private revision = 0;
  private requestScore: Debounced<[string, number]>;

  constructor(
    private api: ApiClient,
    private thresholds: Record<string, number>,
    private onChange: (state: RedTeamState) => void = () => {},
    debounceMs: number = DEFAULT_DEBOUNCE_MS,
  ) {
    this.requestScore = debounce((text: string, revision: number) => {
      void this.score(text, revision);
    }, debounceMs);
  }

  private emit() {
    this.onChange(this.state);
  }

  /** Called on every keystroke; at most one scoring request per pause. */
  onInput(text: string): void {
    this.revision += 1;
    this.state = { ...this.state, text, submitState: "idle", receipt: null };
    if (text.trim() === "") {
      this.requestScore.cancel();
      this.state = { ...this.state, scores: null, scoredText: null, scoring: false };
      this.emit();
      return;
    }
    this.state = { ...this.state, scoring: true };
    this.requestScore(text, this.revision);
    this.emit();
  }

  private async score(text: string, revision: number): Promise<void> {
    try {
      const result = await this.api.moderate(text);
      if (revision !== this.revision) {
        return; // a newer revision is pending; drop the stale response
      }
      this.state = { ...this.state, scores: result.scores, scoredText: text, scoring: false, banner: null };
    } catch (err) {
      if (revision !== this.revision) {
        return;
      }
      this.state = { ...this.state, scoring: false, banner: `scoring failed: ${describe(err)}` };
    }
    this.emit();
  }

  setExpected(cat: Category, value: Ternary): void {
    this.state = { ...this.state, expected: withLabel(this.state.expected, cat, value), submitState: "idle" };
    this.emit();
  }

  /** Pass/fail of the current scores against each expected label. */
  verdicts(): Record<Category, Verdict> {
    const out = {} as Record<Category, Verdict>;
    for (const cat of CATEGORIES) {
      const expected = this.state.expected[cat];
      if (expected === "unlabeled" || this.state.scores === null) {
        out[cat] = "none";
        continue;
      }
      const threshold = this.thresholds[cat] ?? 0.5;
      const flagged = (this.state.scores[cat] ?? 0) > threshold;
      out[cat] = flagged === (expected === "positive") ? "pass" : "fail";
    }
    return out;
  }

  canSubmit(): boolean {
    return this.state.text.trim() !== "" && hasAnyLabel(this.state.expected) && this.state.submitState !== "submitting";
  }

  async submit(note: string): Promise<void> {
    if (!this.canSubmit()) {
      return;
    }
    this.state = { ...this.state, submitState: "submitting", banner: null };
    this.emit();
    try {
      const receipt = await this.api.submitRedTeam(this.state.text, labeledEntries(this.state.expected), note);
      this.state = { ...this.state, submitState: "submitted", receipt };
    } catch (err) {
      this.state = { ...this.state, submitState: "idle", banner: `submit failed: ${describe(err)}` };
    }
    this.emit();
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) {
    return err.message;
  }
  return String(err);
}
