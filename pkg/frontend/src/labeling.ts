/**
 * State machine behind the labeling view: lease the next queue item, collect
 * a ternary vector, submit, advance. A network failure never discards the
 * in-progress vector; it surfaces a retry banner instead.
 */

import { ApiClient, ApiError, QueueItemView, QueueStats } from "./api.js";
import { Assignments, Category, Ternary, emptyAssignments, hasAnyLabel, labeledEntries, withLabel } from "./taxonomy.js";

export type LabelingPhase = "start" | "loading" | "item" | "idle" | "submitting";

export interface LabelingState {
  phase: LabelingPhase;
  item: QueueItemView | null;
  assignments: Assignments;
  stats: QueueStats | null;
  banner: string | null;
  lastSubmitted: string | null;
}

export class LabelingController {
  state: LabelingState = {
    phase: "start",
    item: null,
    assignments: emptyAssignments(),
    stats: null,
    banner: null,
    lastSubmitted: null,
  };

  constructor(
    private api: ApiClient,
    private onChange: (state: LabelingState) => void = () => {},
  ) {}

  private emit() {
    this.onChange(this.state);
  }

  /** Lease the next item; an empty queue lands in the idle state. */
  async refresh(): Promise<void> {
    this.state = { ...this.state, phase: "loading", banner: null };
    this.emit();
    try {
      const item = await this.api.queueNext();
      const stats = await this.api.queueStats();
      if (item === null) {
        this.state = { ...this.state, phase: "idle", item: null, assignments: emptyAssignments(), stats };
      } else {
        this.state = { ...this.state, phase: "item", item, assignments: emptyAssignments(), stats };
      }
    } catch (err) {
      // Keep whatever was on screen; the banner offers a retry.
      this.state = {
        ...this.state,
        phase: this.state.item ? "item" : "start",
        banner: `could not reach the queue: ${describe(err)}`,
      };
    }
    this.emit();
  }

  setLabel(cat: Category, value: Ternary): void {
    if (this.state.phase !== "item") {
      return;
    }
    this.state = { ...this.state, assignments: withLabel(this.state.assignments, cat, value) };
    this.emit();
  }

  cycleLabel(cat: Category, next: (value: Ternary) => Ternary): void {
    this.setLabel(cat, next(this.state.assignments[cat]));
  }

  canSubmit(): boolean {
    return this.state.phase === "item" && this.state.item !== null && hasAnyLabel(this.state.assignments);
  }

  /**
   * Post the vector and advance to the next lease. On a transport failure
   * the item and vector stay put behind a retry banner; on a conflict (the
   * lease was completed elsewhere) the stale item is dropped.
   */
  async submit(annotator: string): Promise<void> {
    const item = this.state.item;
    if (this.state.phase !== "item" || item === null || !hasAnyLabel(this.state.assignments)) {
      return;
    }
    this.state = { ...this.state, phase: "submitting", banner: null };
    this.emit();
    try {
      await this.api.submitLabel(item.id, labeledEntries(this.state.assignments), annotator);
      this.state = { ...this.state, lastSubmitted: item.id };
      await this.refresh();
      return;
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 404)) {
        // Someone else finished this lease; move on without resubmitting.
        await this.refresh();
        const note = `item ${item.id}: ${err.message}`;
        this.state = { ...this.state, banner: this.state.banner ? `${note}; ${this.state.banner}` : note };
        this.emit();
        return;
      }
      this.state = {
        ...this.state,
        phase: "item",
        banner: `submit failed, your labels are kept: ${describe(err)}`,
      };
      this.emit();
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) {
    return err.message;
  }
  return String(err);
}
