/**
 * Review-queue controller: holds the pending list, applies decisions
 * optimistically (card leaves the queue immediately, returns on failure),
 * and guarantees one service decision per visible action via per-decision
 * idempotency keys and an in-flight guard against double clicks.
 */

import { ApiError, ReviewApi } from "./api.js";
import { Decision, ReviewContext, Stats } from "./types.js";

export interface QueueState {
  items: ReviewContext[];
  focus: number;
  total: number;
  stats: Stats | null;
  offline: boolean;
  toast: string | null;
  editing: string | null; // pair_id with the editor open
}

export type Listener = (state: QueueState) => void;

let keyCounter = 0;

export function nextIdempotencyKey(): string {
  keyCounter += 1;
  return `ui-${Date.now()}-${keyCounter}`;
}

export class QueueController {
  state: QueueState = {
    items: [],
    focus: 0,
    total: 0,
    stats: null,
    offline: false,
    toast: null,
    editing: null,
  };
  private listeners: Listener[] = [];
  private inFlight = new Set<string>();
  decided: { pairId: string; decision: Decision; replayed: boolean }[] = [];

  constructor(
    private api: ReviewApi,
    private reviewer: string | null = null,
  ) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    this.listeners.forEach((l) => l(this.state));
  }

  private setToast(message: string | null): void {
    this.state.toast = message;
    this.emit();
  }

  async load(pageSize = 50): Promise<void> {
    try {
      const [page, stats] = await Promise.all([
        this.api.listPending(1, pageSize),
        this.api.stats(),
      ]);
      this.state.items = page.items;
      this.state.total = page.total;
      this.state.stats = stats;
      this.state.offline = false;
      this.state.focus = 0;
    } catch (err) {
      this.state.offline = true;
      this.state.toast = `service unreachable: ${String(err)}`;
    }
    this.emit();
  }

  focused(): ReviewContext | null {
    return this.state.items[this.state.focus] ?? null;
  }

  moveFocus(delta: number): void {
    const n = this.state.items.length;
    if (n === 0) return;
    this.state.focus = Math.min(Math.max(this.state.focus + delta, 0), n - 1);
    this.emit();
  }

  openEditor(pairId: string): void {
    this.state.editing = pairId;
    this.emit();
  }

  closeEditor(): void {
    this.state.editing = null;
    this.emit();
  }

  private bumpStats(decision: Decision, delta: number): void {
    if (!this.state.stats) return;
    const status = {
      approve: "approved",
      swap: "swapped",
      edit: "edited",
      reject: "rejected",
    }[decision];
    this.state.stats.by_status[status] =
      (this.state.stats.by_status[status] ?? 0) + delta;
    this.state.stats.by_status["pending"] =
      (this.state.stats.by_status["pending"] ?? 0) - delta;
  }

  /** Optimistic decision; resolves true when the service recorded it. */
  async decide(pairId: string, decision: Decision, editedText?: string): Promise<boolean> {
    if (this.state.offline || this.inFlight.has(pairId)) return false;
    const index = this.state.items.findIndex((it) => it.pair.pair_id === pairId);
    if (index < 0) return false;
    const snapshot = this.state.items[index];

    this.inFlight.add(pairId);
    this.state.items.splice(index, 1);
    this.state.focus = Math.min(this.state.focus, Math.max(this.state.items.length - 1, 0));
    this.state.total -= 1;
    this.bumpStats(decision, +1);
    this.state.editing = null;
    this.emit();

    try {
      const result = await this.api.decide(pairId, decision, {
        editedText,
        idempotencyKey: nextIdempotencyKey(),
        reviewer: this.reviewer ?? undefined,
      });
      this.decided.push({ pairId, decision, replayed: result.replayed });
      this.setToast(`${decision}: ${pairId}`);
      return true;
    } catch (err) {
      this.bumpStats(decision, -1);
      if (err instanceof ApiError && err.status === 409) {
        // decided elsewhere: the card stays out of the queue, stats reload
        this.setToast(`already decided elsewhere: ${pairId}`);
        void this.refreshStats();
        return false;
      }
      // roll the card back in at its old position
      this.state.items.splice(Math.min(index, this.state.items.length), 0, snapshot);
      this.state.total += 1;
      if (err instanceof ApiError && err.status === 422) {
        this.setToast(`rejected by service: ${err.message}`);
      } else {
        this.state.offline = true;
        this.setToast(`decision failed, rolled back: ${String(err)}`);
      }
      return false;
    } finally {
      this.inFlight.delete(pairId);
    }
  }

  private async refreshStats(): Promise<void> {
    try {
      this.state.stats = await this.api.stats();
      this.emit();
    } catch {
      /* stats refresh is best-effort */
    }
  }

  /** Keyboard mapping: a/s/e/r decide the focused card, j/k move focus. */
  async handleKey(key: string): Promise<void> {
    const current = this.focused();
    if (key === "j") return this.moveFocus(+1);
    if (key === "k") return this.moveFocus(-1);
    if (!current) return;
    const pairId = current.pair.pair_id;
    if (key === "a") await this.decide(pairId, "approve");
    else if (key === "s") await this.decide(pairId, "swap");
    else if (key === "r") await this.decide(pairId, "reject");
    else if (key === "e") this.openEditor(pairId);
  }
}
