/**
 * Per-slot comparison of a predicted grid against the ground truth, using the
 * same normalization and row alignment rules the scoring side applies
 * (align by h_id, positional fallback when no ids overlap).
 */

import { Label, ParsedGrid, normalizeToken } from "./normalize.js";

export type SlotMark = "match" | "verb_only" | "noun_only" | "miss";

export interface SlotDiff {
  label: Label | null;
  gt: Label;
  mark: SlotMark;
}

export interface RowDiff {
  hId: number;
  slots: SlotDiff[];
  missing: boolean;
}

function markFor(label: Label | null, gt: Label): SlotMark {
  if (label === null) return "miss";
  const verbOk = normalizeToken(label.verb) === normalizeToken(gt.verb);
  const nounOk = normalizeToken(label.noun) === normalizeToken(gt.noun);
  if (verbOk && nounOk) return "match";
  if (verbOk) return "verb_only";
  if (nounOk) return "noun_only";
  return "miss";
}

export function diffGrids(pred: ParsedGrid | null, gt: ParsedGrid): RowDiff[] {
  const predRows = new Map<number, Label[]>();
  let positional = false;
  if (pred) {
    const gtIds = new Set(gt.rows.map((row) => row[0].hId));
    const overlap = pred.rows.some((row) => gtIds.has(row[0].hId));
    positional = pred.rows.length > 0 && !overlap;
    pred.rows.forEach((row, i) => {
      predRows.set(positional ? gt.rows[i]?.[0].hId ?? -1 - i : row[0].hId, row);
    });
  }
  return gt.rows.map((gtRow) => {
    const hId = gtRow[0].hId;
    const predRow = predRows.get(hId) ?? null;
    return {
      hId,
      missing: predRow === null,
      slots: gtRow.map((gtLabel, t) => {
        const label = predRow?.[t] ?? null;
        return { label, gt: gtLabel, mark: markFor(label, gtLabel) };
      }),
    };
  });
}

/** Slot-match fractions, matching the scoring definitions. */
export function diffSummary(diffs: RowDiff[]): { full: number; verb: number; noun: number } {
  let slots = 0;
  let full = 0;
  let verb = 0;
  let noun = 0;
  for (const row of diffs) {
    for (const slot of row.slots) {
      slots += 1;
      if (slot.mark === "match") {
        full += 1;
        verb += 1;
        noun += 1;
      } else if (slot.mark === "verb_only") {
        verb += 1;
      } else if (slot.mark === "noun_only") {
        noun += 1;
      }
    }
  }
  if (slots === 0) return { full: 0, verb: 0, noun: 0 };
  return { full: full / slots, verb: verb / slots, noun: noun / slots };
}
