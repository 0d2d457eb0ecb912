/**
 * Token normalization and the prediction-grid grammar, mirroring the service
 * side exactly. The shared fixture (tests/fixtures/normalization_cases.json
 * in the repo root) pins both implementations to the same behavior; the
 * editor only submits text this module accepts, so the service parser can
 * never reject a UI-validated edit.
 */

export const SENTINEL = "none";

export interface Label {
  hId: number;
  verb: string;
  noun: string;
}

export interface ParsedGrid {
  rows: Label[][];
  horizon: number;
  flags: string[];
}

export class GridParseError extends Error {
  kind: "Unparseable" | "InconsistentHumanId";
  constructor(kind: "Unparseable" | "InconsistentHumanId", message: string) {
    super(message);
    this.kind = kind;
  }
}

export function normalizeToken(token: string): string {
  return token.trim().toLowerCase().replace(/\s+/g, "_");
}

const FENCE_RE = /```[a-zA-Z0-9_-]*\n?([\s\S]*?)```/;
const TUPLE_RE = /\(([^()]*)\)/g;
const ROW_BREAK_RE = /\][^()[\]]*\[/;

function stripFences(text: string): string {
  const m = FENCE_RE.exec(text);
  if (m) return m[1];
  return text.split("```").join("");
}

function cleanPart(part: string): string {
  let out = part.trim();
  out = out.replace(/^['"]+/, "").replace(/['"]+$/, "");
  return out.trim();
}

type RawTuple = { hId: number | null; verb: string; noun: string };

function parseTuple(inner: string): RawTuple | null {
  let parts = inner.split(",").map(cleanPart);
  if (parts.length && parts[parts.length - 1] === "") parts = parts.slice(0, -1);
  let hId: number | null;
  let verb: string;
  let noun: string;
  if (parts.length === 3) {
    if (!/^\d+$/.test(parts[0])) return null;
    hId = parseInt(parts[0], 10);
    verb = parts[1];
    noun = parts[2];
  } else if (parts.length === 2) {
    hId = null;
    verb = parts[0];
    noun = parts[1];
  } else {
    return null;
  }
  const verbN = normalizeToken(verb);
  const nounN = normalizeToken(noun);
  if (!verbN || !nounN) return null;
  return { hId, verb: verbN, noun: nounN };
}

/** Lenient parse of model-output text; mirrors the service grammar. */
export function parsePrediction(text: string, expectedHorizon: number): ParsedGrid {
  if (expectedHorizon < 1) throw new Error("expectedHorizon must be >= 1");
  const body = stripFences(text);
  const matches = [...body.matchAll(TUPLE_RE)];
  if (matches.length === 0) {
    throw new GridParseError("Unparseable", "no tuple structure recoverable");
  }
  const flags: string[] = [];
  const rawRows: RawTuple[][] = [[]];
  matches.forEach((m, i) => {
    if (i > 0) {
      const prev = matches[i - 1];
      const gap = body.slice((prev.index ?? 0) + prev[0].length, m.index ?? 0);
      if (ROW_BREAK_RE.test(gap)) rawRows.push([]);
    }
    const parsed = parseTuple(m[1]);
    if (parsed === null) {
      flags.push("bad_tuple");
      return;
    }
    rawRows[rawRows.length - 1].push(parsed);
  });
  const rows = rawRows.filter((r) => r.length > 0);
  if (rows.length === 0) {
    throw new GridParseError("Unparseable", "no tuple parsed to a usable label");
  }

  const outRows: Label[][] = [];
  const usedIds = new Set<number>();
  rows.forEach((row, index) => {
    const declared = row.map((t) => t.hId).filter((h): h is number => h !== null);
    let hId: number;
    if (declared.length > 0) {
      const counts = new Map<number, number>();
      declared.forEach((h) => counts.set(h, (counts.get(h) ?? 0) + 1));
      const ranked = [...counts.entries()].sort((a, b) => b[1] - a[1] || a[0] - b[0]);
      if (ranked.length > 1 && ranked[0][1] === ranked[1][1]) {
        throw new GridParseError(
          "InconsistentHumanId",
          `row ${index}: no majority h_id`,
        );
      }
      hId = ranked[0][0];
      if (declared.some((h) => h !== hId)) flags.push("reassigned_h_id");
    } else {
      hId = index;
    }
    if (usedIds.has(hId)) {
      flags.push("duplicate_h_id");
      hId = Math.max(...usedIds) + 1;
    }
    usedIds.add(hId);
    let labels: Label[] = row.map((t) => ({ hId, verb: t.verb, noun: t.noun }));
    if (labels.length > expectedHorizon) {
      labels = labels.slice(0, expectedHorizon);
      flags.push("truncated_row");
    } else if (labels.length < expectedHorizon) {
      while (labels.length < expectedHorizon) {
        labels.push({ hId, verb: SENTINEL, noun: SENTINEL });
      }
      flags.push("padded_row");
    }
    outRows.push(labels);
  });
  outRows.sort((a, b) => a[0].hId - b[0].hId);
  return { rows: outRows, horizon: expectedHorizon, flags };
}

/** Canonical single-line form; identical to the service emitter. */
export function emitPrediction(grid: ParsedGrid): string {
  const rows = grid.rows.map(
    (row) => "[" + row.map((l) => `(${l.hId}, ${l.verb}, ${l.noun})`).join(", ") + "]",
  );
  return "[" + rows.join(", ") + "]";
}

/** Editor gate: non-empty, parseable, and clean (no repair flags). */
export function validateEdit(
  text: string,
  horizon: number,
): { ok: true; canonical: string } | { ok: false; message: string } {
  if (!text.trim()) return { ok: false, message: "empty grid" };
  try {
    const grid = parsePrediction(text, horizon);
    if (grid.flags.length > 0) {
      return { ok: false, message: `needs repair: ${[...new Set(grid.flags)].join(", ")}` };
    }
    return { ok: true, canonical: emitPrediction(grid) };
  } catch (err) {
    if (err instanceof GridParseError) return { ok: false, message: err.message };
    throw err;
  }
}
