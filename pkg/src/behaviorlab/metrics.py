"""Scoring of predicted grids against ground truth.

Accuracy is slot-wise over the ground-truth grid: rows are aligned by h_id
(positional fallback when no ids overlap), every ground-truth slot counts in
the denominator, a full match needs both normalized verb and noun to agree,
and missing rows or sentinel padding score zero. This makes
full <= min(verb, noun) hold by construction.

Edit distance and cosine similarity run on canonical per-human strings
("verb noun; verb noun; ..."), not raw model text, so formatting mimicry is
worth nothing; per-human values are averaged over the ground-truth rows. The
built-in embedder is an L2-normalized character-trigram count vector; reports
must name the embedder because absolute cosine values are embedder-relative.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .labels import BehaviorLabel, ParsedPrediction, PredictionGrid
from .records import SampleMeta


class HorizonMismatch(Exception):
    pass


class EmbedderFailure(Exception):
    pass


# ---------------------------------------------------------------- accuracy


def _align_rows(
    pred: PredictionGrid, gt: PredictionGrid
) -> list[tuple[tuple[BehaviorLabel, ...], tuple[BehaviorLabel, ...] | None]]:
    pred_ids = {row[0].h_id for row in pred.rows}
    gt_ids = {row[0].h_id for row in gt.rows}
    if pred.rows and not pred_ids & gt_ids:
        return [
            (gt.rows[i], pred.rows[i] if i < len(pred.rows) else None)
            for i in range(len(gt.rows))
        ]
    return [(row, pred.row_for(row[0].h_id)) for row in gt.rows]


def score_accuracy(
    pred: PredictionGrid, gt: PredictionGrid, order_sensitive: bool = True
) -> tuple[float, float, float]:
    """(full, verb, noun) accuracy over all gt slots. ``order_sensitive=False``
    scores each row as a multiset of labels instead of a sequence."""
    if pred.horizon != gt.horizon:
        raise HorizonMismatch(f"pred horizon {pred.horizon} != gt horizon {gt.horizon}")
    slots = len(gt.rows) * gt.horizon
    if slots == 0:
        raise ValueError("ground-truth grid has no rows")
    full = verb = noun = 0
    for gt_row, pred_row in _align_rows(pred, gt):
        if pred_row is None:
            continue
        if order_sensitive:
            for g, p in zip(gt_row, pred_row):
                verb += g.verb == p.verb
                noun += g.noun == p.noun
                full += g.verb == p.verb and g.noun == p.noun
        else:
            gv, pv = Counter(l.verb for l in gt_row), Counter(l.verb for l in pred_row)
            gn, pn = Counter(l.noun for l in gt_row), Counter(l.noun for l in pred_row)
            gf = Counter((l.verb, l.noun) for l in gt_row)
            pf = Counter((l.verb, l.noun) for l in pred_row)
            verb += sum((gv & pv).values())
            noun += sum((gn & pn).values())
            full += sum((gf & pf).values())
    return full / slots, verb / slots, noun / slots


# ----------------------------------------------------------- edit distance


def levenshtein(a: str, b: str) -> int:
    """Minimum insertions/deletions/substitutions; two-row DP."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # delete
                    current[j - 1] + 1,  # insert
                    previous[j - 1] + (ca != cb),  # substitute
                )
            )
        previous = current
    return previous[len(b)]


def edit_distance(pred_text: str, gt_text: str) -> float:
    """Levenshtein normalized by the longer length; 0.0 for two empties."""
    if not pred_text and not gt_text:
        return 0.0
    return levenshtein(pred_text, gt_text) / max(len(pred_text), len(gt_text))


def row_string(row: tuple[BehaviorLabel, ...]) -> str:
    return "; ".join(f"{l.verb} {l.noun}" for l in row)


def grid_edit_distance(pred: PredictionGrid, gt: PredictionGrid) -> float:
    """Per-human normalized edit distance on canonical row strings, averaged
    over ground-truth rows; a missing predicted row scores 1.0."""
    if pred.horizon != gt.horizon:
        raise HorizonMismatch(f"pred horizon {pred.horizon} != gt horizon {gt.horizon}")
    dists = []
    for gt_row, pred_row in _align_rows(pred, gt):
        dists.append(
            edit_distance(row_string(pred_row) if pred_row else "", row_string(gt_row))
        )
    return sum(dists) / len(dists)


# ---------------------------------------------------------------- cosine


def trigram_embedder(text: str) -> dict[str, float]:
    """Character-trigram counts, L2-normalized. Strings shorter than three
    characters embed to the zero vector."""
    counts = Counter(text[i : i + 3] for i in range(len(text) - 2))
    norm = math.sqrt(sum(c * c for c in counts.values()))
    if norm == 0:
        return {}
    return {k: v / norm for k, v in counts.items()}


BUILTIN_EMBEDDER_ID = "builtin-char-trigram-l2"


def cosine_similarity(pred_text: str, gt_text: str, embedder=trigram_embedder) -> float:
    """Cosine of the two embedding vectors; 0.0 when either side embeds to
    the zero vector (flagged upstream)."""
    va, vb = embedder(pred_text), embedder(gt_text)
    if not va or not vb:
        return 0.0
    if pred_text == gt_text:
        return 1.0
    dot = sum(w * vb[k] for k, w in va.items() if k in vb)
    na = math.sqrt(sum(w * w for w in va.values()))
    nb = math.sqrt(sum(w * w for w in vb.values()))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def grid_cosine_similarity(
    pred: PredictionGrid, gt: PredictionGrid, embedder=trigram_embedder
) -> float:
    if pred.horizon != gt.horizon:
        raise HorizonMismatch(f"pred horizon {pred.horizon} != gt horizon {gt.horizon}")
    sims = []
    for gt_row, pred_row in _align_rows(pred, gt):
        sims.append(
            cosine_similarity(row_string(pred_row), row_string(gt_row), embedder)
            if pred_row
            else 0.0
        )
    return sum(sims) / len(sims)


class RemoteEmbedder:
    """Optional remote embedding endpoint (POST {base}/v1/embeddings)."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key

    def __call__(self, text: str) -> dict[str, float]:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = httpx.post(
                f"{self.base_url}/v1/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=30.0,
            )
        except httpx.HTTPError as exc:
            raise EmbedderFailure(str(exc)) from exc
        if resp.status_code != 200:
            raise EmbedderFailure(f"embedder returned {resp.status_code}")
        vec = resp.json()["data"][0]["embedding"]
        return {str(i): float(v) for i, v in enumerate(vec)}


# ------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class ScoreBreakdown:
    full_acc: float
    verb_acc: float
    noun_acc: float
    cosine_sim: float
    edit_dist: float
    slot_count: int
    parse_flags: dict[str, int]


def score_sample(
    parsed: ParsedPrediction | None,
    gt: PredictionGrid,
    embedder=trigram_embedder,
    order_sensitive: bool = True,
) -> ScoreBreakdown:
    """Score one parsed prediction; ``parsed=None`` (backend failure or
    unparseable output) scores as a total miss."""
    slots = len(gt.rows) * gt.horizon
    if parsed is None:
        return ScoreBreakdown(0.0, 0.0, 0.0, 0.0, 1.0, slots, {"unparseable": 1})
    full, verb, noun = score_accuracy(parsed.grid, gt, order_sensitive)
    return ScoreBreakdown(
        full_acc=full,
        verb_acc=verb,
        noun_acc=noun,
        cosine_sim=grid_cosine_similarity(parsed.grid, gt, embedder),
        edit_dist=grid_edit_distance(parsed.grid, gt),
        slot_count=slots,
        parse_flags=dict(Counter(parsed.flags)),
    )


@dataclass(frozen=True)
class ReportCell:
    room: str
    num_humans: int
    count: int
    full_acc: float
    verb_acc: float
    noun_acc: float
    cosine_sim: float
    edit_dist: float


def aggregate(items: list[tuple[SampleMeta, ScoreBreakdown]]) -> list[ReportCell]:
    """Unweighted per-sample mean within each (room, humans) cell, plus an
    overall row that averages across cells (each cell weighs equally)."""
    by_cell: dict[tuple[str, int], list[ScoreBreakdown]] = {}
    for meta, breakdown in items:
        by_cell.setdefault((meta.room, meta.num_humans), []).append(breakdown)

    def mean(values: list[float]) -> float:
        return sum(values) / len(values)

    cells = [
        ReportCell(
            room=room,
            num_humans=humans,
            count=len(group),
            full_acc=mean([b.full_acc for b in group]),
            verb_acc=mean([b.verb_acc for b in group]),
            noun_acc=mean([b.noun_acc for b in group]),
            cosine_sim=mean([b.cosine_sim for b in group]),
            edit_dist=mean([b.edit_dist for b in group]),
        )
        for (room, humans), group in sorted(by_cell.items())
    ]
    if cells:
        cells.append(
            ReportCell(
                room="all",
                num_humans=0,
                count=sum(c.count for c in cells),
                full_acc=mean([c.full_acc for c in cells]),
                verb_acc=mean([c.verb_acc for c in cells]),
                noun_acc=mean([c.noun_acc for c in cells]),
                cosine_sim=mean([c.cosine_sim for c in cells]),
                edit_dist=mean([c.edit_dist for c in cells]),
            )
        )
    return cells
