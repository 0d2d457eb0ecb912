"""Preference-pair mining: J responses per training sample, chosen/rejected
selected by edit distance against the ground truth.

The chosen response is the argmin and the rejected the argmax of the grid
edit distance (canonical serialization, same definition the metrics module
scores with); ties break toward the lowest run index so an independent
rescan of the stored responses reproduces every selection. Samples whose
responses all tie (min == max, e.g. an oracle backend) carry no learnable
preference and are skipped. Mining is resumable: stored runs are reused
before the backend is asked for more.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

from .backends import Backend, InferenceRequest, InferenceResult, infer_batch
from .labels import emit_prediction, parse_prediction
from .metrics import grid_edit_distance
from .prompting import PromptSpec, build_prompt
from .records import PredictionRecord, PreferencePair
from .store import CorpusStore, DuplicateRun


class InsufficientResponses(Exception):
    pass


class NothingToExport(Exception):
    pass


DEFAULT_EXPORT_STATUSES = ("approved", "swapped", "edited")


def stable_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _pair_id(sample_id: str, model_id: str) -> str:
    return f"{sample_id}--{model_id}".replace("/", "_")


@dataclass
class MiningReport:
    mined: list[PreferencePair] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (sample_id, reason)
    responses_recorded: int = 0

    @property
    def degenerate(self) -> list[str]:
        return [sid for sid, reason in self.skipped if reason == "degenerate"]


def build_sample_prompt(store: CorpusStore, sample, icl_examples=()) -> PromptSpec:
    return PromptSpec(
        history=store.header.history,
        horizon=store.header.horizon,
        frame_refs=sample.frame_refs,
        scene_graph_text=store.scene_graph_text(sample),
        icl_examples=tuple(icl_examples),
    )


def response_distances(
    store: CorpusStore, sample_id: str, model_id: str
) -> list[tuple[int, float | None]]:
    """(run_index, grid ED vs ground truth) for every stored response;
    None for responses that did not parse."""
    sample = store.sample(sample_id)
    out = []
    for rec in store.predictions(model_id, sample_id):
        parsed = store.parse_record(rec)
        ed = None if parsed is None else grid_edit_distance(parsed.grid, sample.gt_grid)
        out.append((rec.run_index, ed))
    return out


def select_pair(distances: list[tuple[int, float | None]]) -> tuple[int, float, int, float] | None:
    """argmin/argmax with lowest-run-index tie-break; None when degenerate or
    fewer than two parseable responses."""
    usable = [(run, ed) for run, ed in distances if ed is not None]
    if len(usable) < 2:
        return None
    chosen_run, chosen_ed = min(usable, key=lambda t: (t[1], t[0]))
    rejected_run, rejected_ed = min(usable, key=lambda t: (-t[1], t[0]))
    if chosen_ed == rejected_ed:
        return None
    return chosen_run, chosen_ed, rejected_run, rejected_ed


def mine_pairs(
    store: CorpusStore,
    backend: Backend,
    model_id: str,
    responses_per_input: int = 8,
    temperature: float = 1.0,
    seed: int = 0,
    max_in_flight: int = 4,
    auto_approve: bool = False,
) -> MiningReport:
    if responses_per_input < 2:
        raise InsufficientResponses(
            f"need at least 2 responses per input, got {responses_per_input}"
        )
    report = MiningReport()
    existing_pairs = {p.pair_id for p in store.pairs()}
    mined: list[PreferencePair] = []
    for sample in store.query(split="train"):
        pair_id = _pair_id(sample.sample_id, model_id)
        if pair_id in existing_pairs:
            report.skipped.append((sample.sample_id, "already_mined"))
            continue
        have = {rec.run_index for rec in store.predictions(model_id, sample.sample_id)}
        missing = [r for r in range(responses_per_input) if r not in have]
        if missing:
            prompt = build_prompt(build_sample_prompt(store, sample))
            reqs = [
                InferenceRequest(
                    prompt=prompt,
                    model_id=model_id,
                    temperature=temperature,
                    seed=stable_seed(seed, sample.sample_id, run),
                    metadata={"sample_id": sample.sample_id},
                )
                for run in missing
            ]
            results = infer_batch(backend, reqs, max_in_flight=max_in_flight)
            for run, result in zip(missing, results):
                if isinstance(result, InferenceResult):
                    try:
                        parsed = parse_prediction(result.raw_text, store.header.horizon)
                        parsed_text: str | None = emit_prediction(parsed.grid)
                        flags = parsed.flags
                    except Exception:
                        parsed_text, flags = None, ("unparseable",)
                    rec = PredictionRecord(
                        sample_id=sample.sample_id,
                        model_id=model_id,
                        run_index=run,
                        raw_text=result.raw_text,
                        parsed_text=parsed_text,
                        flags=flags,
                        latency_ms=result.latency_ms,
                        temperature=temperature,
                        seed=stable_seed(seed, sample.sample_id, run),
                    )
                else:
                    rec = PredictionRecord(
                        sample_id=sample.sample_id,
                        model_id=model_id,
                        run_index=run,
                        raw_text="",
                        temperature=temperature,
                        error=type(result).__name__,
                    )
                try:
                    store.record_prediction(rec)
                    report.responses_recorded += 1
                except DuplicateRun:
                    pass

        distances = response_distances(store, sample.sample_id, model_id)
        selection = select_pair(distances)
        if selection is None:
            usable = sum(1 for _, ed in distances if ed is not None)
            reason = "insufficient_responses" if usable < 2 else "degenerate"
            report.skipped.append((sample.sample_id, reason))
            continue
        chosen_run, chosen_ed, rejected_run, rejected_ed = selection
        mined.append(
            PreferencePair(
                pair_id=pair_id,
                sample_id=sample.sample_id,
                model_id=model_id,
                chosen_run=chosen_run,
                rejected_run=rejected_run,
                chosen_ed=chosen_ed,
                rejected_ed=rejected_ed,
                mined_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            )
        )
    store.append_pairs(mined)
    report.mined = mined
    if auto_approve:
        for pair in mined:
            store.decide_pair(
                pair.pair_id,
                "approve",
                reviewer="auto-approve",
                idempotency_key=f"auto-{pair.pair_id}",
            )
    return report


def audit_pairs(store: CorpusStore, model_id: str | None = None) -> list[str]:
    """Independent rescan: recompute every pair's argmin/argmax over all
    stored responses and compare with the recorded selection."""
    violations = []
    for pair in store.pairs():
        if model_id is not None and pair.model_id != model_id:
            continue
        selection = select_pair(response_distances(store, pair.sample_id, pair.model_id))
        if selection is None:
            violations.append(f"{pair.pair_id}: degenerate pair should not exist")
            continue
        chosen_run, chosen_ed, rejected_run, rejected_ed = selection
        if (chosen_run, rejected_run) != (pair.chosen_run, pair.rejected_run):
            violations.append(
                f"{pair.pair_id}: selection ({pair.chosen_run}, {pair.rejected_run}) "
                f"!= rescan ({chosen_run}, {rejected_run})"
            )
        if (chosen_ed, rejected_ed) != (pair.chosen_ed, pair.rejected_ed):
            violations.append(f"{pair.pair_id}: recorded EDs drifted")
        if pair.chosen_ed > pair.rejected_ed:
            violations.append(f"{pair.pair_id}: chosen_ed > rejected_ed")
    return violations


def _canonical_text(store: CorpusStore, sample_id: str, model_id: str, run: int) -> str:
    for rec in store.predictions(model_id, sample_id):
        if rec.run_index == run:
            if rec.parsed_text:
                return rec.parsed_text
            parsed = store.parse_record(rec)
            if parsed is not None:
                return emit_prediction(parsed.grid)
            raise ValueError(f"{sample_id} run {run} is not parseable")
    raise ValueError(f"{sample_id} run {run} not found")


def export_records(
    store: CorpusStore, include: tuple[str, ...] = DEFAULT_EXPORT_STATUSES
) -> list[dict]:
    """Build the exported dataset records. A swapped pair exchanges chosen and
    rejected; an edited pair uses the reviewer's corrected text
    (canonicalized) as the chosen response."""
    records = []
    for pair in store.pairs():
        if pair.status not in include:
            continue
        sample = store.sample(pair.sample_id)
        chosen = _canonical_text(store, pair.sample_id, pair.model_id, pair.chosen_run)
        rejected = _canonical_text(store, pair.sample_id, pair.model_id, pair.rejected_run)
        if pair.status == "swapped":
            chosen, rejected = rejected, chosen
        elif pair.status == "edited":
            parsed = parse_prediction(pair.edited_text or "", store.header.horizon)
            chosen = emit_prediction(parsed.grid)
        records.append(
            {
                "pair_id": pair.pair_id,
                "sample_id": pair.sample_id,
                "prompt_spec": {
                    "history": store.header.history,
                    "horizon": store.header.horizon,
                    "frame_refs": [f.to_json() for f in sample.frame_refs],
                    "scene_graph": store.scene_graph_text(sample),
                },
                "chosen_text": chosen,
                "rejected_text": rejected,
                "provenance": {
                    "model_id": pair.model_id,
                    "status": pair.status,
                    "reviewer": pair.reviewer,
                    "chosen_run": pair.chosen_run,
                    "rejected_run": pair.rejected_run,
                    "chosen_ed": pair.chosen_ed,
                    "rejected_ed": pair.rejected_ed,
                },
            }
        )
    if not records:
        raise NothingToExport(f"no pairs in statuses {include}")
    return records


def export_dpo_dataset(
    store: CorpusStore,
    out_path,
    include: tuple[str, ...] = DEFAULT_EXPORT_STATUSES,
) -> int:
    import json
    from pathlib import Path

    records = export_records(store, include)
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return len(records)
