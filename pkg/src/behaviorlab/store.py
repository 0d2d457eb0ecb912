"""Corpus store: the system of record for samples, predictions, and pairs.

A corpus is a plain directory of line-delimited JSON files plus an index —
diff-able, greppable, no database:

    corpus/
      manifest.json          header: history H, horizon T, frame interval, seed
      samples.jsonl          one Sample per line
      scene_graphs/*.json    snapshot at each sample's anchor step
      scenarios/*.json       generator provenance (script, seed, split)
      predictions/<model>.jsonl   append-only response log
      pairs/mined.jsonl      mined preference pairs (status pending)
      pairs/decisions.jsonl  append-only review decision log
      index.json             counts + split map, atomically replaced
      frames/                optional rendered frames

Writers take an advisory file lock; the prediction and decision logs are
append-only and fsync'd before an operation is acknowledged, so an
acknowledged review decision survives a crash. Re-ingesting the same corpus
is a no-op.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from filelock import FileLock

from .labels import ParsedPrediction, Unparseable, parse_prediction
from .records import (
    PAIR_STATUSES,
    PredictionRecord,
    PreferencePair,
    Sample,
)
from .scene_graph import SceneGraph, parse_scene_graph
from .vocab import DEFAULT_REGISTRY, VocabRegistry


class CorruptManifest(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"samples.jsonl line {line_no}: {reason}")
        self.line_no = line_no


class MissingArtifact(Exception):
    pass


class DuplicateRun(Exception):
    pass


class UnknownSample(Exception):
    pass


class UnknownPair(Exception):
    pass


class AlreadyDecided(Exception):
    pass


class UnparseableEdit(Exception):
    pass


@dataclass(frozen=True)
class CorpusHeader:
    history: int
    horizon: int
    frame_interval_s: float
    seed: int


def _model_file_name(model_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", model_id) + ".jsonl"


def _append_line(path: Path, line: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield line_no, json.loads(line)


class CorpusStore:
    """Handle over one corpus directory. Safe for concurrent readers plus a
    single writer (in-process threading lock + cross-process file lock)."""

    def __init__(self, root: str | Path, open_vocab: bool = False):
        self.root = Path(root)
        manifest = self.root / "manifest.json"
        if not manifest.exists():
            raise MissingArtifact(f"no manifest.json under {self.root}")
        raw = json.loads(manifest.read_text(encoding="utf-8"))
        self.header = CorpusHeader(
            history=int(raw["history"]),
            horizon=int(raw["horizon"]),
            frame_interval_s=float(raw["frame_interval_s"]),
            seed=int(raw.get("seed", 0)),
        )
        vocab_ref = raw.get("vocab", "builtin")
        if vocab_ref == "builtin":
            self.vocab = DEFAULT_REGISTRY
        else:
            self.vocab = VocabRegistry.from_file(self.root / vocab_ref)
        if open_vocab:
            self.vocab = self.vocab.with_open_vocab()
        self._lock = threading.Lock()
        self._flock = FileLock(str(self.root / ".corpus.lock"))
        self._samples: dict[str, Sample] | None = None
        self._pred_keys: dict[str, set[tuple[str, int]]] = {}
        self._pairs: dict[str, PreferencePair] | None = None
        self._decision_keys: dict[str, str] = {}

    # ------------------------------------------------------------- samples

    def _load_samples(self) -> dict[str, Sample]:
        if self._samples is None:
            samples: dict[str, Sample] = {}
            for line_no, raw in _read_jsonl(self.root / "samples.jsonl"):
                try:
                    sample = Sample.from_json(raw, self.header.horizon)
                except (KeyError, ValueError, Unparseable) as exc:
                    raise CorruptManifest(line_no, str(exc)) from exc
                if sample.sample_id in samples:
                    raise CorruptManifest(line_no, f"duplicate sample_id {sample.sample_id}")
                samples[sample.sample_id] = sample
            self._samples = samples
        return self._samples

    def validate(self) -> dict[tuple[str, int], int]:
        """Full ingest validation; returns sample counts per (room, humans)."""
        samples = self._load_samples()
        counts: dict[tuple[str, int], int] = {}
        split_by_scenario: dict[str, str] = {}
        for line_no, sample in enumerate(samples.values(), start=1):
            if len(sample.frame_refs) != self.header.history:
                raise CorruptManifest(
                    line_no,
                    f"{sample.sample_id}: {len(sample.frame_refs)} frame refs, "
                    f"header history is {self.header.history}",
                )
            if sample.gt_grid.horizon != self.header.horizon:
                raise CorruptManifest(line_no, f"{sample.sample_id}: horizon mismatch")
            if not sample.gt_grid.rows:
                raise CorruptManifest(line_no, f"{sample.sample_id}: empty ground-truth grid")
            if sample.meta.split not in ("train", "test"):
                raise CorruptManifest(line_no, f"{sample.sample_id}: bad split {sample.meta.split!r}")
            prev = split_by_scenario.setdefault(sample.meta.scenario_id, sample.meta.split)
            if prev != sample.meta.split:
                raise CorruptManifest(
                    line_no, f"scenario {sample.meta.scenario_id} leaks across splits"
                )
            sg = self.root / sample.scene_graph_ref
            if not sample.scene_graph_ref or not sg.exists():
                raise MissingArtifact(f"{sample.sample_id}: {sample.scene_graph_ref} missing")
            key = (sample.meta.room, sample.meta.num_humans)
            counts[key] = counts.get(key, 0) + 1
        return counts

    @classmethod
    def ingest(
        cls, root: str | Path, open_vocab: bool = False
    ) -> tuple["CorpusStore", dict[tuple[str, int], int]]:
        """Validate a corpus directory and (re)build index.json. Idempotent."""
        store = cls(root, open_vocab=open_vocab)
        counts = store.validate()
        index = {
            "counts": [
                {"room": room, "num_humans": humans, "samples": n}
                for (room, humans), n in sorted(counts.items())
            ],
            "num_samples": sum(counts.values()),
            "splits": {
                split: sorted(
                    s.sample_id
                    for s in store._load_samples().values()
                    if s.meta.split == split
                )
                for split in ("train", "test")
            },
        }
        data = json.dumps(index, indent=2) + "\n"
        index_path = store.root / "index.json"
        if not index_path.exists() or index_path.read_text(encoding="utf-8") != data:
            tmp = store.root / "index.json.tmp"
            tmp.write_text(data, encoding="utf-8")
            os.replace(tmp, index_path)
        return store, counts

    def query(
        self,
        room: str | None = None,
        num_humans: int | None = None,
        split: str | None = None,
        source: str | None = None,
    ) -> list[Sample]:
        out = []
        for sample in self._load_samples().values():
            m = sample.meta
            if room is not None and m.room != room:
                continue
            if num_humans is not None and m.num_humans != num_humans:
                continue
            if split is not None and m.split != split:
                continue
            if source is not None and m.source != source:
                continue
            out.append(sample)
        return sorted(out, key=lambda s: s.sample_id)

    def sample(self, sample_id: str) -> Sample:
        try:
            return self._load_samples()[sample_id]
        except KeyError:
            raise UnknownSample(sample_id) from None

    def scene_graph_text(self, sample: Sample) -> str:
        path = self.root / sample.scene_graph_ref
        if not path.exists():
            raise MissingArtifact(f"{sample.sample_id}: {sample.scene_graph_ref} missing")
        return path.read_text(encoding="utf-8")

    def scene_graph(self, sample: Sample) -> SceneGraph:
        return parse_scene_graph(self.scene_graph_text(sample), self.vocab)

    # --------------------------------------------------------- predictions

    def _prediction_path(self, model_id: str) -> Path:
        return self.root / "predictions" / _model_file_name(model_id)

    def _load_pred_keys(self, model_id: str) -> set[tuple[str, int]]:
        if model_id not in self._pred_keys:
            keys = set()
            for _, raw in _read_jsonl(self._prediction_path(model_id)):
                keys.add((raw["sample_id"], int(raw["run_index"])))
            self._pred_keys[model_id] = keys
        return self._pred_keys[model_id]

    def record_prediction(self, rec: PredictionRecord) -> None:
        if rec.sample_id not in self._load_samples():
            raise UnknownSample(rec.sample_id)
        with self._lock, self._flock:
            keys = self._load_pred_keys(rec.model_id)
            key = (rec.sample_id, rec.run_index)
            if key in keys:
                raise DuplicateRun(f"{rec.sample_id} {rec.model_id} run {rec.run_index}")
            _append_line(
                self._prediction_path(rec.model_id),
                json.dumps(rec.to_json(), ensure_ascii=False),
            )
            keys.add(key)

    def predictions(
        self, model_id: str, sample_id: str | None = None
    ) -> list[PredictionRecord]:
        out = []
        for _, raw in _read_jsonl(self._prediction_path(model_id)):
            rec = PredictionRecord.from_json(raw)
            if sample_id is None or rec.sample_id == sample_id:
                out.append(rec)
        return sorted(out, key=lambda r: (r.sample_id, r.run_index))

    def parse_record(self, rec: PredictionRecord) -> ParsedPrediction | None:
        if rec.error is not None:
            return None
        try:
            return parse_prediction(rec.raw_text, self.header.horizon)
        except Exception:
            return None

    # --------------------------------------------------------------- pairs

    def _load_pairs(self) -> dict[str, PreferencePair]:
        if self._pairs is None:
            pairs: dict[str, PreferencePair] = {}
            for _, raw in _read_jsonl(self.root / "pairs" / "mined.jsonl"):
                pair = PreferencePair.from_json(raw)
                pairs[pair.pair_id] = pair
            for _, raw in _read_jsonl(self.root / "pairs" / "decisions.jsonl"):
                key = raw.get("idempotency_key")
                if key and key in self._decision_keys:
                    continue  # replayed write; first one wins
                pair = pairs.get(raw["pair_id"])
                if pair is None or pair.status != "pending":
                    continue
                pairs[raw["pair_id"]] = self._apply_decision(pair, raw)
                if key:
                    self._decision_keys[key] = raw["pair_id"]
            self._pairs = pairs
        return self._pairs

    @staticmethod
    def _apply_decision(pair: PreferencePair, raw: dict) -> PreferencePair:
        from dataclasses import replace

        status = {"approve": "approved", "swap": "swapped", "edit": "edited",
                  "reject": "rejected"}[raw["decision"]]
        return replace(
            pair,
            status=status,
            reviewer=raw.get("reviewer"),
            decided_at=raw.get("decided_at"),
            edited_text=raw.get("edited_text"),
        )

    def append_pairs(self, pairs: list[PreferencePair]) -> None:
        with self._lock, self._flock:
            loaded = self._load_pairs()
            for pair in pairs:
                if pair.pair_id in loaded:
                    raise DuplicateRun(f"pair {pair.pair_id} already mined")
            path = self.root / "pairs" / "mined.jsonl"
            for pair in pairs:
                _append_line(path, json.dumps(pair.to_json(), ensure_ascii=False))
                loaded[pair.pair_id] = pair

    def pairs(self, status: str | None = None) -> list[PreferencePair]:
        out = [
            p
            for p in self._load_pairs().values()
            if status is None or p.status == status
        ]
        return sorted(out, key=lambda p: (p.mined_at, p.sample_id, p.pair_id))

    def pair(self, pair_id: str) -> PreferencePair:
        try:
            return self._load_pairs()[pair_id]
        except KeyError:
            raise UnknownPair(pair_id) from None

    def decide_pair(
        self,
        pair_id: str,
        decision: str,
        reviewer: str | None = None,
        edited_text: str | None = None,
        idempotency_key: str | None = None,
    ) -> tuple[PreferencePair, bool]:
        """Record one review decision. Returns (pair, replayed); the decision
        line is durable (fsync) before this returns. A replay with the same
        idempotency key returns the original outcome without a second write."""
        if decision not in ("approve", "swap", "edit", "reject"):
            raise ValueError(f"unknown decision {decision!r}")
        with self._lock, self._flock:
            pairs = self._load_pairs()
            if idempotency_key and idempotency_key in self._decision_keys:
                original = self._decision_keys[idempotency_key]
                if original != pair_id:
                    raise ValueError(
                        f"idempotency key reused across pairs ({original} vs {pair_id})"
                    )
                return pairs[pair_id], True
            if pair_id not in pairs:
                raise UnknownPair(pair_id)
            pair = pairs[pair_id]
            if pair.status != "pending":
                raise AlreadyDecided(f"{pair_id} is {pair.status}")
            if decision == "edit":
                if not edited_text:
                    raise UnparseableEdit("edit decision requires edited_text")
                try:
                    parse_prediction(edited_text, self.header.horizon)
                except Exception as exc:
                    raise UnparseableEdit(str(exc)) from exc
            event = {
                "pair_id": pair_id,
                "decision": decision,
                "reviewer": reviewer,
                "edited_text": edited_text if decision == "edit" else None,
                "decided_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "idempotency_key": idempotency_key,
            }
            _append_line(
                self.root / "pairs" / "decisions.jsonl",
                json.dumps(event, ensure_ascii=False),
            )
            updated = self._apply_decision(pair, event)
            pairs[pair_id] = updated
            if idempotency_key:
                self._decision_keys[idempotency_key] = pair_id
            return updated, False

    def pair_stats(self) -> dict:
        by_status = {status: 0 for status in PAIR_STATUSES}
        by_reviewer: dict[str, int] = {}
        for pair in self._load_pairs().values():
            by_status[pair.status] += 1
            if pair.reviewer:
                by_reviewer[pair.reviewer] = by_reviewer.get(pair.reviewer, 0) + 1
        return {
            "total": sum(by_status.values()),
            "by_status": by_status,
            "by_reviewer": by_reviewer,
        }
