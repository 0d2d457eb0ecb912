"""Record types shared across the pipeline stages.

These are the values that cross module boundaries: dataset samples, stored
model responses, and mined preference pairs. They are plain dataclasses with
JSON (de)serialization helpers; the corpus store owns their persistence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

from .labels import PredictionGrid, parse_prediction


@dataclass(frozen=True)
class FrameRef:
    """Symbolic reference to one observation frame.

    ``path`` is optional: synthetic corpora are usable without rendered
    images, and an image provider can attach real files later.
    """

    scenario_id: str
    step: int
    path: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {"scenario_id": self.scenario_id, "step": self.step, "path": self.path}

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> "FrameRef":
        return cls(raw["scenario_id"], int(raw["step"]), raw.get("path"))


@dataclass(frozen=True)
class SampleMeta:
    room: str
    num_humans: int
    scenario_id: str
    scenario_seed: int
    split: str
    source: str = "synthetic"


@dataclass(frozen=True)
class Sample:
    sample_id: str
    frame_refs: tuple[FrameRef, ...]
    scene_graph_ref: str
    gt_grid: PredictionGrid
    meta: SampleMeta

    def to_json(self) -> dict[str, Any]:
        from .labels import emit_prediction

        return {
            "sample_id": self.sample_id,
            "frame_refs": [f.to_json() for f in self.frame_refs],
            "scene_graph_ref": self.scene_graph_ref,
            "gt_text": emit_prediction(self.gt_grid),
            "meta": asdict(self.meta),
        }

    @classmethod
    def from_json(cls, raw: dict[str, Any], horizon: int) -> "Sample":
        gt = parse_prediction(raw["gt_text"], horizon)
        if gt.flags:
            raise ValueError(f"{raw['sample_id']}: ground-truth text is not canonical")
        return cls(
            sample_id=raw["sample_id"],
            frame_refs=tuple(FrameRef.from_json(f) for f in raw["frame_refs"]),
            scene_graph_ref=raw["scene_graph_ref"],
            gt_grid=gt.grid,
            meta=SampleMeta(**raw["meta"]),
        )


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    model_id: str
    run_index: int
    raw_text: str
    parsed_text: str | None = None
    flags: tuple[str, ...] = ()
    latency_ms: float = 0.0
    temperature: float = 1.0
    seed: int | None = None
    error: str | None = None

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> "PredictionRecord":
        raw = dict(raw)
        raw["flags"] = tuple(raw.get("flags", ()))
        return cls(**raw)


PAIR_STATUSES = ("pending", "approved", "swapped", "edited", "rejected")
TERMINAL_STATUSES = frozenset(PAIR_STATUSES) - {"pending"}


@dataclass(frozen=True)
class PreferencePair:
    """A chosen/rejected response pair mined for one sample.

    ``chosen_run``/``rejected_run`` index into the stored responses for
    (sample_id, model_id); at mining time chosen_ed <= rejected_ed holds.
    Status moves from pending to exactly one terminal state.
    """

    pair_id: str
    sample_id: str
    model_id: str
    chosen_run: int
    rejected_run: int
    chosen_ed: float
    rejected_ed: float
    mined_at: str
    status: str = "pending"
    reviewer: str | None = None
    decided_at: str | None = None
    edited_text: str | None = None

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> "PreferencePair":
        return cls(**raw)
