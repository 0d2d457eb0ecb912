"""Deterministic prompt construction with in-context examples.

The prompt follows a fixed Role / Task / Video Frames / Scene Graph /
Output Format structure; worked examples (query frames + scene graph +
canonical answer) are prepended under an image budget. Identical specs build
byte-identical prompts, so runs are reproducible and cacheable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .records import FrameRef

ROLE_TEXT = "Role: You are an expert in predicting human behaviors."

TASK_TEMPLATE = (
    "Task: Given {history} video frames showing multiple humans performing "
    "different actions, and a scene graph describing the available objects "
    "and their relationships in the environment, your task is to predict "
    "{horizon} future action labels for each human in the scene."
)

OUTPUT_FORMAT_TEXT = (
    "Output Format: The output should be formulated as a 2D list, where the "
    "first dimension (rows) indicates the number of humans, the second "
    "dimension (elements in each row) refers to the prediction horizon T, "
    "i.e., the number of future behavior labels. Each behavior label is "
    "defined as a tuple (h_id, action, object), where h_id means the id of "
    "the human."
)


class BudgetExceeded(Exception):
    pass


class MissingSceneGraph(Exception):
    pass


@dataclass(frozen=True)
class IclExample:
    sample_id: str
    room: str
    num_humans: int
    frame_refs: tuple[FrameRef, ...]
    scene_graph_text: str
    answer_text: str  # canonical prediction text


@dataclass(frozen=True)
class PromptSpec:
    history: int
    horizon: int
    frame_refs: tuple[FrameRef, ...]
    scene_graph_text: str
    icl_examples: tuple[IclExample, ...] = ()
    max_images: int = 50


@dataclass(frozen=True)
class PromptPart:
    kind: str  # "text" | "image"
    text: str = ""
    frame: FrameRef | None = None


@dataclass(frozen=True)
class StructuredPrompt:
    system: str
    parts: tuple[PromptPart, ...]

    @property
    def image_count(self) -> int:
        return sum(1 for p in self.parts if p.kind == "image")

    def rendered_text(self) -> str:
        """All text segments with image placeholders; byte-deterministic."""
        chunks = [self.system]
        image_no = 0
        for part in self.parts:
            if part.kind == "text":
                chunks.append(part.text)
            else:
                image_no += 1
                chunks.append(f"[image {image_no}: {part.frame.scenario_id}/{part.frame.step}]")
        return "\n".join(chunks)

    def to_messages(self, image_loader=None) -> list[dict]:
        """Chat-completion message shape: system text plus user parts that
        interleave text and image references. ``image_loader(frame) -> url``
        turns a frame into a data URL; without one, image parts carry the
        symbolic reference."""
        content = []
        for part in self.parts:
            if part.kind == "text":
                content.append({"type": "text", "text": part.text})
            else:
                if image_loader is not None:
                    url = image_loader(part.frame)
                else:
                    url = f"ref://{part.frame.scenario_id}/{part.frame.step}"
                content.append({"type": "image_url", "image_url": {"url": url}})
        return [
            {"role": "system", "content": self.system},
            {"role": "user", "content": content},
        ]


def _frames_header(history: int) -> str:
    names = ", ".join(f"frame_{i}.png" for i in range(1, history + 1))
    return f"Video Frames: <{names}>"


def _scene_graph_block(scene_graph_text: str) -> str:
    return f"Scene Graph: <scene_graph.json>\n{scene_graph_text.strip()}"


def build_prompt(spec: PromptSpec) -> StructuredPrompt:
    """Assemble the full prompt; raises BudgetExceeded when the query plus
    examples would exceed the image budget."""
    if not spec.scene_graph_text.strip():
        raise MissingSceneGraph("prompt requires scene-graph text")
    for ex in spec.icl_examples:
        if not ex.scene_graph_text.strip():
            raise MissingSceneGraph(f"example {ex.sample_id} lacks scene-graph text")
        if len(ex.frame_refs) != spec.history:
            raise ValueError(f"example {ex.sample_id} frame count != history")
    if len(spec.frame_refs) != spec.history:
        raise ValueError("query frame count != history")
    total_images = (len(spec.icl_examples) + 1) * spec.history
    if total_images > spec.max_images:
        raise BudgetExceeded(
            f"{total_images} images exceed the budget of {spec.max_images}"
        )

    parts: list[PromptPart] = [
        PromptPart("text", TASK_TEMPLATE.format(history=spec.history, horizon=spec.horizon))
    ]
    for i, ex in enumerate(spec.icl_examples, start=1):
        parts.append(PromptPart("text", f"Example {i}:\n{_frames_header(spec.history)}"))
        parts.extend(PromptPart("image", frame=f) for f in ex.frame_refs)
        parts.append(
            PromptPart(
                "text",
                f"{_scene_graph_block(ex.scene_graph_text)}\nAnswer: {ex.answer_text}",
            )
        )
    query_head = _frames_header(spec.history)
    if spec.icl_examples:
        query_head = f"Query:\n{query_head}"
    parts.append(PromptPart("text", query_head))
    parts.extend(PromptPart("image", frame=f) for f in spec.frame_refs)
    parts.append(
        PromptPart(
            "text", f"{_scene_graph_block(spec.scene_graph_text)}\n{OUTPUT_FORMAT_TEXT}"
        )
    )
    return StructuredPrompt(system=ROLE_TEXT, parts=tuple(parts))


def pack_icl(
    candidates: list[IclExample],
    history: int,
    max_images: int,
    query_room: str | None = None,
    query_num_humans: int | None = None,
) -> list[IclExample]:
    """Pick as many examples as the image budget allows: (k+1) * history
    images must fit. Candidates are ordered deterministically: same room
    first, then matching human count, then ascending sample id."""
    if history < 1:
        raise ValueError("history must be >= 1")
    ordered = sorted(
        candidates,
        key=lambda ex: (
            ex.room != query_room,
            ex.num_humans != query_num_humans,
            ex.sample_id,
        ),
    )
    budget_slots = max_images // history - 1  # one slot reserved for the query
    k = max(0, min(len(ordered), budget_slots))
    return ordered[:k]
