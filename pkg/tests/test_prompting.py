from __future__ import annotations

from pathlib import Path

import pytest

from behaviorlab.prompting import (
    BudgetExceeded,
    IclExample,
    MissingSceneGraph,
    PromptSpec,
    build_prompt,
    pack_icl,
)
from behaviorlab.records import FrameRef

FIXTURES = Path(__file__).parent / "fixtures"


def frames(n, scenario="scn", start=0):
    return tuple(FrameRef(scenario, start + i) for i in range(n))


def example(i, room="kitchen", humans=2, history=6):
    return IclExample(
        sample_id=f"s{i:03d}",
        room=room,
        num_humans=humans,
        frame_refs=frames(history, scenario=f"ex{i}"),
        scene_graph_text='{"den": {}}',
        answer_text="[[(0, walk, tv)]]",
    )


def spec(icl=(), history=6, horizon=6, max_images=50):
    return PromptSpec(
        history=history,
        horizon=horizon,
        frame_refs=frames(history),
        scene_graph_text='{"den": {}}',
        icl_examples=tuple(icl),
        max_images=max_images,
    )


class TestBuildPrompt:
    def test_golden_no_icl(self):
        prompt = build_prompt(spec())
        golden = (FIXTURES / "prompt_golden.txt").read_text(encoding="utf-8")
        assert prompt.rendered_text() + "\n" == golden

    def test_contains_horizon_wording_and_six_slots(self):
        prompt = build_prompt(spec())
        assert "predict 6 future action labels" in prompt.rendered_text()
        assert prompt.image_count == 6

    def test_deterministic_bytes(self):
        a = build_prompt(spec(icl=[example(1), example(2)]))
        b = build_prompt(spec(icl=[example(1), example(2)]))
        assert a.rendered_text() == b.rendered_text()
        assert a.to_messages() == b.to_messages()

    def test_seven_examples_fit_budget_eight_do_not(self):
        prompt = build_prompt(spec(icl=[example(i) for i in range(7)]))
        assert prompt.image_count == 48
        with pytest.raises(BudgetExceeded):
            build_prompt(spec(icl=[example(i) for i in range(8)]))

    def test_missing_scene_graph(self):
        bad = PromptSpec(
            history=6, horizon=6, frame_refs=frames(6), scene_graph_text="  "
        )
        with pytest.raises(MissingSceneGraph):
            build_prompt(bad)

    def test_icl_answers_embedded_before_query(self):
        prompt = build_prompt(spec(icl=[example(1)]))
        text = prompt.rendered_text()
        assert text.index("Example 1:") < text.index("Query:")
        assert "Answer: [[(0, walk, tv)]]" in text

    def test_message_shape(self):
        messages = build_prompt(spec()).to_messages()
        assert messages[0] == {
            "role": "system",
            "content": "Role: You are an expert in predicting human behaviors.",
        }
        kinds = [part["type"] for part in messages[1]["content"]]
        assert kinds.count("image_url") == 6
        assert kinds[0] == "text" and kinds[-1] == "text"


class TestPackIcl:
    def test_budget_50_h6_selects_7(self):
        picked = pack_icl([example(i) for i in range(10)], history=6, max_images=50)
        assert len(picked) == 7

    def test_budget_6_selects_0(self):
        assert pack_icl([example(1)], history=6, max_images=6) == []

    def test_budget_12_selects_1(self):
        picked = pack_icl([example(i) for i in range(5)], history=6, max_images=12)
        assert len(picked) == 1

    def test_ordering_room_then_humans_then_id(self):
        candidates = [
            example(3, room="bedroom", humans=2),
            example(2, room="kitchen", humans=1),
            example(1, room="kitchen", humans=2),
            example(0, room="bedroom", humans=1),
        ]
        picked = pack_icl(
            candidates, history=6, max_images=50, query_room="kitchen", query_num_humans=2
        )
        # same room first (humans match beats mismatch), then matching human
        # count among other rooms, then ascending sample id
        assert [ex.sample_id for ex in picked] == ["s001", "s002", "s003", "s000"]

    def test_empty_candidates(self):
        assert pack_icl([], history=6, max_images=50) == []
