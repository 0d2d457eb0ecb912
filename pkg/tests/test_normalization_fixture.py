"""The shared normalization/grammar fixture must hold in this implementation;
the review-UI test suite asserts the same file, keeping both sides aligned."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from behaviorlab.labels import (
    InconsistentHumanId,
    Unparseable,
    emit_prediction,
    normalize_token,
    parse_prediction,
)

CASES = json.loads(
    (Path(__file__).parent / "fixtures" / "normalization_cases.json").read_text()
)


@pytest.mark.parametrize(
    "case", CASES["token_normalization"], ids=lambda c: repr(c["input"])
)
def test_token_normalization(case):
    assert normalize_token(case["input"]) == case["normalized"]


@pytest.mark.parametrize(
    "case", CASES["grid_texts"], ids=lambda c: repr(c["text"][:30])
)
def test_grid_grammar(case):
    if case["ok"]:
        parsed = parse_prediction(case["text"], case["horizon"])
        assert emit_prediction(parsed.grid) == case["canonical"]
        assert sorted(set(parsed.flags)) == case["flags"]
    else:
        expected = {"Unparseable": Unparseable, "InconsistentHumanId": InconsistentHumanId}
        with pytest.raises(expected[case["error"]]):
            parse_prediction(case["text"], case["horizon"])
