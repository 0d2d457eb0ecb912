from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from behaviorlab.labels import (
    FLAG_PADDED_ROW,
    FLAG_REASSIGNED_H_ID,
    FLAG_TRUNCATED_ROW,
    BehaviorLabel,
    InconsistentHumanId,
    PredictionGrid,
    ScriptLine,
    ScriptSyntax,
    Unparseable,
    emit_prediction,
    emit_script,
    normalize_token,
    parse_prediction,
    parse_script,
    sentinel_label,
)


def grid(*rows, horizon=None):
    built = tuple(
        tuple(BehaviorLabel(h, v, n) for v, n in labels) for h, labels in rows
    )
    return PredictionGrid(rows=built, horizon=horizon or len(built[0]))


class TestNormalize:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Grab", "grab"),
            ("  Switch On ", "switch_on"),
            ("remote\tcontrol", "remote_control"),
            ("COFFEE  MAKER", "coffee_maker"),
            ("book", "book"),
        ],
    )
    def test_cases(self, raw, expected):
        assert normalize_token(raw) == expected

    def test_label_rejects_empty_tokens(self):
        with pytest.raises(ValueError):
            BehaviorLabel(0, "", "cup")
        with pytest.raises(ValueError):
            BehaviorLabel.make(0, "   ", "cup")


class TestScript:
    def test_single_line(self):
        lines = parse_script("<char0> [grab] <remote_control> (103)")
        assert lines == [ScriptLine(0, "grab", "remote_control", 103)]

    def test_empty_text(self):
        assert parse_script("") == []
        assert parse_script("\n  \n") == []

    def test_render_round_trip(self):
        text = "<char0> [grab] <remote_control> (103)\n<char1> [sit] <sofa> (104)"
        assert emit_script(parse_script(text)) == text

    def test_whitespace_normalized_content_preserved(self):
        loose = "<char2>   [Switch On]   <coffee maker>   (212)"
        line = parse_script(loose)[0]
        assert line == ScriptLine(2, "switch_on", "coffee_maker", 212)

    @pytest.mark.parametrize(
        "bad",
        [
            "<char0> grab remote",
            "char0 [grab] <remote> (1)",
            "<char0> [grab] <remote>",
            "<charX> [grab] <remote> (1)",
            "<char0> [] <remote> (1)",
        ],
    )
    def test_grammar_rejection_carries_line_number(self, bad):
        with pytest.raises(ScriptSyntax) as err:
            parse_script(f"<char0> [sit] <sofa> (104)\n{bad}")
        assert err.value.line_no == 2


class TestParsePrediction:
    def test_canonical_two_labels(self):
        parsed = parse_prediction(
            "[[(0, grab, remote_control), (0, switchon, tv)]]", 2
        )
        assert parsed.clean
        assert parsed.grid == grid((0, [("grab", "remote_control"), ("switchon", "tv")]))

    def test_code_fence_and_double_quotes(self):
        fenced = (
            "```python\n"
            '[[("0", "grab", "remote_control"), ("0", "switchon", "tv")]]\n'
            "```"
        )
        plain = parse_prediction("[[(0, grab, remote_control), (0, switchon, tv)]]", 2)
        assert parse_prediction(fenced, 2).grid == plain.grid

    def test_single_quotes_and_trailing_commas(self):
        text = "[[('0', 'grab', 'cup',), ('0', 'open', 'fridge'),],]"
        parsed = parse_prediction(text, 2)
        assert parsed.grid == grid((0, [("grab", "cup"), ("open", "fridge")]))

    def test_missing_outer_brackets(self):
        parsed = parse_prediction("(0, grab, cup), (0, open, fridge)", 2)
        assert parsed.grid == grid((0, [("grab", "cup"), ("open", "fridge")]))

    def test_short_row_padded_and_flagged(self):
        parsed = parse_prediction("[[(0, grab, cup)]]", 3)
        assert FLAG_PADDED_ROW in parsed.flags
        row = parsed.grid.rows[0]
        assert row[0] == BehaviorLabel(0, "grab", "cup")
        assert row[1] == sentinel_label(0) and row[2] == sentinel_label(0)

    def test_long_row_truncated_and_flagged(self):
        parsed = parse_prediction("[[(0, a, b), (0, c, d), (0, e, f)]]", 2)
        assert FLAG_TRUNCATED_ROW in parsed.flags
        assert len(parsed.grid.rows[0]) == 2

    def test_majority_id_reassignment(self):
        parsed = parse_prediction("[[(0, a, b), (0, c, d), (1, e, f)]]", 3)
        assert FLAG_REASSIGNED_H_ID in parsed.flags
        assert {l.h_id for l in parsed.grid.rows[0]} == {0}

    def test_no_majority_raises(self):
        with pytest.raises(InconsistentHumanId):
            parse_prediction("[[(0, a, b), (1, c, d)]]", 2)

    def test_missing_ids_use_row_index(self):
        parsed = parse_prediction("[[(a, b), (c, d)], [(e, f), (g, h)]]", 2)
        assert [row[0].h_id for row in parsed.grid.rows] == [0, 1]

    def test_unparseable(self):
        with pytest.raises(Unparseable):
            parse_prediction("I cannot predict the future.", 2)
        with pytest.raises(Unparseable):
            parse_prediction("", 2)

    def test_two_rows(self):
        parsed = parse_prediction("[[(0, sit, sofa)], [(1, grab, mug)]]", 1)
        assert parsed.clean
        assert parsed.grid.num_humans == 2

    def test_rows_canonicalized_by_h_id(self):
        parsed = parse_prediction("[[(1, grab, mug)], [(0, sit, sofa)]]", 1)
        assert [row[0].h_id for row in parsed.grid.rows] == [0, 1]


class TestEmit:
    def test_canonical_single_row(self):
        g = grid((0, [("grab", "remote_control")]))
        assert emit_prediction(g) == "[[(0, grab, remote_control)]]"

    def test_emit_parse_emit_byte_identical(self):
        g = grid(
            (0, [("grab", "cup"), ("open", "fridge")]),
            (1, [("sit", "chair"), ("drink", "cup")]),
        )
        text = emit_prediction(g)
        assert emit_prediction(parse_prediction(text, 2).grid) == text

    def test_row_order_ascending_h_id(self):
        g = PredictionGrid(
            rows=(
                (BehaviorLabel(2, "sit", "sofa"),),
                (BehaviorLabel(0, "walk", "tv"),),
            ),
            horizon=1,
        )
        assert emit_prediction(g).index("(0,") < emit_prediction(g).index("(2,")


_TOKENS = st.sampled_from(
    ["grab", "put", "open", "walk", "sit", "cup", "fridge", "coffee_maker",
     "tv", "sofa", "remote_control", "book_2"]
)


@st.composite
def grids(draw) -> PredictionGrid:
    horizon = draw(st.integers(min_value=1, max_value=6))
    h_ids = draw(st.lists(st.integers(0, 9), min_size=1, max_size=3, unique=True))
    rows = tuple(
        tuple(
            BehaviorLabel(h, draw(_TOKENS), draw(_TOKENS)) for _ in range(horizon)
        )
        for h in h_ids
    )
    return PredictionGrid(rows=rows, horizon=horizon)


class TestProperties:
    @settings(max_examples=300)
    @given(grids())
    def test_emit_parse_round_trip(self, g):
        parsed = parse_prediction(emit_prediction(g), g.horizon)
        assert parsed.clean
        assert parsed.grid == g

    @settings(max_examples=300)
    @given(grids())
    def test_lenient_parser_idempotent(self, g):
        text = emit_prediction(g)
        once = parse_prediction(text, g.horizon)
        twice = parse_prediction(emit_prediction(once.grid), g.horizon)
        assert once.grid == twice.grid

    @given(st.text(max_size=60))
    def test_arbitrary_text_never_crashes_unexpectedly(self, text):
        try:
            parse_prediction(text, 3)
        except (Unparseable, InconsistentHumanId):
            pass
