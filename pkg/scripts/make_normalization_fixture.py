#!/usr/bin/env python3
"""Regenerate the shared normalization/grammar fixture.

Both the Python suite and the review-UI tests assert against this file, so
the two implementations of token normalization and the tuple grammar cannot
drift apart silently. Run from the repo root:

    python3 scripts/make_normalization_fixture.py
"""

from __future__ import annotations

import json
from pathlib import Path

from behaviorlab.labels import (
    InconsistentHumanId,
    Unparseable,
    emit_prediction,
    normalize_token,
    parse_prediction,
)

TOKEN_CASES = [
    "grab",
    "Grab",
    "  Switch On ",
    "remote control",
    "COFFEE  MAKER",
    "open\tfridge",
    " walk ",
    "tv_stand",
    "Living  Room   Sofa",
]

GRID_CASES = [
    ("[[(0, grab, cup)]]", 1),
    ("[[(0, grab, cup), (0, open, fridge)]]", 2),
    ("[[(0, Grab, Cup), (0, OPEN, Fridge)]]", 2),
    ('```python\n[[("0", "grab", "remote_control")]]\n```', 1),
    ("[[('0', 'sit', 'kitchen chair'),]]", 1),
    ("(0, walk, tv), (0, sit, sofa)", 2),
    ("[[(0, grab, cup)], [(1, sit, chair)]]", 1),
    ("[[(1, sit, chair)], [(0, grab, cup)]]", 1),
    ("[[(0, grab, cup)]]", 3),  # padded
    ("[[(0, a, b), (0, c, d), (0, e, f)]]", 2),  # truncated
    ("no tuples here", 1),
    ("", 2),
    ("[[(0, a, b), (1, c, d)]]", 2),  # mixed ids, no majority
]


def main() -> None:
    cases = {
        "token_normalization": [
            {"input": raw, "normalized": normalize_token(raw)} for raw in TOKEN_CASES
        ],
        "grid_texts": [],
    }
    for text, horizon in GRID_CASES:
        entry: dict = {"text": text, "horizon": horizon}
        try:
            parsed = parse_prediction(text, horizon)
            entry["ok"] = True
            entry["canonical"] = emit_prediction(parsed.grid)
            entry["flags"] = sorted(set(parsed.flags))
        except (Unparseable, InconsistentHumanId) as exc:
            entry["ok"] = False
            entry["error"] = type(exc).__name__
        cases["grid_texts"].append(entry)

    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "normalization_cases.json"
    out.write_text(json.dumps(cases, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(cases['token_normalization'])} token cases, "
          f"{len(cases['grid_texts'])} grid cases)")


if __name__ == "__main__":
    main()
