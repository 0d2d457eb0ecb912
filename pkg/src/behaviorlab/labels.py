"""Action-label types and the two text formats that carry them.

Two grammars live here (docs/grammar.md has the EBNF):

* the simulator action-script line ``<char0> [grab] <remote_control> (103)``
* the model-output 2D list ``[[(0, grab, remote_control), ...], ...]``

``parse_prediction`` is deliberately lenient about the second one: real model
output arrives wrapped in code fences, quoted, truncated, or with trailing
commas. Whatever is recovered is normalized into a PredictionGrid of exactly
``horizon`` labels per human, padding short rows with the ``none/none``
sentinel and truncating long ones; every repair is reported as a flag next to
the grid. ``emit_prediction`` writes the canonical single-line form, which
re-parses with zero flags.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

SENTINEL = "none"

# Parse flags
FLAG_PADDED_ROW = "padded_row"
FLAG_TRUNCATED_ROW = "truncated_row"
FLAG_REASSIGNED_H_ID = "reassigned_h_id"
FLAG_DUPLICATE_H_ID = "duplicate_h_id"
FLAG_BAD_TUPLE = "bad_tuple"


class ScriptSyntax(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class Unparseable(Exception):
    pass


class InconsistentHumanId(Exception):
    pass


def normalize_token(token: str) -> str:
    """Lowercase, trim, and replace internal whitespace runs with '_'."""
    return re.sub(r"\s+", "_", token.strip().lower())


@dataclass(frozen=True, order=True)
class BehaviorLabel:
    h_id: int
    verb: str
    noun: str

    def __post_init__(self):
        if self.h_id < 0:
            raise ValueError("h_id must be non-negative")
        if not self.verb or not self.noun:
            raise ValueError("verb and noun must be non-empty after normalization")

    @classmethod
    def make(cls, h_id: int, verb: str, noun: str) -> "BehaviorLabel":
        return cls(h_id, normalize_token(verb), normalize_token(noun))

    def is_sentinel(self) -> bool:
        return self.verb == SENTINEL and self.noun == SENTINEL


def sentinel_label(h_id: int) -> BehaviorLabel:
    return BehaviorLabel(h_id, SENTINEL, SENTINEL)


@dataclass(frozen=True)
class PredictionGrid:
    """The M x T grid of future labels, one row per human, sorted by h_id."""

    rows: tuple[tuple[BehaviorLabel, ...], ...]
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        seen: set[int] = set()
        for row in self.rows:
            if len(row) != self.horizon:
                raise ValueError(
                    f"row length {len(row)} != horizon {self.horizon}"
                )
            ids = {label.h_id for label in row}
            if len(ids) != 1:
                raise ValueError("all labels in a row must share one h_id")
            (h_id,) = ids
            if h_id in seen:
                raise ValueError(f"duplicate h_id {h_id} across rows")
            seen.add(h_id)
        object.__setattr__(
            self, "rows", tuple(sorted(self.rows, key=lambda r: r[0].h_id))
        )

    @property
    def num_humans(self) -> int:
        return len(self.rows)

    def row_for(self, h_id: int) -> tuple[BehaviorLabel, ...] | None:
        for row in self.rows:
            if row[0].h_id == h_id:
                return row
        return None


@dataclass(frozen=True)
class ScriptLine:
    char_id: int
    action: str
    object_name: str
    object_id: int

    def render(self) -> str:
        return f"<char{self.char_id}> [{self.action}] <{self.object_name}> ({self.object_id})"


_SCRIPT_RE = re.compile(
    r"^<char(\d+)>\s*\[([^\[\]]+)\]\s*<([^<>]+)>\s*\((\d+)\)$"
)


def parse_script(text: str) -> list[ScriptLine]:
    """One ScriptLine per non-blank line; raises ScriptSyntax with the 1-based
    line number of the first offending line."""
    lines: list[ScriptLine] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        m = _SCRIPT_RE.match(stripped)
        if m is None:
            raise ScriptSyntax(line_no, f"does not match script grammar: {stripped!r}")
        char_id, action, object_name, object_id = m.groups()
        action_n = normalize_token(action)
        object_n = normalize_token(object_name)
        if not action_n or not object_n:
            raise ScriptSyntax(line_no, "empty action or object token")
        lines.append(ScriptLine(int(char_id), action_n, object_n, int(object_id)))
    return lines


def emit_script(lines: list[ScriptLine]) -> str:
    return "\n".join(line.render() for line in lines)


@dataclass(frozen=True)
class ParsedPrediction:
    grid: PredictionGrid
    flags: tuple[str, ...]

    @property
    def clean(self) -> bool:
        return not self.flags


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?(.*?)```", re.DOTALL)
_TUPLE_RE = re.compile(r"\(([^()]*)\)")
_ROW_BREAK_RE = re.compile(r"\][^()\[\]]*\[")


def _strip_fences(text: str) -> str:
    m = _FENCE_RE.search(text)
    if m:
        return m.group(1)
    return text.replace("```", "")


def _clean_part(part: str) -> str:
    return part.strip().strip("'\"").strip()


def _parse_tuple(inner: str) -> tuple[int | None, str, str] | None:
    parts = [_clean_part(p) for p in inner.split(",")]
    if parts and parts[-1] == "":
        parts = parts[:-1]  # trailing comma inside the tuple
    if len(parts) == 3:
        head, verb, noun = parts
        try:
            h_id = int(head)
        except ValueError:
            return None
        if h_id < 0:
            return None
    elif len(parts) == 2:
        h_id, verb, noun = None, parts[0], parts[1]
    else:
        return None
    verb_n, noun_n = normalize_token(verb), normalize_token(noun)
    if not verb_n or not noun_n:
        return None
    return h_id, verb_n, noun_n


def parse_prediction(text: str, expected_horizon: int) -> ParsedPrediction:
    """Lenient parse of model output into a grid of exactly ``expected_horizon``
    labels per row. See the module docstring for the repairs applied."""
    if expected_horizon < 1:
        raise ValueError("expected_horizon must be >= 1")
    body = _strip_fences(text)
    matches = list(_TUPLE_RE.finditer(body))
    if not matches:
        raise Unparseable("no (h_id, verb, noun) tuple structure recoverable")

    flags: list[str] = []
    raw_rows: list[list[tuple[int | None, str, str]]] = [[]]
    for i, m in enumerate(matches):
        if i > 0:
            gap = body[matches[i - 1].end() : m.start()]
            if _ROW_BREAK_RE.search(gap):
                raw_rows.append([])
        parsed = _parse_tuple(m.group(1))
        if parsed is None:
            flags.append(FLAG_BAD_TUPLE)
            continue
        raw_rows[-1].append(parsed)
    raw_rows = [row for row in raw_rows if row]
    if not raw_rows:
        raise Unparseable("no tuple parsed to a usable label")

    rows: list[list[BehaviorLabel]] = []
    used_ids: set[int] = set()
    for index, row in enumerate(raw_rows):
        declared = [h for h, _, _ in row if h is not None]
        if declared:
            counts = Counter(declared).most_common()
            if len(counts) > 1 and counts[0][1] == counts[1][1]:
                raise InconsistentHumanId(
                    f"row {index}: no majority h_id among {sorted(set(declared))}"
                )
            h_id = counts[0][0]
            if any(h != h_id for h in declared):
                flags.append(FLAG_REASSIGNED_H_ID)
        else:
            h_id = index
        if h_id in used_ids:
            flags.append(FLAG_DUPLICATE_H_ID)
            h_id = max(used_ids) + 1
        used_ids.add(h_id)
        labels = [BehaviorLabel(h_id, verb, noun) for _, verb, noun in row]
        if len(labels) > expected_horizon:
            labels = labels[:expected_horizon]
            flags.append(FLAG_TRUNCATED_ROW)
        elif len(labels) < expected_horizon:
            labels.extend(
                sentinel_label(h_id) for _ in range(expected_horizon - len(labels))
            )
            flags.append(FLAG_PADDED_ROW)
        rows.append(labels)

    grid = PredictionGrid(
        rows=tuple(tuple(row) for row in rows), horizon=expected_horizon
    )
    return ParsedPrediction(grid=grid, flags=tuple(flags))


def emit_prediction(grid: PredictionGrid) -> str:
    """Canonical single-line 2D-list text; rows in ascending h_id order."""
    rows = []
    for row in grid.rows:
        cells = ", ".join(f"({l.h_id}, {l.verb}, {l.noun})" for l in row)
        rows.append(f"[{cells}]")
    return "[" + ", ".join(rows) + "]"
