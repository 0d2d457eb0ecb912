"""Closed token vocabularies for scene graphs and action labels.

Property, state, and relation tokens form a registry that the scene-graph
validator checks against. The defaults cover the living-room example plus
the affordances the scenario generator needs. A registry can be loaded from
a JSON file to extend or replace the defaults; `open_vocab` disables the
unknown-token check entirely (model outputs in the wild are open-vocabulary,
the simulator side is not).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

DEFAULT_PROPERTIES = frozenset(
    {
        "HAS_SWITCH",
        "GRABBABLE",
        "SITTABLE",
        "HAS_SURFACE",
        "CAN_OPEN",
        "CONTAINER",
        "DRINKABLE",
        "READABLE",
        "WIPEABLE",
    }
)

DEFAULT_STATES = frozenset({"ON", "OFF", "OPEN", "CLOSED", "CLEAN", "DIRTY"})

DEFAULT_RELATIONS = frozenset({"ON", "INSIDE", "CLOSE", "FACING"})

# State pairs that may never coexist on one node.
STATE_EXCLUSIONS: tuple[tuple[str, str], ...] = (("ON", "OFF"), ("OPEN", "CLOSED"))

# State token -> property that must be present for the state to be legal.
STATE_GATES: dict[str, str] = {
    "ON": "HAS_SWITCH",
    "OFF": "HAS_SWITCH",
    "OPEN": "CAN_OPEN",
    "CLOSED": "CAN_OPEN",
}

# Counterpart map used when folding an action effect into a state set:
# adding a token removes its counterpart.
STATE_COUNTERPART: dict[str, str] = {
    "ON": "OFF",
    "OFF": "ON",
    "OPEN": "CLOSED",
    "CLOSED": "OPEN",
    "CLEAN": "DIRTY",
    "DIRTY": "CLEAN",
}


@dataclass(frozen=True)
class VocabRegistry:
    """Registered token sets plus validation toggles."""

    properties: frozenset[str] = field(default=DEFAULT_PROPERTIES)
    states: frozenset[str] = field(default=DEFAULT_STATES)
    relations: frozenset[str] = field(default=DEFAULT_RELATIONS)
    open_vocab: bool = False
    allow_duplicate_names: bool = False

    def knows_property(self, token: str) -> bool:
        return self.open_vocab or token in self.properties

    def knows_state(self, token: str) -> bool:
        return self.open_vocab or token in self.states

    def knows_relation(self, token: str) -> bool:
        return self.open_vocab or token in self.relations

    def with_open_vocab(self) -> "VocabRegistry":
        return replace(self, open_vocab=True)

    @classmethod
    def from_file(cls, path: str | Path) -> "VocabRegistry":
        """Load a registry from JSON. Listed tokens extend the defaults unless
        ``"replace": true`` is set."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        base = cls()
        rep = bool(raw.get("replace", False))

        def pick(key: str, default: frozenset[str]) -> frozenset[str]:
            tokens = frozenset(raw.get(key, ()))
            return tokens if rep else default | tokens

        return cls(
            properties=pick("properties", base.properties),
            states=pick("states", base.states),
            relations=pick("relations", base.relations),
            open_vocab=bool(raw.get("open_vocab", False)),
            allow_duplicate_names=bool(raw.get("allow_duplicate_names", False)),
        )


DEFAULT_REGISTRY = VocabRegistry()
