"""Scene-graph model, JSON codec, validation, diff, and mutation.

Wire format is a single top-level room object mapping object names to
``{id, properties, state, object_placing}``; each placement edge carries a
``destination`` encoded as a two-element ``[name, id]`` array and a
``relation`` token:

    {"living_room": {"tv": {"id": 101, "properties": ["HAS_SWITCH"],
                            "state": ["OFF"],
                            "object_placing": [{"destination": ["tv_stand", 102],
                                                "relation": "ON"}]}, ...}}

Graphs are immutable values; every mutation helper returns a new graph. The
canonical serialization sorts object names and property/state tokens and
fixes the attribute order (id, properties, state, object_placing), so two
serializations of equal graphs are byte-identical and parse/serialize round-
trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Iterable

from .vocab import DEFAULT_REGISTRY, STATE_EXCLUSIONS, STATE_GATES, VocabRegistry


class SceneGraphError(Exception):
    """Base class for scene-graph codec and validation failures."""


class MalformedJson(SceneGraphError):
    pass


class SchemaViolation(SceneGraphError):
    pass


class DanglingEdge(SceneGraphError):
    pass


class DuplicateId(SceneGraphError):
    pass


class UnknownObject(SceneGraphError):
    pass


class InvalidStateTransition(SceneGraphError):
    pass


@dataclass(frozen=True)
class PlacementEdge:
    destination_name: str
    destination_id: int
    relation: str


@dataclass(frozen=True)
class ObjectNode:
    id: int
    properties: frozenset[str]
    state: frozenset[str]
    object_placing: tuple[PlacementEdge, ...]


@dataclass(frozen=True)
class SceneGraph:
    room_name: str
    nodes: dict[str, ObjectNode]

    def node_by_id(self, object_id: int) -> tuple[str, ObjectNode]:
        for name, node in self.nodes.items():
            if node.id == object_id:
                return name, node
        raise UnknownObject(f"no object with id {object_id}")


def _check_state_set(name: str, node: ObjectNode, vocab: VocabRegistry) -> None:
    for a, b in STATE_EXCLUSIONS:
        if a in node.state and b in node.state:
            raise SchemaViolation(f"{name}: states {a} and {b} cannot coexist")
    for state, gate in STATE_GATES.items():
        if state in node.state and gate not in node.properties:
            raise SchemaViolation(f"{name}: state {state} requires property {gate}")


def validate_graph(g: SceneGraph, vocab: VocabRegistry = DEFAULT_REGISTRY) -> None:
    """Raise the matching error class on the first violated invariant."""
    seen_ids: dict[int, str] = {}
    for name, node in g.nodes.items():
        if not isinstance(node.id, int) or isinstance(node.id, bool) or node.id <= 0:
            raise SchemaViolation(f"{name}: id must be a positive integer")
        if node.id in seen_ids:
            raise DuplicateId(f"{name}: id {node.id} already used by {seen_ids[node.id]}")
        seen_ids[node.id] = name
        for token in node.properties:
            if not vocab.knows_property(token):
                raise SchemaViolation(f"{name}: unknown property token {token!r}")
        for token in node.state:
            if not vocab.knows_state(token):
                raise SchemaViolation(f"{name}: unknown state token {token!r}")
        _check_state_set(name, node, vocab)
    for name, node in g.nodes.items():
        for edge in node.object_placing:
            if not vocab.knows_relation(edge.relation):
                raise SchemaViolation(
                    f"{name}: unknown relation token {edge.relation!r}"
                )
            dest = g.nodes.get(edge.destination_name)
            if dest is None or dest.id != edge.destination_id:
                raise DanglingEdge(
                    f"{name}: edge destination ({edge.destination_name}, "
                    f"{edge.destination_id}) not in graph"
                )


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaViolation(msg)


def _parse_token_list(name: str, raw: Any, kind: str) -> frozenset[str]:
    _require(isinstance(raw, list), f"{name}: {kind} must be a list")
    for tok in raw:
        _require(isinstance(tok, str), f"{name}: {kind} entries must be strings")
    return frozenset(raw)


def _parse_node(name: str, raw: Any) -> ObjectNode:
    _require(isinstance(raw, dict), f"{name}: node must be an object")
    _require("id" in raw, f"{name}: missing id")
    node_id = raw["id"]
    _require(
        isinstance(node_id, int) and not isinstance(node_id, bool),
        f"{name}: id must be an integer",
    )
    edges = []
    placing = raw.get("object_placing", [])
    _require(isinstance(placing, list), f"{name}: object_placing must be a list")
    for entry in placing:
        _require(isinstance(entry, dict), f"{name}: placement edge must be an object")
        dest = entry.get("destination")
        _require(
            isinstance(dest, list) and len(dest) == 2,
            f"{name}: destination must be a two-element [name, id] array",
        )
        _require(isinstance(dest[0], str), f"{name}: destination name must be a string")
        _require(
            isinstance(dest[1], int) and not isinstance(dest[1], bool),
            f"{name}: destination id must be an integer",
        )
        relation = entry.get("relation")
        _require(isinstance(relation, str), f"{name}: relation must be a string")
        edges.append(PlacementEdge(dest[0], dest[1], relation))
    return ObjectNode(
        id=node_id,
        properties=_parse_token_list(name, raw.get("properties", []), "properties"),
        state=_parse_token_list(name, raw.get("state", []), "state"),
        object_placing=tuple(edges),
    )


def parse_scene_graph(
    text: str, vocab: VocabRegistry = DEFAULT_REGISTRY
) -> SceneGraph:
    """Parse and validate a scene-graph JSON document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from exc
    if not isinstance(raw, dict) or len(raw) != 1:
        raise SchemaViolation("document must contain exactly one top-level room object")
    room_name, objects = next(iter(raw.items()))
    if not isinstance(objects, dict):
        raise SchemaViolation(f"{room_name}: room value must be an object")
    nodes = {name: _parse_node(name, node_raw) for name, node_raw in objects.items()}
    g = SceneGraph(room_name=room_name, nodes=nodes)
    validate_graph(g, vocab)
    return g


def _node_to_json(node: ObjectNode) -> dict[str, Any]:
    return {
        "id": node.id,
        "properties": sorted(node.properties),
        "state": sorted(node.state),
        "object_placing": [
            {
                "destination": [e.destination_name, e.destination_id],
                "relation": e.relation,
            }
            for e in node.object_placing
        ],
    }


def graph_to_json(g: SceneGraph) -> dict[str, Any]:
    return {g.room_name: {name: _node_to_json(g.nodes[name]) for name in sorted(g.nodes)}}


def serialize_scene_graph(g: SceneGraph, indent: int | None = None) -> str:
    """Canonical serialization: sorted names/tokens, fixed attribute order."""
    return json.dumps(graph_to_json(g), indent=indent, ensure_ascii=False)


def apply_state_change(
    g: SceneGraph,
    object_id: int,
    new_states: Iterable[str],
    moved_to: PlacementEdge | None = None,
    vocab: VocabRegistry = DEFAULT_REGISTRY,
) -> SceneGraph:
    """Replace an object's state set (and optionally its placement).

    ``new_states`` is the complete new state set for the object; callers fold
    effects themselves. The updated graph is re-validated, so a state that the
    object's properties do not permit raises InvalidStateTransition.
    """
    name, node = g.node_by_id(object_id)
    states = frozenset(new_states)
    for token in states:
        if not vocab.knows_state(token):
            raise InvalidStateTransition(f"{name}: unknown state token {token!r}")
    updated = replace(node, state=states)
    if moved_to is not None:
        updated = replace(updated, object_placing=(moved_to,))
    if updated == node:
        return g
    nodes = dict(g.nodes)
    nodes[name] = updated
    out = SceneGraph(room_name=g.room_name, nodes=nodes)
    try:
        validate_graph(out, vocab)
    except (SchemaViolation, DanglingEdge) as exc:
        raise InvalidStateTransition(str(exc)) from exc
    return out


def insert_node(
    g: SceneGraph,
    name: str,
    node: ObjectNode,
    vocab: VocabRegistry = DEFAULT_REGISTRY,
) -> SceneGraph:
    """Add an object under a collision-free name.

    Object names are map keys, so a second "chair" cannot share the name of
    the first; with ``allow_duplicate_names`` the new node is stored under
    ``chair_2`` (then ``chair_3``, ...), otherwise the collision is a
    SchemaViolation. Ids must still be unique either way.
    """
    final = name
    if name in g.nodes:
        if not vocab.allow_duplicate_names:
            raise SchemaViolation(f"object name {name!r} already present")
        suffix = 2
        while f"{name}_{suffix}" in g.nodes:
            suffix += 1
        final = f"{name}_{suffix}"
    nodes = dict(g.nodes)
    nodes[final] = node
    out = SceneGraph(room_name=g.room_name, nodes=nodes)
    validate_graph(out, vocab)
    return out


@dataclass(frozen=True)
class GraphChange:
    """One structured difference; ``apply_changes`` folds a list of these."""

    kind: str  # room_renamed | node_added | node_removed | id_changed |
    #            state_changed | properties_changed | placement_changed
    name: str = ""
    node: ObjectNode | None = None
    new_id: int = 0
    tokens: frozenset[str] = frozenset()
    edges: tuple[PlacementEdge, ...] = ()
    new_room: str = ""


def diff_scene_graphs(a: SceneGraph, b: SceneGraph) -> list[GraphChange]:
    changes: list[GraphChange] = []
    if a.room_name != b.room_name:
        changes.append(GraphChange(kind="room_renamed", new_room=b.room_name))
    for name in sorted(set(a.nodes) - set(b.nodes)):
        changes.append(GraphChange(kind="node_removed", name=name))
    for name in sorted(set(b.nodes) - set(a.nodes)):
        changes.append(GraphChange(kind="node_added", name=name, node=b.nodes[name]))
    for name in sorted(set(a.nodes) & set(b.nodes)):
        na, nb = a.nodes[name], b.nodes[name]
        if na.id != nb.id:
            changes.append(GraphChange(kind="id_changed", name=name, new_id=nb.id))
        if na.properties != nb.properties:
            changes.append(
                GraphChange(kind="properties_changed", name=name, tokens=nb.properties)
            )
        if na.state != nb.state:
            changes.append(GraphChange(kind="state_changed", name=name, tokens=nb.state))
        if na.object_placing != nb.object_placing:
            changes.append(
                GraphChange(kind="placement_changed", name=name, edges=nb.object_placing)
            )
    return changes


def apply_changes(g: SceneGraph, changes: list[GraphChange]) -> SceneGraph:
    room = g.room_name
    nodes = dict(g.nodes)
    for ch in changes:
        if ch.kind == "room_renamed":
            room = ch.new_room
        elif ch.kind == "node_removed":
            nodes.pop(ch.name, None)
        elif ch.kind == "node_added":
            assert ch.node is not None
            nodes[ch.name] = ch.node
        elif ch.kind == "id_changed":
            nodes[ch.name] = replace(nodes[ch.name], id=ch.new_id)
        elif ch.kind == "properties_changed":
            nodes[ch.name] = replace(nodes[ch.name], properties=ch.tokens)
        elif ch.kind == "state_changed":
            nodes[ch.name] = replace(nodes[ch.name], state=ch.tokens)
        elif ch.kind == "placement_changed":
            nodes[ch.name] = replace(nodes[ch.name], object_placing=ch.edges)
        else:
            raise ValueError(f"unknown change kind {ch.kind!r}")
    return SceneGraph(room_name=room, nodes=nodes)
