from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import strategies as st

from behaviorlab.scenario import emit_dataset, generate_corpus_scenarios
from behaviorlab.scene_graph import ObjectNode, PlacementEdge, SceneGraph
from behaviorlab.store import CorpusStore

FIXTURES = Path(__file__).parent / "fixtures"

# Small corpus mix used by most pipeline tests; the acceptance suite builds
# the full 30-scenario one itself.
TINY_MIX = (
    ("kitchen", 2, 3, 60),
    ("living_room", 1, 2, 40),
    ("bedroom", 3, 2, 46),
)


@pytest.fixture(scope="session")
def living_room_text() -> str:
    return (FIXTURES / "living_room.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> CorpusStore:
    root = tmp_path_factory.mktemp("corpus")
    scenarios = generate_corpus_scenarios(TINY_MIX, seed=1234)
    emit_dataset(scenarios, root, seed=1234)
    store, _ = CorpusStore.ingest(root)
    return store


def fresh_corpus(root, mix=TINY_MIX, seed=1234) -> CorpusStore:
    """A writable corpus for tests that record predictions or pairs."""
    scenarios = generate_corpus_scenarios(mix, seed=seed)
    emit_dataset(scenarios, root, seed=seed)
    store, _ = CorpusStore.ingest(root)
    return store


# ------------------------------------------------------ hypothesis strategies

_NAMES = [f"obj_{c}" for c in "abcdefghij"]
_PROPERTY_POOL = ["GRABBABLE", "SITTABLE", "HAS_SURFACE", "CONTAINER",
                  "DRINKABLE", "READABLE", "WIPEABLE"]
_FREE_STATES = ["CLEAN", "DIRTY"]
_RELATIONS = ["ON", "INSIDE", "CLOSE", "FACING"]


@st.composite
def object_nodes(draw, node_id: int) -> ObjectNode:
    properties = set(draw(st.sets(st.sampled_from(_PROPERTY_POOL), max_size=3)))
    states: set[str] = set()
    if draw(st.booleans()):
        properties.add("HAS_SWITCH")
        states.add(draw(st.sampled_from(["ON", "OFF"])))
    if draw(st.booleans()):
        properties.add("CAN_OPEN")
        states.add(draw(st.sampled_from(["OPEN", "CLOSED"])))
    if draw(st.booleans()):
        states.add(draw(st.sampled_from(_FREE_STATES)))
    return ObjectNode(
        id=node_id,
        properties=frozenset(properties),
        state=frozenset(states),
        object_placing=(),
    )


@st.composite
def scene_graphs(draw) -> SceneGraph:
    """Valid random graphs: gated states, unique ids, edges to present nodes."""
    names = draw(
        st.lists(st.sampled_from(_NAMES), min_size=0, max_size=6, unique=True)
    )
    nodes = {}
    for i, name in enumerate(names):
        nodes[name] = draw(object_nodes(node_id=100 + i))
    for name in names:
        if len(names) < 2:
            break
        if draw(st.booleans()):
            dest = draw(st.sampled_from([n for n in names if n != name]))
            edge = PlacementEdge(dest, nodes[dest].id, draw(st.sampled_from(_RELATIONS)))
            node = nodes[name]
            nodes[name] = ObjectNode(
                id=node.id,
                properties=node.properties,
                state=node.state,
                object_placing=(edge,),
            )
    room = draw(st.sampled_from(["living_room", "kitchen", "bedroom", "den"]))
    return SceneGraph(room_name=room, nodes=nodes)
