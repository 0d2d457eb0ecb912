from __future__ import annotations

import json

import pytest
from hypothesis import given, settings

from behaviorlab.scene_graph import (
    DanglingEdge,
    DuplicateId,
    GraphChange,
    InvalidStateTransition,
    MalformedJson,
    ObjectNode,
    PlacementEdge,
    SceneGraph,
    SchemaViolation,
    UnknownObject,
    apply_changes,
    apply_state_change,
    diff_scene_graphs,
    insert_node,
    parse_scene_graph,
    serialize_scene_graph,
    validate_graph,
)
from behaviorlab.vocab import VocabRegistry

from conftest import scene_graphs


class TestParse:
    def test_living_room_document(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        assert g.room_name == "living_room"
        assert len(g.nodes) == 4
        tv = g.nodes["tv"]
        assert tv.id == 101
        assert tv.properties == {"HAS_SWITCH"}
        assert tv.state == {"OFF"}
        assert tv.object_placing == (PlacementEdge("tv_stand", 102, "ON"),)

    def test_empty_room_is_valid(self):
        g = parse_scene_graph('{"empty_room": {}}')
        assert g.room_name == "empty_room"
        assert g.nodes == {}

    def test_dangling_destination_id(self, living_room_text):
        doc = json.loads(living_room_text)
        doc["living_room"]["remote_control"]["object_placing"][0]["destination"][1] = 999
        with pytest.raises(DanglingEdge):
            parse_scene_graph(json.dumps(doc))

    def test_malformed_json(self):
        with pytest.raises(MalformedJson):
            parse_scene_graph("{not json")

    def test_missing_id(self, living_room_text):
        doc = json.loads(living_room_text)
        del doc["living_room"]["tv"]["id"]
        with pytest.raises(SchemaViolation):
            parse_scene_graph(json.dumps(doc))

    def test_duplicate_id(self, living_room_text):
        doc = json.loads(living_room_text)
        doc["living_room"]["tv"]["id"] = 104
        with pytest.raises(DuplicateId):
            parse_scene_graph(json.dumps(doc))

    def test_unknown_property_token(self, living_room_text):
        doc = json.loads(living_room_text)
        doc["living_room"]["tv"]["properties"] = ["HAS_SWITCH", "MYSTERY_TOKEN"]
        with pytest.raises(SchemaViolation):
            parse_scene_graph(json.dumps(doc))
        # ... but an open-vocab registry accepts it
        g = parse_scene_graph(json.dumps(doc), VocabRegistry(open_vocab=True))
        assert "MYSTERY_TOKEN" in g.nodes["tv"].properties

    def test_two_top_level_rooms_rejected(self):
        with pytest.raises(SchemaViolation):
            parse_scene_graph('{"a": {}, "b": {}}')

    def test_destination_must_be_pair_array(self, living_room_text):
        doc = json.loads(living_room_text)
        doc["living_room"]["tv"]["object_placing"][0]["destination"] = {
            "name": "tv_stand", "id": 102
        }
        with pytest.raises(SchemaViolation):
            parse_scene_graph(json.dumps(doc))


class TestValidatorMutations:
    """Each single-field corruption of a valid graph yields exactly its
    designated error class."""

    CASES = [
        ("id_zero", lambda d: d["tv"].__setitem__("id", 0), SchemaViolation),
        ("id_negative", lambda d: d["tv"].__setitem__("id", -3), SchemaViolation),
        ("id_string", lambda d: d["tv"].__setitem__("id", "101"), SchemaViolation),
        ("dup_id", lambda d: d["tv"].__setitem__("id", 104), DuplicateId),
        ("on_and_off", lambda d: d["tv"].__setitem__("state", ["ON", "OFF"]), SchemaViolation),
        ("open_no_can_open", lambda d: d["sofa"].__setitem__("state", ["OPEN"]), SchemaViolation),
        ("on_no_switch", lambda d: d["sofa"].__setitem__("state", ["ON"]), SchemaViolation),
        ("unknown_state", lambda d: d["tv"].__setitem__("state", ["GLOWING"]), SchemaViolation),
        ("unknown_property", lambda d: d["tv"].__setitem__("properties", ["X"]), SchemaViolation),
        ("unknown_relation",
         lambda d: d["tv"]["object_placing"][0].__setitem__("relation", "UNDER"),
         SchemaViolation),
        ("dangling_name",
         lambda d: d["tv"]["object_placing"][0].__setitem__("destination", ["ghost", 102]),
         DanglingEdge),
        ("dangling_id",
         lambda d: d["tv"]["object_placing"][0].__setitem__("destination", ["tv_stand", 999]),
         DanglingEdge),
    ]

    @pytest.mark.parametrize("name,mutate,expected", CASES, ids=[c[0] for c in CASES])
    def test_single_field_corruption(self, living_room_text, name, mutate, expected):
        doc = json.loads(living_room_text)
        mutate(doc["living_room"])
        with pytest.raises(expected):
            parse_scene_graph(json.dumps(doc))


class TestSerialize:
    def test_round_trip_identity(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        text = serialize_scene_graph(g)
        assert parse_scene_graph(text) == g

    def test_canonical_bytes_stable(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        once = serialize_scene_graph(g)
        again = serialize_scene_graph(parse_scene_graph(once))
        assert once == again

    def test_names_sorted_and_attribute_order(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        doc = json.loads(serialize_scene_graph(g))
        names = list(doc["living_room"])
        assert names == sorted(names)
        assert list(doc["living_room"]["tv"]) == ["id", "properties", "state", "object_placing"]

    def test_empty_graph(self):
        g = SceneGraph("den", {})
        assert serialize_scene_graph(g) == '{"den": {}}'

    @settings(max_examples=200)
    @given(scene_graphs())
    def test_random_round_trip(self, g):
        validate_graph(g)
        text = serialize_scene_graph(g)
        assert parse_scene_graph(text) == g
        assert serialize_scene_graph(parse_scene_graph(text)) == text


class TestApplyStateChange:
    def test_switch_tv_on(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        out = apply_state_change(g, 101, {"ON"})
        assert out.nodes["tv"].state == {"ON"}
        assert g.nodes["tv"].state == {"OFF"}  # original untouched

    def test_noop_returns_same_graph(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        assert apply_state_change(g, 101, {"OFF"}) is g

    def test_state_without_property_gate(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        with pytest.raises(InvalidStateTransition):
            apply_state_change(g, 102, {"ON"})  # tv_stand has no HAS_SWITCH

    def test_unknown_object(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        with pytest.raises(UnknownObject):
            apply_state_change(g, 999, {"ON"})

    def test_moved_to_replaces_edges(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        edge = PlacementEdge("tv_stand", 102, "ON")
        out = apply_state_change(g, 103, frozenset(), moved_to=edge)
        assert out.nodes["remote_control"].object_placing == (edge,)

    def test_moved_to_dangling_destination(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        with pytest.raises(InvalidStateTransition):
            apply_state_change(g, 103, frozenset(), moved_to=PlacementEdge("ghost", 9, "ON"))


class TestInsertNode:
    def test_duplicate_name_rejected_by_default(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        chair = ObjectNode(200, frozenset({"SITTABLE"}), frozenset(), ())
        with pytest.raises(SchemaViolation):
            insert_node(g, "sofa", chair)

    def test_duplicate_name_suffixed_when_allowed(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        vocab = VocabRegistry(allow_duplicate_names=True)
        g = insert_node(g, "sofa", ObjectNode(200, frozenset({"SITTABLE"}), frozenset(), ()), vocab)
        g = insert_node(g, "sofa", ObjectNode(201, frozenset({"SITTABLE"}), frozenset(), ()), vocab)
        assert "sofa_2" in g.nodes and "sofa_3" in g.nodes
        assert g.nodes["sofa"].id == 104  # original untouched

    def test_duplicate_id_still_rejected(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        vocab = VocabRegistry(allow_duplicate_names=True)
        with pytest.raises(DuplicateId):
            insert_node(g, "sofa", ObjectNode(104, frozenset(), frozenset(), ()), vocab)


class TestDiff:
    def test_identical_graphs_empty_diff(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        assert diff_scene_graphs(g, g) == []

    def test_single_state_change(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        h = apply_state_change(g, 101, {"ON"})
        changes = diff_scene_graphs(g, h)
        assert len(changes) == 1
        assert changes[0].kind == "state_changed"
        assert changes[0].name == "tv"

    def test_node_added(self, living_room_text):
        g = parse_scene_graph(living_room_text)
        nodes = dict(g.nodes)
        nodes["rug"] = ObjectNode(105, frozenset(), frozenset(), ())
        h = SceneGraph(g.room_name, nodes)
        changes = diff_scene_graphs(g, h)
        assert [c.kind for c in changes] == ["node_added"]

    @settings(max_examples=200)
    @given(scene_graphs(), scene_graphs())
    def test_apply_diff_reaches_target(self, a, b):
        changes = diff_scene_graphs(a, b)
        assert apply_changes(a, changes) == b
        assert (changes == []) == (a == b)
