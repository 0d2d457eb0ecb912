"""Symbolic multi-human scenario generator.

Replaces a full 3D household simulator with a precondition/effect action
model over scene graphs: each verb carries a property gate, a state gate, and
an effect, and the generator samples per-human action timelines that satisfy
every gate against the evolving graph. Objects engaged by one human (grabbed,
sat on, or mid-manipulation) are locked; a blocked human simply samples a
different action, so timelines replay deterministically and every snapshot
can be re-derived by folding effects in order.

Time is discrete: one step per sampled frame (default 0.5 s). An action
occupies [start, end) and its effect lands on the snapshot at `end`; the
ground-truth label of a human at step t is the verb/noun of the action whose
interval covers t.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .labels import BehaviorLabel, PredictionGrid, ScriptLine
from .records import FrameRef, Sample, SampleMeta
from .scene_graph import (
    PlacementEdge,
    SceneGraph,
    apply_state_change,
    parse_scene_graph,
    serialize_scene_graph,
)
from .vocab import STATE_COUNTERPART


class Unsatisfiable(Exception):
    pass


class OutOfRange(Exception):
    pass


class EmptySplit(Exception):
    pass


@dataclass(frozen=True)
class ActionRule:
    """Preconditions and effect of one verb.

    required_properties / required_states gate the script-line target object;
    effect_states are folded into the target's state set (replacing
    counterpart tokens) when the action ends. The remaining fields encode
    generator policy: engagement locking, hand/seat requirements, sampling
    weight, and the nominal duration in steps.
    """

    verb: str
    required_properties: frozenset[str]
    required_states: frozenset[str]
    effect_states: frozenset[str]
    consumes_agent_until: int
    engagement: str | None = "transient"  # hold | release_hold | sit | release_sit | transient | None
    requires_held: bool = False  # target must be the object in hand
    requires_holding_any: bool = False  # some object must be in hand (put)
    requires_free_hands: bool = False
    allowed_while_sitting: bool = False
    weight: float = 1.0


def _fs(*tokens: str) -> frozenset[str]:
    return frozenset(tokens)


RULE_TABLE: dict[str, ActionRule] = {
    "walk": ActionRule("walk", _fs(), _fs(), _fs(), 5, engagement=None, weight=0.5),
    "grab": ActionRule("grab", _fs("GRABBABLE"), _fs(), _fs(), 4, engagement="hold",
                       requires_free_hands=True),
    "put": ActionRule("put", _fs("HAS_SURFACE"), _fs(), _fs(), 4,
                      engagement="release_hold", requires_holding_any=True),
    "open": ActionRule("open", _fs("CAN_OPEN"), _fs("CLOSED"), _fs("OPEN"), 4),
    "close": ActionRule("close", _fs("CAN_OPEN"), _fs("OPEN"), _fs("CLOSED"), 4),
    "switchon": ActionRule("switchon", _fs("HAS_SWITCH"), _fs("OFF"), _fs("ON"), 4),
    "switchoff": ActionRule("switchoff", _fs("HAS_SWITCH"), _fs("ON"), _fs("OFF"), 4),
    "sit": ActionRule("sit", _fs("SITTABLE"), _fs(), _fs(), 5, engagement="sit"),
    "standup": ActionRule("standup", _fs("SITTABLE"), _fs(), _fs(), 4,
                          engagement="release_sit", allowed_while_sitting=True),
    "drink": ActionRule("drink", _fs("DRINKABLE"), _fs(), _fs(), 5, engagement=None,
                        requires_held=True, allowed_while_sitting=True),
    "read": ActionRule("read", _fs("READABLE"), _fs(), _fs(), 8, engagement=None,
                       requires_held=True, allowed_while_sitting=True),
    "wipe": ActionRule("wipe", _fs("WIPEABLE"), _fs(), _fs("CLEAN"), 6,
                       requires_free_hands=True),
}


@dataclass(frozen=True)
class TimedAction:
    start: int
    end: int
    line: ScriptLine
    # Effect applied to the snapshot at `end` (None for effect-free verbs).
    effect_object_id: int | None = None
    effect_states: frozenset[str] | None = None
    moved_to: PlacementEdge | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    room_type: str
    num_humans: int
    seed: int
    num_steps: int = 60
    min_actions: int = 4
    max_actions: int = 13
    min_duration: int = 4
    max_duration: int = 10
    frame_interval_s: float = 0.5
    rooms_dir: str | None = None
    allowed_verbs: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    room_type: str
    num_humans: int
    seed: int
    num_steps: int
    frame_interval_s: float
    timeline: tuple[tuple[TimedAction, ...], ...]
    graph_states: tuple[SceneGraph, ...]

    @property
    def duration_s(self) -> float:
        return self.num_steps * self.frame_interval_s

    def label_at(self, human: int, step: int) -> tuple[str, str]:
        for ta in self.timeline[human]:
            if ta.start <= step < ta.end:
                return ta.line.action, ta.line.object_name
        raise OutOfRange(f"human {human} has no action covering step {step}")

    def script(self) -> str:
        ordered = sorted(
            (ta for row in self.timeline for ta in row),
            key=lambda ta: (ta.start, ta.line.char_id),
        )
        return "\n".join(ta.line.render() for ta in ordered)


def load_room_template(room_type: str, rooms_dir: str | None = None) -> SceneGraph:
    if rooms_dir is not None:
        text = (Path(rooms_dir) / f"{room_type}.json").read_text(encoding="utf-8")
    else:
        ref = resources.files("behaviorlab.rooms").joinpath(f"{room_type}.json")
        if not ref.is_file():
            raise Unsatisfiable(f"no room template for {room_type!r}")
        text = ref.read_text(encoding="utf-8")
    return parse_scene_graph(text)


def fold_effect(current: frozenset[str], effect: frozenset[str]) -> frozenset[str]:
    """New full state set after an effect: each effect token replaces its
    counterpart (ON removes OFF, CLEAN removes DIRTY, ...)."""
    states = set(current)
    for token in effect:
        states.discard(STATE_COUNTERPART.get(token, ""))
        states.add(token)
    return frozenset(states)


def _validate_config(cfg: ScenarioConfig) -> None:
    if not 1 <= cfg.num_humans <= 3:
        raise Unsatisfiable("num_humans must be in [1, 3]")
    if cfg.min_duration < 1 or cfg.min_duration > cfg.max_duration:
        raise Unsatisfiable("invalid duration range")
    if cfg.min_actions < 1 or cfg.min_actions > cfg.max_actions:
        raise Unsatisfiable("invalid action-count range")
    if not cfg.min_actions * cfg.min_duration <= cfg.num_steps <= cfg.max_actions * cfg.max_duration:
        raise Unsatisfiable(
            f"num_steps={cfg.num_steps} cannot be tiled by {cfg.min_actions}..."
            f"{cfg.max_actions} actions of {cfg.min_duration}..{cfg.max_duration} steps"
        )


class _Sim:
    """Mutable simulation state for one scenario generation run."""

    def __init__(self, cfg: ScenarioConfig, graph: SceneGraph, rules: dict[str, ActionRule]):
        self.cfg = cfg
        self.graph = graph
        self.rules = rules
        self.rng = random.Random(cfg.seed)
        m = cfg.num_humans
        self.holding: list[str | None] = [None] * m
        self.sitting: list[str | None] = [None] * m
        self.busy_until = [0] * m
        self.counts = [0] * m
        self.timeline: list[list[TimedAction]] = [[] for _ in range(m)]
        self.engaged: dict[str, int] = {}
        self.effects_at: dict[int, list[tuple[int, frozenset[str], PlacementEdge | None]]] = {}
        self.agent_at: dict[int, list[tuple[int, str, str | None]]] = {}
        self.release_at: dict[int, list[str]] = {}
        self.object_names = sorted(graph.nodes)

    def _tileable(self, steps: int, done: int) -> bool:
        """Can `steps` remaining steps be tiled by further actions while
        keeping the total count in [min_actions, max_actions]?"""
        cfg = self.cfg
        n_lo = max(1, cfg.min_actions - done)
        n_hi = cfg.max_actions - done
        if n_hi < 1:
            return False
        n1 = max(n_lo, -(-steps // cfg.max_duration))  # ceil
        n2 = min(n_hi, steps // cfg.min_duration)
        return n1 <= n2

    def _valid_durations(self, human: int, step: int) -> list[int]:
        cfg = self.cfg
        remaining = cfg.num_steps - step
        done = self.counts[human]
        out = []
        for d in range(cfg.min_duration, min(cfg.max_duration, remaining) + 1):
            if d == remaining:
                if done + 1 >= cfg.min_actions and done + 1 <= cfg.max_actions:
                    out.append(d)
            elif self._tileable(remaining - d, done + 1):
                out.append(d)
        if not out:
            raise Unsatisfiable("no feasible duration window")  # config was validated
        return out

    def _target_ok(self, rule: ActionRule, human: int, name: str) -> bool:
        node = self.graph.nodes[name]
        if not rule.required_properties <= node.properties:
            return False
        if not rule.required_states <= node.state:
            return False
        if rule.verb == "walk":
            return True
        owner = self.engaged.get(name)
        if owner is not None and owner != human:
            return False
        if owner == human and rule.verb in ("grab", "sit"):
            return False
        return True

    def feasible(self, human: int) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        held = self.holding[human]
        seat = self.sitting[human]
        for verb, rule in self.rules.items():
            if seat is not None and not rule.allowed_while_sitting:
                continue
            if verb == "standup":
                if seat is not None:
                    out.append((verb, seat))
                continue
            if rule.requires_held:
                if held is not None and self._target_ok(rule, human, held):
                    out.append((verb, held))
                continue
            if rule.requires_free_hands and held is not None:
                continue
            if rule.requires_holding_any and held is None:
                continue
            for name in self.object_names:
                if name == held:
                    continue
                if self._target_ok(rule, human, name):
                    out.append((verb, name))
        return out

    def schedule(self, human: int, step: int) -> None:
        candidates = self.feasible(human)
        if not candidates:
            raise Unsatisfiable(
                f"human {human} has no feasible action at step {step} in "
                f"{self.cfg.room_type}"
            )
        verbs: list[str] = []
        for verb, _ in candidates:
            if verb not in verbs:
                verbs.append(verb)
        weights = [self.rules[v].weight for v in verbs]
        verb = self.rng.choices(verbs, weights=weights, k=1)[0]
        rule = self.rules[verb]
        targets = [name for v, name in candidates if v == verb]
        target = self.rng.choice(targets)

        valid = self._valid_durations(human, step)
        nominal = rule.consumes_agent_until + self.rng.randint(-2, 2)
        duration = min(valid, key=lambda d: (abs(d - nominal), d))
        end = step + duration
        node = self.graph.nodes[target]
        line = ScriptLine(human, verb, target, node.id)

        effect_id: int | None = None
        effect_states: frozenset[str] | None = None
        moved: PlacementEdge | None = None
        if rule.effect_states:
            effect_id = node.id
            effect_states = fold_effect(node.state, rule.effect_states)
        if rule.engagement == "release_hold":
            held = self.holding[human]
            assert held is not None
            held_node = self.graph.nodes[held]
            effect_id = held_node.id
            effect_states = held_node.state
            moved = PlacementEdge(target, node.id, "ON")
            self.agent_at.setdefault(end, []).append((human, "holding", None))
            self.release_at.setdefault(end, []).append(held)
            if target not in self.engaged:
                self.engaged[target] = human
                self.release_at.setdefault(end, []).append(target)
        elif rule.engagement == "hold":
            self.engaged[target] = human
            self.agent_at.setdefault(end, []).append((human, "holding", target))
        elif rule.engagement == "sit":
            self.engaged[target] = human
            self.agent_at.setdefault(end, []).append((human, "sitting", target))
        elif rule.engagement == "release_sit":
            self.agent_at.setdefault(end, []).append((human, "sitting", None))
            self.release_at.setdefault(end, []).append(target)
        elif rule.engagement == "transient":
            if target not in self.engaged:
                self.engaged[target] = human
                self.release_at.setdefault(end, []).append(target)

        if effect_id is not None and end < self.cfg.num_steps:
            self.effects_at.setdefault(end, []).append(
                (effect_id, effect_states or frozenset(), moved)
            )

        self.timeline[human].append(
            TimedAction(step, end, line, effect_id, effect_states, moved)
        )
        self.busy_until[human] = end
        self.counts[human] += 1

    def advance_to(self, step: int) -> None:
        for obj_id, states, moved in self.effects_at.pop(step, []):
            self.graph = apply_state_change(self.graph, obj_id, states, moved)
        for human, attr, value in self.agent_at.pop(step, []):
            getattr(self, attr).__setitem__(human, value)
        for name in self.release_at.pop(step, []):
            self.engaged.pop(name, None)


def generate_scenario(cfg: ScenarioConfig, scenario_id: str | None = None) -> Scenario:
    """Deterministic for a fixed (config, seed); every action satisfies its
    rule's gates against the snapshot at its start step."""
    _validate_config(cfg)
    graph = load_room_template(cfg.room_type, cfg.rooms_dir)
    if not graph.nodes:
        raise Unsatisfiable(f"room template {cfg.room_type!r} has no objects")
    rules = RULE_TABLE
    if cfg.allowed_verbs is not None:
        rules = {v: r for v, r in RULE_TABLE.items() if v in cfg.allowed_verbs}
        if not rules:
            raise Unsatisfiable("allowed_verbs excludes every rule")

    sim = _Sim(cfg, graph, rules)
    snapshots: list[SceneGraph] = []
    for step in range(cfg.num_steps):
        sim.advance_to(step)
        snapshots.append(sim.graph)
        for human in range(cfg.num_humans):
            if sim.busy_until[human] == step:
                sim.schedule(human, step)

    sid = scenario_id or f"s-{cfg.room_type}-{cfg.num_humans}h-{cfg.seed:08x}"
    return Scenario(
        scenario_id=sid,
        room_type=cfg.room_type,
        num_humans=cfg.num_humans,
        seed=cfg.seed,
        num_steps=cfg.num_steps,
        frame_interval_s=cfg.frame_interval_s,
        timeline=tuple(tuple(row) for row in sim.timeline),
        graph_states=tuple(snapshots),
    )


def audit_preconditions(s: Scenario, rules: dict[str, ActionRule] = RULE_TABLE) -> list[str]:
    """Independent re-check of every action's gates against the stored
    snapshots. Returns human-readable violations (empty list == sound)."""
    violations = []
    for human, actions in enumerate(s.timeline):
        for ta in actions:
            rule = rules.get(ta.line.action)
            if rule is None:
                violations.append(f"h{human}@{ta.start}: unknown verb {ta.line.action}")
                continue
            node = s.graph_states[ta.start].nodes.get(ta.line.object_name)
            if node is None or node.id != ta.line.object_id:
                violations.append(
                    f"h{human}@{ta.start}: target {ta.line.object_name} missing"
                )
                continue
            if not rule.required_properties <= node.properties:
                violations.append(
                    f"h{human}@{ta.start}: {ta.line.action} property gate failed"
                )
            if not rule.required_states <= node.state:
                violations.append(
                    f"h{human}@{ta.start}: {ta.line.action} state gate failed"
                )
    return violations


def replay_graph_states(s: Scenario) -> list[SceneGraph]:
    """Re-fold all effects in timestamp order through apply_state_change.

    Raises InvalidStateTransition on any affordance violation; the result
    should equal s.graph_states exactly.
    """
    effects: dict[int, list[TimedAction]] = {}
    for row in s.timeline:
        for ta in row:
            if ta.effect_object_id is not None and ta.end < s.num_steps:
                effects.setdefault(ta.end, []).append(ta)
    graph = s.graph_states[0]
    out = []
    for step in range(s.num_steps):
        for ta in effects.get(step, ()):
            graph = apply_state_change(
                graph, ta.effect_object_id, ta.effect_states or frozenset(), ta.moved_to
            )
        out.append(graph)
    return out


def slice_sample(
    s: Scenario, t0: int, history: int, horizon: int
) -> tuple[Sample, SceneGraph]:
    """Cut one dataset record at anchor step t0: `history` frame refs ending
    at t0, the graph snapshot at t0, and the ground-truth grid over steps
    t0+1 .. t0+horizon."""
    if history < 1 or horizon < 1:
        raise OutOfRange("history and horizon must be >= 1")
    if t0 < history - 1:
        raise OutOfRange(f"t0={t0} leaves fewer than {history} observed steps")
    if t0 + horizon > s.num_steps - 1:
        raise OutOfRange(f"t0={t0} leaves fewer than {horizon} future steps")
    frames = tuple(
        FrameRef(s.scenario_id, step) for step in range(t0 - history + 1, t0 + 1)
    )
    rows = []
    for human in range(s.num_humans):
        labels = tuple(
            BehaviorLabel(human, *s.label_at(human, t))
            for t in range(t0 + 1, t0 + horizon + 1)
        )
        rows.append(labels)
    grid = PredictionGrid(rows=tuple(rows), horizon=horizon)
    sample = Sample(
        sample_id=f"{s.scenario_id}-t{t0:03d}",
        frame_refs=frames,
        scene_graph_ref="",
        gt_grid=grid,
        meta=SampleMeta(
            room=s.room_type,
            num_humans=s.num_humans,
            scenario_id=s.scenario_id,
            scenario_seed=s.seed,
            split="",
        ),
    )
    return sample, s.graph_states[t0]


# Default corpus mix: (room, humans, #scenarios, steps). Durations follow the
# per-cell averages of the synthetic dataset this mirrors (20-30 s at 0.5 s
# per step); 30 scenarios total.
DEFAULT_MIX: tuple[tuple[str, int, int, int], ...] = (
    ("kitchen", 1, 4, 60),
    ("bedroom", 1, 3, 46),
    ("living_room", 1, 3, 40),
    ("kitchen", 2, 4, 60),
    ("bedroom", 2, 3, 46),
    ("living_room", 2, 3, 40),
    ("kitchen", 3, 5, 50),
    ("living_room", 3, 5, 46),
)


def generate_corpus_scenarios(
    mix=DEFAULT_MIX, seed: int = 0, rooms_dir: str | None = None
) -> list[Scenario]:
    rng = random.Random(seed)
    scenarios = []
    index = 0
    for room, humans, count, steps in mix:
        for _ in range(count):
            cfg = ScenarioConfig(
                room_type=room,
                num_humans=humans,
                seed=rng.randrange(2**63),
                num_steps=steps,
                rooms_dir=rooms_dir,
            )
            sid = f"s{index:03d}-{room}-{humans}h"
            scenarios.append(generate_scenario(cfg, scenario_id=sid))
            index += 1
    return scenarios


def emit_dataset(
    scenarios: list[Scenario],
    out_dir: str | Path,
    split_ratio: float = 0.7,
    stride: int = 6,
    history: int = 6,
    horizon: int = 6,
    seed: int = 0,
) -> dict:
    """Write a corpus directory: manifest header, sample lines, and one scene
    graph file per sample. The train/test split is by scenario, never by
    sample, so no scenario leaks across splits."""
    if not 0 < split_ratio < 1:
        raise EmptySplit("split_ratio must be in (0, 1)")
    ids = [s.scenario_id for s in scenarios]
    order = list(range(len(scenarios)))
    random.Random(seed).shuffle(order)
    n_train = round(split_ratio * len(scenarios))
    if n_train == 0 or n_train == len(scenarios):
        raise EmptySplit(
            f"ratio {split_ratio} with {len(scenarios)} scenarios leaves an empty split"
        )
    train_ids = {ids[i] for i in order[:n_train]}

    out = Path(out_dir)
    (out / "scene_graphs").mkdir(parents=True, exist_ok=True)
    (out / "scenarios").mkdir(parents=True, exist_ok=True)

    sample_lines: list[str] = []
    per_cell: dict[tuple[str, int], int] = {}
    for s in scenarios:
        split = "train" if s.scenario_id in train_ids else "test"
        for t0 in range(history - 1, s.num_steps - horizon, stride):
            sample, graph = slice_sample(s, t0, history, horizon)
            sg_ref = f"scene_graphs/{sample.sample_id}.json"
            (out / sg_ref).write_text(
                serialize_scene_graph(graph, indent=2) + "\n", encoding="utf-8"
            )
            sample = replace(
                sample,
                scene_graph_ref=sg_ref,
                meta=replace(sample.meta, split=split),
            )
            sample_lines.append(json.dumps(sample.to_json(), ensure_ascii=False))
            key = (s.room_type, s.num_humans)
            per_cell[key] = per_cell.get(key, 0) + 1
        (out / "scenarios" / f"{s.scenario_id}.json").write_text(
            json.dumps(
                {
                    "scenario_id": s.scenario_id,
                    "room_type": s.room_type,
                    "num_humans": s.num_humans,
                    "seed": s.seed,
                    "num_steps": s.num_steps,
                    "frame_interval_s": s.frame_interval_s,
                    "split": "train" if s.scenario_id in train_ids else "test",
                    "actions_per_human": [len(row) for row in s.timeline],
                    "script": s.script(),
                    "timeline": [
                        {
                            "h": human,
                            "start": ta.start,
                            "end": ta.end,
                            "verb": ta.line.action,
                            "noun": ta.line.object_name,
                        }
                        for human, row in enumerate(s.timeline)
                        for ta in row
                    ],
                },
                indent=2,
                ensure_ascii=False,
            )
            + "\n",
            encoding="utf-8",
        )

    header = {
        "format": "behaviorlab-corpus-v1",
        "history": history,
        "horizon": horizon,
        "frame_interval_s": scenarios[0].frame_interval_s if scenarios else 0.5,
        "seed": seed,
        "split_ratio": split_ratio,
        "stride": stride,
        "vocab": "builtin",
        "num_scenarios": len(scenarios),
        "num_train_scenarios": n_train,
    }
    (out / "manifest.json").write_text(
        json.dumps(header, indent=2) + "\n", encoding="utf-8"
    )
    (out / "samples.jsonl").write_text(
        "\n".join(sample_lines) + "\n", encoding="utf-8"
    )
    return {
        "scenarios": len(scenarios),
        "train_scenarios": n_train,
        "test_scenarios": len(scenarios) - n_train,
        "samples": len(sample_lines),
        "per_cell": per_cell,
    }
