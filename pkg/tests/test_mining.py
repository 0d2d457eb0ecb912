from __future__ import annotations

import json

import pytest

from behaviorlab.backends import MockModel, MockModelSpec
from behaviorlab.labels import emit_prediction, parse_prediction
from behaviorlab.metrics import grid_edit_distance
from behaviorlab.mining import (
    InsufficientResponses,
    NothingToExport,
    audit_pairs,
    export_dpo_dataset,
    export_records,
    mine_pairs,
    select_pair,
)
from behaviorlab.records import PredictionRecord
from behaviorlab.store import CorpusStore

from conftest import fresh_corpus


def noisy_backend(store, seed=0, verb=0.4, noun=0.4):
    return MockModel(
        MockModelSpec(mode="noisy_oracle", verb_noise=verb, noun_noise=noun, seed=seed),
        gt_lookup=lambda sid: store.sample(sid).gt_grid,
    )


def oracle_backend(store):
    return MockModel(MockModelSpec(mode="oracle"), gt_lookup=lambda sid: store.sample(sid).gt_grid)


SMALL_MIX = (("living_room", 1, 3, 40),)


class TestSelectPair:
    def test_argmin_argmax(self):
        sel = select_pair([(0, 0.5), (1, 0.1), (2, 0.9), (3, 0.3)])
        assert sel == (1, 0.1, 2, 0.9)

    def test_tie_break_lowest_run_index(self):
        sel = select_pair([(0, 0.5), (1, 0.1), (2, 0.1), (3, 0.5)])
        assert sel == (1, 0.1, 0, 0.5)

    def test_degenerate_all_equal(self):
        assert select_pair([(0, 0.0), (1, 0.0), (2, 0.0)]) is None

    def test_unparseable_excluded(self):
        assert select_pair([(0, None), (1, 0.2)]) is None
        assert select_pair([(0, None), (1, 0.2), (2, 0.7)]) == (1, 0.2, 2, 0.7)


class TestMinePairs:
    def test_guard_requires_two_responses(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        with pytest.raises(InsufficientResponses):
            mine_pairs(store, oracle_backend(store), "m", responses_per_input=1)

    def test_noisy_oracle_pairs_ordered_and_audited(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        backend = noisy_backend(store, seed=11)
        report = mine_pairs(store, backend, "noisy", responses_per_input=8, seed=11)
        assert report.mined, "expected at least one learnable pair"
        for pair in report.mined:
            assert pair.chosen_ed <= pair.rejected_ed
        assert audit_pairs(store, "noisy") == []

    def test_exhaustive_rescan_matches_recorded_selection(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        mine_pairs(store, noisy_backend(store, seed=3), "noisy", 8, seed=3)
        for pair in store.pairs():
            sample = store.sample(pair.sample_id)
            eds = {}
            for rec in store.predictions("noisy", pair.sample_id):
                parsed = store.parse_record(rec)
                if parsed is not None:
                    eds[rec.run_index] = grid_edit_distance(parsed.grid, sample.gt_grid)
            best = min(sorted(eds), key=lambda r: (eds[r], r))
            worst = min(sorted(eds), key=lambda r: (-eds[r], r))
            assert (pair.chosen_run, pair.rejected_run) == (best, worst)

    def test_oracle_is_fully_degenerate(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        report = mine_pairs(store, oracle_backend(store), "oracle", 8)
        assert report.mined == []
        train = store.query(split="train")
        assert len(report.degenerate) == len(train)

    def test_j_responses_recorded_per_sample(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        mine_pairs(store, noisy_backend(store), "noisy", 8)
        for sample in store.query(split="train"):
            assert len(store.predictions("noisy", sample.sample_id)) == 8

    def test_reparsing_raw_text_reproduces_stored_grids(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        mine_pairs(store, noisy_backend(store), "noisy", 6)
        for rec in store.predictions("noisy"):
            reparsed = parse_prediction(rec.raw_text, store.header.horizon)
            assert emit_prediction(reparsed.grid) == rec.parsed_text
            assert reparsed.flags == rec.flags

    def test_mining_resumes_from_stored_responses(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        backend = noisy_backend(store, seed=5)
        mine_pairs(store, backend, "noisy", 8, seed=5)
        first = {p.pair_id: p for p in store.pairs()}

        class Exploding:
            def infer(self, req):  # pragma: no cover - must never be called
                raise AssertionError("re-mining must not hit the backend")

        report = mine_pairs(store, Exploding(), "noisy", 8, seed=5)
        assert report.mined == []
        assert {p.pair_id for p in store.pairs()} == set(first)

    def test_auto_approve(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        mine_pairs(store, noisy_backend(store), "noisy", 8, auto_approve=True)
        stats = store.pair_stats()
        assert stats["by_status"]["pending"] == 0
        assert stats["by_status"]["approved"] == stats["total"]


class TestExport:
    def _mined_store(self, tmp_path):
        store = fresh_corpus(tmp_path, mix=SMALL_MIX)
        mine_pairs(store, noisy_backend(store, seed=7), "noisy", 8, seed=7)
        return store

    def test_nothing_to_export_before_review(self, tmp_path):
        store = self._mined_store(tmp_path)
        with pytest.raises(NothingToExport):
            export_records(store)

    def test_only_terminal_accepting_statuses_export(self, tmp_path):
        store = self._mined_store(tmp_path)
        pairs = store.pairs("pending")
        assert len(pairs) >= 4
        store.decide_pair(pairs[0].pair_id, "approve")
        store.decide_pair(pairs[1].pair_id, "swap")
        store.decide_pair(pairs[2].pair_id, "reject")
        records = export_records(store)
        assert len(records) == 2
        exported_ids = {r["pair_id"] for r in records}
        assert pairs[2].pair_id not in exported_ids
        assert not any(p.pair_id in exported_ids for p in store.pairs("pending"))

    def test_swap_exchanges_chosen_rejected(self, tmp_path):
        store = self._mined_store(tmp_path)
        pair = store.pairs("pending")[0]
        preds = {r.run_index: r.parsed_text for r in store.predictions("noisy", pair.sample_id)}
        store.decide_pair(pair.pair_id, "swap")
        record = [r for r in export_records(store) if r["pair_id"] == pair.pair_id][0]
        assert record["chosen_text"] == preds[pair.rejected_run]
        assert record["rejected_text"] == preds[pair.chosen_run]

    def test_edit_uses_reviewer_text(self, tmp_path):
        store = self._mined_store(tmp_path)
        pair = store.pairs("pending")[0]
        sample = store.sample(pair.sample_id)
        fixed = emit_prediction(sample.gt_grid)
        store.decide_pair(pair.pair_id, "edit", edited_text=fixed, reviewer="me")
        record = [r for r in export_records(store) if r["pair_id"] == pair.pair_id][0]
        assert record["chosen_text"] == fixed

    def test_export_count_reconciles_with_stats(self, tmp_path):
        store = self._mined_store(tmp_path)
        pairs = store.pairs("pending")
        for i, pair in enumerate(pairs):
            decision = ["approve", "swap", "reject"][i % 3]
            store.decide_pair(pair.pair_id, decision)
        out = tmp_path / "dpo.jsonl"
        count = export_dpo_dataset(store, out)
        stats = store.pair_stats()["by_status"]
        assert count == stats["approved"] + stats["swapped"] + stats["edited"]
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == count
        record = json.loads(lines[0])
        assert set(record) == {"pair_id", "sample_id", "prompt_spec", "chosen_text",
                               "rejected_text", "provenance"}
        assert record["prompt_spec"]["scene_graph"]

    def test_exported_texts_parse_cleanly(self, tmp_path):
        store = self._mined_store(tmp_path)
        for pair in store.pairs("pending"):
            store.decide_pair(pair.pair_id, "approve")
        for record in export_records(store):
            for key in ("chosen_text", "rejected_text"):
                parsed = parse_prediction(record[key], store.header.horizon)
                assert parsed.clean
