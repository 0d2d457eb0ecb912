from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from behaviorlab.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from behaviorlab.config import RunConfig, config_hash, load_config
from behaviorlab.store import CorpusStore


def run(args, capsys=None):
    code = main(args)
    return code


SMALL = ["--seed", "3"]


def generate_small(corpus: Path, extra=()) -> int:
    return main(
        ["--corpus", str(corpus), "--seed", "3", "generate",
         "--room", "living_room", "--humans", "1", "--count", "4", "--steps", "40",
         *extra]
    )


class TestConfig:
    def test_precedence_flags_over_env_over_file(self, tmp_path, monkeypatch):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps({"seed": 1, "horizon": 4, "corpus": "from_file"}))
        monkeypatch.setenv("BEHAVIORLAB_SEED", "2")
        cfg = load_config(str(cfg_file), overrides={"seed": 3})
        assert cfg.seed == 3  # flag wins
        assert cfg.horizon == 4  # file survives where nothing overrides
        assert cfg.corpus == "from_file"

    def test_env_coercion(self, monkeypatch):
        monkeypatch.setenv("BEHAVIORLAB_RENDER_FRAMES", "true")
        monkeypatch.setenv("BEHAVIORLAB_VERB_NOISE", "0.25")
        cfg = load_config()
        assert cfg.render_frames is True
        assert cfg.verb_noise == 0.25

    def test_unknown_file_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"not_a_field": 1}')
        with pytest.raises(ValueError):
            load_config(str(bad))

    def test_hash_stable_and_sensitive(self):
        a, b = RunConfig(), RunConfig()
        assert config_hash(a) == config_hash(b)
        assert config_hash(RunConfig(seed=1)) != config_hash(RunConfig(seed=2))


class TestGenerate:
    def test_default_mix_stats_table(self, tmp_path, capsys):
        code = main(["--corpus", str(tmp_path / "c"), "--seed", "1", "generate"])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        for header in ("Type", "#Human", "Room", "#Video", "Avg.Dur[s]", "#Action"):
            assert header in out
        assert "scenarios: 30 (train 21 / test 9)" in out

    def test_byte_identical_for_fixed_seed(self, tmp_path):
        generate_small(tmp_path / "a")
        generate_small(tmp_path / "b")
        for rel in ("samples.jsonl", "manifest.json", "index.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_off_mix_cell_prints_notice(self, tmp_path, capsys):
        code = main(
            ["--corpus", str(tmp_path / "c"), "--seed", "1", "generate",
             "--room", "bedroom", "--humans", "3", "--count", "2", "--steps", "46"]
        )
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "notice" in out
        store, counts = CorpusStore.ingest(tmp_path / "c")
        assert counts == {("bedroom", 3): sum(counts.values())}


class TestPipeline:
    @pytest.fixture()
    def corpus(self, tmp_path) -> Path:
        root = tmp_path / "corpus"
        assert generate_small(root) == EXIT_OK
        return root

    def _predict(self, corpus, mode="oracle", model=None, extra=()):
        model = model or f"mock-{mode}"
        return main(
            ["--corpus", str(corpus), "--seed", "3", "--backend", "mock",
             "--mock-mode", mode, "--model-id", model, *extra, "predict"]
        )

    def test_ingest(self, corpus, capsys):
        assert main(["--corpus", str(corpus), "ingest"]) == EXIT_OK
        assert "living_room" in capsys.readouterr().out

    def test_oracle_predict_then_score_is_perfect(self, corpus, capsys):
        assert self._predict(corpus) == EXIT_OK
        code = main(
            ["--corpus", str(corpus), "--seed", "3", "--model-id", "mock-oracle", "score"]
        )
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "1.000" in out and "FAIL" not in out
        report = corpus / "reports" / "score_mock-oracle.txt"
        cells = [l for l in report.read_text().splitlines() if "mock-oracle" in l]
        for line in cells:
            cols = line.split()
            assert cols[-5:] == ["1.000", "1.000", "1.000", "1.000", "0.000"]

    def test_predict_resumes_without_duplicates(self, corpus):
        assert self._predict(corpus) == EXIT_OK
        assert self._predict(corpus) == EXIT_OK  # second run: everything skipped
        store = CorpusStore(corpus)
        recs = store.predictions("mock-oracle")
        keys = [(r.sample_id, r.run_index) for r in recs]
        assert len(keys) == len(set(keys))
        assert len(recs) == len(store.query(split="test"))

    def test_scrambler_report_deterministic(self, corpus):
        args = ["--corpus", str(corpus), "--seed", "3", "--backend", "mock",
                "--mock-mode", "scrambler", "--verb-noise", "0.4", "--noun-noise", "0.4",
                "--model-id", "scr"]
        assert main([*args, "predict"]) == EXIT_OK
        assert main([*args, "score"]) == EXIT_OK
        first = (corpus / "reports" / "score_scr.csv").read_bytes()
        assert main([*args, "score"]) == EXIT_OK
        assert (corpus / "reports" / "score_scr.csv").read_bytes() == first

    def test_report_combines_models(self, corpus, capsys):
        self._predict(corpus)
        main(["--corpus", str(corpus), "--seed", "3", "--model-id", "mock-oracle", "score"])
        capsys.readouterr()
        assert main(["--corpus", str(corpus), "report"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "mock-oracle" in out
        assert (corpus / "reports" / "report_all_models.csv").exists()

    def test_score_without_predictions_is_data_error(self, corpus):
        code = main(["--corpus", str(corpus), "--model-id", "ghost", "score"])
        assert code == EXIT_DATA

    def test_cell_counts_sum_to_test_split(self, corpus):
        self._predict(corpus)
        main(["--corpus", str(corpus), "--seed", "3", "--model-id", "mock-oracle", "score"])
        store = CorpusStore(corpus)
        rows = (corpus / "scores" / "mock-oracle.jsonl").read_text().splitlines()
        assert len(rows) == len(store.query(split="test"))

    def test_mine_skips_degenerate_and_counts_pending(self, corpus, capsys):
        code = main(
            ["--corpus", str(corpus), "--seed", "3", "--backend", "mock",
             "--mock-mode", "noisy_oracle", "--verb-noise", "0.5", "--noun-noise", "0.5",
             "--model-id", "noisy", "-J", "6", "mine"]
        )
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "mined" in out
        store = CorpusStore(corpus)
        stats = store.pair_stats()
        assert stats["by_status"]["pending"] == stats["total"] > 0

    def test_export_before_review_is_data_error(self, corpus, capsys):
        main(["--corpus", str(corpus), "--seed", "3", "--backend", "mock",
              "--mock-mode", "noisy_oracle", "--verb-noise", "0.5", "--noun-noise", "0.5",
              "--model-id", "noisy", "-J", "4", "mine"])
        assert main(["--corpus", str(corpus), "export"]) == EXIT_DATA

    def test_mine_auto_approve_then_export(self, corpus, capsys):
        main(["--corpus", str(corpus), "--seed", "3", "--backend", "mock",
              "--mock-mode", "noisy_oracle", "--verb-noise", "0.5", "--noun-noise", "0.5",
              "--model-id", "noisy", "-J", "4", "mine", "--auto-approve"])
        out_file = corpus / "exports" / "dpo_dataset.jsonl"
        assert main(["--corpus", str(corpus), "export", "--out", str(out_file)]) == EXIT_OK
        store = CorpusStore(corpus)
        assert len(out_file.read_text().splitlines()) == store.pair_stats()["by_status"]["approved"]

    def test_unreachable_remote_backend_exits_3(self, corpus):
        code = main(
            ["--corpus", str(corpus), "--backend", "remote",
             "--base-url", "http://127.0.0.1:1", "predict"]
        )
        assert code == EXIT_BACKEND

    def test_ht_mismatch_is_usage_error(self, corpus, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"horizon": 4}))
        code = main(["--config", str(cfg), "--corpus", str(corpus), "predict"])
        assert code == EXIT_USAGE

    def test_unreadable_config_is_usage_error(self, corpus):
        assert main(["--config", "/dev/null", "--corpus", str(corpus), "predict"]) == EXIT_USAGE


class TestDpoCheck:
    def test_prints_checks_and_exits_zero(self, capsys):
        code = main(["dpo-check"])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "ln 2" in out
        assert "central differences" in out
        assert "[FAIL]" not in out
