"""Command-line entry point for the whole pipeline.

Subcommands: generate, ingest, predict, score, report, mine, export,
review-serve, dpo-check. Exit codes are a stable CI contract:
0 success, 1 usage/config error, 2 data error, 3 backend error.
Every command is deterministic under a fixed seed with a mock backend.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .backends import (
    Backend,
    InferenceError,
    InferenceRequest,
    InferenceResult,
    MockModel,
    MockModelSpec,
    RemoteChatBackend,
    file_image_loader,
    infer_batch,
)
from .config import RunConfig, config_hash, effective_json, load_config
from .labels import emit_prediction, parse_prediction
from .metrics import (
    BUILTIN_EMBEDDER_ID,
    ReportCell,
    ScoreBreakdown,
    aggregate,
    score_sample,
)
from .mining import (
    InsufficientResponses,
    NothingToExport,
    export_dpo_dataset,
    mine_pairs,
    stable_seed,
)
from .prompting import IclExample, PromptSpec, build_prompt, pack_icl
from .records import PredictionRecord, SampleMeta
from .scenario import (
    DEFAULT_MIX,
    EmptySplit,
    OutOfRange,
    ScenarioConfig,
    Unsatisfiable,
    emit_dataset,
    generate_corpus_scenarios,
    generate_scenario,
)
from .store import (
    AlreadyDecided,
    CorpusStore,
    CorruptManifest,
    DuplicateRun,
    MissingArtifact,
    UnknownPair,
    UnknownSample,
    UnparseableEdit,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_DATA_ERRORS = (
    CorruptManifest,
    MissingArtifact,
    DuplicateRun,
    UnknownSample,
    UnknownPair,
    AlreadyDecided,
    UnparseableEdit,
    EmptySplit,
    OutOfRange,
    Unsatisfiable,
    NothingToExport,
    InsufficientResponses,
)


class NoPredictions(Exception):
    pass


def make_backend(cfg: RunConfig, store: CorpusStore | None) -> Backend:
    if cfg.backend == "mock":
        spec = MockModelSpec(
            mode=cfg.mock_mode,
            verb_noise=cfg.verb_noise,
            noun_noise=cfg.noun_noise,
            seed=cfg.seed,
        )
        gt_lookup = noun_pool = None
        if store is not None:
            gt_lookup = lambda sid: store.sample(sid).gt_grid  # noqa: E731
            noun_pool = lambda sid: tuple(  # noqa: E731
                sorted(store.scene_graph(store.sample(sid)).nodes)
            )
        return MockModel(spec, gt_lookup, noun_pool)
    if cfg.backend == "remote":
        if not cfg.base_url:
            raise ValueError("remote backend needs base_url")
        return RemoteChatBackend(
            base_url=cfg.base_url,
            api_key=os.environ.get(cfg.api_key_env),
            max_retries=cfg.max_retries,
            image_loader=file_image_loader(cfg.resize_px or None),
        )
    raise ValueError(f"unknown backend {cfg.backend!r}")


def _icl_for(store: CorpusStore, cfg: RunConfig, sample) -> tuple[IclExample, ...]:
    if cfg.icl_count <= 0:
        return ()
    candidates = [
        IclExample(
            sample_id=s.sample_id,
            room=s.meta.room,
            num_humans=s.meta.num_humans,
            frame_refs=s.frame_refs,
            scene_graph_text=store.scene_graph_text(s),
            answer_text=emit_prediction(s.gt_grid),
        )
        for s in store.query(split="train")
        if s.sample_id != sample.sample_id
    ]
    packed = pack_icl(
        candidates,
        history=store.header.history,
        max_images=cfg.max_images,
        query_room=sample.meta.room,
        query_num_humans=sample.meta.num_humans,
    )
    return tuple(packed[: cfg.icl_count])


def _attach_frame_paths(store: CorpusStore, frame_refs):
    """Image-provider hook: when rendered frames exist under corpus/frames/,
    attach their paths so remote backends can load real bytes. Symbolic refs
    pass through untouched (mock backends never read images)."""
    import dataclasses

    out = []
    for frame in frame_refs:
        if frame.path is None:
            candidate = store.root / "frames" / frame.scenario_id / f"{frame.step}.png"
            if candidate.exists():
                frame = dataclasses.replace(frame, path=str(candidate))
        out.append(frame)
    return tuple(out)


def _prompt_for(store: CorpusStore, cfg: RunConfig, sample):
    spec = PromptSpec(
        history=store.header.history,
        horizon=store.header.horizon,
        frame_refs=_attach_frame_paths(store, sample.frame_refs),
        scene_graph_text=store.scene_graph_text(sample),
        icl_examples=_icl_for(store, cfg, sample),
        max_images=cfg.max_images,
    )
    return build_prompt(spec)


# ---------------------------------------------------------------- commands


def cmd_generate(cfg: RunConfig, args) -> int:
    if args.room or args.humans:
        if not (args.room and args.humans):
            raise ValueError("--room and --humans must be given together")
        mix = [(args.room, args.humans, args.count or 1, args.steps or 60)]
        default_cells = {(room, humans) for room, humans, _, _ in DEFAULT_MIX}
        if (args.room, args.humans) not in default_cells:
            print(
                f"notice: ({args.room}, {args.humans} humans) is outside the "
                "default corpus mix; generating anyway"
            )
    else:
        mix = list(DEFAULT_MIX)
    scenarios = generate_corpus_scenarios(mix, seed=cfg.seed)
    summary = emit_dataset(
        scenarios,
        cfg.corpus,
        split_ratio=cfg.split_ratio,
        stride=cfg.stride,
        history=cfg.history,
        horizon=cfg.horizon,
        seed=cfg.seed,
    )
    store, counts = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)

    rows = []
    for room, humans, _, _ in dict.fromkeys(mix):
        cell = [s for s in scenarios if s.room_type == room and s.num_humans == humans]
        if not cell:
            continue
        avg_dur = sum(s.duration_s for s in cell) / len(cell)
        avg_actions = sum(
            len(r) for s in cell for r in s.timeline
        ) / sum(s.num_humans for s in cell)
        rows.append((humans, room, len(cell), avg_dur, avg_actions))
    print(f"{'Type':<10}{'#Human':<8}{'Room':<14}{'#Video':<8}{'Avg.Dur[s]':<12}{'#Action':<8}")
    for humans, room, n, dur, acts in rows:
        print(f"{'synthetic':<10}{humans:<8}{room:<14}{n:<8}{dur:<12.1f}{acts:<8.1f}")
    print(
        f"\ncorpus: {cfg.corpus}  scenarios: {summary['scenarios']} "
        f"(train {summary['train_scenarios']} / test {summary['test_scenarios']})  "
        f"samples: {summary['samples']}"
    )
    if cfg.render_frames:
        from .frames import render_corpus_frames

        print(f"rendered {render_corpus_frames(cfg.corpus)} placeholder frames")
    return EXIT_OK


def cmd_ingest(cfg: RunConfig, args) -> int:
    store, counts = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    total = 0
    for (room, humans), n in sorted(counts.items()):
        print(f"{room:<14}{humans} humans  {n:>5} samples")
        total += n
    print(f"total: {total} samples (H={store.header.history}, T={store.header.horizon})")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    store, _ = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    if (cfg.history, cfg.horizon) != (store.header.history, store.header.horizon):
        raise ValueError(
            f"config H/T {cfg.history}/{cfg.horizon} does not match corpus header "
            f"{store.header.history}/{store.header.horizon}"
        )
    backend = make_backend(cfg, store)
    samples = store.query(split="test")
    done = {rec.sample_id for rec in store.predictions(cfg.model_id) if rec.run_index == 0}
    todo = [s for s in samples if s.sample_id not in done]
    print(f"{len(samples)} test samples, {len(todo)} to predict (rest resumed)")

    failures = 0
    reqs, req_samples = [], []
    for sample in todo:
        reqs.append(
            InferenceRequest(
                prompt=_prompt_for(store, cfg, sample),
                model_id=cfg.model_id,
                temperature=cfg.temperature,
                seed=stable_seed(cfg.seed, sample.sample_id, 0),
                max_output_tokens=cfg.max_output_tokens,
                metadata={"sample_id": sample.sample_id},
            )
        )
        req_samples.append(sample)
    results = infer_batch(backend, reqs, max_in_flight=cfg.max_in_flight)
    for sample, result in zip(req_samples, results):
        if isinstance(result, InferenceResult):
            try:
                parsed = parse_prediction(result.raw_text, store.header.horizon)
                parsed_text, flags = emit_prediction(parsed.grid), parsed.flags
            except Exception:
                parsed_text, flags = None, ("unparseable",)
            rec = PredictionRecord(
                sample_id=sample.sample_id,
                model_id=cfg.model_id,
                run_index=0,
                raw_text=result.raw_text,
                parsed_text=parsed_text,
                flags=flags,
                latency_ms=result.latency_ms,
                temperature=cfg.temperature,
                seed=stable_seed(cfg.seed, sample.sample_id, 0),
            )
        else:
            failures += 1
            rec = PredictionRecord(
                sample_id=sample.sample_id,
                model_id=cfg.model_id,
                run_index=0,
                raw_text="",
                temperature=cfg.temperature,
                error=type(result).__name__,
            )
        store.record_prediction(rec)
    print(f"recorded {len(todo)} predictions, {failures} failures")
    if todo and failures / len(todo) > 0.10:
        print(f"error: {failures}/{len(todo)} samples failed (>10%)", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def _render_text_report(model_cells: dict[str, list[ReportCell]], meta: dict) -> str:
    out = io.StringIO()
    out.write(f"# embedder: {meta['embedder']}   config: {meta['config_hash']}\n")
    out.write(
        f"{'room':<14}{'#H':<4}{'model':<24}{'n':>5} "
        f"{'Full':>7} {'Verb':>7} {'Noun':>7} {'CS':>7} {'ED':>7}\n"
    )
    cell_keys: list[tuple[str, int]] = []
    for cells in model_cells.values():
        for cell in cells:
            key = (cell.room, cell.num_humans)
            if key not in cell_keys:
                cell_keys.append(key)
    for room, humans in cell_keys:
        for model, cells in sorted(model_cells.items()):
            for cell in cells:
                if (cell.room, cell.num_humans) == (room, humans):
                    out.write(
                        f"{room:<14}{humans:<4}{model:<24}{cell.count:>5} "
                        f"{cell.full_acc:>7.3f} {cell.verb_acc:>7.3f} "
                        f"{cell.noun_acc:>7.3f} {cell.cosine_sim:>7.3f} "
                        f"{cell.edit_dist:>7.3f}\n"
                    )
    return out.getvalue()


def _write_reports(
    report_dir: Path, name: str, model_cells: dict[str, list[ReportCell]], meta: dict
) -> None:
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / f"{name}.txt").write_text(
        _render_text_report(model_cells, meta), encoding="utf-8"
    )
    if "effective_config" in meta:
        (report_dir / f"config_{meta['config_hash']}.json").write_text(
            json.dumps(meta["effective_config"], indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    with open(report_dir / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "room", "num_humans", "n", "full_acc", "verb_acc",
             "noun_acc", "cosine_sim", "edit_dist", "embedder", "config"]
        )
        for model, cells in sorted(model_cells.items()):
            for cell in cells:
                writer.writerow(
                    [model, cell.room, cell.num_humans, cell.count,
                     f"{cell.full_acc:.6f}", f"{cell.verb_acc:.6f}",
                     f"{cell.noun_acc:.6f}", f"{cell.cosine_sim:.6f}",
                     f"{cell.edit_dist:.6f}", meta["embedder"], meta["config_hash"]]
                )


def _report_dir(cfg: RunConfig) -> Path:
    return Path(cfg.report_dir) if cfg.report_dir else Path(cfg.corpus) / "reports"


def cmd_score(cfg: RunConfig, args) -> int:
    store, _ = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    records = [r for r in store.predictions(cfg.model_id) if r.run_index == 0]
    if not records:
        raise NoPredictions(f"no run-0 predictions for {cfg.model_id}")
    scored: list[tuple[SampleMeta, ScoreBreakdown]] = []
    score_lines = []
    for rec in sorted(records, key=lambda r: r.sample_id):
        sample = store.sample(rec.sample_id)
        breakdown = score_sample(
            store.parse_record(rec), sample.gt_grid, order_sensitive=cfg.order_sensitive
        )
        scored.append((sample.meta, breakdown))
        score_lines.append(
            json.dumps(
                {
                    "sample_id": rec.sample_id,
                    "model_id": cfg.model_id,
                    "room": sample.meta.room,
                    "num_humans": sample.meta.num_humans,
                    "full_acc": breakdown.full_acc,
                    "verb_acc": breakdown.verb_acc,
                    "noun_acc": breakdown.noun_acc,
                    "cosine_sim": breakdown.cosine_sim,
                    "edit_dist": breakdown.edit_dist,
                    "slot_count": breakdown.slot_count,
                    "parse_flags": breakdown.parse_flags,
                },
                ensure_ascii=False,
            )
        )
    scores_dir = Path(cfg.corpus) / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    safe_model = cfg.model_id.replace("/", "_")
    (scores_dir / f"{safe_model}.jsonl").write_text(
        "\n".join(score_lines) + "\n", encoding="utf-8"
    )
    meta = {"embedder": BUILTIN_EMBEDDER_ID, "config_hash": config_hash(cfg),
            "effective_config": effective_json(cfg)}
    cells = aggregate(scored)
    _write_reports(_report_dir(cfg), f"score_{safe_model}", {cfg.model_id: cells}, meta)
    print(_render_text_report({cfg.model_id: cells}, meta), end="")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    store, _ = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    scores_dir = Path(cfg.corpus) / "scores"
    model_cells: dict[str, list[ReportCell]] = {}
    for path in sorted(scores_dir.glob("*.jsonl")):
        scored = []
        model_id = None
        for line in path.read_text(encoding="utf-8").splitlines():
            raw = json.loads(line)
            model_id = raw["model_id"]
            meta = SampleMeta(
                room=raw["room"],
                num_humans=raw["num_humans"],
                scenario_id="",
                scenario_seed=0,
                split="test",
            )
            scored.append(
                (
                    meta,
                    ScoreBreakdown(
                        raw["full_acc"], raw["verb_acc"], raw["noun_acc"],
                        raw["cosine_sim"], raw["edit_dist"], raw["slot_count"],
                        raw.get("parse_flags", {}),
                    ),
                )
            )
        if model_id:
            model_cells[model_id] = aggregate(scored)
    if not model_cells:
        raise NoPredictions("no score files; run `score` first")
    meta = {"embedder": BUILTIN_EMBEDDER_ID, "config_hash": config_hash(cfg),
            "effective_config": effective_json(cfg)}
    _write_reports(_report_dir(cfg), "report_all_models", model_cells, meta)
    print(_render_text_report(model_cells, meta), end="")
    return EXIT_OK


def cmd_mine(cfg: RunConfig, args) -> int:
    store, _ = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    backend = make_backend(cfg, store)
    report = mine_pairs(
        store,
        backend,
        model_id=cfg.model_id,
        responses_per_input=cfg.responses_per_input,
        temperature=cfg.temperature,
        seed=cfg.seed,
        max_in_flight=cfg.max_in_flight,
        auto_approve=args.auto_approve,
    )
    print(
        f"mined {len(report.mined)} pairs "
        f"({report.responses_recorded} responses recorded)"
    )
    for sample_id, reason in report.skipped:
        print(f"skipped {sample_id}: {reason}")
    stats = store.pair_stats()
    print(f"pair statuses: {stats['by_status']}")
    return EXIT_OK


def cmd_export(cfg: RunConfig, args) -> int:
    store, _ = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    out = args.out or str(Path(cfg.corpus) / "exports" / "dpo_dataset.jsonl")
    count = export_dpo_dataset(store, out)
    print(f"exported {count} preference records -> {out}")
    return EXIT_OK


def cmd_review_serve(cfg: RunConfig, args) -> int:
    import uvicorn

    from .review_service import create_app

    store, _ = CorpusStore.ingest(cfg.corpus, open_vocab=cfg.open_vocab)
    ui = Path(cfg.ui_dir) if cfg.ui_dir else None
    app = create_app(store, ui_dir=ui if ui and ui.exists() else None)
    print(f"review service on http://{cfg.host}:{cfg.port} (corpus: {cfg.corpus})")
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return EXIT_OK


def cmd_dpo_check(cfg: RunConfig, args) -> int:
    from .dpo import run_verification

    results = run_verification(seed=cfg.seed)
    failed = 0
    for res in results:
        status = "ok" if res.ok else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        failed += not res.ok
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="behaviorlab",
        description="Multi-human behavior-prediction pipeline harness",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--corpus", help="corpus directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--model-id", dest="model_id", help="model identifier")
    parser.add_argument("--backend", choices=["mock", "remote"], help="inference backend")
    parser.add_argument("--mock-mode", dest="mock_mode",
                        choices=["oracle", "noisy_oracle", "scrambler", "fixed_text"])
    parser.add_argument("--verb-noise", dest="verb_noise", type=float)
    parser.add_argument("--noun-noise", dest="noun_noise", type=float)
    parser.add_argument("--base-url", dest="base_url")
    parser.add_argument("--icl-count", dest="icl_count", type=int)
    parser.add_argument("--open-vocab", dest="open_vocab", action="store_true",
                        default=None, help="accept unregistered scene-graph tokens")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("-J", "--responses-per-input", dest="responses_per_input", type=int)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic corpus")
    p.add_argument("--room", choices=["kitchen", "bedroom", "living_room"])
    p.add_argument("--humans", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--render-frames", dest="render_frames", action="store_true", default=None)

    sub.add_parser("ingest", help="validate and index a corpus")
    sub.add_parser("predict", help="one prediction per test sample")
    sub.add_parser("score", help="score stored predictions, write reports")
    sub.add_parser("report", help="combined report over all scored models")

    p = sub.add_parser("mine", help="mine preference pairs on the train split")
    p.add_argument("--auto-approve", action="store_true",
                   help="mark every mined pair approved (headless/CI runs)")

    p = sub.add_parser("export", help="export the reviewed preference dataset")
    p.add_argument("--out", help="output JSONL path")

    p = sub.add_parser("review-serve", help="serve the review API and UI")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui-dir", dest="ui_dir")

    sub.add_parser("dpo-check", help="run the loss/gradient verification suite")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "predict": cmd_predict,
    "score": cmd_score,
    "report": cmd_report,
    "mine": cmd_mine,
    "export": cmd_export,
    "review-serve": cmd_review_serve,
    "dpo-check": cmd_dpo_check,
}

_OVERRIDE_KEYS = (
    "corpus", "seed", "model_id", "backend", "mock_mode", "verb_noise",
    "noun_noise", "base_url", "icl_count", "temperature", "responses_per_input",
    "render_frames", "host", "port", "ui_dir", "open_vocab",
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {
            key: getattr(args, key) for key in _OVERRIDE_KEYS if hasattr(args, key)
        }
        cfg = load_config(args.config, overrides=overrides)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](cfg, args)
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NoPredictions as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InferenceError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
