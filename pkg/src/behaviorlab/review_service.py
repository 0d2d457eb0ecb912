"""HTTP API over the preference-pair review queue.

JSON-over-HTTP surface (bit-exact schemas in docs/review_api.md):

    GET  /pairs?status=pending&page=1&page_size=20
    GET  /pairs/{pair_id}
    POST /pairs/{pair_id}/decision   {decision, edited_text?, idempotency_key?}
    GET  /stats
    GET  /media/{scenario_id}/{step}

Each pair is served with full review context: the sample's frame references,
scene-graph text, ground truth, and all stored responses with their edit
distances. Decisions are serialized per pair (compare-and-set on status) and
durable before the response returns; replaying a decision with the same
idempotency key returns the original outcome. The single-page review UI, when
built, is served from the same process.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .mining import response_distances
from .records import PAIR_STATUSES, PreferencePair
from .store import (
    AlreadyDecided,
    CorpusStore,
    UnknownPair,
    UnparseableEdit,
)


class DecisionBody(BaseModel):
    decision: str
    edited_text: str | None = None
    idempotency_key: str | None = None
    reviewer: str | None = None


def _pair_json(pair: PreferencePair) -> dict:
    return pair.to_json()


def _context_json(store: CorpusStore, pair: PreferencePair) -> dict:
    sample = store.sample(pair.sample_id)
    distances = dict(response_distances(store, pair.sample_id, pair.model_id))
    responses = []
    for rec in store.predictions(pair.model_id, pair.sample_id):
        responses.append(
            {
                "run_index": rec.run_index,
                "raw_text": rec.raw_text,
                "parsed_text": rec.parsed_text,
                "flags": list(rec.flags),
                "error": rec.error,
                "edit_distance": distances.get(rec.run_index),
            }
        )
    from .labels import emit_prediction

    return {
        "pair": _pair_json(pair),
        "sample": {
            "sample_id": sample.sample_id,
            "room": sample.meta.room,
            "num_humans": sample.meta.num_humans,
            "frame_refs": [f.to_json() for f in sample.frame_refs],
            "scene_graph": store.scene_graph_text(sample),
            "gt_text": emit_prediction(sample.gt_grid),
            "horizon": store.header.horizon,
        },
        "responses": responses,
    }


def create_app(
    store: CorpusStore,
    ui_dir: str | Path | None = None,
    shared_token: str | None = None,
) -> FastAPI:
    app = FastAPI(title="behaviorlab review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def check_token(authorization: str | None) -> None:
        if shared_token is None:
            return
        if authorization != f"Bearer {shared_token}":
            raise HTTPException(status_code=401, detail="bad or missing token")

    @app.get("/health")
    def health() -> dict:
        return {"ok": True}

    @app.get("/pairs")
    def list_pairs(
        status: str = "pending",
        page: int = Query(1, ge=1),
        page_size: int = Query(20, ge=1, le=200),
        authorization: str | None = Header(None),
    ) -> dict:
        check_token(authorization)
        if status not in PAIR_STATUSES and status != "all":
            raise HTTPException(status_code=422, detail=f"unknown status {status!r}")
        pairs = store.pairs(None if status == "all" else status)
        start = (page - 1) * page_size
        items = [_context_json(store, p) for p in pairs[start : start + page_size]]
        return {
            "total": len(pairs),
            "page": page,
            "page_size": page_size,
            "items": items,
        }

    @app.get("/pairs/{pair_id}")
    def get_pair(pair_id: str, authorization: str | None = Header(None)) -> dict:
        check_token(authorization)
        try:
            pair = store.pair(pair_id)
        except UnknownPair:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id}")
        return _context_json(store, pair)

    @app.post("/pairs/{pair_id}/decision")
    def decide(
        pair_id: str,
        body: DecisionBody,
        authorization: str | None = Header(None),
        x_reviewer: str | None = Header(None),
    ) -> dict:
        check_token(authorization)
        if body.decision not in ("approve", "swap", "edit", "reject"):
            raise HTTPException(status_code=422, detail=f"unknown decision {body.decision!r}")
        try:
            pair, replayed = store.decide_pair(
                pair_id,
                body.decision,
                reviewer=body.reviewer or x_reviewer,
                edited_text=body.edited_text,
                idempotency_key=body.idempotency_key,
            )
        except UnknownPair:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id}")
        except AlreadyDecided as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except UnparseableEdit as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"pair": _pair_json(pair), "replayed": replayed}

    @app.get("/stats")
    def stats(authorization: str | None = Header(None)) -> dict:
        check_token(authorization)
        return store.pair_stats()

    @app.get("/media/{scenario_id}/{step}")
    def media(scenario_id: str, step: int) -> Response:
        if "/" in scenario_id or scenario_id.startswith("."):
            raise HTTPException(status_code=404, detail="bad frame reference")
        rendered = store.root / "frames" / scenario_id / f"{step}.png"
        if rendered.exists():
            return Response(content=rendered.read_bytes(), media_type="image/png")
        meta_path = store.root / "scenarios" / f"{scenario_id}.json"
        if not meta_path.exists():
            raise HTTPException(status_code=404, detail=f"unknown scenario {scenario_id}")
        from .frames import actions_at_step, render_frame_png

        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if not 0 <= step < meta["num_steps"]:
            raise HTTPException(status_code=404, detail=f"step {step} out of range")
        png = render_frame_png(scenario_id, step, actions_at_step(meta, step))
        return Response(content=png, media_type="image/png")

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
