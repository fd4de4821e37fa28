"""HTTP API over a Study, consumed by the rater front-end.

Rater-facing payloads never include the hidden model tag. Rating writes are
serialized through a single lock; reads see consistent snapshots.
"""

from __future__ import annotations

from pathlib import Path
from threading import Lock

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .study import (
    RUBRIC,
    RUBRIC_VERSION,
    RatingRecord,
    RatingRejected,
    Study,
    save_snapshot,
)


class RatingIn(BaseModel):
    pair_id: str
    rater_id: str
    alignment: int
    accuracy: int
    readability: int
    confidence: int


def create_app(
    study: Study,
    static_dir: str | Path | None = None,
    snapshot_path: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="sotana study")
    write_lock = Lock()

    def persist() -> None:
        if snapshot_path is not None:
            save_snapshot(study, snapshot_path)

    @app.get("/api/next")
    def api_next(rater: str):
        if not study.known_rater(rater):
            return JSONResponse({"detail": f"unknown rater {rater!r}"}, status_code=404)
        payload = study.next_pair_for(rater)
        if payload is None:
            return Response(status_code=204)
        return payload

    @app.get("/api/progress")
    def api_progress(rater: str):
        if not study.known_rater(rater):
            return JSONResponse({"detail": f"unknown rater {rater!r}"}, status_code=404)
        rated, assigned = study.progress_for(rater)
        return {"rated": rated, "assigned": assigned}

    @app.get("/api/rubric")
    def api_rubric():
        return {"rubric_version": RUBRIC_VERSION, "rubric": RUBRIC}

    @app.post("/api/rating")
    def api_rating(body: RatingIn):
        record = RatingRecord(**body.model_dump())
        with write_lock:
            try:
                study.record_rating(record)
            except RatingRejected as exc:
                return JSONResponse({"detail": str(exc)}, status_code=422)
            persist()
        return JSONResponse({"stored": True}, status_code=201)

    @app.get("/api/agreement")
    def api_agreement():
        return study.agreement_report()

    @app.get("/api/adjudication")
    def api_adjudication_queue(senior: str = ""):
        return {"queue": study.adjudication_queue()}

    @app.post("/api/adjudication")
    def api_adjudicate(body: RatingIn):
        record = RatingRecord(**body.model_dump())
        with write_lock:
            try:
                study.record_adjudication(record)
            except RatingRejected as exc:
                return JSONResponse({"detail": str(exc)}, status_code=422)
            persist()
        return JSONResponse({"stored": True}, status_code=201)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
