"""HTTP service around a running engine.

One engine, one background step thread, one lock.  Handlers take the lock
for each engine call; the server-push endpoint replays the control log from
a cursor and then follows it live, so reconnecting clients resume with
`?since=<last id>`.
"""
from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from .engine import StreamEngine
from .query import QuerySyntaxError, UnknownPredicate, UnknownQuery

EVENT_POLL_S = 0.05


class EngineRunner:
    """Steps the engine on a daemon thread.

    realtime_factor scales virtual time to wall time: 1.0 replays at source
    speed, 2.0 at double speed, 0 steps as fast as possible.
    """

    def __init__(self, engine: StreamEngine, realtime_factor: float = 0.0) -> None:
        self.engine = engine
        self.realtime_factor = realtime_factor
        self.lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._run, name="engine-step", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while not self._stop.is_set():
            with self.lock:
                before = self.engine.clock.now_ms()
                alive = self.engine.step()
                after = self.engine.clock.now_ms()
            if not alive:
                return
            if self.realtime_factor > 0:
                time.sleep(max(0.0, (after - before) / 1000.0 / self.realtime_factor))

    def run_to_completion(self) -> None:
        with self.lock:
            self.engine.run()

    def stop(self) -> None:
        self._stop.set()

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


def create_app(runner: EngineRunner, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="streamkg", docs_url=None, redoc_url=None)
    engine = runner.engine

    def _submit(text: str) -> dict:
        try:
            with runner.lock:
                return engine.submit_query(text)
        except (QuerySyntaxError, UnknownPredicate) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/healthz")
    def healthz() -> dict:
        with runner.lock:
            return {
                "status": "ok",
                "finished": engine.finished,
                "t": round(engine.clock.now_ms() / 1000.0, 3),
            }

    @app.get("/metrics")
    def metrics() -> dict:
        with runner.lock:
            return engine.metrics()

    @app.get("/queries")
    def get_queries() -> dict:
        with runner.lock:
            return {"queries": engine.list_queries()}

    @app.post("/queries")
    def post_queries(payload: dict) -> dict:
        text = str(payload.get("query", "")).strip()
        if not text:
            raise HTTPException(status_code=400, detail="missing query text")
        return _submit(text)

    @app.post("/interactive")
    def post_interactive(payload: dict) -> dict:
        text = str(payload.get("query", "")).strip()
        if not text:
            raise HTTPException(status_code=400, detail="missing query text")
        if not text.startswith(("interactive", "standing", "alert")):
            text = f"interactive {text}"
        result = _submit(text)
        if result.get("kind") != "interactive":
            raise HTTPException(status_code=400, detail="not an interactive query")
        return result

    @app.post("/interactive/{query_id}/refine")
    def post_refine(query_id: str, payload: dict) -> dict:
        text = str(payload.get("refinement", "")).strip()
        if not text:
            raise HTTPException(status_code=400, detail="missing refinement text")
        try:
            with runner.lock:
                return engine.refine_query(query_id, text)
        except UnknownQuery as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (QuerySyntaxError, UnknownPredicate) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/interactive/{query_id}")
    def get_interactive(query_id: str) -> dict:
        try:
            with runner.lock:
                return engine.interactive_thread(query_id)
        except UnknownQuery as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/alerts")
    def get_alerts(since: int = 0) -> dict:
        with runner.lock:
            cursor, alerts = engine.alerts_since(since)
        return {"cursor": cursor, "alerts": alerts}

    @app.get("/kg")
    def get_kg(
        start: float | None = None,
        end: float | None = None,
        predicate: str | None = None,
        entity: str | None = None,
    ) -> dict:
        window = None
        if start is not None or end is not None:
            window = ((start or 0.0) * 1000.0, (end if end is not None else float("inf")) * 1000.0)
        with runner.lock:
            triples = engine.kg_view(window=window, predicate=predicate, entity=entity)
        entities = sorted({t["subject"] for t in triples} | {
            t["object"] for t in triples if t.get("object_type")
        })
        return {"count": len(triples), "triples": triples, "entities": entities}

    @app.get("/events")
    def get_events(since: int = 0) -> StreamingResponse:
        def stream():
            cursor = since
            while True:
                with runner.lock:
                    total, tail = engine.events_since(cursor)
                    finished = engine.finished
                for offset, event in enumerate(tail, start=cursor + 1):
                    body = json.dumps(event, sort_keys=True, separators=(",", ":"))
                    yield f"id: {offset}\ndata: {body}\n\n"
                cursor = total
                if finished:
                    return
                time.sleep(EVENT_POLL_S)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
