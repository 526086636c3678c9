"""HTTP surface over the state store.

Endpoints follow the operator API: reads are snapshots, mutations go through
POST /actions, the event feed is server-sent events supporting resumption via
?from=. Scenario runs and what-if checks are pure and never touch live state.
"""

from __future__ import annotations

import json
import threading
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Iterator, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..network import network_to_document
from ..twin import (
    InvalidOverrideError,
    NetworkMods,
    PipelineConfig,
    TwinError,
    scenario_from_dict,
    whatif_to_dict,
)
from .schemas import ActionRequest, ActionResponse, ScenarioRequest, WhatIfRequest
from .state import ActionRejectedError, OperatorAction, StateStore


class ReplayDriver:
    """Background thread advancing the replay cursor at a wall-clock speed."""

    def __init__(self, store: StateStore, speed: float):
        if speed < 0:
            raise ValueError("replay speed must be >= 0")
        self.store = store
        self.speed = speed
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        if self.speed == 0:
            return  # paused replay: cursor moves only via explicit advance
        interval_s = self.store.config.interval_minutes * 60.0 / self.speed
        self._thread = threading.Thread(target=self._run, args=(interval_s,), daemon=True)
        self._thread.start()

    def _run(self, interval_s: float) -> None:
        while not self._stop.wait(interval_s):
            if not self.store.advance(1):
                return

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=2.0)


def create_app(
    config: PipelineConfig,
    speed: float = 0.0,
    log_path: Optional[Path] = None,
    ui_dir: Optional[Path] = None,
) -> FastAPI:
    """Build the service around a fresh store; startup/shutdown manage replay."""
    store = StateStore(config, log_path=log_path)
    driver = ReplayDriver(store, speed)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        driver.start()
        yield
        driver.stop()
        # final KPI flush: one summary line into the event log, then close
        if store._log_fh:
            totals = store.kpis("all")[0]
            store._log_fh.write(json.dumps({"final_kpis": totals}, sort_keys=True) + "\n")
        store.close()

    app = FastAPI(title="slesim operator service", version="0.1.0", lifespan=lifespan)
    app.state.store = store
    app.state.driver = driver

    @app.get("/network")
    def get_network() -> dict:
        with store._lock:
            return network_to_document(store._net)

    @app.get("/state")
    def get_state() -> dict:
        return store.snapshot()

    @app.get("/kpis")
    def get_kpis(window: str = Query(default="all")) -> list[dict]:
        try:
            return store.kpis(window)
        except ActionRejectedError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/actions", response_model=ActionResponse)
    def post_action(request: ActionRequest) -> ActionResponse:
        try:
            event = store.submit_action(
                OperatorAction(kind=request.kind, payload=request.payload, actor=request.actor)
            )
        except ActionRejectedError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ActionResponse(
            seq=event.seq, kind=event.kind.value, timestamp=event.timestamp, body=dict(event.body)
        )

    @app.post("/advance")
    def post_advance(intervals: int = Query(default=1, ge=1)) -> dict:
        emitted = store.advance(intervals)
        return {"advanced": len([e for e in emitted if e.kind.value == "reading"]), "cursor": store.snapshot()["cursor"]}

    @app.post("/scenarios")
    def post_scenario(request: ScenarioRequest) -> dict:
        try:
            scenario = scenario_from_dict(request.model_dump())
            return store.run_scenario(scenario)
        except (InvalidOverrideError, TwinError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/network/what-if")
    def post_what_if(request: WhatIfRequest) -> dict:
        try:
            report = store.what_if(
                NetworkMods(
                    switch_states=request.switch_states,
                    add_lines=tuple(request.add_lines),
                    remove_lines=tuple(request.remove_lines),
                ),
                probes=tuple(request.outage_probes),
            )
        except (InvalidOverrideError, TwinError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return whatif_to_dict(report)

    @app.get("/events")
    def get_events(
        request_from: int = Query(default=0, alias="from", ge=0),
        follow: bool = Query(default=True),
    ) -> StreamingResponse:
        def stream() -> Iterator[str]:
            next_seq = request_from
            while True:
                batch = store.wait_for_event(next_seq, timeout=0.5)
                for event in batch:
                    yield f"id: {event.seq}\ndata: {json.dumps(event.to_dict(), sort_keys=True)}\n\n"
                    next_seq = event.seq + 1
                if not follow:
                    if not batch:
                        return
                    # drain whatever arrived while emitting, then stop
                    if store.head_seq <= next_seq:
                        return
                if store.closed:
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
