"""Gateway service: the wire protocol over WebSocket plus a small REST surface.

All clients share one engine. Inbound messages are validated, stamped (live
mode) or ordered by their own timestamps (lockstep mode), and consumed from a
single bounded queue by one consumer task, so every client observes the same
broadcast sequence. Slow clients are disconnected rather than allowed to stall
the engine.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
import time
from typing import Any

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import ValidationError

from ..config import EngineConfig
from ..conversation import Responder
from ..errors import EngineError, ContextValidationError, ScenarioError
from ..memory import load_context
from ..simulator import (
    Scenario,
    SessionRecord,
    build_runtime,
    replay as replay_record,
    run_scenario,
)
from .models import (
    HealthResponse,
    ReplayRequest,
    ReplayResponse,
    RunScenarioRequest,
    RunScenarioResponse,
    ValidateContextRequest,
    ValidateContextResponse,
    inbound_adapter,
)

log = logging.getLogger(__name__)

CLIENT_BUFFER = 1000
LIVE_TICK_SECONDS = 0.1


class Gateway:
    def __init__(
        self,
        config: EngineConfig,
        mode: str = "lockstep",
        responder: Responder | None = None,
    ):
        if mode not in ("live", "lockstep"):
            raise ValueError(f"unknown gateway mode: {mode}")
        self.config = config
        self.mode = mode
        self.runtime = build_runtime(config, responder=responder)
        self.queue: asyncio.Queue[dict[str, Any]] = asyncio.Queue(
            maxsize=config.event_queue_limit
        )
        self.clients: dict[WebSocket, asyncio.Queue] = {}
        self._sender_tasks: dict[WebSocket, asyncio.Task] = {}
        self._consumer: asyncio.Task | None = None
        self._ticker: asyncio.Task | None = None
        self._epoch = time.monotonic()
        self._last_stamp = -1

    # -- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        self._consumer = asyncio.create_task(self._consume())
        if self.mode == "live":
            self._ticker = asyncio.create_task(self._tick())

    async def stop(self) -> None:
        for task in (self._consumer, self._ticker):
            if task is not None:
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await task
        for ws in list(self.clients):
            await self._drop_client(ws)

    def now_ms(self) -> int:
        return int((time.monotonic() - self._epoch) * 1000)

    # -- client handling -----------------------------------------------------

    async def connect(self, ws: WebSocket) -> None:
        await ws.accept()
        outbox: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_BUFFER)
        self.clients[ws] = outbox
        for message in self.runtime.snapshot_messages():
            outbox.put_nowait(message)
        self._sender_tasks[ws] = asyncio.create_task(self._send_loop(ws, outbox))

    async def handle(self, ws: WebSocket) -> None:
        try:
            while True:
                raw = await ws.receive_json()
                await self._ingest(ws, raw)
        except WebSocketDisconnect:
            pass
        finally:
            await self._drop_client(ws)

    async def _ingest(self, ws: WebSocket, raw: Any) -> None:
        try:
            message = inbound_adapter.validate_python(raw)
        except ValidationError as exc:
            await self._reply_error(ws, "schema", f"invalid message: {exc.errors()[0]['msg']}")
            return
        payload = message.model_dump()
        if self.mode == "live":
            # Stamped at consumption time so the live ticker can never advance
            # the clock past a message that is still waiting in the queue.
            payload.pop("ts", None)
        elif payload.get("ts") is None:
            await self._reply_error(ws, "schema", "lockstep mode requires ts on every message")
            return
        try:
            self.queue.put_nowait(payload)
        except asyncio.QueueFull:
            await self._reply_error(
                ws, "backpressure", "event queue is full; retry shortly"
            )

    async def _reply_error(self, ws: WebSocket, code: str, detail: str) -> None:
        outbox = self.clients.get(ws)
        if outbox is None:
            return
        try:
            outbox.put_nowait({"type": "error", "code": code, "detail": detail})
        except asyncio.QueueFull:
            await self._drop_client(ws)

    async def _drop_client(self, ws: WebSocket) -> None:
        self.clients.pop(ws, None)
        task = self._sender_tasks.pop(ws, None)
        if task is not None:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task
        with contextlib.suppress(Exception):
            await ws.close()

    async def _send_loop(self, ws: WebSocket, outbox: asyncio.Queue) -> None:
        try:
            while True:
                message = await outbox.get()
                await ws.send_json(message)
        except asyncio.CancelledError:
            raise
        except Exception:
            self.clients.pop(ws, None)

    # -- engine feeding ------------------------------------------------------

    async def _consume(self) -> None:
        while True:
            payload = await self.queue.get()
            if self.mode == "live":
                # Strictly increasing stamps: two events in the same
                # millisecond must not collide on one track's timeline.
                self._last_stamp = max(self.now_ms(), self._last_stamp + 1)
                payload["ts"] = self._last_stamp
            try:
                broadcasts = self.runtime.submit(payload)
            except EngineError as exc:
                broadcasts = [{"type": "error", "code": "engine_error", "detail": str(exc)}]
            except Exception:  # keep the engine loop alive no matter what
                log.exception("engine rejected an event")
                broadcasts = [
                    {"type": "error", "code": "engine_error",
                     "detail": "internal error while processing an event"}
                ]
            self._fanout(broadcasts)

    async def _tick(self) -> None:
        while True:
            await asyncio.sleep(LIVE_TICK_SECONDS)
            broadcasts = self.runtime.advance_to(self.now_ms())
            self._fanout(broadcasts)

    def _fanout(self, broadcasts: list[dict[str, Any]]) -> None:
        if not broadcasts:
            return
        for ws, outbox in list(self.clients.items()):
            try:
                for message in broadcasts:
                    outbox.put_nowait(message)
            except asyncio.QueueFull:
                # Slow client: cut it loose instead of blocking the engine.
                log.warning("disconnecting slow client")
                task = self._sender_tasks.pop(ws, None)
                if task is not None:
                    task.cancel()
                self.clients.pop(ws, None)


def create_app(
    config: EngineConfig | None = None,
    mode: str = "lockstep",
    responder: Responder | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    gateway = Gateway(config or EngineConfig(), mode=mode, responder=responder)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        await gateway.start()
        yield
        await gateway.stop()

    app = FastAPI(title="hallway-agent gateway", lifespan=lifespan)
    app.state.gateway = gateway

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", mode=gateway.mode, clients=len(gateway.clients))

    @app.get("/state")
    def state() -> dict[str, Any]:
        return gateway.runtime.state_payload()

    @app.get("/config")
    def engine_config() -> dict[str, Any]:
        return gateway.config.to_dict()

    @app.post("/context/validate", response_model=ValidateContextResponse)
    def validate_context(request: ValidateContextRequest) -> ValidateContextResponse:
        try:
            context = load_context(request.document)
        except ContextValidationError as exc:
            return ValidateContextResponse(valid=False, error=str(exc), field=exc.field)
        return ValidateContextResponse(
            valid=True, relationship_count=len(context.social_relationships)
        )

    @app.post("/scenario/run", response_model=RunScenarioResponse)
    def scenario_run(request: RunScenarioRequest) -> RunScenarioResponse:
        try:
            scenario = Scenario.from_dict(request.scenario)
            run_config = (
                EngineConfig.from_dict(request.config)
                if request.config is not None
                else gateway.config
            )
            record = run_scenario(scenario, run_config)
        except (ScenarioError, EngineError) as exc:
            from fastapi import HTTPException

            raise HTTPException(status_code=422, detail=str(exc))
        return RunScenarioResponse(record=record.to_dict())

    @app.post("/replay", response_model=ReplayResponse)
    def replay(request: ReplayRequest) -> ReplayResponse:
        try:
            record = SessionRecord.from_dict(request.record)
        except KeyError as exc:
            from fastapi import HTTPException

            raise HTTPException(status_code=422, detail=f"malformed record: missing {exc}")
        verdict = replay_record(record)
        return ReplayResponse(
            passed=verdict.passed,
            detail=verdict.detail,
            first_divergence=verdict.first_divergence,
            config_mismatch=verdict.config_mismatch,
        )

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket) -> None:
        await gateway.connect(ws)
        await gateway.handle(ws)

    if ui_dir is not None:
        from pathlib import Path

        from fastapi.staticfiles import StaticFiles

        if Path(ui_dir).is_dir():
            app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
        else:
            log.warning("ui directory %s not found; /ui not mounted", ui_dir)

    return app
