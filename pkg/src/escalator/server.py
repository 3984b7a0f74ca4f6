"""HTTP surface of the engine: ingestion, queries, feedback, and a
server-sent-events stream of alerts and state changes."""

from __future__ import annotations

import json
import logging
import queue
import threading
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse

from .engine import (
    Engine,
    IngestEvent,
    MalformedEvent,
    OutOfOrder,
    UnknownTicket,
)
from .feedback import FeedbackEvent, FeedbackKind, UnknownTicket as UnknownFeedbackTicket

logger = logging.getLogger(__name__)

KEEPALIVE_SECONDS = 15.0


class StreamHub:
    """Fan-out of engine events to connected SSE clients."""

    def __init__(self) -> None:
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()

    def publish(self, event: dict) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for subscriber in subscribers:
            subscriber.put(event)

    def subscribe(self) -> queue.Queue:
        subscriber: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(subscriber)
        return subscriber

    def unsubscribe(self, subscriber: queue.Queue) -> None:
        with self._lock:
            if subscriber in self._subscribers:
                self._subscribers.remove(subscriber)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(
    engine: Engine,
    hub: StreamHub | None = None,
    console_dir: str | Path | None = None,
) -> FastAPI:
    """Wire an engine into the HTTP API.

    The hub should already be registered as an engine listener (serve()
    does this); it is accepted here so tests can drive both sides. When
    ``console_dir`` points at a built analyst console (index.html plus
    dist/app.js), it is served at the root so the browser talks to the
    API same-origin.
    """
    app = FastAPI(title="escalator", version="0.1.0")
    hub = hub or StreamHub()
    app.state.engine = engine
    app.state.hub = hub

    if console_dir is not None:
        console_root = Path(console_dir)

        @app.get("/")
        async def console_index():
            return FileResponse(console_root / "index.html")

        @app.get("/dist/app.js")
        async def console_bundle():
            return FileResponse(console_root / "dist" / "app.js", media_type="text/javascript")

    @app.post("/events")
    async def post_event(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        try:
            event = IngestEvent.parse(body)
        except MalformedEvent as exc:
            return _error(400, str(exc))
        try:
            return engine.ingest(event)
        except UnknownTicket as exc:
            return _error(404, f"unknown ticket: {exc}")
        except (OutOfOrder, MalformedEvent) as exc:
            return _error(400, str(exc))

    @app.get("/tickets")
    async def list_tickets():
        tickets = [
            engine.ticket_summary(engine.tickets[ticket_id])
            for ticket_id in sorted(engine.tickets)
        ]
        return {"tickets": tickets}

    @app.get("/tickets/{ticket_id}")
    async def get_ticket(ticket_id: str):
        detail = engine.ticket_detail(ticket_id)
        if detail is None:
            return _error(404, f"unknown ticket: {ticket_id}")
        return detail

    @app.get("/escalations")
    async def list_escalations():
        return {"escalations": engine.escalation_views()}

    @app.get("/metrics")
    async def metrics():
        return engine.metrics()

    @app.get("/config")
    async def config_view():
        return {
            "categories": engine.config.category_names(),
            "similarity_threshold": engine.config.similarity_threshold,
        }

    @app.post("/feedback")
    async def post_feedback(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "feedback must be a JSON object")
        ticket_id = body.get("ticket_id")
        if not isinstance(ticket_id, str) or not ticket_id:
            return _error(400, "ticket_id must be a non-empty string")
        try:
            kind = FeedbackKind(body.get("kind"))
        except ValueError:
            return _error(400, f"unknown feedback kind: {body.get('kind')!r}")
        corrected = body.get("corrected_category")
        if corrected is not None:
            if kind is not FeedbackKind.DOWNVOTE:
                return _error(400, "corrected_category is only valid on a downvote")
            if corrected not in engine.config.category_names():
                return _error(400, f"unknown category: {corrected!r}")
        timestamp = body.get("timestamp") or 0
        if not isinstance(timestamp, int):
            return _error(400, "timestamp must be an integer")
        event = FeedbackEvent(
            ticket_id=ticket_id,
            kind=kind,
            corrected_category=corrected,
            timestamp=timestamp,
        )
        try:
            position = engine.ledger.record(event)
        except UnknownFeedbackTicket:
            return _error(404, f"ticket {ticket_id} was never escalated or linked")
        return {"status": "recorded", "position": position}

    @app.get("/stream")
    async def stream():
        def event_stream() -> Iterator[str]:
            subscriber = hub.subscribe()
            try:
                yield "retry: 2000\n\n"
                while True:
                    try:
                        item = subscriber.get(timeout=KEEPALIVE_SECONDS)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    data = json.dumps(item["data"], sort_keys=True, ensure_ascii=False)
                    yield f"event: {item['type']}\ndata: {data}\n\n"
            finally:
                hub.unsubscribe(subscriber)

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    return app


def build_service(
    engine_factory, console_dir: str | Path | None = None
) -> tuple[Engine, FastAPI, StreamHub]:
    """Create hub, engine (with the hub listening), and app together."""
    hub = StreamHub()
    engine = engine_factory(hub.publish)
    app = create_app(engine, hub, console_dir=console_dir)
    return engine, app, hub
