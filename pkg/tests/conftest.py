from __future__ import annotations

import socket
import threading
import time

import pytest
import uvicorn

from escalator.config import EngineConfig
from escalator.embedding import MockEmbedder
from escalator.engine import Engine
from escalator.providers import MockChatProvider
from escalator.server import StreamHub, create_app
from escalator.tickets import Author, Message, Ticket, TicketState


def make_ticket(
    ticket_id: str = "t1",
    texts: tuple[str, ...] = ("my gpu instances fail to start since 10am",),
    state: TicketState = TicketState.ACTIVE,
    category: str | None = None,
    title: str = "instance trouble",
) -> Ticket:
    transcript = [
        Message(Author.CUSTOMER, text, 1_000 + i) for i, text in enumerate(texts)
    ]
    return Ticket(id=ticket_id, title=title, transcript=transcript, state=state, category=category)


@pytest.fixture
def chat():
    return MockChatProvider()


@pytest.fixture
def embedder():
    return MockEmbedder(dim=256)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    def __init__(self, engine: Engine, base_url: str):
        self.engine = engine
        self.base_url = base_url


@pytest.fixture
def live_server():
    """A real HTTP server over a mock-provider engine, on an ephemeral port."""
    hub = StreamHub()
    engine = Engine(EngineConfig(), listeners=[hub.publish])
    app = create_app(engine, hub)
    port = _free_port()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning", lifespan="off")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.01)
    yield LiveServer(engine, f"http://127.0.0.1:{port}")
    server.should_exit = True
    thread.join(timeout=5)
