"""WebSocket session server.

One connection = one session = one engine. Two tasks per session: a
receiver feeding client messages to the engine, and a fixed-cadence ticker
driving frames. The ticker never blocks on the network: outbound messages
go through a bounded queue where stale ``state`` frames are dropped first,
so a slow client sees skipped frames but the simulation cadence holds.
"""

import asyncio
import logging
import pathlib
import time

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import rng as rngmod
from ..harness.checkpoint import load_checkpoint
from ..harness.records import write_records
from .engine import SessionEngine
from .protocol import encode

log = logging.getLogger(__name__)

QUEUE_LIMIT = 8          # outbound backlog before state frames get dropped


class RecordWriter:
    """Appends episode records to one JSON-lines file per session."""

    def __init__(self, directory, session_name):
        self.dir = pathlib.Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.path = self.dir / f"{session_name}.jsonl"
        self._wrote_meta = False

    def __call__(self, record):
        with open(self.path, "a") as fh:
            if not self._wrote_meta:
                fh.write('{"kind": "live_session", "type": "run_meta"}\n')
                self._wrote_meta = True
            fh.write(record.to_json() + "\n")


def create_app(ckpt_path, ckpt1_path=None, records_dir="live_records",
               seed: int = 0, static_dir=None) -> FastAPI:
    ck = load_checkpoint(ckpt_path)
    ck1 = load_checkpoint(ckpt1_path) if ckpt1_path else None
    app = FastAPI(title="disco cockpit service")
    app.state.sessions = 0

    @app.get("/healthz")
    def healthz():
        return JSONResponse({"ok": True, "env": ck.env_name})

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        app.state.sessions += 1
        name = f"session{int(time.time())}-{app.state.sessions}"
        engine = SessionEngine(
            ck, ck1,
            session_seed=rngmod.derive_seed(seed, name),
            record_sink=RecordWriter(records_dir, name),
        )
        outbox: asyncio.Queue = asyncio.Queue()

        def send_all(msgs):
            for m in msgs:
                if m["tag"] == "state" and outbox.qsize() >= QUEUE_LIMIT:
                    continue  # drop stale frames rather than stall the clock
                outbox.put_nowait(m)

        async def sender():
            while True:
                msg = await outbox.get()
                await ws.send_text(encode(msg))

        async def ticker():
            frame_s = 0.1
            next_due = time.monotonic()
            while True:
                if engine.trial is not None and not engine.trial.done:
                    frame_s = engine.trial.cfg.horizon.frame_ms / 1000.0
                    send_all(engine.advance_frame())
                next_due += frame_s
                await asyncio.sleep(max(0.0, next_due - time.monotonic()))
                if next_due < time.monotonic() - 1.0:  # fell far behind
                    next_due = time.monotonic()

        send_task = asyncio.create_task(sender())
        tick_task = asyncio.create_task(ticker())
        try:
            while True:
                raw = await ws.receive_text()
                send_all(engine.handle_message(raw))
        except WebSocketDisconnect:
            pass
        finally:
            tick_task.cancel()
            send_task.cancel()
            engine.close()
        app.state.sessions -= 1

    if static_dir is None:
        candidate = pathlib.Path(__file__).resolve().parents[3] / "frontend" / "dist"
        static_dir = candidate if candidate.is_dir() else None
    if static_dir:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="cockpit")
    return app


def serve(host, port, ckpt_path, ckpt1_path=None, records_dir="live_records",
          seed: int = 0):
    import uvicorn

    app = create_app(ckpt_path, ckpt1_path, records_dir, seed)
    log.info("cockpit service on ws://%s:%d/ws", host, port)
    uvicorn.run(app, host=host, port=port, log_level="info")
