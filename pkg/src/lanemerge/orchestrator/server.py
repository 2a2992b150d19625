"""asyncio TCP front end for :class:`Orchestrator`."""

from __future__ import annotations

import asyncio
import logging
import signal
import threading
import time

from .protocol import MAX_FRAME, ErrorMessage, ProtocolError, decode_message, encode_message, error_for
from .service import Orchestrator

log = logging.getLogger(__name__)


class OrchestratorServer:
    def __init__(self, orchestrator: Orchestrator, host: str = "127.0.0.1", port: int = 0):
        self.orchestrator = orchestrator
        self.host = host
        self.port = port
        self.processing_ms: list[float] = []
        self.frames = 0
        self.errors = 0
        self._server: asyncio.AbstractServer | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        log.info("session opened %s", peer)
        try:
            while True:
                try:
                    line = await reader.readline()
                except (ValueError, asyncio.LimitOverrunError):
                    self._send(writer, ErrorMessage("framing", "frame exceeds maximum size"))
                    continue
                except ConnectionError:
                    break
                if not line:
                    break
                if not line.strip():
                    continue
                self.frames += 1
                t0 = time.perf_counter()
                try:
                    msg = decode_message(line)
                    out = self.orchestrator.handle(msg, writer)
                except ProtocolError as exc:
                    self.errors += 1
                    out = [(writer, error_for(exc))]
                except Exception as exc:  # keep the session alive
                    log.exception("internal error handling frame")
                    self.errors += 1
                    out = [(writer, ErrorMessage("internal", str(exc)))]
                for sess, m in out:
                    self._send(sess, m)
                if out and not isinstance(out[0][1], ErrorMessage):
                    self.processing_ms.append((time.perf_counter() - t0) * 1000.0)
                if not line.endswith(b"\n"):
                    break  # peer closed mid-frame
                for sess in {s for s, _ in out}:
                    try:
                        await sess.drain()
                    except ConnectionError:
                        pass
        finally:
            self.orchestrator.drop_session(writer)
            writer.close()
            log.info("session closed %s", peer)

    @staticmethod
    def _send(writer: asyncio.StreamWriter, msg) -> None:
        if not writer.is_closing():
            writer.write(encode_message(msg))

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._client, self.host, self.port, limit=MAX_FRAME + 1)
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("orchestrator listening on %s:%d", self.host, self.port)

    async def serve_forever(self) -> None:
        await self.start()
        loop = asyncio.get_running_loop()
        stop = asyncio.Event()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except (NotImplementedError, RuntimeError):
                pass
        async with self._server:
            await stop.wait()
        log.info("orchestrator stopped")

    # -- background operation (tests, harness) -----------------------------

    def start_in_thread(self) -> "OrchestratorServer":
        ready = threading.Event()

        def run():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            self._loop.run_until_complete(self.start())
            ready.set()
            self._loop.run_forever()
            self._loop.run_until_complete(self._shutdown())
            self._loop.close()

        self._thread = threading.Thread(target=run, name="orchestrator", daemon=True)
        self._thread.start()
        ready.wait(10)
        return self

    async def _shutdown(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def stop(self) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self._loop.stop)
        if self._thread is not None:
            self._thread.join(10)

    def __enter__(self):
        return self.start_in_thread()

    def __exit__(self, *exc):
        self.stop()
