"""asyncio stream server for the fusion wire protocol."""

from __future__ import annotations

import asyncio
import logging
from typing import Optional

from .service import FusionService
from .wire import ProtocolHandler, encode

logger = logging.getLogger(__name__)

MAX_LINE = 16 * 1024 * 1024


class FusionServer:
    def __init__(self, service: FusionService, host: str = "127.0.0.1", port: int = 0):
        self.service = service
        self.handler = ProtocolHandler(service)
        self.host = host
        self.port = port
        self._server: Optional[asyncio.base_events.Server] = None
        self._clients: set[asyncio.Task] = set()

    @property
    def address(self) -> tuple[str, int]:
        sock = self._server.sockets[0]
        return sock.getsockname()[:2]

    async def start(self) -> tuple[str, int]:
        self._server = await asyncio.start_server(self._client, self.host, self.port, limit=MAX_LINE)
        logger.info("fusion service listening on %s:%d", *self.address)
        return self.address

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._clients.add(task)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if not line.strip():
                    continue
                # reply before reading the next request: per-session ordering
                writer.write(encode(self.handler.handle_line(line)))
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        except asyncio.CancelledError:
            pass
        finally:
            self._clients.discard(task)
            writer.close()

    async def shutdown(self) -> None:
        """Stop accepting, finish connections, commit pending records and close the log."""
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for task in list(self._clients):
            task.cancel()
        if self._clients:
            await asyncio.gather(*self._clients, return_exceptions=True)
        result = self.service.commit()
        logger.info("final commit: %d situations, %d unassigned", len(result.situations), result.unassigned)
        self.service.store.close()
