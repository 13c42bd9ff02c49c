"""Blocking client for the fusion wire protocol (used by simulated stations and tests)."""

from __future__ import annotations

import socket
from typing import Iterable, Optional

from ..geo import GeoArea
from ..model import DataRecord, record_to_dict
from .wire import decode, encode


class ProtocolError(Exception):
    def __init__(self, reply: dict):
        super().__init__(str(reply))
        self.reply = reply


class FusionClient:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def request(self, msg: dict) -> dict:
        return self.send_raw(encode(msg))

    def send_raw(self, line: bytes) -> dict:
        if not line.endswith(b"\n"):
            line += b"\n"
        self._file.write(line)
        self._file.flush()
        reply = self._file.readline()
        if not reply:
            raise ConnectionError("server closed the connection")
        return decode(reply)

    def register(
        self,
        aggregator_id: str,
        kind: str,
        keys: Iterable[str],
        auth: Optional[str] = None,
        area: Optional[GeoArea] = None,
    ) -> str:
        msg = {"t": "reg", "agg": aggregator_id, "kind": kind, "keys": sorted(keys), "auth": auth}
        if area is not None:
            msg["area"] = area.to_dict()
        reply = self.request(msg)
        if reply.get("t") != "reg_ok":
            raise ProtocolError(reply)
        return reply["session"]

    def send_batch(self, session: str, records: Iterable[DataRecord]) -> list[str]:
        reply = self.request({"t": "batch", "session": session, "records": [record_to_dict(r) for r in records]})
        if reply.get("t") != "batch_ack":
            raise ProtocolError(reply)
        return reply["verdicts"]

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self) -> FusionClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
