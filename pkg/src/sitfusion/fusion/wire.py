"""Line-delimited JSON wire protocol of the fusion service.

Requests and replies are one UTF-8 JSON object per line:

    {"t":"reg","agg":ID,"kind":"TDA|EDA|VDA|DDA","keys":[...],"auth":TOKEN|null}
        -> {"t":"reg_ok","session":SID} | {"t":"reg_err","unknown":[...],"code":...}
    {"t":"batch","session":SID,"records":[RECORD, ...]}
        -> {"t":"batch_ack","verdicts":["ok" | REASON, ...]}

Anything that is not one of those kinds (including unparsable lines) is
answered with {"t":"err","code":"bad-kind"}.
"""

from __future__ import annotations

import json
from typing import Any

from ..aggregators import AggregatorKind
from ..geo import GeoArea
from ..model import record_from_dict
from .service import FusionService, RegistrationRejected, RegistrationRequest, UnknownSession


def encode(msg: dict[str, Any]) -> bytes:
    return (json.dumps(msg, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def decode(line: bytes | str) -> dict[str, Any]:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    return json.loads(line)


BAD_KIND = {"t": "err", "code": "bad-kind"}


class ProtocolHandler:
    """Maps one request line to one reply; never raises for client input."""

    def __init__(self, service: FusionService):
        self.service = service

    def handle_line(self, line: bytes | str) -> dict[str, Any]:
        try:
            msg = decode(line)
        except (ValueError, UnicodeDecodeError):
            return dict(BAD_KIND)
        if not isinstance(msg, dict):
            return dict(BAD_KIND)
        kind = msg.get("t")
        if kind == "reg":
            return self._register(msg)
        if kind == "batch":
            return self._batch(msg)
        return dict(BAD_KIND)

    def _register(self, msg: dict[str, Any]) -> dict[str, Any]:
        try:
            keys = msg["keys"]
            if not isinstance(keys, list) or not all(isinstance(k, str) for k in keys):
                raise TypeError("keys must be a list of strings")
            req = RegistrationRequest(
                aggregator_id=str(msg["agg"]),
                kind=AggregatorKind(msg["kind"]),
                keys=frozenset(keys),
                auth=msg.get("auth"),
                area=GeoArea.from_dict(msg["area"]) if msg.get("area") else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            return {"t": "reg_err", "unknown": [], "code": "malformed", "detail": str(exc)}
        try:
            session = self.service.register(req)
        except RegistrationRejected as rej:
            return {"t": "reg_err", "unknown": rej.unknown, "code": rej.code}
        return {"t": "reg_ok", "session": session.session_id}

    def _batch(self, msg: dict[str, Any]) -> dict[str, Any]:
        session_id = msg.get("session")
        raw = msg.get("records")
        if not isinstance(raw, list):
            return {"t": "err", "code": "malformed"}
        if session_id not in self.service.sessions:
            return {"t": "err", "code": "unknown-session"}
        # undecodable entries get their own verdict; decodable ones go through ingest in order
        verdicts: list[str | None] = []
        records = []
        for item in raw:
            try:
                records.append(record_from_dict(item))
                verdicts.append(None)
            except (KeyError, TypeError, ValueError, AttributeError):
                verdicts.append("malformed-record")
        try:
            results = iter(self.service.ingest(session_id, records))
        except UnknownSession:
            return {"t": "err", "code": "unknown-session"}
        return {"t": "batch_ack", "verdicts": [v if v is not None else next(results).to_wire() for v in verdicts]}
