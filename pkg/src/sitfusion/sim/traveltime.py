"""Pseudonymous travel-time recording."""

from __future__ import annotations

import hashlib
import hmac
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional


class TravelTimeError(ValueError):
    pass


def make_pseudonym(trip_nonce: bytes, station_secret: bytes) -> str:
    """HMAC-SHA256 of the per-trip nonce under the station secret, hex encoded."""
    if not station_secret:
        raise TravelTimeError("empty-secret")
    if len(trip_nonce) != 16:
        raise TravelTimeError("trip nonce must be 128 bits")
    return hmac.new(station_secret, trip_nonce, hashlib.sha256).hexdigest()


@dataclass(frozen=True)
class TravelTimeRecord:
    pseudonym: str
    segment_id: str
    enter: int
    exit: int

    @property
    def duration_ms(self) -> int:
        return self.exit - self.enter

    def to_dict(self) -> dict:
        return {"pseudonym": self.pseudonym, "segment": self.segment_id, "enter": self.enter, "exit": self.exit}


@dataclass
class TravelTimeTable:
    records: dict[str, list[TravelTimeRecord]] = field(default_factory=lambda: defaultdict(list))

    def record_travel_time(self, segment_id: str, pseudonym: str, enter: int, exit: int) -> TravelTimeRecord:
        if exit <= enter:
            raise TravelTimeError("non-positive-duration")
        rec = TravelTimeRecord(pseudonym, segment_id, enter, exit)
        self.records[segment_id].append(rec)
        return rec

    def mean_travel_time(self, segment_id: str) -> Optional[float]:
        recs = self.records.get(segment_id)
        if not recs:
            return None
        return sum(r.duration_ms for r in recs) / len(recs)

    def summary(self) -> dict[str, dict]:
        return {
            seg: {"count": len(recs), "mean_ms": self.mean_travel_time(seg)}
            for seg, recs in sorted(self.records.items())
        }
