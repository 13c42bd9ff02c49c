"""Simulated hybrid communication: short-range broadcast between stations, cellular uplink to the backend."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Union

from ..geo import haversine_m
from ..model import GeoPoint

BACKEND = "backend"


class Draws(Protocol):
    def random(self) -> float: ...

    def integers(self, low: int, high: int) -> int: ...


@dataclass(frozen=True)
class ChannelModel:
    local_range_m: float = 300.0
    local_latency_ms: int = 10
    local_loss_prob: float = 0.01
    cell_latency_ms: int = 100
    cell_jitter_ms: int = 20
    cell_loss_prob: float = 0.001

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ChannelModel:
        return cls(**d)


@dataclass(frozen=True)
class Drop:
    time: int
    channel: str
    source: str
    destination: str
    reason: str
    records: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.time, "channel": self.channel, "src": self.source,
            "dst": self.destination, "reason": self.reason, "records": self.records,
        }


@dataclass
class DropLog:
    entries: list[Drop] = field(default_factory=list)

    def add(self, drop: Drop) -> None:
        self.entries.append(drop)

    @property
    def records(self) -> int:
        return sum(d.records for d in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def deliver(
    channel: ChannelModel,
    now: int,
    src: GeoPoint,
    to: Union[GeoPoint, str],
    rng: Draws,
    drops: Optional[DropLog] = None,
    source: str = "",
    destination: str = "",
    records: int = 1,
) -> Optional[int]:
    """Return the delivery time of one message, or None if it is dropped.

    ``to`` is a receiver position (short-range broadcast) or ``BACKEND``
    (cellular). Range is checked before the loss draw; cellular draws loss
    first and jitter only for messages that survive.
    """
    if isinstance(to, str):
        if to != BACKEND:
            raise ValueError(f"unknown destination {to!r}")
        if rng.random() < channel.cell_loss_prob:
            if drops is not None:
                drops.add(Drop(now, "cellular", source, destination or BACKEND, "loss", records))
            return None
        jitter = int(rng.integers(-channel.cell_jitter_ms, channel.cell_jitter_ms + 1))
        return now + channel.cell_latency_ms + jitter

    if haversine_m(src, to) > channel.local_range_m:
        if drops is not None:
            drops.add(Drop(now, "local", source, destination, "out-of-range", records))
        return None
    if rng.random() < channel.local_loss_prob:
        if drops is not None:
            drops.add(Drop(now, "local", source, destination, "loss", records))
        return None
    return now + channel.local_latency_ms
