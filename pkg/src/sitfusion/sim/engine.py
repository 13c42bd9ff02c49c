"""Seeded discrete-event run of a scenario.

Randomness (noise, channel loss, jitter, trip nonces) comes from a single
NumPy ``Generator`` over the PCG64 bit generator seeded with the run seed, and
is consumed in event order, so a (spec, seed) pair always yields the same
stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

from ..aggregators import Aggregator, AggregatorKind, Batch
from ..geo import is_within
from ..model import (
    DataDictionary,
    DataRecord,
    GeoPoint,
    ValidityInterval,
    ValueKind,
    default_dictionary,
    record_to_dict,
)
from .channel import BACKEND, ChannelModel, DropLog, deliver
from .clock import SimClock
from .scenario import ScenarioSpec, StationConfig, signal_baseline
from .traveltime import TravelTimeRecord, TravelTimeTable, make_pseudonym

EVENT_VALIDITY_MS = 1000
BRAKE_DECEL = -0.5
SCALAR_DECIMALS = 4
TRAVEL_SAMPLE_MS = 100

Payload = Union[DataRecord, Batch, TravelTimeRecord]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def onboard(station_id: str) -> str:
    return f"{station_id}/onboard"


@dataclass(frozen=True)
class Delivery:
    time: int
    destination: str
    payload: Payload

    def to_dict(self) -> dict[str, Any]:
        p = self.payload
        if isinstance(p, DataRecord):
            body = {"kind": "record", "record": record_to_dict(p)}
        elif isinstance(p, Batch):
            body = {"kind": "batch", **p.to_dict()}
        else:
            body = {"kind": "travel_time", **p.to_dict()}
        return {"t": self.time, "dst": self.destination, **body}


@dataclass
class SimulationResult:
    spec: ScenarioSpec
    seed: int
    deliveries: list[Delivery]
    drops: DropLog
    generated: int
    emitted: int
    delivered: int
    travel: TravelTimeTable
    travel_dropped: int = 0
    aggregators: dict[str, Aggregator] = field(default_factory=dict)

    @property
    def dropped(self) -> int:
        return self.drops.records

    def records(self) -> list[DataRecord]:
        """Every single-record delivery (station emissions and relays)."""
        return [d.payload for d in self.deliveries if isinstance(d.payload, DataRecord)]

    def backend(self) -> list[Delivery]:
        return [d for d in self.deliveries if d.destination == BACKEND]

    def stream_lines(self) -> list[str]:
        return [json.dumps(d.to_dict(), separators=(",", ":"), sort_keys=True) for d in self.deliveries]

    def drop_lines(self) -> list[str]:
        return [json.dumps(d.to_dict(), separators=(",", ":"), sort_keys=True) for d in self.drops.entries]


class Simulation:
    def __init__(
        self,
        spec: ScenarioSpec,
        seed: int,
        dictionary: Optional[DataDictionary] = None,
        channel: Optional[ChannelModel] = None,
        window_ms: int = 500,
    ):
        self.spec = spec
        self.seed = seed
        self.dictionary = dictionary or default_dictionary()
        self.channel = channel or ChannelModel()
        self.rng = make_rng(seed)
        self.clock = SimClock(spec.start_ms)
        self.deliveries: list[Delivery] = []
        self.drops = DropLog()
        self.travel = TravelTimeTable()
        self.generated = self.emitted = self.delivered = 0
        self.travel_dropped = 0

        self.values: dict[str, dict[str, Any]] = {}
        self.offsets: dict[str, dict[str, float]] = {}
        for st in spec.stations:
            self.values[st.station_id] = {
                k: signal_baseline(k, sig, self.dictionary) for k, sig in st.signals.items()
            }
            self.offsets[st.station_id] = {}
        self.relays = [st for st in spec.stations if st.kind == "roadside" and st.relay]

        # on-board aggregators of vehicles that carry bus or driver sensors
        self.nodes: dict[str, dict[str, Aggregator]] = {}
        for st in spec.stations:
            if not st.is_vehicle:
                continue
            node = {}
            for kind, prefix in ((AggregatorKind.VDA, "vehicle."), (AggregatorKind.DDA, "driver.")):
                keys = {k for k in st.signals if k.startswith(prefix)}
                if kind is AggregatorKind.DDA:
                    keys |= {k for ev in spec.events if st.station_id in ev.stations for k in ev.values
                             if k.startswith(prefix)}
                if keys:
                    node[prefix] = Aggregator(f"{st.station_id}.{kind.value.lower()}", kind, self.dictionary,
                                              window_ms=window_ms)
            if node:
                self.nodes[st.station_id] = node

    # -- helpers -------------------------------------------------------------------

    def _rel(self) -> int:
        return self.clock.now - self.spec.start_ms

    def position(self, st: StationConfig, rel: Optional[int] = None) -> GeoPoint:
        n, e = st.local_position(self._rel() if rel is None else rel)
        return self.spec.geo(n, e)

    def _shape_value(self, key: str, value: Any, noise: float = 0.0) -> Any:
        entry = self.dictionary[key]
        if entry.value_kind is ValueKind.SCALAR:
            value = float(value)
            if noise and entry.calibration is not None:
                lo, hi = entry.calibration
                value += float(self.rng.normal(0.0, noise * (hi - lo)))
            return round(value, SCALAR_DECIMALS)
        if entry.value_kind is ValueKind.COUNT:
            return int(value)
        return value

    # -- scheduling ------------------------------------------------------------------

    def setup(self) -> None:
        start, end = self.spec.start_ms, self.spec.end_ms
        for ev in self.spec.events:
            self.clock.schedule(start + ev.t_ms, self._script, ev)
        for st in self.spec.stations:
            for key in st.signals:
                self.clock.schedule(start, self._tick, st, key)
        for sid in self.nodes:
            t = start + self.spec.uplink_period_ms
            while t < end:
                self.clock.schedule(t, self._uplink, sid, t)
                t += self.spec.uplink_period_ms
            self.clock.schedule(end, self._uplink, sid, None)
        self._schedule_travel()

    def _schedule_travel(self) -> None:
        for st in self.spec.stations:
            if not st.is_vehicle or not st.secret:
                continue
            nonce = self.rng.bytes(16)
            pseudonym = make_pseudonym(nonce, bytes.fromhex(st.secret))
            for seg in self.spec.travel_segments:
                enter = exit_ = None
                for rel in range(0, self.spec.duration_ms + 1, TRAVEL_SAMPLE_MS):
                    inside = is_within(seg.area, self.position(st, rel))
                    if inside and enter is None:
                        enter = rel
                    elif not inside and enter is not None:
                        exit_ = rel
                        break
                if enter is not None and exit_ is not None:
                    rec = TravelTimeRecord(pseudonym, seg.segment_id,
                                           self.spec.start_ms + enter, self.spec.start_ms + exit_)
                    self.clock.schedule(rec.exit, self._send_travel, st, rec)

    def run(self) -> SimulationResult:
        self.setup()
        self.clock.run()
        assert self.emitted == self.delivered + self.drops.records
        return SimulationResult(
            self.spec, self.seed, self.deliveries, self.drops, self.generated, self.emitted,
            self.delivered, self.travel, self.travel_dropped,
            {a.aggregator_id: a for node in self.nodes.values() for a in node.values()},
        )

    # -- events ----------------------------------------------------------------------

    def _script(self, ev) -> None:
        for sid in ev.stations:
            st = self.spec.station(sid)
            if ev.action == "set":
                self.values[sid].update(ev.values)
            elif ev.action == "offset":
                for k, v in ev.values.items():
                    self.offsets[sid][k] = self.offsets[sid].get(k, 0.0) + v
            else:
                for key, value in ev.values.items():
                    self._emit(st, key, self._shape_value(key, value), EVENT_VALIDITY_MS)

    def _tick(self, st: StationConfig, key: str) -> None:
        sig = st.signals[key]
        rel = self._rel()
        if sig.source == "const":
            value = self.values[st.station_id][key]
            if value is not None and key in self.offsets[st.station_id]:
                value = value + self.offsets[st.station_id][key]
        elif sig.source == "station.id":
            value = st.station_id
        elif sig.source == "route.speed":
            value = st.speed(rel)
        elif sig.source == "route.accel":
            value = st.accel(rel)
        elif sig.source == "route.brake":
            value = st.accel(rel) < BRAKE_DECEL
        elif sig.source == "light.phase":
            value = st.light_state(rel)[0]
        else:
            value = st.light_state(rel)[1]
        if value is not None:
            self._emit(st, key, self._shape_value(key, value, sig.noise), sig.period_ms)
        nxt = self.clock.now + sig.period_ms
        if nxt < self.spec.end_ms:
            self.clock.schedule(nxt, self._tick, st, key)

    def _emit(self, st: StationConfig, key: str, value: Any, validity_ms: int) -> None:
        now = self.clock.now
        rec = DataRecord(key, value, now, ValidityInterval(now, validity_ms), self.position(st), st.station_id)
        self.generated += 1
        if st.is_vehicle:
            node = self.nodes.get(st.station_id, {})
            agg = next((a for prefix, a in node.items() if key.startswith(prefix)), None)
            if agg is not None:
                self.emitted += 1
                self.delivered += 1
                self.deliveries.append(Delivery(now, onboard(st.station_id), rec))
                agg.accept_record(rec)
                return
            if key.startswith("traffic."):
                for relay in self.relays:
                    self._send_local(st, relay, rec)
                return
        self._send_cell(st.station_id, rec.position, rec, 1)

    def _send_local(self, st: StationConfig, relay: StationConfig, rec: DataRecord) -> None:
        self.emitted += 1
        at = deliver(self.channel, self.clock.now, rec.position, self.position(relay), self.rng,
                     self.drops, st.station_id, relay.station_id)
        if at is not None:
            self.clock.schedule(at, self._arrive_relay, relay, rec)

    def _arrive_relay(self, relay: StationConfig, rec: DataRecord) -> None:
        self.delivered += 1
        self.deliveries.append(Delivery(self.clock.now, relay.station_id, rec))
        self._send_cell(relay.station_id, self.position(relay), rec, 1)

    def _send_cell(self, source: str, pos: GeoPoint, payload: Payload, n: int) -> None:
        self.emitted += n
        at = deliver(self.channel, self.clock.now, pos, BACKEND, self.rng, self.drops, source, BACKEND, n)
        if at is not None:
            self.clock.schedule(at, self._arrive_backend, payload, n)

    def _arrive_backend(self, payload: Payload, n: int) -> None:
        self.delivered += n
        self.deliveries.append(Delivery(self.clock.now, BACKEND, payload))

    def _uplink(self, sid: str, now: Optional[int]) -> None:
        st = self.spec.station(sid)
        for agg in self.nodes[sid].values():
            batch = agg.flush(now)
            if batch.records:
                self._send_cell(agg.aggregator_id, self.position(st), batch, len(batch.records))

    def _send_travel(self, st: StationConfig, rec: TravelTimeRecord) -> None:
        at = deliver(self.channel, self.clock.now, self.position(st), BACKEND, self.rng)
        if at is None:
            self.travel_dropped += 1
            return
        self.clock.schedule(at, self._arrive_travel, rec)

    def _arrive_travel(self, rec: TravelTimeRecord) -> None:
        self.deliveries.append(Delivery(self.clock.now, BACKEND, rec))
        self.travel.record_travel_time(rec.segment_id, rec.pseudonym, rec.enter, rec.exit)


def run_scenario(
    spec: ScenarioSpec,
    seed: int,
    dictionary: Optional[DataDictionary] = None,
    channel: Optional[ChannelModel] = None,
) -> SimulationResult:
    return Simulation(spec, seed, dictionary, channel).run()
