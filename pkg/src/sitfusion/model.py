"""Unified data model: records, validity, positions, quality, and the data dictionary.

Every record flowing through the system is a ``DataRecord``: one key/value pair
with a generation timestamp (epoch milliseconds, UTC), a validity interval, an
optional position in integer tenths of microdegrees, the emitting station id and
a quality flag. The ``DataDictionary`` decides which keys exist and what their
values look like.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Optional, Union

Value = Union[float, int, bool, str, None]

LAT_E7_MAX = 900_000_000
LON_E7_MAX = 1_800_000_000
RANGE_SLACK = 0.5

_KEY_RE = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_]+)*$")


class Quality(str, Enum):
    MEASURED = "measured"
    INTERPOLATED = "interpolated"
    EXTRAPOLATED = "extrapolated"
    MISSING = "missing"


class ValueKind(str, Enum):
    SCALAR = "scalar"
    COUNT = "count"
    FLAG = "flag"
    TOKEN = "token"


class SignalClass(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    EVENT = "event"


class FactorClass(str, Enum):
    STATIC = "static"
    SEMI_STATIC = "semi_static"
    DYNAMIC = "dynamic"


def is_valid_key(name: str) -> bool:
    return bool(_KEY_RE.match(name))


@dataclass(frozen=True)
class ValidityInterval:
    """Half-open interval ``[start, start + duration_ms)`` in epoch milliseconds."""

    start: int
    duration_ms: int

    @property
    def end(self) -> int:
        return self.start + self.duration_ms

    def contains(self, t: int) -> bool:
        return self.start <= t < self.end

    def intersects(self, other: ValidityInterval) -> bool:
        # zero-length intervals behave as the single instant ``start``
        a0, a1 = self.start, max(self.end, self.start + 1)
        b0, b1 = other.start, max(other.end, other.start + 1)
        return a0 < b1 and b0 < a1


@dataclass(frozen=True)
class GeoPoint:
    lat_e7: int
    lon_e7: int

    def __post_init__(self):
        if not (-LAT_E7_MAX <= self.lat_e7 <= LAT_E7_MAX):
            raise ValueError(f"latitude out of range: {self.lat_e7}")
        if not (-LON_E7_MAX <= self.lon_e7 <= LON_E7_MAX):
            raise ValueError(f"longitude out of range: {self.lon_e7}")

    @classmethod
    def from_degrees(cls, lat: float, lon: float) -> GeoPoint:
        return cls(round(lat * 1e7), round(lon * 1e7))

    @property
    def lat(self) -> float:
        return self.lat_e7 / 1e7

    @property
    def lon(self) -> float:
        return self.lon_e7 / 1e7


@dataclass(frozen=True)
class DataRecord:
    key: str
    value: Value
    generation_time: int
    validity: ValidityInterval
    position: Optional[GeoPoint]
    source_id: str
    quality: Quality = Quality.MEASURED
    # provenance annotations (relay, area-referencing, ingest session); not part of the wire layout
    notes: tuple[str, ...] = ()

    def with_note(self, note: str) -> DataRecord:
        if note in self.notes:
            return self
        return replace(self, notes=self.notes + (note,))

    def sort_key(self) -> tuple:
        pos = (self.position.lat_e7, self.position.lon_e7) if self.position else (0, 0)
        return (self.generation_time, self.key, self.source_id, pos, json.dumps(self.value))


# -- serialization -------------------------------------------------------------

def record_to_dict(r: DataRecord, with_notes: bool = False) -> dict[str, Any]:
    d: dict[str, Any] = {
        "key": r.key,
        "value": r.value,
        "gen_ms": r.generation_time,
        "valid_from_ms": r.validity.start,
        "valid_dur_ms": r.validity.duration_ms,
        "lat_e7": r.position.lat_e7 if r.position else None,
        "lon_e7": r.position.lon_e7 if r.position else None,
        "source": r.source_id,
        "quality": r.quality.value,
    }
    if with_notes and r.notes:
        d["notes"] = list(r.notes)
    return d


def record_from_dict(d: dict[str, Any]) -> DataRecord:
    lat, lon = d["lat_e7"], d["lon_e7"]
    position = GeoPoint(int(lat), int(lon)) if lat is not None and lon is not None else None
    return DataRecord(
        key=d["key"],
        value=d["value"],
        generation_time=int(d["gen_ms"]),
        validity=ValidityInterval(int(d["valid_from_ms"]), int(d["valid_dur_ms"])),
        position=position,
        source_id=d["source"],
        quality=Quality(d["quality"]),
        notes=tuple(d.get("notes", ())),
    )


def dumps_record(r: DataRecord, with_notes: bool = False) -> str:
    return json.dumps(record_to_dict(r, with_notes), separators=(",", ":"), ensure_ascii=False)


def loads_record(line: str) -> DataRecord:
    return record_from_dict(json.loads(line))


# -- dictionary ------------------------------------------------------------------

@dataclass(frozen=True)
class DictionaryEntry:
    key: str
    value_kind: ValueKind
    unit: str
    signal_class: SignalClass
    factor_class: FactorClass
    calibration: Optional[tuple[float, float]] = None
    tokens: Optional[tuple[str, ...]] = None
    description: str = ""

    def __post_init__(self):
        if not is_valid_key(self.key):
            raise ValueError(f"malformed key {self.key!r}")
        if self.signal_class is SignalClass.CONTINUOUS and self.value_kind is not ValueKind.SCALAR:
            raise ValueError(f"{self.key}: continuous entries must be scalar")
        if self.signal_class is SignalClass.EVENT and self.value_kind not in (ValueKind.FLAG, ValueKind.TOKEN):
            raise ValueError(f"{self.key}: event entries carry flag or token values")
        if self.calibration is not None and not self.calibration[0] < self.calibration[1]:
            raise ValueError(f"{self.key}: calibration requires lo < hi")

    def normalize(self, value: float) -> float:
        """Map a value onto [0, 1] using the calibration range, clamping outside it."""
        lo, hi = self.calibration
        return min(1.0, max(0.0, (value - lo) / (hi - lo)))


class DataDictionary:
    """Read-only registry of permitted keys."""

    def __init__(self, entries: Iterable[DictionaryEntry]):
        self._entries: dict[str, DictionaryEntry] = {}
        for e in entries:
            if e.key in self._entries:
                raise ValueError(f"duplicate dictionary key {e.key}")
            self._entries[e.key] = e

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def __getitem__(self, key: str) -> DictionaryEntry:
        return self._entries[key]

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Optional[DictionaryEntry]:
        return self._entries.get(key)

    def keys(self) -> list[str]:
        return list(self._entries)

    def with_overrides(self, overrides: dict[str, dict[str, Any]]) -> DataDictionary:
        """Return a copy with per-key field overrides (used by config files)."""
        entries = []
        for e in self._entries.values():
            o = overrides.get(e.key)
            if o:
                o = dict(o)
                if "calibration" in o and o["calibration"] is not None:
                    o["calibration"] = tuple(o["calibration"])
                if o.get("tokens") is not None:
                    o["tokens"] = tuple(o["tokens"])
                e = replace(e, **o)
            entries.append(e)
        return DataDictionary(entries)


def _e(key, kind, unit, signal, factor, calibration=None, tokens=None, description=""):
    return DictionaryEntry(
        key, ValueKind(kind), unit, SignalClass(signal), FactorClass(factor),
        calibration=calibration, tokens=tokens, description=description,
    )


_CANONICAL = (
    # traffic: TDA
    _e("traffic.vehicle.position", "token", "", "discrete", "dynamic",
       description="observed road user id; location carried by the record position"),
    _e("traffic.vehicle.speed_mps", "scalar", "m/s", "continuous", "dynamic", (0.0, 60.0)),
    _e("traffic.light.phase", "token", "", "discrete", "dynamic", tokens=("red", "yellow", "green")),
    _e("traffic.light.time_to_change_s", "scalar", "s", "continuous", "dynamic", (0.0, 90.0)),
    _e("traffic.event.stationary_vehicle", "flag", "", "event", "dynamic"),
    _e("traffic.vru.pedestrian_count", "count", "1", "discrete", "dynamic"),
    _e("traffic.tram.present", "flag", "", "discrete", "dynamic"),
    # environment: EDA
    _e("env.weather.visibility_m", "scalar", "m", "continuous", "dynamic", (0.0, 2000.0)),
    _e("env.weather.precipitation", "flag", "", "discrete", "dynamic"),
    _e("env.road.friction", "scalar", "1", "continuous", "semi_static", (0.1, 1.0)),
    _e("env.road.bad_condition", "flag", "", "discrete", "semi_static"),
    _e("env.noise_db", "scalar", "dB", "continuous", "dynamic", (30.0, 100.0)),
    # vehicle bus: VDA
    _e("vehicle.speed_mps", "scalar", "m/s", "continuous", "dynamic", (0.0, 60.0)),
    _e("vehicle.accel_mps2", "scalar", "m/s2", "continuous", "dynamic", (-10.0, 10.0)),
    _e("vehicle.brake_active", "flag", "", "discrete", "dynamic"),
    # driver physiology: DDA
    _e("driver.heart_rate_bpm", "scalar", "1/min", "continuous", "dynamic", (60.0, 120.0)),
    _e("driver.skin_conductance_us", "scalar", "uS", "continuous", "dynamic", (2.0, 20.0)),
    _e("driver.pupil_diameter_mm", "scalar", "mm", "continuous", "dynamic", (3.0, 7.0)),
    _e("driver.gaze_on_road_frac", "scalar", "1", "continuous", "dynamic", (0.0, 1.0)),
    _e("driver.takeover_request", "flag", "", "event", "dynamic"),
)


def default_dictionary() -> DataDictionary:
    return DataDictionary(_CANONICAL)


# -- validation ------------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    """Outcome of a check: ``ok`` or the first violated rule."""

    ok: bool
    reason: Optional[str] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def to_wire(self) -> str:
        return "ok" if self.ok else self.reason

    @classmethod
    def accept(cls) -> Verdict:
        return _OK

    @classmethod
    def reject(cls, reason: str, detail: str = "") -> Verdict:
        return cls(False, reason, detail)


_OK = Verdict(True)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_record(record: DataRecord, dictionary: DataDictionary) -> Verdict:
    entry = dictionary.get(record.key)
    if entry is None:
        return Verdict.reject("unknown-key", record.key)

    v = record.value
    if record.quality is Quality.MISSING:
        if v is not None:
            return Verdict.reject("value-kind-mismatch", "missing placeholders carry no value")
    else:
        kind = entry.value_kind
        if kind is ValueKind.SCALAR:
            ok = _is_real(v) and v == v and abs(v) != float("inf")
        elif kind is ValueKind.COUNT:
            ok = isinstance(v, int) and not isinstance(v, bool)
        elif kind is ValueKind.FLAG:
            ok = isinstance(v, bool)
        else:
            ok = isinstance(v, str)
        if not ok:
            return Verdict.reject("value-kind-mismatch", f"{record.key} expects {kind.value}, got {v!r}")

        if kind is ValueKind.COUNT and v < 0:
            return Verdict.reject("out-of-range", f"negative count {v}")
        if kind is ValueKind.TOKEN and entry.tokens is not None and v not in entry.tokens:
            return Verdict.reject("out-of-range", f"token {v!r} not in {entry.tokens}")
        if kind is ValueKind.SCALAR and entry.calibration is not None:
            lo, hi = entry.calibration
            slack = RANGE_SLACK * (hi - lo)
            if not (lo - slack <= v <= hi + slack):
                return Verdict.reject("out-of-range", f"{v} outside [{lo - slack}, {hi + slack}]")

    val = record.validity
    if (
        val.duration_ms < 0
        or val.start < 0
        or record.generation_time < 0
        or val.start > record.generation_time + val.duration_ms
    ):
        return Verdict.reject("malformed-validity", f"{val}")
    return _OK
