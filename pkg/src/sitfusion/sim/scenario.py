"""Declarative scenario specs and the four built-in scenarios.

A scenario is plain JSON-compatible data. Positions are given in metres
north/east of the scenario ``origin``; times in milliseconds after ``start_ms``.

Schema (all keys required unless marked optional)::

    {
      "id": 1..4, "name": str, "start_ms": int, "duration_ms": int,
      "origin": {"lat_e7": int, "lon_e7": int},
      "bounds": AREA,                  # every station position must lie in it
      "monitored_areas": [AREA, ...],  # pairwise disjoint
      "tda_area": AREA, "eda_area": AREA,
      "uplink_period_ms": int,         # optional, VDA/DDA upload period (1000)
      "stations": [STATION, ...],
      "events": [EVENT, ...],          # optional
      "travel_segments": [{"segment_id": str, "area": AREA}]   # optional
    }

    AREA    = {"shape": "circle|rectangle|ellipse", "north_m": float, "east_m": float,
               "dist_a_m": float, "dist_b_m": float, "azimuth_deg": float}
    STATION = {"id": str, "kind": "vehicle|roadside",
               "route": [[t_ms, north_m, east_m], ...]     # vehicles
               "position": [north_m, east_m],              # roadside
               "relay": bool,                              # optional, roadside forwards broadcasts
               "secret": str,                              # optional, hex travel-time secret
               "light_cycle": [[phase, dur_ms], ...],      # optional
               "light_offset_ms": int,                     # optional
               "signals": {KEY: SIGNAL, ...}}
    SIGNAL  = {"period_ms": int, "value": any|null,        # null = silent until set
               "source": "const|station.id|route.speed|route.accel|route.brake|light.phase|light.ttc",
               "noise": float}                             # sigma as a fraction of the calibration span
    EVENT   = {"t_ms": int, "station": str|[str], "action": "set|offset|emit",
               "values": {KEY: value}, "label": str}
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from ..geo import GeoArea, Shape, is_within, offset_point
from ..model import DataDictionary, GeoPoint, ValueKind, default_dictionary

DEFAULT_START_MS = 1_600_000_000_000
DEFAULT_DURATION_MS = 60_000
DRIVER_NOISE = 0.02
ORIGIN = GeoPoint(494_433_000, 66_378_000)

_HEX = set("0123456789abcdef")
SOURCES = ("const", "station.id", "route.speed", "route.accel", "route.brake", "light.phase", "light.ttc")


class MalformedSpec(ValueError):
    pass


@dataclass(frozen=True)
class SignalSpec:
    period_ms: int
    value: Any = None
    source: str = "const"
    noise: float = 0.0


@dataclass(frozen=True)
class StationConfig:
    station_id: str
    kind: str
    signals: dict[str, SignalSpec]
    route: tuple[tuple[int, float, float], ...] = ()
    position: Optional[tuple[float, float]] = None
    relay: bool = False
    secret: str = ""
    light_cycle: tuple[tuple[str, int], ...] = ()
    light_offset_ms: int = 0

    @property
    def is_vehicle(self) -> bool:
        return self.kind == "vehicle"

    # -- kinematics (local metres) ------------------------------------------

    def local_position(self, t: int) -> tuple[float, float]:
        if not self.is_vehicle:
            return self.position
        pts = self.route
        if t <= pts[0][0]:
            return pts[0][1], pts[0][2]
        for (t0, n0, e0), (t1, n1, e1) in zip(pts, pts[1:]):
            if t <= t1:
                f = (t - t0) / (t1 - t0)
                return n0 + (n1 - n0) * f, e0 + (e1 - e0) * f
        return pts[-1][1], pts[-1][2]

    def speed(self, t: int) -> float:
        """Speed on the route leg active at ``t`` (legs are half-open [t0, t1))."""
        if not self.is_vehicle:
            return 0.0
        for (t0, n0, e0), (t1, n1, e1) in zip(self.route, self.route[1:]):
            if t0 <= t < t1:
                return math.hypot(n1 - n0, e1 - e0) / ((t1 - t0) / 1000.0)
        return 0.0

    def max_speed(self) -> float:
        return max((self.speed(p[0]) for p in self.route), default=0.0)

    def accel(self, t: int, half_ms: int = 500) -> float:
        """Central speed difference, clipped to the route's time span."""
        if len(self.route) < 2:
            return 0.0
        lo = max(self.route[0][0], t - half_ms)
        hi = min(self.route[-1][0] - 1, t + half_ms)
        if hi <= lo:
            return 0.0
        return (self.speed(hi) - self.speed(lo)) / ((hi - lo) / 1000.0)

    def light_state(self, t: int) -> tuple[str, float]:
        """(phase, seconds until the next change) at scenario time ``t``."""
        cycle_len = sum(d for _, d in self.light_cycle)
        pos = (t + self.light_offset_ms) % cycle_len
        for phase, dur in self.light_cycle:
            if pos < dur:
                return phase, (dur - pos) / 1000.0
            pos -= dur
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class ScriptedEvent:
    t_ms: int
    stations: tuple[str, ...]
    action: str
    values: dict[str, Any]
    label: str = ""


@dataclass(frozen=True)
class TravelSegment:
    segment_id: str
    area: GeoArea


@dataclass
class ScenarioSpec:
    scenario_id: int
    name: str
    origin: GeoPoint
    bounds: GeoArea
    monitored_areas: list[GeoArea]
    tda_area: GeoArea
    eda_area: GeoArea
    stations: list[StationConfig]
    events: list[ScriptedEvent] = field(default_factory=list)
    travel_segments: list[TravelSegment] = field(default_factory=list)
    start_ms: int = DEFAULT_START_MS
    duration_ms: int = DEFAULT_DURATION_MS
    uplink_period_ms: int = 1000
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms

    def station(self, station_id: str) -> StationConfig:
        for s in self.stations:
            if s.station_id == station_id:
                return s
        raise KeyError(station_id)

    def geo(self, north_m: float, east_m: float) -> GeoPoint:
        return offset_point(self.origin, north_m, east_m)

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.raw)

    # -- parsing -----------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict[str, Any], dictionary: Optional[DataDictionary] = None) -> ScenarioSpec:
        dictionary = dictionary or default_dictionary()
        try:
            spec = cls._parse(d)
        except MalformedSpec:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedSpec(f"malformed-spec: {exc!r}") from exc
        spec.validate(dictionary)
        return spec

    @classmethod
    def _parse(cls, d: dict[str, Any]) -> ScenarioSpec:
        origin = GeoPoint(int(d["origin"]["lat_e7"]), int(d["origin"]["lon_e7"]))

        def area(a: dict[str, Any]) -> GeoArea:
            return GeoArea(
                Shape(a["shape"]),
                offset_point(origin, float(a.get("north_m", 0.0)), float(a.get("east_m", 0.0))),
                float(a["dist_a_m"]),
                float(a.get("dist_b_m", a["dist_a_m"])),
                float(a.get("azimuth_deg", 0.0)),
            )

        stations = []
        for s in d["stations"]:
            signals = {
                k: SignalSpec(int(v["period_ms"]), v.get("value"), v.get("source", "const"), float(v.get("noise", 0.0)))
                for k, v in s["signals"].items()
            }
            stations.append(StationConfig(
                station_id=s["id"],
                kind=s["kind"],
                signals=signals,
                route=tuple((int(t), float(n), float(e)) for t, n, e in s.get("route", ())),
                position=tuple(s["position"]) if s.get("position") is not None else None,
                relay=bool(s.get("relay", False)),
                secret=s.get("secret", ""),
                light_cycle=tuple((p, int(t)) for p, t in s.get("light_cycle", ())),
                light_offset_ms=int(s.get("light_offset_ms", 0)),
            ))
        events = []
        for e in d.get("events", ()):
            st = e["station"]
            events.append(ScriptedEvent(
                int(e["t_ms"]), tuple(st) if isinstance(st, list) else (st,),
                e["action"], dict(e["values"]), e.get("label", ""),
            ))
        return cls(
            scenario_id=int(d["id"]),
            name=d.get("name", f"scenario-{d['id']}"),
            origin=origin,
            bounds=area(d["bounds"]),
            monitored_areas=[area(a) for a in d["monitored_areas"]],
            tda_area=area(d["tda_area"]),
            eda_area=area(d["eda_area"]),
            stations=stations,
            events=events,
            travel_segments=[TravelSegment(t["segment_id"], area(t["area"])) for t in d.get("travel_segments", ())],
            start_ms=int(d.get("start_ms", DEFAULT_START_MS)),
            duration_ms=int(d.get("duration_ms", DEFAULT_DURATION_MS)),
            uplink_period_ms=int(d.get("uplink_period_ms", 1000)),
            raw=copy.deepcopy(d),
        )

    def validate(self, dictionary: DataDictionary) -> None:
        def fail(msg: str):
            raise MalformedSpec(f"malformed-spec: {msg}")

        if self.duration_ms <= 0 or self.start_ms < 0 or self.uplink_period_ms <= 0:
            fail("times must be positive")
        ids = [s.station_id for s in self.stations]
        if len(set(ids)) != len(ids):
            fail("duplicate station ids")
        for s in self.stations:
            # travel-time pseudonyms are hex, so an id with a non-hex character can never appear in one
            if not s.station_id or set(s.station_id) <= _HEX:
                fail(f"station id {s.station_id!r} needs a non-hex character")
            if s.kind not in ("vehicle", "roadside"):
                fail(f"unknown station kind {s.kind!r}")
            if s.is_vehicle:
                if not s.route:
                    fail(f"vehicle {s.station_id} needs a route")
                times = [p[0] for p in s.route]
                if any(b <= a for a, b in zip(times, times[1:])):
                    fail(f"route times of {s.station_id} must increase")
                points = [p[1:] for p in s.route]
            else:
                if s.position is None:
                    fail(f"roadside {s.station_id} needs a position")
                points = [s.position]
            for n, e in points:
                if not is_within(self.bounds, self.geo(n, e)):
                    fail(f"{s.station_id} position ({n}, {e}) outside scenario bounds")
            for key, sig in s.signals.items():
                if key not in dictionary:
                    fail(f"{s.station_id} emits unknown key {key}")
                if sig.period_ms <= 0:
                    fail(f"{s.station_id}/{key}: period must be positive")
                if sig.source not in SOURCES:
                    fail(f"{s.station_id}/{key}: unknown source {sig.source}")
                if sig.source.startswith("light.") and not s.light_cycle:
                    fail(f"{s.station_id}/{key}: light source without light_cycle")
                if sig.source.startswith("route.") and not s.is_vehicle:
                    fail(f"{s.station_id}/{key}: route source on roadside station")
        known = set(ids)
        for ev in self.events:
            if ev.action not in ("set", "offset", "emit"):
                fail(f"unknown event action {ev.action!r}")
            if not 0 <= ev.t_ms <= self.duration_ms:
                fail(f"event at {ev.t_ms} outside the scenario")
            for st in ev.stations:
                if st not in known:
                    fail(f"event for unknown station {st}")
                for key in ev.values:
                    if key not in dictionary:
                        fail(f"event sets unknown key {key}")
                    if ev.action != "emit" and key not in self.station(st).signals:
                        fail(f"event sets {key} which {st} does not emit")


# -- built-in scenarios ----------------------------------------------------------------


def _area(shape: str, north: float, east: float, a: float, b: Optional[float] = None, az: float = 0.0) -> dict:
    return {"shape": shape, "north_m": north, "east_m": east, "dist_a_m": a,
            "dist_b_m": a if b is None else b, "azimuth_deg": az}


def _driver_signals(period_ms: int = 100) -> dict:
    keys = ("driver.heart_rate_bpm", "driver.skin_conductance_us", "driver.pupil_diameter_mm", "driver.gaze_on_road_frac")
    return {k: {"period_ms": period_ms, "noise": DRIVER_NOISE} for k in keys}


def _vehicle_signals() -> dict:
    return {
        "vehicle.speed_mps": {"period_ms": 100, "source": "route.speed", "noise": 0.002},
        "vehicle.accel_mps2": {"period_ms": 100, "source": "route.accel"},
        "vehicle.brake_active": {"period_ms": 500, "source": "route.brake"},
        "traffic.vehicle.position": {"period_ms": 500, "source": "station.id"},
        "traffic.vehicle.speed_mps": {"period_ms": 500, "source": "route.speed"},
    }


def _ego(route: list, station_id: str = "ego-car") -> dict:
    return {
        "id": station_id, "kind": "vehicle", "route": route, "secret": "5eed" * 8,
        "signals": {**_vehicle_signals(), **_driver_signals()},
    }


def _env_signals(visibility: float = 2000.0, friction: float = 0.8, noise_db: float = 60.0) -> dict:
    return {
        "env.weather.visibility_m": {"period_ms": 1000, "value": visibility},
        "env.weather.precipitation": {"period_ms": 1000, "value": False},
        "env.road.friction": {"period_ms": 1000, "value": friction},
        "env.noise_db": {"period_ms": 1000, "value": noise_db},
    }


def _base(n: int, name: str) -> dict:
    return {
        "id": n, "name": name, "start_ms": DEFAULT_START_MS, "duration_ms": DEFAULT_DURATION_MS,
        "origin": {"lat_e7": ORIGIN.lat_e7, "lon_e7": ORIGIN.lon_e7},
        "uplink_period_ms": 1000, "events": [], "travel_segments": [],
    }


def scenario_1(**p) -> dict:
    """Urban straight road; a broken-down vehicle announces itself over short-range radio."""
    breakdown_ms = p.get("breakdown_ms", 10_000)
    ego_speed = p.get("ego_speed_mps", 13.9)
    # breakdown happens 400 m ahead of where the ego is at breakdown time
    stop_east = ego_speed * breakdown_ms / 1000.0 + p.get("breakdown_ahead_m", 400.0)
    queue_east = stop_east - 14.0
    t_queue = int(round(queue_east / ego_speed * 1000))
    d = _base(1, "stationary vehicle blocks lane")
    d.update({
        "bounds": _area("rectangle", 0, 500, 700, 200, 90),
        "monitored_areas": [_area("rectangle", 0, 500, 600, 60, 90)],
        "tda_area": _area("circle", 0, 500, 1500),
        "eda_area": _area("circle", 0, 500, 1500),
        "stations": [
            _ego([[0, 0, 0], [t_queue, 0, queue_east], [48_000, 0, queue_east], [60_000, 3.5, queue_east + 120]]),
            {"id": "broken-car", "kind": "vehicle", "route": [[0, 0, stop_east]],
             "signals": {"traffic.event.stationary_vehicle": {"period_ms": 1000, "value": None}}},
            {"id": "rsu-main", "kind": "roadside", "position": [8, 500], "relay": True,
             "signals": _env_signals(noise_db=65.0)},
        ],
        "events": [
            {"t_ms": breakdown_ms, "station": "broken-car", "action": "set",
             "values": {"traffic.event.stationary_vehicle": True}, "label": "breakdown"},
        ],
        "travel_segments": [{"segment_id": "s1-main-road", "area": _area("rectangle", 0, 300, 200, 30, 90)}],
    })
    return d


def scenario_2(**p) -> dict:
    """Signalised intersection; roadside cameras detect pedestrians while the ego turns right."""
    appear = p.get("pedestrian_appear_ms", [5_000, 12_000, 19_000])
    dwell = p.get("pedestrian_dwell_ms", 30_000)
    cams = ["cam-ne-a", "cam-ne-b"]
    changes = sorted([(t, +1) for t in appear] + [(t + dwell, -1) for t in appear])
    events, count = [], 0
    for t, delta in changes:
        count += delta
        if t <= DEFAULT_DURATION_MS:
            events.append({"t_ms": t, "station": cams, "action": "set",
                           "values": {"traffic.vru.pedestrian_count": count},
                           "label": "pedestrian appears" if delta > 0 else "pedestrian leaves"})
    cam_signals = {"traffic.vru.pedestrian_count": {"period_ms": 1000, "value": 0}}
    d = _base(2, "pedestrians at intersection")
    d.update({
        "bounds": _area("circle", 0, 0, 600),
        "monitored_areas": [_area("circle", 0, 0, 450)],
        "tda_area": _area("circle", 0, 0, 1500),
        "eda_area": _area("circle", 0, 0, 1500),
        "stations": [
            # northbound approach, wait at the stop line for green, turn right (east)
            _ego([[0, -400, 0], [30_000, -12, 0], [36_000, -12, 0], [40_000, 0, 6],
                  [44_000, 0, 40], [60_000, 0, 240]]),
            {"id": "tlc-main", "kind": "roadside", "position": [6, -6], "relay": True,
             "light_cycle": [["red", 27_000], ["green", 30_000], ["yellow", 3_000]],
             "light_offset_ms": 51_000,
             "signals": {
                 "traffic.light.phase": {"period_ms": 1000, "source": "light.phase"},
                 "traffic.light.time_to_change_s": {"period_ms": 1000, "source": "light.ttc"},
             }},
            {"id": cams[0], "kind": "roadside", "position": [9, 9], "signals": dict(cam_signals)},
            {"id": cams[1], "kind": "roadside", "position": [9, 12], "signals": dict(cam_signals)},
            {"id": "env-station", "kind": "roadside", "position": [-30, 15], "signals": _env_signals(noise_db=70.0)},
        ],
        "events": events,
        "travel_segments": [{"segment_id": "s2-approach", "area": _area("rectangle", -200, 0, 150, 20)}],
    })
    return d


def scenario_3(**p) -> dict:
    """Rural road; dense fog and a wet surface set in, the driver's heart rate rises."""
    fog = p.get("fog", True)
    onset = p.get("fog_onset_ms", 10_000)
    speed = p.get("ego_speed_mps", 22.2)
    length = speed * DEFAULT_DURATION_MS / 1000.0
    d = _base(3, "fog" if fog else "clear rural road")
    d.update({
        "bounds": _area("rectangle", length / 2, 0, length / 2 + 200, 200),
        "monitored_areas": [_area("rectangle", length / 2, 0, length / 2 + 40, 50)],
        "tda_area": _area("circle", length / 2, 0, 2000),
        "eda_area": _area("circle", length / 2, 0, 2000),
        "stations": [
            _ego([[0, 0, 0], [DEFAULT_DURATION_MS, length, 0]]),
            {"id": "weather-rws", "kind": "roadside", "position": [length / 2, 10], "relay": True,
             "signals": _env_signals(noise_db=45.0)},
        ],
        "travel_segments": [{"segment_id": "s3-rural", "area": _area("rectangle", length / 2, 0, 400, 20)}],
    })
    if fog:
        d["events"] = [
            {"t_ms": onset, "station": "weather-rws", "action": "set", "label": "fog onset",
             "values": {"env.weather.visibility_m": p.get("fog_visibility_m", 50.0),
                        "env.road.friction": p.get("fog_friction", 0.4),
                        "env.weather.precipitation": True}},
        ]
        stress = p.get("hr_stress_bpm", 5.0)
        if stress:
            d["events"].append({"t_ms": onset, "station": "ego-car", "action": "offset", "label": "driver stress",
                                "values": {"driver.heart_rate_bpm": stress}})
    return d


def scenario_4(**p) -> dict:
    """Bad road segment; the driver asks to take over at its entry."""
    speed = p.get("ego_speed_mps", 13.9)
    seg_start, seg_len = p.get("segment_start_m", 300.0), p.get("segment_length_m", 300.0)
    gap = 2.0
    # first instant at which the ego is 1 m into the segment
    takeover_ms = math.ceil((seg_start + 1.0) / speed * 1000)
    end_east = speed * DEFAULT_DURATION_MS / 1000.0
    d = _base(4, "bad road conditions")
    half = seg_len / 2
    d.update({
        "bounds": _area("rectangle", 0, end_east / 2, end_east / 2 + 200, 200, 90),
        "monitored_areas": [
            _area("rectangle", 0, (seg_start - gap) / 2, (seg_start - gap) / 2, 40, 90),
            _area("rectangle", 0, seg_start + half, half, 40, 90),
            _area("rectangle", 0, seg_start + seg_len + gap + half, half, 40, 90),
        ],
        "tda_area": _area("circle", 0, end_east / 2, 2000),
        "eda_area": _area("circle", 0, end_east / 2, 2000),
        "stations": [
            _ego([[0, 0, 0], [DEFAULT_DURATION_MS, 0, end_east]]),
            {"id": "rsu-road", "kind": "roadside", "position": [8, seg_start + half], "relay": True,
             "signals": {**_env_signals(friction=0.6, noise_db=55.0),
                         "env.road.bad_condition": {"period_ms": 1000, "value": True}}},
        ],
        "events": [
            {"t_ms": takeover_ms, "station": "ego-car", "action": "emit", "label": "takeover request",
             "values": {"driver.takeover_request": True}},
        ],
        "travel_segments": [{"segment_id": "s4-bad-road",
                             "area": _area("rectangle", 0, seg_start + half, half, 40, 90)}],
    })
    return d


BUILTINS = {1: scenario_1, 2: scenario_2, 3: scenario_3, 4: scenario_4}


class UnknownScenario(MalformedSpec):
    pass


def builtin_scenario(n: int, dictionary: Optional[DataDictionary] = None, **params) -> ScenarioSpec:
    if n not in BUILTINS:
        raise UnknownScenario(f"unknown-scenario: {n}")
    return ScenarioSpec.from_dict(BUILTINS[n](**params), dictionary)


def clear_baseline(dictionary: Optional[DataDictionary] = None) -> ScenarioSpec:
    """Scenario 3's road without fog or driver stress."""
    return builtin_scenario(3, dictionary, fog=False)


def signal_baseline(key: str, sig: SignalSpec, dictionary: DataDictionary) -> Any:
    """Initial value of a signal: explicit value, else the calibration midpoint (scalars)."""
    if sig.value is not None or sig.source != "const":
        return sig.value
    entry = dictionary[key]
    if entry.value_kind is ValueKind.SCALAR and entry.calibration is not None:
        lo, hi = entry.calibration
        return (lo + hi) / 2
    return None
