"""Situation evaluation: driver load, traffic complexity, environment severity and handover suitability.

The baseline scorer is a transparent weighted sum. Anything implementing the
``Scorer`` protocol (``scorer_id`` plus ``evaluate``) can replace it, e.g. a
learned model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Optional, Protocol

from .fusion.situations import REQUIREMENT_GROUPS, Situation, completeness
from .model import DataDictionary, DataRecord, default_dictionary

if TYPE_CHECKING:
    from .geo import GeoArea
    from .storage import SituationStore

WEIGHT_TOL = 1e-9


class InvalidWeights(ValueError):
    pass


class Direction(str, Enum):
    VEHICLE_TO_DRIVER = "vehicle_to_driver"
    DRIVER_TO_VEHICLE = "driver_to_vehicle"


@dataclass(frozen=True)
class ScoreWeights:
    w_d: float = 0.40
    w_t: float = 0.35
    w_e: float = 0.25
    threshold: float = 0.60
    # handing control to the automation is accepted in more situations
    threshold_to_vehicle: float = 0.30

    def __post_init__(self):
        ws = (self.w_d, self.w_t, self.w_e)
        if any(w < 0 or math.isnan(w) for w in ws) or abs(sum(ws) - 1.0) > WEIGHT_TOL:
            raise InvalidWeights(f"weights must be non-negative and sum to 1: {ws}")
        for t in (self.threshold, self.threshold_to_vehicle):
            if not 0.0 < t < 1.0:
                raise InvalidWeights(f"threshold must lie in (0, 1): {t}")

    @classmethod
    def normalized(cls, w_d: float, w_t: float, w_e: float, **kw) -> ScoreWeights:
        total = w_d + w_t + w_e
        if total <= 0:
            raise InvalidWeights("weights sum to zero")
        return cls(w_d / total, w_t / total, w_e / total, **kw)

    def threshold_for(self, direction: Direction) -> float:
        return self.threshold if direction is Direction.VEHICLE_TO_DRIVER else self.threshold_to_vehicle


@dataclass(frozen=True)
class SuitabilityResult:
    D: float
    T: float
    E: float
    score: float
    direction: Direction
    recommended: bool
    completeness: float
    scorer_id: str

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["direction"] = self.direction.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SuitabilityResult:
        return cls(
            d["D"], d["T"], d["E"], d["score"], Direction(d["direction"]),
            d["recommended"], d["completeness"], d["scorer_id"],
        )


def _clamp(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return min(hi, max(lo, x))


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)


def _latest(s: Situation, key: str) -> Optional[DataRecord]:
    recs = s.present(key)
    return max(recs, key=DataRecord.sort_key) if recs else None


def _latest_value(s: Situation, key: str):
    r = _latest(s, key)
    return None if r is None else r.value


# -- component loads ---------------------------------------------------------

GAZE_KEY = "driver.gaze_on_road_frac"


def driver_load(s: Situation, dictionary: DataDictionary) -> float:
    contributions = []
    for key in sorted(s.records):
        entry = dictionary.get(key)
        if not key.startswith("driver.") or entry is None or entry.calibration is None:
            continue
        if entry.signal_class.value != "continuous":
            continue
        recs = s.present(key)
        if not recs:
            continue
        mean = _mean(r.value for r in recs)
        n = entry.normalize(mean)
        contributions.append(1.0 - n if key == GAZE_KEY else n)
    return _mean(contributions) if contributions else 0.0


@dataclass(frozen=True)
class TrafficCoefficients:
    stationary_vehicle: float = 0.3
    per_pedestrian: float = 0.1
    pedestrian_cap: float = 0.4
    phase_change: float = 0.2
    phase_change_below_s: float = 5.0
    tram: float = 0.1


@dataclass(frozen=True)
class EnvironmentCoefficients:
    visibility: float = 0.5
    visibility_ref_m: float = 200.0
    friction: float = 0.3
    friction_ref: float = 0.8
    friction_span: float = 0.6
    bad_road: float = 0.2


def traffic_complexity(s: Situation, c: TrafficCoefficients = TrafficCoefficients()) -> float:
    t = 0.0
    if _latest_value(s, "traffic.event.stationary_vehicle") is True:
        t += c.stationary_vehicle
    peds = _latest_value(s, "traffic.vru.pedestrian_count")
    if peds is not None:
        t += min(c.per_pedestrian * peds, c.pedestrian_cap)
    ttc = _latest_value(s, "traffic.light.time_to_change_s")
    if ttc is not None and ttc < c.phase_change_below_s:
        t += c.phase_change
    if _latest_value(s, "traffic.tram.present") is True:
        t += c.tram
    return _clamp(t)


def environment_severity(s: Situation, c: EnvironmentCoefficients = EnvironmentCoefficients()) -> float:
    e = 0.0
    vis = _latest_value(s, "env.weather.visibility_m")
    if vis is not None:
        e += c.visibility * _clamp((c.visibility_ref_m - vis) / c.visibility_ref_m)
    mu = _latest_value(s, "env.road.friction")
    if mu is not None:
        e += c.friction * _clamp((c.friction_ref - mu) / c.friction_span)
    if _latest_value(s, "env.road.bad_condition") is True:
        e += c.bad_road
    return _clamp(e)


# -- scoring ---------------------------------------------------------------------

def combine(D: float, T: float, E: float, w: ScoreWeights) -> float:
    return _clamp(1.0 - (w.w_d * D + w.w_t * T + w.w_e * E))


def recommend(score: float, w: ScoreWeights, direction: Direction) -> bool:
    return score >= w.threshold_for(direction)


class Scorer(Protocol):
    scorer_id: str

    def evaluate(self, s: Situation, direction: Direction) -> SuitabilityResult: ...


@dataclass
class BaselineScorer:
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    dictionary: DataDictionary = field(default_factory=default_dictionary)
    traffic: TrafficCoefficients = field(default_factory=TrafficCoefficients)
    environment: EnvironmentCoefficients = field(default_factory=EnvironmentCoefficients)
    scorer_id: str = "baseline-linear-v1"

    def evaluate(self, s: Situation, direction: Direction = Direction.VEHICLE_TO_DRIVER) -> SuitabilityResult:
        D = driver_load(s, self.dictionary)
        T = traffic_complexity(s, self.traffic)
        E = environment_severity(s, self.environment)
        score = combine(D, T, E, self.weights)
        return SuitabilityResult(
            D, T, E, score, direction,
            recommend(score, self.weights, direction),
            completeness(s, REQUIREMENT_GROUPS),
            self.scorer_id,
        )


def suitability(
    s: Situation,
    w: ScoreWeights,
    direction: Direction = Direction.VEHICLE_TO_DRIVER,
    dictionary: Optional[DataDictionary] = None,
) -> SuitabilityResult:
    if not isinstance(w, ScoreWeights):
        raise InvalidWeights("expected ScoreWeights")
    return BaselineScorer(w, dictionary or default_dictionary()).evaluate(s, direction)


def compare_situations(a: Situation, b: Situation, dictionary: DataDictionary) -> float:
    """Similarity in [0, 1] over calibrated keys.

    Shared keys contribute the absolute difference of their normalized means;
    a key on only one side contributes distance 1.
    """
    def calibrated(s: Situation) -> dict[str, float]:
        out = {}
        for key in s.records:
            entry = dictionary.get(key)
            recs = s.present(key)
            if entry is None or entry.calibration is None or not recs:
                continue
            out[key] = entry.normalize(_mean(r.value for r in recs))
        return out

    ca, cb = calibrated(a), calibrated(b)
    keys = sorted(set(ca) | set(cb))
    if not keys:
        return 0.0
    distances = [abs(ca[k] - cb[k]) if k in ca and k in cb else 1.0 for k in keys]
    return _clamp(1.0 - _mean(distances))


def query_intersection_suitability(store: SituationStore, area: GeoArea, at: int) -> Optional[SuitabilityResult]:
    from .model import ValidityInterval
    from .storage import SituationQuery

    hits = store.query(SituationQuery(area=area, interval=ValidityInterval(at, 1), with_evaluation=True))
    hits = [h for h in hits if h.situation.window.contains(at)]
    if not hits:
        return None
    # most recently stored situation wins if several areas overlap
    best = max(hits, key=lambda h: (h.stored_at, h.situation.situation_id))
    return best.evaluation
