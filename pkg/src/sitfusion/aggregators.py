"""The four aggregator roles feeding the data fusion.

TDA (traffic) and EDA (environment) run in the backend, each responsible for
one geographic area, and remove duplicates reported by different sources.
VDA (vehicle bus) and DDA (driver physiology) run on the vehicle and reduce
continuous signals to one mean per tumbling window before upload.
"""

from __future__ import annotations

import bisect
import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .geo import GeoArea, haversine_m, is_within
from .model import (
    DataDictionary,
    DataRecord,
    SignalClass,
    ValidityInterval,
    Verdict,
    dumps_record,
    record_to_dict,
)

DUPLICATE_DISTANCE_M = 5.0
DEFAULT_WINDOW_MS = 500

KIND_PREFIX = {"TDA": "traffic.", "EDA": "env.", "VDA": "vehicle.", "DDA": "driver."}


class AggregatorKind(str, Enum):
    TDA = "TDA"
    EDA = "EDA"
    VDA = "VDA"
    DDA = "DDA"

    @property
    def is_backend(self) -> bool:
        return self in (AggregatorKind.TDA, AggregatorKind.EDA)


def keys_for_kind(kind: AggregatorKind, dictionary: DataDictionary) -> frozenset[str]:
    prefix = KIND_PREFIX[kind.value]
    return frozenset(k for k in dictionary.keys() if k.startswith(prefix))


def relay_note(aggregator_id: str) -> str:
    return f"relay:{aggregator_id}"


@dataclass
class Batch:
    aggregator_id: str
    kind: AggregatorKind
    records: list[DataRecord]

    def header(self) -> dict:
        return {"aggregator_id": self.aggregator_id, "kind": self.kind.value, "count": len(self.records)}

    def to_lines(self) -> list[str]:
        return [json.dumps(self.header(), separators=(",", ":"))] + [dumps_record(r) for r in self.records]

    def to_dict(self) -> dict:
        return {**self.header(), "records": [record_to_dict(r) for r in self.records]}


@dataclass
class Aggregator:
    aggregator_id: str
    kind: AggregatorKind
    dictionary: DataDictionary
    registered_keys: frozenset[str] = frozenset()
    responsibility: Optional[GeoArea] = None
    window_ms: int = DEFAULT_WINDOW_MS
    buffer: list[DataRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.registered_keys:
            self.registered_keys = keys_for_kind(self.kind, self.dictionary)
        unknown = [k for k in self.registered_keys if k not in self.dictionary]
        if unknown:
            raise ValueError(f"keys not in dictionary: {sorted(unknown)}")
        if self.kind.is_backend and self.responsibility is None:
            raise ValueError(f"{self.kind.value} needs a responsibility area")
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")

    def accept_record(self, r: DataRecord) -> Verdict:
        if r.key not in self.registered_keys:
            return Verdict.reject("key-not-registered", r.key)
        if self.kind.is_backend:
            if r.position is None or not is_within(self.responsibility, r.position):
                return Verdict.reject("outside-responsibility")
        bisect.insort_right(self.buffer, r, key=_gen_time)
        return Verdict.accept()

    def flush(self, now: Optional[int] = None) -> Batch:
        """Hand the buffered data to fusion and clear it.

        For VDA/DDA only windows that are complete at ``now`` are emitted; the
        rest stays buffered. ``now=None`` flushes everything.
        """
        if self.kind.is_backend:
            out = deduplicate(self.buffer)
            self.buffer = []
        else:
            out = pre_aggregate_local(self, now)
        return Batch(self.aggregator_id, self.kind, [r.with_note(relay_note(self.aggregator_id)) for r in out])


def _gen_time(r: DataRecord) -> int:
    return r.generation_time


def _priority(r: DataRecord) -> tuple:
    # latest generation first, then smallest source id; the rest only makes the order total
    return (-r.generation_time, r.source_id, r.sort_key())


def _value_kind(v) -> str:
    if v is None or isinstance(v, (bool, str)):
        return type(v).__name__
    return "number"


def is_duplicate(a: DataRecord, b: DataRecord) -> bool:
    if a.key != b.key or _value_kind(a.value) != _value_kind(b.value):
        return False
    if not a.validity.intersects(b.validity):
        return False
    if a.position is None or b.position is None:
        return a.position is None and b.position is None
    return haversine_m(a.position, b.position) <= DUPLICATE_DISTANCE_M


def deduplicate(buffer: Iterable[DataRecord]) -> list[DataRecord]:
    """Drop records duplicated by a higher-priority record.

    Records are visited in priority order and kept unless they duplicate one
    already kept, so the result holds no duplicate pair and does not depend on
    input order. Output is ordered by generation time.
    """
    kept: list[DataRecord] = []
    by_key: dict[str, list[DataRecord]] = defaultdict(list)
    for r in sorted(buffer, key=_priority):
        if any(is_duplicate(r, k) for k in by_key[r.key]):
            continue
        by_key[r.key].append(r)
        kept.append(r)
    kept.sort(key=DataRecord.sort_key)
    return kept


def pre_aggregate_local(state: Aggregator, up_to: Optional[int] = None) -> list[DataRecord]:
    """Reduce the VDA/DDA buffer window by window.

    Windows are aligned to multiples of ``window_ms``; only windows ending at
    or before ``up_to`` are consumed. Continuous keys become one mean record
    per (key, source, window) stamped at the window end; discrete and event
    records pass through unchanged.
    """
    if state.kind.is_backend:
        raise ValueError("pre-aggregation runs on VDA/DDA only")
    w = state.window_ms
    take: list[DataRecord] = []
    keep: list[DataRecord] = []
    for r in state.buffer:
        window_end = (r.generation_time // w + 1) * w
        (take if up_to is None or window_end <= up_to else keep).append(r)
    state.buffer = keep

    groups: dict[tuple[str, str, int], list[DataRecord]] = defaultdict(list)
    out: list[DataRecord] = []
    for r in take:
        if state.dictionary[r.key].signal_class is SignalClass.CONTINUOUS:
            groups[(r.key, r.source_id, r.generation_time // w * w)].append(r)
        else:
            out.append(r)
    for (key, source, start), recs in groups.items():
        values = [r.value for r in recs]
        mean = sum(values) / len(values)
        mean = min(max(mean, min(values)), max(values))
        last = recs[-1]
        out.append(replace(
            last,
            value=mean,
            generation_time=start + w,
            validity=ValidityInterval(start, w),
        ))
    out.sort(key=DataRecord.sort_key)
    return out
