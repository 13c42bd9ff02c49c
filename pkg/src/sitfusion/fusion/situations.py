"""Spatio-temporal situations: prepared records of one monitored area and one time window."""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from ..geo import GeoArea, areas_overlap, is_within
from ..model import DataRecord, Quality, ValidityInterval, record_from_dict, record_to_dict

DEFAULT_WINDOW_MS = 1000
# one requirement group per aggregator partition
REQUIREMENT_GROUPS = ("driver.*", "traffic.*", "env.*", "vehicle.*")


class OverlappingAreas(ValueError):
    pass


def area_token(area: GeoArea) -> str:
    blob = json.dumps(area.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def situation_id(area: GeoArea, window_start: int) -> str:
    return f"sit-{area_token(area)}-{window_start}"


@dataclass(frozen=True)
class Situation:
    situation_id: str
    area: GeoArea
    window: ValidityInterval
    records: Mapping[str, tuple[DataRecord, ...]]
    completeness: float = 0.0

    def all_records(self) -> list[DataRecord]:
        return [r for k in sorted(self.records) for r in self.records[k]]

    def record_count(self) -> int:
        return sum(len(v) for v in self.records.values())

    def keys(self) -> set[str]:
        return set(self.records)

    def present(self, key: str) -> list[DataRecord]:
        """Records of ``key`` that carry a value (quality other than missing)."""
        return [r for r in self.records.get(key, ()) if r.quality is not Quality.MISSING]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.situation_id,
            "area": self.area.to_dict(),
            "window_start": self.window.start,
            "window_ms": self.window.duration_ms,
            "completeness": self.completeness,
            "records": [record_to_dict(r, with_notes=True) for r in self.all_records()],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Situation:
        grouped: dict[str, list[DataRecord]] = defaultdict(list)
        for rd in d["records"]:
            r = record_from_dict(rd)
            grouped[r.key].append(r)
        return cls(
            d["id"],
            GeoArea.from_dict(d["area"]),
            ValidityInterval(d["window_start"], d["window_ms"]),
            {k: tuple(v) for k, v in sorted(grouped.items())},
            d["completeness"],
        )


def _matches(key: str, requirement: str) -> bool:
    if requirement.endswith(".*"):
        return key.startswith(requirement[:-1])
    return key == requirement


def completeness(s: Situation, required: Iterable[str]) -> float:
    """Fraction of requirements met by at least one non-missing record.

    A requirement is a data key or a prefix group such as ``"driver.*"``.
    """
    required = list(dict.fromkeys(required))
    if not required:
        raise ValueError("empty-required-set")
    present = [k for k in s.records if s.present(k)]
    hit = sum(1 for req in required if any(_matches(k, req) for k in present))
    return hit / len(required)


@dataclass
class Assembly:
    situations: list[Situation]
    unassigned: list[DataRecord] = field(default_factory=list)

    @property
    def unassigned_count(self) -> int:
        return len(self.unassigned)


def check_disjoint(areas: Sequence[GeoArea]) -> None:
    for i, a in enumerate(areas):
        for b in areas[i + 1:]:
            if areas_overlap(a, b):
                raise OverlappingAreas(f"monitored areas overlap: {a} / {b}")


def assemble_situations(
    records: Iterable[DataRecord],
    monitored_areas: Sequence[GeoArea],
    window_ms: int = DEFAULT_WINDOW_MS,
    required: Sequence[str] = REQUIREMENT_GROUPS,
) -> Assembly:
    """Partition prepared records into (area, tumbling window) situations.

    A record belongs to the first monitored area containing its position (inside
    or on the border) and to the window holding the start of its validity, so
    every record lands in at most one situation.
    """
    check_disjoint(monitored_areas)
    cells: dict[tuple[int, int], list[DataRecord]] = defaultdict(list)
    unassigned: list[DataRecord] = []
    for r in records:
        idx = next(
            (i for i, a in enumerate(monitored_areas) if r.position is not None and is_within(a, r.position)),
            None,
        )
        if idx is None:
            unassigned.append(r)
            continue
        cells[(idx, r.validity.start // window_ms * window_ms)].append(r)

    situations = []
    for (idx, start), recs in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        area = monitored_areas[idx]
        grouped: dict[str, list[DataRecord]] = defaultdict(list)
        for r in sorted(recs, key=DataRecord.sort_key):
            grouped[r.key].append(r)
        s = Situation(
            situation_id(area, start),
            area,
            ValidityInterval(start, window_ms),
            {k: tuple(v) for k, v in sorted(grouped.items())},
        )
        situations.append(Situation(s.situation_id, s.area, s.window, s.records, completeness(s, required)))
    return Assembly(situations, unassigned)
