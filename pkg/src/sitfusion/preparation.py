"""Data preparation: common time base, uniform sampling grid, spatial referencing, gap filling."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .geo import GeoArea
from .model import (
    DataDictionary,
    DataRecord,
    GeoPoint,
    Quality,
    SignalClass,
    ValidityInterval,
)

ITS_2004_EPOCH_MS = 1_072_915_200_000
GPS_EPOCH_MS = 315_964_800_000

DEFAULT_GRID_MS = 100
DEFAULT_MAX_GAP_MS = 2000
# inputs further apart than this are treated as an outage, not interpolated over
DEFAULT_SPLIT_MS = 1000

AREA_REFERENCED = "area-referenced"


class PreparationError(ValueError):
    pass


class TimeBaseKind(str, Enum):
    UNIX_MS = "unix_ms"
    ITS_2004_MS = "its_2004_ms"
    GPS_MS = "gps_ms"


@dataclass(frozen=True)
class TimeBase:
    kind: TimeBaseKind = TimeBaseKind.UNIX_MS
    leap_offset_ms: int = 0

    def __post_init__(self):
        if self.leap_offset_ms < 0:
            raise ValueError("leap_offset_ms must be non-negative")


UNIX = TimeBase(TimeBaseKind.UNIX_MS)
ITS_2004 = TimeBase(TimeBaseKind.ITS_2004_MS)
GPS = TimeBase(TimeBaseKind.GPS_MS)


def to_unified_time(ts: int, base: TimeBase) -> int:
    if ts < 0:
        raise PreparationError("negative-timestamp")
    if base.kind is TimeBaseKind.UNIX_MS:
        return ts
    if base.kind is TimeBaseKind.ITS_2004_MS:
        return ts + ITS_2004_EPOCH_MS - base.leap_offset_ms
    return ts + GPS_EPOCH_MS - base.leap_offset_ms


def attach_position(r: DataRecord, context: GeoArea) -> DataRecord:
    if r.position is not None:
        return r
    return replace(r, position=context.center).with_note(AREA_REFERENCED)


@dataclass(frozen=True)
class Series:
    key: str
    records: tuple[DataRecord, ...]
    grid_ms: Optional[int] = None

    def __post_init__(self):
        times = [r.generation_time for r in self.records]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("series generation times must be strictly increasing")
        if any(r.key != self.key for r in self.records):
            raise ValueError("series must hold a single key")


def _grid_record(src: DataRecord, t: int, grid_ms: int, value, quality: Quality, position) -> DataRecord:
    return replace(
        src,
        value=value,
        generation_time=t,
        validity=ValidityInterval(t, grid_ms),
        position=position,
        quality=quality,
    )


def _lerp_position(p0: Optional[GeoPoint], p1: Optional[GeoPoint], frac: float) -> Optional[GeoPoint]:
    if p0 is None or p1 is None or p0 == p1:
        return p0 if p0 is not None else p1
    return GeoPoint(
        round(p0.lat_e7 + (p1.lat_e7 - p0.lat_e7) * frac),
        round(p0.lon_e7 + (p1.lon_e7 - p0.lon_e7) * frac),
    )


def resample(s: Series, grid_ms: int, dictionary: DataDictionary) -> Series:
    """Put a series onto the grid of multiples of ``grid_ms`` spanning its inputs.

    Continuous keys are interpolated linearly, everything else is held
    (zero-order hold). Points that coincide with an input keep that input's
    value and quality.
    """
    if not s.records:
        raise PreparationError("empty-series")
    if grid_ms <= 0:
        raise PreparationError("grid_ms must be positive")
    entry = dictionary[s.key]
    linear = entry.signal_class is SignalClass.CONTINUOUS
    recs = s.records
    first, last = recs[0].generation_time, recs[-1].generation_time
    t = -(-first // grid_ms) * grid_ms
    out: list[DataRecord] = []
    i = 0
    while t <= last:
        while i + 1 < len(recs) and recs[i + 1].generation_time <= t:
            i += 1
        r0 = recs[i]
        if r0.generation_time == t:
            out.append(_grid_record(r0, t, grid_ms, r0.value, r0.quality, r0.position))
        elif linear:
            r1 = recs[i + 1]
            t0, t1 = r0.generation_time, r1.generation_time
            frac = (t - t0) / (t1 - t0)
            v0, v1 = r0.value, r1.value
            value = v0 + (v1 - v0) * frac
            # keep the result inside the bracket despite rounding
            value = min(max(value, min(v0, v1)), max(v0, v1))
            out.append(_grid_record(r0, t, grid_ms, value, Quality.INTERPOLATED,
                                    _lerp_position(r0.position, r1.position, frac)))
        else:
            out.append(_grid_record(r0, t, grid_ms, r0.value, Quality.INTERPOLATED, r0.position))
        t += grid_ms
    return Series(s.key, tuple(out), grid_ms)


def extrapolate_gaps(
    s: Series,
    max_gap_ms: int = DEFAULT_MAX_GAP_MS,
    grid_ms: Optional[int] = None,
) -> Series:
    """Fill absent grid points inside the series span.

    A hole point within ``max_gap_ms`` of the last real (measured or
    interpolated) value holds that value and is flagged extrapolated; further
    out it becomes a valueless ``missing`` placeholder.
    """
    grid = grid_ms or s.grid_ms
    if grid is None:
        raise PreparationError("series is not on a grid")
    if len(s.records) < 2:
        return s
    out: list[DataRecord] = []
    last_real: Optional[DataRecord] = None
    for prev, cur in zip(s.records, s.records[1:]):
        out.append(prev)
        if prev.quality in (Quality.MEASURED, Quality.INTERPOLATED):
            last_real = prev
        t = prev.generation_time + grid
        while t < cur.generation_time:
            if last_real is not None and t - last_real.generation_time <= max_gap_ms:
                out.append(_grid_record(last_real, t, grid, last_real.value,
                                        Quality.EXTRAPOLATED, last_real.position))
            else:
                src = last_real or prev
                out.append(_grid_record(src, t, grid, None, Quality.MISSING, src.position))
            t += grid
    out.append(s.records[-1])
    return Series(s.key, tuple(out), grid)


def split_series(records: Sequence[DataRecord], split_ms: int) -> list[list[DataRecord]]:
    segments: list[list[DataRecord]] = []
    for r in records:
        if segments and r.generation_time - segments[-1][-1].generation_time <= split_ms:
            segments[-1].append(r)
        else:
            segments.append([r])
    return segments


def prepare(
    records: Iterable[DataRecord],
    dictionary: DataDictionary,
    context: Optional[GeoArea] = None,
    grid_ms: int = DEFAULT_GRID_MS,
    max_gap_ms: int = DEFAULT_MAX_GAP_MS,
    split_ms: int = DEFAULT_SPLIT_MS,
) -> list[DataRecord]:
    """Run the full preparation chain on a batch of accepted records.

    Records are grouped into per-(key, source) series. Event keys are passed
    through. Other series are cut into segments at outages longer than
    ``split_ms``; each segment is resampled onto the grid, and the holes
    between segments are closed by ``extrapolate_gaps``. Records without a
    position get ``context``'s center when one is given.
    """
    groups: dict[tuple[str, str], dict[int, DataRecord]] = defaultdict(dict)
    for r in records:
        if r.position is None and context is not None:
            r = attach_position(r, context)
        # later arrivals with the same generation time replace earlier ones
        groups[(r.key, r.source_id)][r.generation_time] = r

    out: list[DataRecord] = []
    for (key, _source), by_time in sorted(groups.items()):
        recs = [by_time[t] for t in sorted(by_time)]
        if dictionary[key].signal_class is SignalClass.EVENT:
            out.extend(recs)
            continue
        gridded: list[DataRecord] = []
        for seg in split_series(recs, split_ms):
            gridded.extend(resample(Series(key, tuple(seg)), grid_ms, dictionary).records)
        if not gridded:
            continue
        out.extend(extrapolate_gaps(Series(key, tuple(gridded), grid_ms), max_gap_ms).records)
    out.sort(key=DataRecord.sort_key)
    return out
