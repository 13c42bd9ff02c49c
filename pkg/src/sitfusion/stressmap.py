"""Stress map: per-cell mean challenge (1 - suitability score) of evaluated situations."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .geo import EARTH_RADIUS_M
from .model import GeoPoint
from .storage import StoredSituation

CSV_HEADER = ("cell_lat", "cell_lon", "challenge", "count")


class DegenerateBox(ValueError):
    pass


@dataclass
class Cell:
    row: int
    col: int
    challenges: list[float] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.challenges)


@dataclass
class StressMapGrid:
    south: float
    west: float
    north: float
    east: float
    cell_m: float
    rows: int
    cols: int
    statistic: str = "mean"
    cells: dict[tuple[int, int], Cell] = field(default_factory=dict)
    outside: int = 0

    @property
    def _dlat(self) -> float:
        return math.degrees(self.cell_m / EARTH_RADIUS_M)

    @property
    def _dlon(self) -> float:
        mid = math.radians((self.south + self.north) / 2)
        return math.degrees(self.cell_m / (EARTH_RADIUS_M * math.cos(mid)))

    def locate(self, lat: float, lon: float) -> Optional[tuple[int, int]]:
        if not (self.south <= lat <= self.north and self.west <= lon <= self.east):
            return None
        row = min(int((lat - self.south) / self._dlat), self.rows - 1)
        col = min(int((lon - self.west) / self._dlon), self.cols - 1)
        return row, col

    def challenge(self, row: int, col: int) -> Optional[float]:
        """Cell statistic, or None for a cell without situations."""
        cell = self.cells.get((row, col))
        if cell is None or not cell.challenges:
            return None
        if self.statistic == "max":
            return max(cell.challenges)
        return sum(cell.challenges) / len(cell.challenges)

    def count(self, row: int, col: int) -> int:
        cell = self.cells.get((row, col))
        return cell.count if cell else 0

    @property
    def total_count(self) -> int:
        return sum(c.count for c in self.cells.values())

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        lat = min(self.south + (row + 0.5) * self._dlat, self.north)
        lon = min(self.west + (col + 0.5) * self._dlon, self.east)
        return lat, lon

    def cell_bounds(self, row: int, col: int) -> tuple[float, float, float, float]:
        s = self.south + row * self._dlat
        w = self.west + col * self._dlon
        return s, w, min(s + self._dlat, self.north), min(w + self._dlon, self.east)

    def rows_out(self):
        for row, col in sorted(self.cells):
            yield row, col, self.challenge(row, col), self.count(row, col)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row, col, challenge, count in self.rows_out():
            lat, lon = self.cell_center(row, col)
            w.writerow([f"{lat:.7f}", f"{lon:.7f}", repr(round(challenge, 12)), count])
        return buf.getvalue()

    def to_geojson(self) -> dict:
        features = []
        for row, col, challenge, count in self.rows_out():
            s, w, n, e = self.cell_bounds(row, col)
            ring = [[w, s], [e, s], [e, n], [w, n], [w, s]]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [[[round(x, 7), round(y, 7)] for x, y in ring]]},
                "properties": {"challenge": challenge, "count": count},
            })
        return {"type": "FeatureCollection", "features": features}


def build_stress_map(
    results: Iterable[StoredSituation],
    box: tuple[GeoPoint, GeoPoint],
    cell_m: float = 100.0,
    statistic: str = "mean",
) -> StressMapGrid:
    """Grid the evaluated situations by area center; situations without an evaluation are skipped."""
    a, b = box
    south, north = sorted((a.lat, b.lat))
    west, east = sorted((a.lon, b.lon))
    if south == north or west == east or cell_m <= 0:
        raise DegenerateBox(f"degenerate-box: {box}, cell {cell_m}")
    if statistic not in ("mean", "max"):
        raise ValueError(f"unknown statistic {statistic!r}")
    grid = StressMapGrid(south, west, north, east, cell_m, 1, 1, statistic)
    grid.rows = max(1, math.ceil((north - south) / grid._dlat))
    grid.cols = max(1, math.ceil((east - west) / grid._dlon))
    for st in results:
        if st.evaluation is None:
            continue
        c = st.situation.area.center
        loc = grid.locate(c.lat, c.lon)
        if loc is None:
            grid.outside += 1
            continue
        grid.cells.setdefault(loc, Cell(*loc)).challenges.append(1.0 - st.evaluation.score)
    return grid


def write_stress_map(grid: StressMapGrid, path, fmt: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            fh.write(grid.to_csv())
        elif fmt == "geojson":
            json.dump(grid.to_geojson(), fh, indent=1)
            fh.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
