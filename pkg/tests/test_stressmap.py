import csv
import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitfusion.evaluation import Direction, SuitabilityResult
from sitfusion.fusion import assemble_situations
from sitfusion.geo import GeoArea
from sitfusion.stressmap import CSV_HEADER, DegenerateBox, build_stress_map, write_stress_map
from sitfusion.storage import EVERYTHING, SituationStore

from _util import ORIGIN, point_at, rec

BOX = (point_at(ORIGIN, -10, -10), point_at(ORIGIN, 280, 280))  # 290 m square: 3 x 3 cells of 100 m


def put(store, north, east, score, start=0):
    area = GeoArea.circle(point_at(ORIGIN, north, east), 20)
    (s,) = assemble_situations([rec("env.road.friction", 0.5, t=start, pos=area.center)], [area]).situations
    store.put_situation(s, 1)
    if score is not None:
        store.attach_evaluation(s.situation_id, SuitabilityResult(0, 0, 0, score, Direction.VEHICLE_TO_DRIVER,
                                                                  True, 1.0, "t"))


def test_cell_statistics():
    store = SituationStore()
    put(store, 0, 0, 0.8, 0)
    put(store, 5, 5, 0.4, 1000)
    put(store, 150, 150, 0.9, 2000)
    put(store, 150, 250, None, 3000)   # not evaluated: ignored
    put(store, 5000, 0, 0.5, 4000)     # outside the box
    grid = build_stress_map(store.query(EVERYTHING), BOX, 100)
    assert (grid.rows, grid.cols) == (3, 3)
    assert grid.challenge(0, 0) == pytest.approx(((1 - 0.8) + (1 - 0.4)) / 2)
    assert grid.count(0, 0) == 2
    assert grid.challenge(1, 1) == pytest.approx(0.1)
    assert grid.challenge(2, 2) is None and grid.count(2, 2) == 0
    assert grid.outside == 1 and grid.total_count == 3
    assert build_stress_map(store.query(EVERYTHING), BOX, 100, "max").challenge(0, 0) == pytest.approx(0.6)


def test_degenerate_box():
    with pytest.raises(DegenerateBox):
        build_stress_map([], (ORIGIN, ORIGIN))
    with pytest.raises(DegenerateBox):
        build_stress_map([], BOX, 0)


def test_empty_store_outputs(tmp_path):
    grid = build_stress_map([], BOX)
    out = tmp_path / "m.csv"
    write_stress_map(grid, out, "csv")
    assert out.read_text() == ",".join(CSV_HEADER) + "\n"
    write_stress_map(grid, tmp_path / "m.geojson", "geojson")
    assert json.loads((tmp_path / "m.geojson").read_text()) == {"type": "FeatureCollection", "features": []}


def test_csv_and_geojson_content():
    store = SituationStore()
    put(store, 150, 50, 0.7)
    grid = build_stress_map(store.query(EVERYTHING), BOX)
    (row,) = list(csv.DictReader(io.StringIO(grid.to_csv())))
    assert float(row["challenge"]) == pytest.approx(0.3) and row["count"] == "1"
    (feat,) = grid.to_geojson()["features"]
    ring = feat["geometry"]["coordinates"][0]
    assert ring[0] == ring[-1] and len(ring) == 5
    lons, lats = [p[0] for p in ring], [p[1] for p in ring]
    c = point_at(ORIGIN, 150, 50)
    assert min(lats) <= c.lat <= max(lats) and min(lons) <= c.lon <= max(lons)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-200, 500), st.floats(-200, 500), st.floats(0, 1)), max_size=15),
       st.sampled_from([30, 100, 250]))
def test_conservation(points, cell):
    store = SituationStore()
    for i, (n, e, score) in enumerate(points):
        put(store, n, e, score, start=1000 * i)
    grid = build_stress_map(store.query(EVERYTHING), BOX, cell)
    assert grid.total_count + grid.outside == len(points)
    for row, col, challenge, count in grid.rows_out():
        assert 0.0 <= challenge <= 1.0 and count >= 1
