import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitfusion.geo import (
    Containment,
    DegenerateLatitude,
    GeoArea,
    Shape,
    areas_overlap,
    boundary_points,
    classify,
    contains,
    geometric_function,
    geometric_function_deg,
    haversine_m,
    offset_point,
    project_to_local,
)
from sitfusion.model import GeoPoint

from _util import ORIGIN, point_at

EQ = GeoPoint(0, 0)
ARC_0001_DEG = 6_371_000.0 * 0.001 * math.pi / 180.0  # 111.19 m


def test_projection_examples():
    a = GeoArea.circle(EQ, 10)
    assert project_to_local(a, EQ).x_m == 0 and project_to_local(a, EQ).y_m == 0
    p = GeoPoint.from_degrees(0.001, 0.0)
    xy = project_to_local(a, p)
    assert xy.x_m == pytest.approx(ARC_0001_DEG, abs=0.01) and xy.y_m == pytest.approx(0, abs=0.01)
    r = GeoArea.rectangle(EQ, 10, 5, 90)
    xy = project_to_local(r, p)
    assert xy.x_m == pytest.approx(0, abs=0.01) and xy.y_m == pytest.approx(-ARC_0001_DEG, abs=0.01)


def test_geometric_function_examples():
    for shape in Shape:
        area = GeoArea(shape, ORIGIN, 100, 100 if shape is Shape.CIRCLE else 50)
        assert geometric_function(area, ORIGIN) == 1.0
    # e7 coordinates quantize to ~1.1 cm, so exact-value checks use unquantized degrees
    ell = GeoArea.ellipse(EQ, 200, 100)
    assert geometric_function_deg(ell, 0.0, math.degrees(100 / 6_371_000.0)) == pytest.approx(0.0, abs=1e-6)
    rect = GeoArea.rectangle(EQ, 100, 50)
    f = geometric_function_deg(rect, math.degrees(50 / 6_371_000.0), math.degrees(25 / 6_371_000.0))
    assert f == pytest.approx(0.75, abs=1e-6)


def test_contains_examples():
    c = GeoArea.circle(EQ, 100)
    assert contains(c, EQ) is Containment.INSIDE
    f_on = geometric_function_deg(c, math.degrees(100 / 6_371_000.0), 0.0)
    assert classify(f_on) is Containment.BORDER
    assert contains(c, point_at(EQ, 200, 0)) is Containment.OUTSIDE
    assert geometric_function(c, point_at(EQ, 200, 0)) == pytest.approx(-3.0, abs=1e-3)


def test_border_classification():
    assert classify(0.0) is Containment.BORDER
    assert classify(5e-10) is Containment.BORDER
    assert classify(2e-9) is Containment.INSIDE
    assert classify(-2e-9) is Containment.OUTSIDE


def test_overlap_examples():
    a = GeoArea.circle(ORIGIN, 100)
    assert areas_overlap(a, GeoArea.circle(point_at(ORIGIN, 0, 150), 100))
    assert not areas_overlap(a, GeoArea.circle(point_at(ORIGIN, 0, 300), 100))
    big = GeoArea.circle(ORIGIN, 1000)
    small = GeoArea.rectangle(point_at(ORIGIN, 100, 100), 50, 20, 30)
    assert areas_overlap(big, small) and areas_overlap(small, big)
    far = GeoArea.rectangle(point_at(ORIGIN, 0, 5000), 50, 20, 30)
    assert not areas_overlap(big, far)


def test_area_validation_and_serialization():
    with pytest.raises(ValueError):
        GeoArea(Shape.ELLIPSE, ORIGIN, 10, 20)
    with pytest.raises(ValueError):
        GeoArea(Shape.CIRCLE, ORIGIN, 10, 5)
    a = GeoArea.rectangle(ORIGIN, 300, 40, 450)
    assert a.azimuth_deg == 90
    d = a.to_dict()
    assert list(d) == ["shape", "lat_e7", "lon_e7", "dist_a_m", "dist_b_m", "azimuth_deg"]
    assert GeoArea.from_dict(d) == a


def test_pole_is_degenerate():
    with pytest.raises(DegenerateLatitude):
        geometric_function(GeoArea.circle(GeoPoint.from_degrees(89.95, 0), 10), GeoPoint.from_degrees(89.95, 0))


def test_offset_point_round_trip():
    p = offset_point(ORIGIN, 300.0, -400.0)
    assert haversine_m(ORIGIN, p) == pytest.approx(500.0, abs=0.05)


def test_boundary_points_lie_on_border():
    for shape, b in ((Shape.ELLIPSE, 40), (Shape.RECTANGLE, 40), (Shape.CIRCLE, 120)):
        area = GeoArea(shape, ORIGIN, 120, b, 0 if shape is Shape.CIRCLE else 35)
        pts = boundary_points(area)
        assert len(pts) == 360
        assert all(abs(geometric_function_deg(area, lat, lon)) < 1e-9 for lat, lon in pts)


areas = st.builds(
    lambda shape, lat, lon, a, ratio, az: GeoArea(
        shape, GeoPoint.from_degrees(lat, lon), a,
        a if shape is Shape.CIRCLE else a * ratio, 0.0 if shape is Shape.CIRCLE else az),
    st.sampled_from(list(Shape)),
    st.floats(-70, 70), st.floats(-179, 179),
    st.floats(5, 3000), st.floats(0.05, 1.0), st.floats(0, 359.999),
)


@settings(max_examples=300)
@given(areas, st.floats(0, 360), st.floats(0, 3))
def test_azimuth_plus_360_invariant(area, bearing, frac):
    p = point_at(area.center, area.dist_a_m * frac * math.cos(math.radians(bearing)),
                 area.dist_a_m * frac * math.sin(math.radians(bearing)))
    f0 = geometric_function_deg(area, p.lat, p.lon)
    f1 = geometric_function_deg(area, p.lat, p.lon, area.azimuth_deg + 360.0)
    assert f1 == pytest.approx(f0, rel=1e-9, abs=1e-9)


@settings(max_examples=100)
@given(st.floats(-70, 70), st.floats(-179, 179), st.floats(10, 3000))
def test_circle_f_decreases_radially(lat, lon, r):
    c = GeoArea.circle(GeoPoint.from_degrees(lat, lon), r)
    for k in range(8):
        brg = 45.0 * k
        fs = []
        for step in range(1, 31):
            d = r * 0.1 * step
            p = point_at(c.center, d * math.cos(math.radians(brg)), d * math.sin(math.radians(brg)))
            fs.append(geometric_function(c, p))
        assert all(b < a for a, b in zip(fs, fs[1:]))


@settings(max_examples=1000, deadline=None)
@given(areas, st.floats(0, 360), st.floats(0, 3000))
def test_overlap_symmetric(a, bearing, dist):
    b_center = point_at(a.center, dist * math.cos(math.radians(bearing)), dist * math.sin(math.radians(bearing)))
    b = GeoArea.ellipse(b_center, 200, 80, bearing % 360)
    assert areas_overlap(a, b) == areas_overlap(b, a)
