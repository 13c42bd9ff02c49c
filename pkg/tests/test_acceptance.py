"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Randomized checks use fixed seeds of the stdlib ``random`` module so that the
stated sample counts are exact and failures are reproducible.
"""

import math
import random
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from sitfusion.aggregators import deduplicate
from sitfusion.cli import main
from sitfusion.evaluation import BaselineScorer, ScoreWeights
from sitfusion.fusion.client import FusionClient, ProtocolError
from sitfusion.fusion.service import FusionService
from sitfusion.fusion.situations import Situation, situation_id
from sitfusion.geo import GeoArea, Shape, geometric_function_deg
from sitfusion.model import GeoPoint, Quality, ValidityInterval, default_dictionary, record_to_dict
from sitfusion.pipeline import run_pipeline
from sitfusion.preparation import GPS, ITS_2004, UNIX, Series, attach_position, extrapolate_gaps, resample, to_unified_time
from sitfusion.sim.scenario import clear_baseline
from sitfusion.storage import EVERYTHING, SituationStore
from sitfusion.stressmap import build_stress_map

from _util import ORIGIN, ServerThread, commit_hundred, destination, oracle_D, oracle_E, oracle_inside, \
    oracle_score, oracle_T, point_at, rec

D = default_dictionary()
DAY_MS = 86_400_000
TESTS_DIR = Path(__file__).parent


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


# -- 1 -----------------------------------------------------------------------------

def test_01_determinism_and_runtime(tmp_path, verdict):
    problems, timings = [], {}
    for n in (1, 2, 3, 4):
        outs = []
        for k in range(2):
            out = tmp_path / f"s{n}-{k}"
            t0 = time.perf_counter()
            assert main(["run", "--scenario", str(n), "--seed", "42", "--out", str(out)]) == 0
            timings[(n, k)] = time.perf_counter() - t0
            outs.append(out)
        for name in ("report.json", "store.jsonl"):
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                problems.append(f"scenario {n}: {name} differs")
    slowest = max(timings.values())
    if slowest >= 10.0:
        problems.append(f"slowest run {slowest:.2f}s")
    verdict(1, not problems, problems or f"byte-identical reports and logs, slowest run {slowest:.2f}s")


# -- 2 -----------------------------------------------------------------------------

def test_02_geometry_oracle(verdict):
    rng = random.Random(20_002)
    checked = disagreements = 0
    for _ in range(10_000):
        shape = rng.choice(list(Shape))
        a = rng.uniform(5.0, 5000.0)
        b = a if shape is Shape.CIRCLE else a * rng.uniform(0.05, 1.0)
        az = 0.0 if shape is Shape.CIRCLE else rng.uniform(0.0, 360.0)
        area = GeoArea(shape, GeoPoint.from_degrees(rng.uniform(-80, 80), rng.uniform(-180, 180)), a, b, az)
        lat, lon = destination(area.center.lat, area.center.lon, rng.uniform(0, 360), rng.uniform(0, 3 * a))
        f = geometric_function_deg(area, lat, lon)
        if abs(f) <= 1e-3:
            continue
        checked += 1
        if (f > 0) != oracle_inside(area, lat, lon):
            disagreements += 1
    verdict(2, disagreements == 0 and checked > 9_000,
            f"{disagreements} disagreements over {checked} decisive points of 10000")


# -- 3 -----------------------------------------------------------------------------

def _walk(rng, n, max_step):
    t, out = rng.randrange(0, 1000), []
    for _ in range(n):
        out.append(t)
        t += rng.randint(1, max_step)
    return out


def test_03_preparation_exactness(verdict):
    rng = random.Random(30_003)
    failures = []
    for case in range(1000):
        grid = rng.choice([10, 50, 100, 200])
        # affine continuous signal
        slope, icept = rng.uniform(-5, 5), rng.uniform(60, 120)
        times = _walk(rng, rng.randint(2, 25), 3000)
        s = resample(Series("driver.heart_rate_bpm", tuple(
            rec("driver.heart_rate_bpm", icept + slope * t / 1000.0, t=t) for t in times)), grid, D)
        for r in s.records:
            want = icept + slope * r.generation_time / 1000.0
            if abs(r.value - want) > 1e-9 * abs(want):
                failures.append(f"case {case}: affine error at {r.generation_time}")
        # discrete signal, zero-order hold
        phases = [(t, rng.choice(["red", "yellow", "green"])) for t in times]
        z = resample(Series("traffic.light.phase", tuple(rec("traffic.light.phase", v, t=t) for t, v in phases)),
                     grid, D)
        for r in z.records:
            held = [v for t, v in phases if t <= r.generation_time][-1]
            if r.value != held:
                failures.append(f"case {case}: hold mismatch at {r.generation_time}")
        # gap pattern on the grid
        max_gap = rng.choice([0, 300, 1000, 2000])
        steps, t = [], 0
        for _ in range(rng.randint(2, 20)):
            steps.append(t)
            t += grid * rng.randint(1, 50)
        g = Series("driver.heart_rate_bpm", tuple(rec("driver.heart_rate_bpm", rng.uniform(60, 120), t=x)
                                                  for x in steps), grid)
        out = extrapolate_gaps(g, max_gap)
        last = None
        for r in out.records:
            if r.quality is Quality.MEASURED:
                last = r
            elif r.quality is Quality.EXTRAPOLATED:
                if r.generation_time - last.generation_time > max_gap or r.value != last.value:
                    failures.append(f"case {case}: fill beyond max_gap")
            elif r.quality is Quality.MISSING:
                if r.generation_time - last.generation_time <= max_gap or r.value is not None:
                    failures.append(f"case {case}: flagged inside max_gap")
        if [r.generation_time for r in out.records] != list(range(steps[0], steps[-1] + 1, grid)):
            failures.append(f"case {case}: grid not covered")
    verdict(3, not failures, failures[:3] or "1000 randomized signals and gap patterns exact")


# -- 4 -----------------------------------------------------------------------------

def _days_since_1970(year, month, day):
    def leap(y):
        return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)
    month_len = [31, 29 if leap(year) else 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
    return sum(366 if leap(y) else 365 for y in range(1970, year)) + sum(month_len[:month - 1]) + day - 1


def test_04_time_unification(verdict):
    its_days, gps_days = _days_since_1970(2004, 1, 1), _days_since_1970(1980, 1, 6)
    rng = random.Random(40_004)
    ok = (
        (its_days, gps_days) == (12_418, 3_657)
        and to_unified_time(0, ITS_2004) == its_days * DAY_MS
        and to_unified_time(0, GPS) == gps_days * DAY_MS
        and all(to_unified_time(t, ITS_2004) == its_days * DAY_MS + t
                and to_unified_time(t, GPS) == gps_days * DAY_MS + t
                and to_unified_time(t, UNIX) == t
                for t in (rng.randrange(0, 2**45) for _ in range(1000)))
    )
    verdict(4, ok, f"ITS epoch {its_days} days, GPS epoch {gps_days} days, unix round trip identity")


# -- 5 -----------------------------------------------------------------------------

def test_05_protocol_conformance(verdict):
    svc = FusionService(D, SituationStore(), [GeoArea.circle(ORIGIN, 200)])
    problems = []
    with ServerThread(svc) as srv, FusionClient(*srv.address) as c:
        try:
            c.register("car.dda", "DDA", ["driver.heart_rate_bpm", "driver.mood", "driver.aura_hz"])
            problems.append("unknown keys accepted")
        except ProtocolError as exc:
            if sorted(exc.reply.get("unknown", [])) != ["driver.aura_hz", "driver.mood"]:
                problems.append(f"unknown list {exc.reply}")
        sid = c.register("car.dda", "DDA", ["driver.heart_rate_bpm", "driver.pupil_diameter_mm"])
        if c.send_raw(b"this is not json\n") != {"t": "err", "code": "bad-kind"}:
            problems.append("malformed line reply")
        payload, expected = [], []
        for i in range(30):
            kind = i % 3
            if kind == 0:
                payload.append(record_to_dict(rec("driver.heart_rate_bpm", 70.0 + i, t=1000 + i)))
                expected.append("ok")
            elif kind == 1:
                payload.append(record_to_dict(rec("env.road.friction", 0.5, t=1000 + i)))
                expected.append("key-not-in-session")
            else:
                payload.append(record_to_dict(rec("driver.pupil_diameter_mm", "wide", t=1000 + i)))
                expected.append("value-kind-mismatch")
        reply = c.request({"t": "batch", "session": sid, "records": payload})
        if reply.get("verdicts") != expected:
            problems.append(f"verdicts {reply}")
        # still connected after the malformed line
        if c.send_batch(sid, [rec("driver.heart_rate_bpm", 75.0, t=5000)]) != ["ok"]:
            problems.append("connection lost")
    verdict(5, not problems, problems or "unknown keys listed, 30 verdicts in order, connection survives bad line")


# -- 6 -----------------------------------------------------------------------------

def test_06_conservation(verdict):
    problems, summary = [], []
    runs = {n: run_pipeline(n, 42) for n in (1, 2, 3, 4)}
    runs["clear"] = run_pipeline(3, 42, spec=clear_baseline())
    for name, res in runs.items():
        c = res.report.counts
        stored = res.store.query(EVERYTHING)
        if sum(st.situation.record_count() for st in stored) + c["unassigned"] != c["prepared"]:
            problems.append(f"{name}: records")
        evaluated = sum(1 for st in stored if st.evaluation is not None)
        # a box covering only the western half of the scenario leaves some situations outside
        bounds = res.sim.spec.bounds
        box = (point_at(bounds.center, -bounds.dist_a_m - 50, -bounds.dist_a_m - 50),
               point_at(bounds.center, bounds.dist_a_m + 50, 0))
        for cell in (25, 100, 400):
            grid = build_stress_map(stored, box, cell)
            if grid.total_count + grid.outside != evaluated:
                problems.append(f"{name}: stress map cell {cell}")
        summary.append(f"{name}: {c['situation_records']}+{c['unassigned']}={c['prepared']}")
    verdict(6, not problems, problems or "; ".join(summary))


# -- 7 -----------------------------------------------------------------------------

def _latest(s, key):
    recs = [r for r in s.records.get(key, ()) if r.value is not None]
    return max(recs, key=lambda r: r.generation_time).value if recs else None


def _mean(s, key):
    vals = [r.value for r in s.records.get(key, ()) if r.value is not None]
    return sum(vals) / len(vals) if vals else None


def straight_line(s):
    d = oracle_D(_mean(s, "driver.heart_rate_bpm"), _mean(s, "driver.skin_conductance_us"),
                 _mean(s, "driver.pupil_diameter_mm"), _mean(s, "driver.gaze_on_road_frac"))
    t = oracle_T(_latest(s, "traffic.event.stationary_vehicle") is True, _latest(s, "traffic.vru.pedestrian_count"),
                 _latest(s, "traffic.light.time_to_change_s"), _latest(s, "traffic.tram.present") is True)
    e = oracle_E(_latest(s, "env.weather.visibility_m"), _latest(s, "env.road.friction"),
                 _latest(s, "env.road.bad_condition") is True)
    return d, t, e, oracle_score(d, t, e)


def test_07_scenario_ordering(verdict):
    runs = {2: run_pipeline(2, 42), 3: run_pipeline(3, 42), 4: run_pipeline(4, 42),
            "clear": run_pipeline(3, 42, spec=clear_baseline())}
    problems, means = [], {}
    for name, res in runs.items():
        scores = []
        for st in res.store.query(EVERYTHING):
            want = straight_line(st.situation)
            got = (st.evaluation.D, st.evaluation.T, st.evaluation.E, st.evaluation.score)
            if any(abs(x - y) > 1e-9 for x, y in zip(want, got)):
                problems.append(f"{name}: {st.situation.situation_id} scorer {got} vs oracle {want}")
            scores.append(want[3])
        means[name] = sum(scores) / len(scores)
    if not (means["clear"] > means[2] and means["clear"] > means[3]):
        problems.append(f"ordering {means}")
    expected_fog_e = oracle_E(50.0, 0.4)
    fog = [straight_line(st.situation)[2] for st in runs[3].store.query(EVERYTHING)
           if (_latest(st.situation, "env.weather.visibility_m") or 1e9) <= 100.0]
    if abs(expected_fog_e - 0.575) > 1e-12 or len(fog) < 30 or any(abs(e - 0.575) > 0.01 for e in fog):
        problems.append(f"fog E over {len(fog)} windows: {sorted(set(round(e, 4) for e in fog))}")
    takeover = [st for st in runs[4].store.query(EVERYTHING) if st.situation.records.get("driver.takeover_request")]
    if len(takeover) != 1:
        problems.append(f"{len(takeover)} takeover situations")
    verdict(7, not problems, problems[:3] or (
        f"means clear {means['clear']:.4f} > S2 {means[2]:.4f}, S3 {means[3]:.4f}; "
        f"fog E 0.575 in {len(fog)} windows; one takeover situation"))


# -- 8 -----------------------------------------------------------------------------

CHILD = """
import sys, time
sys.path.insert(0, {tests!r})
from _util import commit_hundred
from sitfusion.storage import SituationStore
commit_hundred(SituationStore({log!r}))
print("COMMITTED", flush=True)
time.sleep(120)
"""


def _query_all(log, capsys):
    capsys.readouterr()
    assert main(["query", "--log", str(log), "--all"]) == 0
    return capsys.readouterr().out


def test_08_storage_durability(tmp_path, capsys, caplog, verdict):
    log = tmp_path / "store.jsonl"
    proc = subprocess.Popen([sys.executable, "-c", CHILD.format(tests=str(TESTS_DIR), log=str(log))],
                            stdout=subprocess.PIPE, text=True)
    try:
        assert proc.stdout.readline().strip() == "COMMITTED"
        proc.send_signal(signal.SIGKILL)
        proc.wait(10)
    finally:
        proc.kill()
        proc.wait()
    problems = []
    replayed = _query_all(log, capsys)
    if len(replayed.splitlines()) != 100:
        problems.append(f"{len(replayed.splitlines())} situations after kill")
    if replayed != _query_all(log, capsys):
        problems.append("replay not repeatable")
    # the same commits applied to an in-memory store give the expected state
    expected = SituationStore()
    commit_hundred(expected)
    if SituationStore.replay(log).dump_lines() != expected.dump_lines():
        problems.append("replayed state differs from an in-memory run of the same commits")
    expected_log = tmp_path / "expected.jsonl"
    lines = log.read_text().splitlines(keepends=True)
    # truncate the final line
    n = len(lines)
    log.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 2])
    expected_log.write_text("".join(lines[:-1]))
    caplog.clear()
    with caplog.at_level("WARNING"):
        truncated = SituationStore.replay(log)
    if f"line {n}" not in caplog.text:
        problems.append(f"warning without line {n}: {caplog.text!r}")
    if truncated.dump_lines() != SituationStore.replay(expected_log).dump_lines():
        problems.append("truncated replay differs from the log without its last line")
    verdict(8, not problems, problems or f"100 commits survive SIGKILL; truncated line {n} skipped with warning")


# -- 9 -----------------------------------------------------------------------------

def test_09_idempotence(verdict):
    rng = random.Random(90_009)
    problems = []
    keys = ["traffic.vru.pedestrian_count", "traffic.light.phase", "traffic.tram.present"]
    area = GeoArea.circle(point_at(ORIGIN, 40, 40), 80)
    for case in range(1000):
        buf = []
        for _ in range(rng.randint(0, 30)):
            key = rng.choice(keys)
            value = {"traffic.vru.pedestrian_count": rng.randint(0, 3),
                     "traffic.light.phase": rng.choice(["red", "green"]),
                     "traffic.tram.present": rng.random() < 0.5}[key]
            pos = point_at(ORIGIN, rng.uniform(0, 15), rng.uniform(0, 15))
            buf.append(rec(key, value, t=rng.randint(0, 3000), dur=rng.randint(0, 1500), pos=pos,
                           source=rng.choice("abcd")))
        once = deduplicate(buf)
        if deduplicate(once) != once or len(once) > len(buf):
            problems.append(f"case {case}: dedup")
        r = rec("env.road.friction", 0.5, t=case, pos=None if rng.random() < 0.5 else ORIGIN)
        p = attach_position(r, area)
        if attach_position(p, area) != p:
            problems.append(f"case {case}: attach_position")
        t, pts = 0, []
        for _ in range(rng.randint(2, 15)):
            pts.append(rec("driver.heart_rate_bpm", rng.uniform(60, 120), t=t))
            t += 100 * rng.randint(1, 40)
        g = Series("driver.heart_rate_bpm", tuple(pts), 100)
        max_gap = rng.choice([0, 500, 2000])
        e = extrapolate_gaps(g, max_gap)
        if extrapolate_gaps(e, max_gap) != e:
            problems.append(f"case {case}: extrapolate_gaps")
    verdict(9, not problems, problems[:3] or "dedup, attach_position, extrapolate_gaps idempotent on 1000 inputs")


# -- 10 ----------------------------------------------------------------------------

AREA10 = GeoArea.circle(ORIGIN, 100)


def _random_values(rng):
    vals = {}
    for key, lo, hi in (("driver.heart_rate_bpm", 40, 140), ("driver.skin_conductance_us", 0, 25),
                        ("driver.pupil_diameter_mm", 2, 8), ("driver.gaze_on_road_frac", 0, 1),
                        ("traffic.light.time_to_change_s", 0, 60), ("env.weather.visibility_m", 0, 400),
                        ("env.road.friction", 0.1, 1.0)):
        if rng.random() < 0.7:
            vals[key] = rng.uniform(lo, hi)
    if rng.random() < 0.7:
        vals["traffic.vru.pedestrian_count"] = rng.randint(0, 6)
    for key in ("traffic.event.stationary_vehicle", "traffic.tram.present", "env.road.bad_condition"):
        if rng.random() < 0.7:
            vals[key] = rng.random() < 0.5
    return vals


def _worsen(vals, rng, component):
    v = dict(vals)
    if component == "D":
        key = rng.choice(["driver.heart_rate_bpm", "driver.skin_conductance_us", "driver.pupil_diameter_mm",
                          "driver.gaze_on_road_frac"])
        lo = {"driver.gaze_on_road_frac": 0.0}.get(key)
        if key not in v:
            return v
        v[key] = v[key] * rng.uniform(0, 1) if lo is not None else v[key] + rng.uniform(0, 20)
    elif component == "T":
        key = rng.choice(["traffic.vru.pedestrian_count", "traffic.event.stationary_vehicle",
                          "traffic.tram.present", "traffic.light.time_to_change_s"])
        if key == "traffic.vru.pedestrian_count":
            v[key] = v.get(key, 0) + rng.randint(0, 3)
        elif key == "traffic.light.time_to_change_s":
            if key in v:
                v[key] = v[key] * rng.uniform(0, 1)
        else:
            v[key] = True
    else:
        key = rng.choice(["env.weather.visibility_m", "env.road.friction", "env.road.bad_condition"])
        if key == "env.road.bad_condition":
            v[key] = True
        elif key in v:
            v[key] = max(0.1 if key == "env.road.friction" else 0.0, v[key] * rng.uniform(0, 1))
    return v


def _situation(vals):
    records = {k: (rec(k, x, t=0, pos=ORIGIN, source="s"),) for k, x in vals.items()}
    return Situation(situation_id(AREA10, 0), AREA10, ValidityInterval(0, 1000), records)


def test_10_monotonicity_and_renormalization(verdict):
    rng = random.Random(100_010)
    problems = []
    default = BaselineScorer()
    for case in range(10_000):
        vals = _random_values(rng)
        s = _situation(vals)
        component = "DTE"[case % 3]
        worse = default.evaluate(_situation(_worsen(vals, rng, component)))
        base = default.evaluate(s)
        if worse.score > base.score + 1e-12 or getattr(worse, component) < getattr(base, component) - 1e-12:
            problems.append(f"case {case}: {component} {vals}")
        raw = [rng.uniform(0.01, 5) for _ in range(3)]
        k = rng.uniform(0.01, 100)
        w1 = ScoreWeights.normalized(*raw)
        w2 = ScoreWeights.normalized(*(x * k for x in raw))
        r1 = BaselineScorer(w1).evaluate(s)
        r2 = BaselineScorer(w2).evaluate(s)
        near = abs(r1.score - w1.threshold) <= 1e-9
        if not near and r1.recommended != r2.recommended:
            problems.append(f"case {case}: renormalization flips recommendation")
        if not math.isclose(r1.score, r2.score, abs_tol=1e-9):
            problems.append(f"case {case}: renormalization changes score")
    verdict(10, not problems, problems[:3] or "10000 situations: monotone in D, T, E; renormalization invariant")
