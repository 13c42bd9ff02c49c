import json

import pytest

from sitfusion.config import ConfigError, RunConfig, load_config
from sitfusion.evaluation import ScoreWeights
from sitfusion.geo import GeoArea
from sitfusion.pipeline import scenario_for

from _util import ORIGIN


def test_defaults():
    cfg = load_config(None)
    assert cfg.weights == ScoreWeights() and cfg.fusion == {} and cfg.monitored_areas is None


def test_weights_merge_and_renormalize():
    cfg = RunConfig.from_dict({"weights": {"w_d": 2.0, "w_t": 1.0, "w_e": 1.0, "threshold": 0.5}})
    assert (cfg.weights.w_d, cfg.weights.w_t, cfg.weights.w_e) == pytest.approx((0.5, 0.25, 0.25))
    assert cfg.weights.threshold == 0.5 and cfg.weights.threshold_to_vehicle == 0.3
    partial = RunConfig.from_dict({"weights": {"w_e": 0.25}})
    assert partial.weights == ScoreWeights()


def test_dictionary_overrides():
    cfg = RunConfig.from_dict({"dictionary": {"driver.heart_rate_bpm": {"calibration": [50, 150]}}})
    assert cfg.dictionary["driver.heart_rate_bpm"].calibration == (50, 150)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"dictionary": {"driver.mood": {"unit": "x"}}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"dictionary": {"driver.heart_rate_bpm": {"value_kind": "flag"}}})


@pytest.mark.parametrize("doc", [
    {"colour": "blue"},
    {"weights": {"w_d": -1}},
    {"weights": {"w_d": 0, "w_t": 0, "w_e": 0}},
    {"weights": {"threshold": 1.5}},
    {"fusion": {"window_ms": 0}},
    {"fusion": {"window": 1000}},
    {"channel": {"warp_drive": True}},
    {"monitored_areas": [{"shape": "blob"}]},
    [1, 2, 3],
])
def test_rejections(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_load_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"weights": ')
    with pytest.raises(ConfigError, match="line 1"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_scenario_overrides(tmp_path):
    area = GeoArea.circle(ORIGIN, 100)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"scenario_params": {"fog": False}, "monitored_areas": [area.to_dict()]}))
    spec = scenario_for(3, load_config(p))
    assert spec.name == "clear rural road" and spec.monitored_areas == [area]
