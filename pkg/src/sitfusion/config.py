"""Run configuration, stored as a JSON document.

Every section is optional::

    {
      "dictionary": {"<key>": {"calibration": [lo, hi], "unit": "...", ...}},
      "weights": {"w_d": 0.40, "w_t": 0.35, "w_e": 0.25,
                  "threshold": 0.6, "threshold_to_vehicle": 0.3},
      "channel": {"local_range_m": 300, "local_latency_ms": 10, "local_loss_prob": 0.01,
                  "cell_latency_ms": 100, "cell_jitter_ms": 20, "cell_loss_prob": 0.001},
      "scenario_params": {"fog": false, "ego_speed_mps": 20.0},
      "scenario": { ...complete scenario document, replaces the built-in one... },
      "fusion": {"window_ms": 1000, "grid_ms": 100, "max_gap_ms": 2000, "split_ms": 1000},
      "monitored_areas": [{"shape": "circle", "lat_e7": ..., "lon_e7": ..., "dist_a_m": ...,
                           "dist_b_m": ..., "azimuth_deg": 0}],
      "auth": "shared-token"
    }

Weights given in ``weights`` that do not sum to 1 are renormalized.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from .evaluation import InvalidWeights, ScoreWeights
from .geo import GeoArea
from .model import DataDictionary, default_dictionary
from .sim.channel import ChannelModel

SECTIONS = frozenset({
    "dictionary", "weights", "channel", "scenario_params", "scenario", "fusion", "monitored_areas", "auth",
})
FUSION_FIELDS = frozenset({"window_ms", "grid_ms", "max_gap_ms", "split_ms"})
OVERRIDABLE = frozenset({"calibration", "unit", "tokens", "description"})


class ConfigError(ValueError):
    pass


def _check_overrides(dictionary: DataDictionary, overrides: dict[str, Any]) -> None:
    for key, o in overrides.items():
        if key not in dictionary:
            raise ConfigError(f"dictionary override for unknown key {key!r}")
        bad = set(o) - OVERRIDABLE
        if bad:
            raise ConfigError(f"{key}: fields {sorted(bad)} cannot be overridden")


@dataclass
class RunConfig:
    dictionary: DataDictionary = field(default_factory=default_dictionary)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    channel: ChannelModel = field(default_factory=ChannelModel)
    scenario_params: dict[str, Any] = field(default_factory=dict)
    scenario: Optional[dict[str, Any]] = None
    fusion: dict[str, int] = field(default_factory=dict)
    monitored_areas: Optional[list[GeoArea]] = None
    auth: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(d) - SECTIONS
        if extra:
            raise ConfigError(f"unknown config sections: {sorted(extra)}")
        cfg = cls()
        try:
            if "dictionary" in d:
                _check_overrides(cfg.dictionary, d["dictionary"])
                cfg.dictionary = default_dictionary().with_overrides(d["dictionary"])
            if "weights" in d:
                w = dict(d["weights"])
                base = {f.name: getattr(cfg.weights, f.name) for f in fields(ScoreWeights)}
                base.update(w)
                cfg.weights = ScoreWeights.normalized(
                    base.pop("w_d"), base.pop("w_t"), base.pop("w_e"), **base)
            if "channel" in d:
                cfg.channel = ChannelModel.from_dict(d["channel"])
            cfg.scenario_params = dict(d.get("scenario_params", {}))
            cfg.scenario = d.get("scenario")
            fusion = dict(d.get("fusion", {}))
            bad = set(fusion) - FUSION_FIELDS
            if bad:
                raise ConfigError(f"unknown fusion settings: {sorted(bad)}")
            if any(not isinstance(v, int) or v <= 0 for v in fusion.values()):
                raise ConfigError("fusion settings must be positive integers")
            cfg.fusion = fusion
            if "monitored_areas" in d:
                cfg.monitored_areas = [GeoArea.from_dict(a) for a in d["monitored_areas"]]
            cfg.auth = d.get("auth")
        except ConfigError:
            raise
        except (InvalidWeights, TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def load_config(path: Optional[os.PathLike | str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return RunConfig.from_dict(data)
