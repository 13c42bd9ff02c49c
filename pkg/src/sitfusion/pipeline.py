"""In-process end-to-end run: simulation, aggregators, fusion, storage, evaluation.

Everything is single-threaded and driven by the simulated delivery times, so a
(scenario, seed, config) triple always produces the same report and store log.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .aggregators import Aggregator, AggregatorKind, Batch
from .config import RunConfig
from .evaluation import BaselineScorer, Direction, Scorer
from .fusion.service import FusionService, RegistrationRequest, Session
from .model import DataRecord, validate_record
from .sim.engine import SimulationResult, run_scenario
from .sim.scenario import ScenarioSpec, builtin_scenario
from .storage import SituationStore, StoredSituation

log = logging.getLogger(__name__)

BACKEND_FLUSH_MS = 1000
TDA_ID = "backend.tda"
EDA_ID = "backend.eda"

REPORT_FILE = "report.json"
STORE_FILE = "store.jsonl"
STREAM_FILE = "stream.ndjson"
DROPS_FILE = "drops.ndjson"


@dataclass
class RunReport:
    scenario_id: int
    seed: int
    scorer_id: str
    counts: dict[str, int]
    mean_suitability: Optional[float]
    travel_times: dict[str, dict]
    situations: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "scorer_id": self.scorer_id,
            "counts": dict(self.counts),
            "mean_suitability": self.mean_suitability,
            "travel_times": self.travel_times,
            "situations": self.situations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def check_identities(self) -> list[str]:
        """Conservation identities that must hold for every run; returns the violated ones."""
        c = self.counts
        bad = []
        if c["delivered"] != c["emitted"] - c["dropped"]:
            bad.append("delivered = emitted - dropped")
        if c["ingested"] > c["delivered"]:
            bad.append("ingested <= delivered")
        if c["situation_records"] + c["unassigned"] != c["prepared"]:
            bad.append("situation records + unassigned = prepared")
        if c["evaluated"] != c["situations"]:
            bad.append("evaluated = situations")
        return bad


@dataclass
class PipelineResult:
    report: RunReport
    store: SituationStore
    sim: SimulationResult


def scenario_for(n: int, cfg: RunConfig) -> ScenarioSpec:
    if cfg.scenario is not None:
        spec = ScenarioSpec.from_dict(cfg.scenario, cfg.dictionary)
    else:
        spec = builtin_scenario(n, cfg.dictionary, **cfg.scenario_params)
    if cfg.monitored_areas is not None:
        spec.monitored_areas = list(cfg.monitored_areas)
    return spec


class _Backend:
    """Backend side of the run: TDA/EDA aggregation and fusion ingest."""

    def __init__(self, spec: ScenarioSpec, sim: SimulationResult, cfg: RunConfig, store: SituationStore):
        d = cfg.dictionary
        self.service = FusionService(d, store, spec.monitored_areas, auth_token=cfg.auth, **cfg.fusion)
        self.tda = Aggregator(TDA_ID, AggregatorKind.TDA, d, responsibility=spec.tda_area)
        self.eda = Aggregator(EDA_ID, AggregatorKind.EDA, d, responsibility=spec.eda_area)
        self.sessions: dict[str, Session] = {}
        for agg in [self.tda, self.eda, *sim.aggregators.values()]:
            area = agg.responsibility
            req = RegistrationRequest(agg.aggregator_id, agg.kind, agg.registered_keys, cfg.auth, area)
            self.sessions[agg.aggregator_id] = self.service.register(req, spec.start_ms)
        self.rejected = 0
        self.reasons: dict[str, int] = {}

    def _reject(self, reason: str) -> None:
        self.rejected += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    def record(self, r: DataRecord) -> None:
        v = validate_record(r, self.service.dictionary)
        if v.ok:
            if r.key.startswith("traffic."):
                v = self.tda.accept_record(r)
            elif r.key.startswith("env."):
                v = self.eda.accept_record(r)
            else:
                self._reject("no-aggregator")
                return
        if not v.ok:
            self._reject(v.reason)

    def batch(self, b: Batch) -> None:
        session = self.sessions.get(b.aggregator_id)
        if session is None:
            for _ in b.records:
                self._reject("unknown-session")
            return
        for v in self.service.ingest(session.session_id, b.records):
            if not v.ok:
                self._reject(v.reason)

    def flush(self) -> None:
        for agg in (self.tda, self.eda):
            b = agg.flush()
            if b.records:
                self.batch(b)


def run_pipeline(
    n: int,
    seed: int,
    cfg: Optional[RunConfig] = None,
    log_path: Optional[os.PathLike | str] = None,
    scorer: Optional[Scorer] = None,
    spec: Optional[ScenarioSpec] = None,
) -> PipelineResult:
    cfg = cfg or RunConfig()
    spec = spec or scenario_for(n, cfg)
    scorer = scorer or BaselineScorer(cfg.weights, cfg.dictionary)
    sim = run_scenario(spec, seed, cfg.dictionary, cfg.channel)

    store = SituationStore(log_path)
    backend = _Backend(spec, sim, cfg, store)
    next_flush = spec.start_ms + BACKEND_FLUSH_MS
    for d in sim.backend():
        while d.time >= next_flush:
            backend.flush()
            next_flush += BACKEND_FLUSH_MS
        if isinstance(d.payload, DataRecord):
            backend.record(d.payload)
        elif isinstance(d.payload, Batch):
            backend.batch(d.payload)
    backend.flush()

    sub = store.subscribe(maxsize=0)
    commit = backend.service.commit(stored_at=spec.end_ms)
    committed: list[StoredSituation] = sub.drain()
    sub.cancel()

    rows = []
    for st in committed:
        result = scorer.evaluate(st.situation, Direction.VEHICLE_TO_DRIVER)
        store.attach_evaluation(st.situation.situation_id, result)
        rows.append({
            "id": st.situation.situation_id,
            "window_start": st.situation.window.start,
            "records": st.situation.record_count(),
            **{k: v for k, v in result.to_dict().items() if k not in ("scorer_id",)},
        })
    rows.sort(key=lambda r: (r["window_start"], r["id"]))
    scores = [r["score"] for r in rows]

    counts = {
        "generated": sim.generated,
        "emitted": sim.emitted,
        "delivered": sim.delivered,
        "dropped": sim.dropped,
        "backend_records": sum(
            len(d.payload.records) if isinstance(d.payload, Batch) else 1
            for d in sim.backend() if isinstance(d.payload, (Batch, DataRecord))),
        "rejected": backend.rejected,
        "ingested": backend.service.ingested_total,
        "prepared": commit.prepared,
        "situations": len(commit.situations),
        "situation_records": sum(s.record_count() for s in commit.situations),
        "unassigned": commit.unassigned,
        "evaluated": len(rows),
    }
    report = RunReport(
        spec.scenario_id, seed, scorer.scorer_id, counts,
        sum(scores) / len(scores) if scores else None,
        sim.travel.summary(), rows,
    )
    violated = report.check_identities()
    if violated:
        raise AssertionError(f"conservation identities violated: {violated}")
    if backend.reasons:
        log.info("backend rejections: %s", dict(sorted(backend.reasons.items())))
    store.close()
    return PipelineResult(report, store, sim)


def write_outputs(result: PipelineResult, out_dir: os.PathLike | str) -> Path:
    """Write report, simulated stream and drop log; the store log is written by the run itself."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(result.report.to_json(), encoding="utf-8")
    (out / STREAM_FILE).write_text("".join(line + "\n" for line in result.sim.stream_lines()), encoding="utf-8")
    (out / DROPS_FILE).write_text("".join(line + "\n" for line in result.sim.drop_lines()), encoding="utf-8")
    return out
