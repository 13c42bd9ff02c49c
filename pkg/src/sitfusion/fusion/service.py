"""Backend data fusion: registration, ingestion, preparation and situation commits."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..aggregators import AggregatorKind
from ..geo import GeoArea
from ..model import DataDictionary, DataRecord, Quality, Verdict, validate_record
from ..preparation import (
    DEFAULT_GRID_MS,
    DEFAULT_MAX_GAP_MS,
    DEFAULT_SPLIT_MS,
    attach_position,
    prepare,
)
from ..storage import SituationStore
from .situations import DEFAULT_WINDOW_MS, Situation, assemble_situations, check_disjoint


class FusionError(Exception):
    pass


class RegistrationRejected(FusionError):
    def __init__(self, code: str, unknown: Sequence[str] = ()):
        super().__init__(f"{code}: {list(unknown)}" if unknown else code)
        self.code = code
        self.unknown = list(unknown)


class UnknownSession(FusionError, KeyError):
    pass


@dataclass(frozen=True)
class RegistrationRequest:
    aggregator_id: str
    kind: AggregatorKind
    keys: frozenset[str]
    auth: Optional[str] = None
    # where unpositioned records of this aggregator are located (TDA/EDA responsibility)
    area: Optional[GeoArea] = None


@dataclass(frozen=True)
class Session:
    session_id: str
    aggregator_id: str
    kind: AggregatorKind
    accepted_keys: frozenset[str]
    established: int
    area: Optional[GeoArea] = None


def ingest_note(session_id: str) -> str:
    return f"ingest:{session_id}"


@dataclass
class CommitResult:
    situations: list[Situation]
    unassigned: int
    prepared: int
    ingested: int


@dataclass
class FusionService:
    dictionary: DataDictionary
    store: SituationStore
    monitored_areas: Sequence[GeoArea] = ()
    window_ms: int = DEFAULT_WINDOW_MS
    grid_ms: int = DEFAULT_GRID_MS
    max_gap_ms: int = DEFAULT_MAX_GAP_MS
    split_ms: int = DEFAULT_SPLIT_MS
    auth_token: Optional[str] = None
    sessions: dict[str, Session] = field(default_factory=dict)
    pending: list[DataRecord] = field(default_factory=list)
    ingested_total: int = 0
    prepared_total: int = 0
    unassigned_total: int = 0
    _seq: int = 0
    _ingest_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _commit_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.monitored_areas = list(self.monitored_areas)
        check_disjoint(self.monitored_areas)

    def register(self, req: RegistrationRequest, now: int = 0) -> Session:
        if self.auth_token is not None and req.auth != self.auth_token:
            raise RegistrationRejected("auth")
        if not req.keys:
            raise RegistrationRejected("empty-key-set")
        unknown = sorted(k for k in req.keys if k not in self.dictionary)
        if unknown:
            raise RegistrationRejected("unknown-keys", unknown)
        with self._ingest_lock:
            self._seq += 1
            sid = f"sess-{self._seq:04d}-{req.aggregator_id}"
            session = Session(sid, req.aggregator_id, req.kind, frozenset(req.keys), now, req.area)
            self.sessions[sid] = session
        return session

    def close_session(self, session_id: str) -> None:
        self.sessions.pop(session_id, None)

    def ingest(self, session_id: str, batch: Iterable[DataRecord]) -> list[Verdict]:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        verdicts: list[Verdict] = []
        accepted: list[DataRecord] = []
        for r in batch:
            if r.key not in session.accepted_keys:
                verdicts.append(Verdict.reject("key-not-in-session", r.key))
                continue
            v = validate_record(r, self.dictionary)
            if v.ok and r.quality is not Quality.MEASURED:
                v = Verdict.reject("not-measured", r.quality.value)
            verdicts.append(v)
            if v.ok:
                if r.position is None and session.area is not None:
                    r = attach_position(r, session.area)
                accepted.append(r.with_note(ingest_note(session_id)))
        with self._ingest_lock:
            self.pending.extend(accepted)
            self.ingested_total += len(accepted)
        return verdicts

    def commit(self, stored_at: Optional[int] = None) -> CommitResult:
        """Prepare everything pending, assemble situations and write them to the store."""
        with self._commit_lock:
            with self._ingest_lock:
                batch, self.pending = self.pending, []
            prepared = prepare(
                batch, self.dictionary,
                grid_ms=self.grid_ms, max_gap_ms=self.max_gap_ms, split_ms=self.split_ms,
            )
            assembly = assemble_situations(prepared, self.monitored_areas, self.window_ms)
            for s in assembly.situations:
                self.store.put_situation(s, stored_at)
            self.prepared_total += len(prepared)
            self.unassigned_total += assembly.unassigned_count
            return CommitResult(assembly.situations, assembly.unassigned_count, len(prepared), len(batch))
