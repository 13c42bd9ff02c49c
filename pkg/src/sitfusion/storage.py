"""Situation storage: in-memory index, append-only log, queries and subscriptions."""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

from .evaluation import SuitabilityResult
from .fusion.situations import Situation
from .geo import GeoArea, areas_overlap
from .model import ValidityInterval

logger = logging.getLogger(__name__)


class StorageError(Exception):
    pass


class ConflictingContent(StorageError):
    pass


class UnknownSituation(StorageError, KeyError):
    pass


class EmptyFilter(StorageError, ValueError):
    pass


class CorruptLog(StorageError):
    def __init__(self, line: int, message: str, store: Optional[SituationStore] = None):
        super().__init__(f"corrupt-log at line {line}: {message}")
        self.line = line
        self.store = store


@dataclass(frozen=True)
class SituationQuery:
    area: Optional[GeoArea] = None
    interval: Optional[ValidityInterval] = None
    keys: Optional[frozenset[str]] = None
    with_evaluation: bool = False

    def check(self) -> None:
        if self.area is None and self.interval is None and self.keys is None and not self.with_evaluation:
            raise EmptyFilter("empty-filter")

    def matches(self, stored: StoredSituation) -> bool:
        s = stored.situation
        if self.area is not None and not areas_overlap(s.area, self.area):
            return False
        if self.interval is not None and not s.window.intersects(self.interval):
            return False
        if self.keys is not None and not (s.keys() & set(self.keys)):
            return False
        if self.with_evaluation and not stored.evaluations:
            return False
        return True


EVERYTHING = SituationQuery(interval=ValidityInterval(0, 2**62))


@dataclass(frozen=True)
class StoredSituation:
    situation: Situation
    stored_at: int
    evaluations: tuple[SuitabilityResult, ...] = ()

    @property
    def evaluation(self) -> Optional[SuitabilityResult]:
        return self.evaluations[-1] if self.evaluations else None

    @property
    def version(self) -> int:
        return len(self.evaluations)

    def to_dict(self) -> dict:
        return {
            "situation": self.situation.to_dict(),
            "stored_at": self.stored_at,
            "evaluation": self.evaluation.to_dict() if self.evaluation else None,
            "version": self.version,
        }


def _order(st: StoredSituation) -> tuple:
    s = st.situation
    return (s.window.start, s.area.center.lat_e7, s.area.center.lon_e7, s.situation_id)


class Subscription:
    """Delivers matching situations committed after subscription, in commit order."""

    def __init__(self, store: SituationStore, filt: Optional[SituationQuery], maxsize: int):
        self._store = store
        self.filter = filt
        self._queue: queue.Queue[StoredSituation] = queue.Queue(maxsize)
        self.cancelled = False

    def _offer(self, st: StoredSituation) -> None:
        if not self.cancelled and (self.filter is None or self.filter.matches(st)):
            # blocks when full: the committer waits for the consumer
            self._queue.put(st)

    def get(self, timeout: Optional[float] = None) -> StoredSituation:
        return self._queue.get(timeout=timeout)

    def drain(self) -> list[StoredSituation]:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def __iter__(self) -> Iterator[StoredSituation]:
        return iter(self.drain())

    def cancel(self) -> None:
        self.cancelled = True
        self._store._unsubscribe(self)


class SituationStore:
    def __init__(
        self,
        log_path: Optional[os.PathLike | str] = None,
        clock: Optional[Callable[[], int]] = None,
        queue_size: int = 1024,
    ):
        self._items: dict[str, StoredSituation] = {}
        self._subs: list[Subscription] = []
        self._lock = threading.RLock()
        self._clock = clock or (lambda: int(time.time() * 1000))
        self.queue_size = queue_size
        self.log_path = Path(log_path) if log_path is not None else None
        self._log = open(self.log_path, "a", encoding="utf-8") if self.log_path else None

    # -- commits ---------------------------------------------------------------

    def _write(self, entry: dict) -> None:
        if self._log is not None:
            self._log.write(json.dumps(entry, separators=(",", ":"), ensure_ascii=False) + "\n")
            self._log.flush()

    def put_situation(self, s: Situation, stored_at: Optional[int] = None) -> str:
        with self._lock:
            existing = self._items.get(s.situation_id)
            if existing is not None:
                if existing.situation.to_dict() != s.to_dict():
                    raise ConflictingContent(s.situation_id)
                return s.situation_id
            st = StoredSituation(s, self._clock() if stored_at is None else stored_at)
            self._write({"op": "put", "stored_at": st.stored_at, "situation": s.to_dict()})
            self._apply_put(st)
            for sub in list(self._subs):
                sub._offer(st)
            return s.situation_id

    def _apply_put(self, st: StoredSituation) -> None:
        self._items[st.situation.situation_id] = st

    def attach_evaluation(self, situation_id: str, result: SuitabilityResult) -> int:
        with self._lock:
            if situation_id not in self._items:
                raise UnknownSituation(situation_id)
            version = self._items[situation_id].version + 1
            self._write({"op": "eval", "id": situation_id, "version": version, "result": result.to_dict()})
            self._apply_eval(situation_id, result)
            return version

    def _apply_eval(self, situation_id: str, result: SuitabilityResult) -> None:
        st = self._items[situation_id]
        self._items[situation_id] = StoredSituation(st.situation, st.stored_at, st.evaluations + (result,))

    # -- reads -------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, situation_id: str) -> bool:
        return situation_id in self._items

    def get(self, situation_id: str) -> StoredSituation:
        try:
            return self._items[situation_id]
        except KeyError:
            raise UnknownSituation(situation_id) from None

    def evaluations(self, situation_id: str) -> tuple[SuitabilityResult, ...]:
        return self.get(situation_id).evaluations

    def evaluation_version(self, situation_id: str, version: int) -> SuitabilityResult:
        return self.get(situation_id).evaluations[version - 1]

    def snapshot(self) -> list[StoredSituation]:
        with self._lock:
            return sorted(self._items.values(), key=_order)

    def query(self, q: SituationQuery) -> list[StoredSituation]:
        q.check()
        return [st for st in self.snapshot() if q.matches(st)]

    def all(self) -> list[StoredSituation]:
        return self.snapshot()

    def subscribe(self, filt: Optional[SituationQuery] = None, maxsize: Optional[int] = None) -> Subscription:
        """Subscribe to future commits; ``filt=None`` receives everything."""
        if filt is not None:
            filt.check()
        sub = Subscription(self, filt, self.queue_size if maxsize is None else maxsize)
        with self._lock:
            self._subs.append(sub)
        return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def close(self) -> None:
        with self._lock:
            if self._log is not None:
                self._log.close()
                self._log = None

    def dump_lines(self) -> list[str]:
        """Canonical text of every stored situation, in query order."""
        return [json.dumps(st.to_dict(), sort_keys=True, separators=(",", ":")) for st in self.snapshot()]

    # -- replay ------------------------------------------------------------------

    @classmethod
    def replay(cls, path: os.PathLike | str, strict: bool = False, reopen: bool = False, **kw) -> SituationStore:
        """Rebuild a store from its append-only log.

        A damaged final line is skipped with a warning (``strict=False``) or
        raises ``CorruptLog``; damage anywhere else always raises. With
        ``reopen`` the returned store keeps appending to ``path`` (a damaged
        tail is cut off first).
        """
        store = cls(**kw)
        path = Path(path)
        if not path.exists():
            raise CorruptLog(0, f"no such log: {path}")
        raw = path.read_bytes()
        lines = raw.split(b"\n")
        trailing = lines.pop()  # text after the last newline: b"" for a clean log
        good_bytes = len(raw) - len(trailing)
        entries = [(i + 1, ln) for i, ln in enumerate(lines)]
        if trailing:
            entries.append((len(lines) + 1, trailing))
        for n, (lineno, ln) in enumerate(entries):
            is_last = n == len(entries) - 1
            try:
                entry = json.loads(ln.decode("utf-8"))
                if is_last and trailing:
                    raise ValueError("line not terminated")
                store._replay_entry(entry)
            except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
                if is_last and not strict:
                    logger.warning("skipping incomplete final log line %d of %s: %s", lineno, path, exc)
                    good_bytes = sum(len(l) + 1 for _, l in entries[:n])
                    break
                raise CorruptLog(lineno, str(exc), store) from exc
        if reopen:
            with open(path, "r+b") as fh:
                fh.truncate(good_bytes)
            store.log_path = path
            store._log = open(path, "a", encoding="utf-8")
        return store

    def _replay_entry(self, entry: dict) -> None:
        op = entry["op"]
        if op == "put":
            s = Situation.from_dict(entry["situation"])
            if s.situation_id in self._items:
                raise ValueError(f"duplicate put for {s.situation_id}")
            self._apply_put(StoredSituation(s, entry["stored_at"]))
        elif op == "eval":
            sid = entry["id"]
            if sid not in self._items:
                raise ValueError(f"evaluation for unknown situation {sid}")
            if entry["version"] != self._items[sid].version + 1:
                raise ValueError(f"evaluation version gap for {sid}")
            self._apply_eval(sid, SuitabilityResult.from_dict(entry["result"]))
        else:
            raise ValueError(f"unknown log op {op!r}")
