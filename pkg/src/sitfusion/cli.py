"""Command-line entry point: ``sitfusion run|serve|query|stressmap``."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import signal
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .fusion.server import FusionServer
from .fusion.service import FusionService
from .geo import GeoArea
from .model import GeoPoint, ValidityInterval
from .pipeline import STORE_FILE, run_pipeline, scenario_for, write_outputs
from .sim.scenario import BUILTINS, MalformedSpec
from .storage import CorruptLog, EmptyFilter, SituationQuery, SituationStore
from .stressmap import DegenerateBox, build_stress_map, write_stress_map

log = logging.getLogger("sitfusion")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_SCENARIO = 3
EXIT_BIND = 4
EXIT_CORRUPT_LOG = 5
EXIT_BAD_BOX = 6

END_OF_TIME = 2**62


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# -- run ---------------------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config: {exc}")
    if cfg.scenario is None and args.scenario not in BUILTINS:
        return _fail(EXIT_SCENARIO, f"unknown-scenario: {args.scenario}")
    try:
        spec = scenario_for(args.scenario, cfg)
    except MalformedSpec as exc:
        return _fail(EXIT_SCENARIO, str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store_path = out / STORE_FILE
    # each run writes a fresh log so that reruns are byte-identical
    store_path.unlink(missing_ok=True)
    result = run_pipeline(args.scenario, args.seed, cfg, store_path, spec=spec)
    write_outputs(result, out)
    c = result.report.counts
    mean = result.report.mean_suitability
    print(
        f"scenario {spec.scenario_id} seed {args.seed}: {c['situations']} situations, "
        f"emitted {c['emitted']} delivered {c['delivered']} dropped {c['dropped']}, "
        f"ingested {c['ingested']} prepared {c['prepared']} unassigned {c['unassigned']}, "
        f"mean suitability {'n/a' if mean is None else f'{mean:.4f}'}"
    )
    print(f"report written to {out}")
    return EXIT_OK


# -- serve -------------------------------------------------------------------------

def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


async def _serve(service: FusionService, host: str, port: int, ready=None) -> None:
    server = FusionServer(service, host, port)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    # handlers go in before the ready line so an early SIGTERM still commits
    for sig in (signal.SIGTERM, signal.SIGINT):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass
    await server.start()
    addr = server.address
    print(f"listening on {addr[0]}:{addr[1]}", flush=True)
    if ready is not None:
        ready(addr)
    try:
        await stop.wait()
    finally:
        log.info("shutting down")
        await server.shutdown()


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config: {exc}")
    host, port = args.listen
    log_path = Path(args.log)
    try:
        if log_path.exists() and log_path.stat().st_size:
            store = SituationStore.replay(log_path, reopen=True)
        else:
            store = SituationStore(log_path)
    except CorruptLog as exc:
        return _fail(EXIT_CORRUPT_LOG, str(exc))
    try:
        service = FusionService(
            cfg.dictionary, store, cfg.monitored_areas or [], auth_token=cfg.auth, **cfg.fusion)
    except ValueError as exc:
        store.close()
        return _fail(EXIT_CONFIG, f"config: {exc}")
    try:
        asyncio.run(_serve(service, host, port))
    except OSError as exc:
        store.close()
        return _fail(EXIT_BIND, f"bind-failure: {exc}")
    return EXIT_OK


# -- query -------------------------------------------------------------------------

def build_query(args: argparse.Namespace) -> SituationQuery:
    if args.all:
        return SituationQuery(interval=ValidityInterval(0, END_OF_TIME))
    interval = None
    if args.from_ms is not None or args.to_ms is not None:
        start = args.from_ms if args.from_ms is not None else 0
        end = args.to_ms if args.to_ms is not None else END_OF_TIME
        interval = ValidityInterval(start, max(0, end - start))
    area = GeoArea.from_dict(json.loads(args.area)) if args.area else None
    keys = frozenset(args.key) if args.key else None
    return SituationQuery(area=area, interval=interval, keys=keys)


def cmd_query(args: argparse.Namespace) -> int:
    try:
        q = build_query(args)
        q.check()
    except EmptyFilter:
        return _fail(EXIT_USAGE, "empty-filter: give --all or at least one of --from/--to/--area/--key")
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_USAGE, f"bad filter: {exc}")
    try:
        store = SituationStore.replay(args.log, strict=True)
    except CorruptLog as exc:
        return _fail(EXIT_CORRUPT_LOG, str(exc))
    for st in store.query(q):
        sys.stdout.write(json.dumps(st.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    return EXIT_OK


# -- stressmap ---------------------------------------------------------------------

def parse_bbox(text: str) -> tuple[GeoPoint, GeoPoint]:
    try:
        lat1, lon1, lat2, lon2 = (float(x) for x in text.split(","))
        return GeoPoint.from_degrees(lat1, lon1), GeoPoint.from_degrees(lat2, lon2)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LAT1,LON1,LAT2,LON2: {exc}") from exc


def cmd_stressmap(args: argparse.Namespace) -> int:
    try:
        store = SituationStore.replay(args.log, strict=True)
    except CorruptLog as exc:
        return _fail(EXIT_CORRUPT_LOG, str(exc))
    try:
        grid = build_stress_map(store.all(), args.bbox, args.cell)
    except DegenerateBox as exc:
        return _fail(EXIT_BAD_BOX, str(exc))
    write_stress_map(grid, args.out, args.format)
    evaluated = sum(1 for st in store.all() if st.evaluation is not None)
    print(f"cells {grid.total_count} + outside {grid.outside} = evaluated {evaluated}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sitfusion", description="Situation fusion and handover suitability toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and run the full pipeline in-process")
    r.add_argument("--scenario", type=int, required=True)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--config")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("serve", help="run the fusion backend on a TCP socket")
    s.add_argument("--listen", type=parse_hostport, required=True, metavar="HOST:PORT")
    s.add_argument("--config")
    s.add_argument("--log", required=True, help="append-only store log")
    s.set_defaults(func=cmd_serve)

    q = sub.add_parser("query", help="print stored situations, one JSON object per line")
    q.add_argument("--log", required=True)
    q.add_argument("--from", dest="from_ms", type=int)
    q.add_argument("--to", dest="to_ms", type=int)
    q.add_argument("--area", help="area as JSON")
    q.add_argument("--key", action="append")
    q.add_argument("--all", action="store_true")
    q.set_defaults(func=cmd_query)

    m = sub.add_parser("stressmap", help="export a gridded stress map")
    m.add_argument("--log", required=True)
    m.add_argument("--bbox", type=parse_bbox, required=True, metavar="LAT1,LON1,LAT2,LON2")
    m.add_argument("--cell", type=float, default=100.0, help="cell size in metres")
    m.add_argument("--format", choices=("csv", "geojson"), default="csv")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_stressmap)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
