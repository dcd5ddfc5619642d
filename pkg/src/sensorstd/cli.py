"""``sensorstd`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 data-level failure (invalid, non-convergent,
unfusable), 2 usage error (bad flags, unreadable files, bad config).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .config import GlobalConfig
from .evaluate import GroundTruthPath, evaluate_run, write_report
from .exceptions import SensorStdError, UnmatchedLeaf
from .fusion.ekf import MeasurementPacket
from .fusion.filter import run_filter
from .ingest.pipeline import IngestPipeline
from .ingest.replay import replay
from .schema import RawPayload, dumps_doc, read_ndjson, write_ndjson
from .standardizer import MockMapping, make_backend, standardize
from .trgm import TransformationScript, apply_script, derive_script, validate_script
from .validation import validate_dataset

LOG_ENV = "SENSORSTD_LOG_LEVEL"
logger = logging.getLogger("sensorstd")


class UsageError(Exception):
    pass


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit_records(records, out) -> None:
    if out:
        write_ndjson(out, records)
    else:
        for rec in records:
            sys.stdout.write(dumps_doc(rec) + "\n")


def _print_doc(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def cmd_standardize(args, cfg: GlobalConfig) -> int:
    mapping = MockMapping.load(args.mapping) if args.mapping else None
    backend = make_backend(cfg.standardizer, mapping)
    raw = RawPayload(args.source, args.received_at or time.time_ns(), _read_json(args.input))
    outcome = standardize(backend, raw, max_iterations=cfg.standardizer.max_iterations)
    summary = {"converged": outcome.converged, "iterations_used": outcome.iterations_used,
               "report": outcome.final_report.to_document()}
    sys.stderr.write(dumps_doc(summary) + "\n")
    if not outcome.converged:
        return 1
    _emit_records(outcome.dataset, args.out)
    return 0


def cmd_validate(args, cfg: GlobalConfig) -> int:
    report = validate_dataset(read_ndjson(args.input))
    _print_doc(report.to_document())
    return 0 if report.valid else 1


def cmd_gen_rules(args, cfg: GlobalConfig) -> int:
    raw, target = _read_json(args.input), read_ndjson(args.target)
    try:
        script = derive_script(raw, target)
    except UnmatchedLeaf as exc:
        _print_doc({"error": "UnmatchedLeaf", "paths": list(exc.paths)})
        return 1
    outcome = validate_script(script, raw, target, cfg.standardizer.max_iterations)
    if args.out:
        outcome.script.dump(args.out)
    else:
        _print_doc(outcome.script.to_document())
    if not outcome.converged:
        sys.stderr.write(dumps_doc(outcome.report.to_document()) + "\n")
        return 1
    return 0


def cmd_transform(args, cfg: GlobalConfig) -> int:
    result = apply_script(TransformationScript.load(args.script), _read_json(args.input))
    for w in result.warnings:
        logger.warning("%s", w)
    if not result.complete:
        missing = [r.to_document() for r in result.missing]
        sys.stderr.write(dumps_doc({"error": "RuleSourceMissing", "rules": missing}) + "\n")
        return 1
    _emit_records(result.records, args.out)
    return 0 if validate_dataset(result.records).valid else 1


def cmd_fuse(args, cfg: GlobalConfig) -> int:
    records = read_ndjson(args.input)
    packets = [MeasurementPacket.from_document(d) for d in read_ndjson(args.measurements)] if args.measurements else []
    run = run_filter(records, cfg.fusion, packets)
    _emit_records(run.trajectory, args.out)
    if run.dropped:
        logger.warning("%d late items dropped", run.dropped)
    return 0


def cmd_evaluate(args, cfg: GlobalConfig) -> int:
    evaluation = evaluate_run(read_ndjson(args.trajectory), GroundTruthPath.load(args.truth), args.label,
                              planar=args.planar)
    if args.out:
        doc = write_report(evaluation, args.out, args.csv)
    else:
        if args.csv:
            evaluation.write_csv(args.csv)
        doc = evaluation.to_document(args.csv)
    _print_doc(doc)
    return 0


def cmd_serve(args, cfg: GlobalConfig) -> int:
    from .ingest.service import serve

    ingest = cfg.ingest
    if args.host or args.port:
        from dataclasses import replace

        ingest = replace(ingest, host=args.host or ingest.host, port=args.port or ingest.port)
    pipeline = IngestPipeline(ingest, cfg.fusion, cfg.standardizer, threaded=True)
    serve(ingest, pipeline)
    return 0


def _speed(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("speed must be > 0")
    return value


def cmd_replay(args, cfg: GlobalConfig) -> int:
    pipeline = IngestPipeline(cfg.ingest, cfg.fusion, cfg.standardizer)
    speed = args.speed if args.speed is not None else cfg.ingest.speed
    summary = replay(args.log, speed, pipeline)
    pipeline.close()
    if args.out:
        write_ndjson(args.out, pipeline.trajectory)
    doc = summary.to_document()
    doc["counters"] = pipeline.counter_document()
    _print_doc(doc)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorstd", description="Sensor data standardization and fusion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="configuration document (JSON)")
    parser.add_argument("--log-level", help=f"logging level (default from ${LOG_ENV} or the config)")
    # the global options are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="configuration document (JSON)")
    common.add_argument("--log-level", default=argparse.SUPPRESS, help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, text):
        return sub.add_parser(name, help=text, parents=[common])

    p = add("standardize", "standardize one raw payload")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--mapping", help="mock backend mapping document")
    p.add_argument("--source", default="cli")
    p.add_argument("--received-at", type=int)
    p.set_defaults(func=cmd_standardize)

    p = add("validate", "validate a standardized dataset")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_validate)

    p = add("gen-rules", "derive a transformation script from an example pair")
    p.add_argument("--input", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_rules)

    p = add("transform", "apply a transformation script")
    p.add_argument("--script", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_transform)

    p = add("fuse", "run the EKF over a standardized dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--measurements", help="newline-delimited VPS measurement packets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse)

    p = add("evaluate", "score a trajectory against a ground-truth path")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--out", help="report document path")
    p.add_argument("--csv", help="error series CSV path")
    p.add_argument("--planar", action="store_true", help="measure distances in the horizontal plane")
    p.set_defaults(func=cmd_evaluate)

    p = add("serve", "run the ingestion HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = add("replay", "replay a recorded payload log")
    p.add_argument("--log", required=True)
    p.add_argument("--speed", type=_speed, help="time multiplier; 'inf' for no pacing")
    p.add_argument("--out", help="write the fused trajectory here")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = GlobalConfig.load(args.config) if args.config else GlobalConfig()
        level = args.log_level or os.environ.get(LOG_ENV) or cfg.log_level
        if not isinstance(logging.getLevelName(level.upper()), int):
            raise UsageError(f"unknown log level {level!r}")
        logging.basicConfig(level=level.upper(), stream=sys.stderr,
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    except (OSError, ValueError, TypeError, UsageError) as exc:
        sys.stderr.write(f"sensorstd: {exc}\n")
        return 2
    try:
        return args.func(args, cfg)
    except OSError as exc:
        sys.stderr.write(f"sensorstd: {exc}\n")
        return 2
    except (SensorStdError, ValueError, KeyError, TypeError) as exc:
        sys.stderr.write(f"sensorstd: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
