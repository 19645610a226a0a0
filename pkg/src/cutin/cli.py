"""Command-line entry point: ``cutin run|synth|validate|stats``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .errors import ConfigInvalid, IngestError
from .ingest import IngestReport, discover_pairs, load_recording, validate_recording

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INGEST = 2
EXIT_NO_EVENTS = 3

log = logging.getLogger("cutin")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors, not argparse's default status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _gaps(text: str):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gap list {text!r}") from None


def _workers(text: str):
    if text == "auto":
        return text
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("workers must be a positive integer or 'auto'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be a positive integer or 'auto'")
    return n


def _formats(text: str):
    out = tuple(f.strip() for f in text.split(",") if f.strip())
    out = tuple("md" if f == "markdown" else f for f in out)
    if not out or not set(out) <= {"csv", "md"}:
        raise argparse.ArgumentTypeError("format must be csv, md or csv,md")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cutin", description="Detect lane changes, classify cut-ins and compare driving metrics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="full pipeline on a highD-style directory or a synthetic corpus")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--input", type=Path, help="directory with NN_tracks.csv / NN_recordingMeta.csv pairs")
    src.add_argument("--synthetic", metavar="SMALL,LARGE[,SEED]",
                     help="generate a corpus of SMALL close cut-ins and LARGE wide-gap lane changes")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--gaps", type=_gaps)
    run.add_argument("--config", type=Path)
    run.add_argument("--format", type=_formats)
    run.add_argument("--workers", type=_workers)

    syn = sub.add_parser("synth", help="write a synthetic corpus in highD layout plus ground truth")
    syn.add_argument("--out", type=Path, required=True)
    syn.add_argument("--n-small", type=int, default=20)
    syn.add_argument("--n-large", type=int, default=20)
    syn.add_argument("--seed", type=int, default=0)

    val = sub.add_parser("validate", help="ingest a directory and report schema or consistency problems")
    val.add_argument("--input", type=Path, required=True)

    st = sub.add_parser("stats", help="recompute count and comparison tables from a saved events.csv")
    st.add_argument("--input", type=Path, required=True, help="events.csv written by 'run'")
    st.add_argument("--out", type=Path, required=True)
    st.add_argument("--gaps", type=_gaps)
    st.add_argument("--config", type=Path)
    st.add_argument("--format", type=_formats)
    return p


def _config_from_args(args):
    from .pipeline import PipelineConfig, SyntheticCorpus, load_config

    cfg = PipelineConfig()
    if args.config is not None:
        cfg = load_config(args.config, cfg)
    if getattr(args, "input", None) is not None:
        cfg = replace(cfg, input_dir=args.input, synthetic=None)
    if getattr(args, "synthetic", None):
        try:
            parts = [int(v) for v in args.synthetic.split(",")]
        except ValueError:
            raise ConfigInvalid(f"bad --synthetic value {args.synthetic!r}") from None
        if len(parts) not in (2, 3) or min(parts[:2]) < 0:
            raise ConfigInvalid("--synthetic takes SMALL,LARGE[,SEED]")
        cfg = replace(cfg, input_dir=None, synthetic=SyntheticCorpus(*parts))
    if args.gaps is not None:
        try:
            cfg = replace(cfg, params=replace(cfg.params, gap_thresholds=args.gaps))
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
    if args.format is not None:
        cfg = replace(cfg, formats=args.format)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return replace(cfg, output_dir=args.out)


def cmd_run(args) -> int:
    from .pipeline import run_pipeline
    from .report import write_bundle

    cfg = _config_from_args(args)
    bundle = run_pipeline(cfg)
    for w in bundle.ingest.warnings:
        log.warning(w)
    for path, why in bundle.ingest.failed_files:
        log.warning("skipped %s: %s", path, why)
    write_bundle(bundle, cfg.output_dir, cfg.formats)
    audit = ", ".join(f"{k}={v}" for k, v in bundle.drop_audit.items())
    print(f"{audit}; outputs in {cfg.output_dir}")
    return EXIT_OK if bundle.has_events else EXIT_NO_EVENTS


def cmd_synth(args) -> int:
    from .synth import corpus_specs, make_lane_change_scenario, write_highd_files

    if args.n_small < 0 or args.n_large < 0:
        raise ConfigInvalid("scenario counts must be non-negative")
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in corpus_specs(args.n_small, args.n_large, args.seed):
        rec, truth = make_lane_change_scenario(spec)
        write_highd_files(rec, args.out)
        for m in truth.maneuvers:
            rows.append([rec.recording_id, truth.lcv_id, "" if truth.tfv_id is None else truth.tfv_id,
                         "" if m.t1 is None else m.t1, m.t2, "" if m.t3 is None else m.t3, m.from_lane, m.to_lane,
                         "" if truth.x_gap_at_t1 is None else repr(truth.x_gap_at_t1)])
    with open(args.out / "ground_truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "lcv_id", "tfv_id", "t1", "t2", "t3", "from_lane", "to_lane", "x_gap_at_t1"])
        w.writerows(rows)
    print(f"wrote {args.n_small + args.n_large} recordings to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    directory = args.input
    if not directory.is_dir():
        raise IngestError(f"cannot read directory {directory}")
    pairs = discover_pairs(directory)
    if not pairs:
        print("no recordings found")
        return EXIT_INGEST
    report = IngestReport()
    problems = 0
    for tracks, meta in pairs:
        if meta is None:
            print(f"{tracks.name}: no matching recording meta file")
            problems += 1
            continue
        try:
            rec = load_recording(tracks, meta, report=report, strict=False)
        except IngestError as exc:
            print(f"{tracks.name}: {type(exc).__name__}: {exc}")
            problems += 1
            continue
        violations = validate_recording(rec)
        for v in violations:
            where = f" frame {v.frame}" if v.frame is not None else ""
            print(f"{tracks.name}: {v.code} vehicle {v.vehicle_id}{where}: {v.detail}")
        problems += len(violations)
        print(f"{tracks.name}: {len(rec.tracks)} tracks, {len(violations)} violations")
    for w in report.warnings:
        print(f"warning: {w}")
    if report.rows_rejected:
        print(f"{report.rows_rejected} rows rejected")
    return EXIT_INGEST if problems else EXIT_OK


def cmd_stats(args) -> int:
    from .pipeline import build_grids, table1_counts
    from .report import emit_comparison_table, emit_table1, read_events, table_name

    cfg = _config_from_args(argparse.Namespace(config=args.config, input=None, synthetic=None, gaps=args.gaps,
                                               format=args.format, out=args.out))
    records = read_events(args.input, cfg.windows)
    th = cfg.params.gap_thresholds
    args.out.mkdir(parents=True, exist_ok=True)
    table1 = table1_counts([g for g, _ in records], th)
    for fmt in cfg.formats:
        (args.out / f"table1.{fmt}").write_text(emit_table1(table1, fmt, empty=not records), encoding="utf-8",
                                               newline="")
        for (role, anchor, metric), cells in build_grids(records, th, cfg.windows).items():
            (args.out / f"{table_name(role, anchor, metric)}.{fmt}").write_text(
                emit_comparison_table(cells, fmt, role=role, anchor=anchor, metric=metric), encoding="utf-8",
                newline="")
    print(f"{len(records)} events; outputs in {args.out}")
    return EXIT_OK if records else EXIT_NO_EVENTS


COMMANDS = {"run": cmd_run, "synth": cmd_synth, "validate": cmd_validate, "stats": cmd_stats}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST


if __name__ == "__main__":
    sys.exit(main())
