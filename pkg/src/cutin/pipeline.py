"""End-to-end run: ingest or synthesize, detect, classify, measure, compare."""

from __future__ import annotations

import hashlib
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .classification import attach_and_filter
from .detection import extract_events
from .errors import ConfigInvalid, DirectoryUnreadable, EmptySample, IngestError, NonPositiveMinVelocity
from .ingest import IngestReport, _load_one, discover_pairs
from .metrics import (acceleration_percentage, cumulative_velocity_change, max_acceleration, metric_vector,
                      min_deceleration, slice_window)
from .model import (
    DEFAULT_WINDOWS,
    METRIC_NAMES,
    DetectionParams,
    LaneChangeEvent,
    Recording,
    WindowSpec,
)
from .ranksum import GroupComparison, compare_groups
from .synth import ScenarioSpec, corpus_specs, make_lane_change_scenario

log = logging.getLogger(__name__)

ROLES = ("lcv", "tfv")
ANCHORS = ("T1", "T2")

# (role, anchor, metric) cells that correspond to the published comparison tables
REFERENCE_TABLES: Dict[Tuple[str, str, str], str] = {
    ("lcv", "T1", "dv"): "II",
    ("lcv", "T1", "r_v"): "III",
    ("lcv", "T2", "p_a"): "IV",
    ("lcv", "T2", "a_max"): "V",
    ("tfv", "T1", "a_min"): "VI",
    ("tfv", "T2", "dv"): "VII",
}


def value_column(role: str, window: WindowSpec, metric: str) -> str:
    return f"{role}_{window.key}_{metric}"


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class SyntheticCorpus:
    n_small: int = 20
    n_large: int = 20
    seed: int = 0

    def specs(self) -> List[ScenarioSpec]:
        return corpus_specs(self.n_small, self.n_large, self.seed)


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: Optional[Path] = None
    synthetic: Optional[SyntheticCorpus] = None
    params: DetectionParams = DetectionParams()
    windows: Tuple[WindowSpec, ...] = DEFAULT_WINDOWS
    output_dir: Optional[Path] = None
    formats: Tuple[str, ...] = ("csv", "md")
    workers: Union[int, str] = 1
    planar: bool = False

    def validate(self) -> None:
        if (self.input_dir is None) == (self.synthetic is None):
            raise ConfigInvalid("exactly one of input directory or synthetic corpus is required")
        if not self.windows:
            raise ConfigInvalid("window set must not be empty")
        if not set(self.formats) <= {"csv", "md"} or not self.formats:
            raise ConfigInvalid(f"formats must be a non-empty subset of csv, md; got {self.formats}")
        if self.workers != "auto" and not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigInvalid(f"workers must be a positive integer or 'auto', got {self.workers!r}")
        if self.output_dir is not None:
            out = Path(self.output_dir)
            probe = out if out.exists() else out.parent
            if probe.exists() and not os.access(probe, os.W_OK):
                raise ConfigInvalid(f"output directory {out} is not writable")

    @property
    def n_workers(self) -> int:
        if self.workers == "auto":
            return os.cpu_count() or 1
        return int(self.workers)

    def to_lines(self) -> List[str]:
        """Config-file lines that reproduce this run (output dir excluded)."""
        p = self.params
        lines = [
            f"v_s = {p.v_s!r}",
            f"tau_s = {p.tau_s!r}",
            f"v_e = {p.v_e!r}",
            f"tau_e = {p.tau_e!r}",
            f"min_speed = {p.min_speed!r}",
            "gap_thresholds = " + ",".join(repr(g) for g in p.gap_thresholds),
            f"gap_mode = {p.gap_mode}",
            "windows = " + ";".join(w.label for w in self.windows),
            f"planar = {str(self.planar).lower()}",
        ]
        if self.input_dir is not None:
            lines.append(f"input = {self.input_dir}")
        if self.synthetic is not None:
            s = self.synthetic
            lines += [f"synthetic_small = {s.n_small}", f"synthetic_large = {s.n_large}", f"synthetic_seed = {s.seed}"]
        return lines


_PARAM_KEYS = {f.name for f in fields(DetectionParams)}
_SYNTH_KEYS = ("synthetic_small", "synthetic_large", "synthetic_seed")


def parse_config_text(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Apply ``key = value`` lines to ``base``. Unknown keys are errors."""
    params: Dict[str, object] = {}
    cfg = base
    synth: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _PARAM_KEYS:
                if key == "gap_thresholds":
                    params[key] = tuple(float(v) for v in value.split(",") if v.strip())
                elif key == "gap_mode":
                    params[key] = value
                else:
                    params[key] = float(value)
            elif key == "windows":
                cfg = replace(cfg, windows=tuple(WindowSpec.parse(w) for w in value.split(";") if w.strip()))
            elif key == "planar":
                if value.lower() not in ("true", "false"):
                    raise ValueError("planar must be true or false")
                cfg = replace(cfg, planar=value.lower() == "true")
            elif key == "input":
                cfg = replace(cfg, input_dir=Path(value))
            elif key in _SYNTH_KEYS:
                synth[key[len("synthetic_"):]] = int(value)
            elif key == "formats":
                cfg = replace(cfg, formats=tuple("md" if v.strip() == "markdown" else v.strip()
                                                  for v in value.split(",") if v.strip()))
            elif key == "workers":
                cfg = replace(cfg, workers=value if value == "auto" else int(value))
            else:
                raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigInvalid(f"line {lineno}: bad value for {key}: {exc}") from None
    if params:
        try:
            cfg = replace(cfg, params=replace(cfg.params, **params))
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
    if synth:
        base_s = cfg.synthetic or SyntheticCorpus()
        cfg = replace(cfg, synthetic=SyntheticCorpus(
            n_small=synth.get("small", base_s.n_small),
            n_large=synth.get("large", base_s.n_large),
            seed=synth.get("seed", base_s.seed),
        ))
    return cfg


def load_config(path, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base)


# -- per-recording work ------------------------------------------------------

@dataclass(frozen=True)
class EventRecord:
    event: LaneChangeEvent
    values: Dict[str, float]


@dataclass(frozen=True)
class DropRecord:
    recording_id: int
    vehicle_id: int
    t2: int
    from_lane: int
    to_lane: int
    stage: str
    reason: str
    detail: str = ""
    t1: Optional[int] = None
    t3: Optional[int] = None

    @property
    def key(self):
        return (self.recording_id, self.vehicle_id, self.t2)


@dataclass
class RecordingResult:
    recording_id: int
    transitions: int = 0
    kept: List[EventRecord] = field(default_factory=list)
    drops: List[DropRecord] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def event_values(r: Recording, ev: LaneChangeEvent, windows: Sequence[WindowSpec],
                 planar: bool = False) -> Tuple[Dict[str, float], List[str]]:
    values: Dict[str, float] = {}
    warnings: List[str] = []
    for role, vid in (("lcv", ev.lcv_id), ("tfv", ev.tfv_id)):
        track = r.tracks[vid]
        for w in windows:
            try:
                mv = metric_vector(track, ev.anchor_frame(w.anchor), w, r.dt, planar=planar).as_dict()
            except NonPositiveMinVelocity as exc:
                warnings.append(f"recording {ev.recording_id} vehicle {vid} {w.label}: {exc}")
                mv = _metrics_without_ratio(track, ev, w, r.dt, planar)
            for m in METRIC_NAMES:
                values[value_column(role, w, m)] = mv[m]
    return values, warnings


def _metrics_without_ratio(track, ev, w, dt, planar):
    s = slice_window(track, ev.anchor_frame(w.anchor), w, dt, planar=planar)
    return {"p_a": acceleration_percentage(s), "r_v": float("nan"), "dv": cumulative_velocity_change(s),
            "a_max": max_acceleration(s), "a_min": min_deceleration(s)}


def process_recording(r: Recording, params: DetectionParams, windows: Sequence[WindowSpec],
                      planar: bool = False) -> RecordingResult:
    det = extract_events(r, params)
    res = RecordingResult(r.recording_id, transitions=det.transitions)
    for d in det.drops:
        tr = d.transition
        res.drops.append(DropRecord(r.recording_id, tr.vehicle_id, tr.t2, tr.from_lane, tr.to_lane,
                                    "detection", d.reason))
    kept, dropped = attach_and_filter(det.events, r, params, windows)
    for ev, why in dropped:
        res.drops.append(DropRecord(r.recording_id, ev.lcv_id, ev.t2, ev.origin_lane, ev.target_lane,
                                    "classification", why.code, why.detail, ev.t1, ev.t3))
    for ev in kept:
        values, warns = event_values(r, ev, windows, planar)
        res.kept.append(EventRecord(ev, values))
        res.warnings.extend(warns)
    res.drops.sort(key=lambda d: d.key)
    return res


def _run_job(job) -> Tuple[Optional[RecordingResult], IngestReport]:
    kind, payload, params, windows, planar = job
    report = IngestReport()
    if kind == "synth":
        rec, _ = make_lane_change_scenario(payload, params)
    else:
        rec, report = _load_one((payload[0], payload[1], None))
        if rec is None:
            return None, report
    return process_recording(rec, params, windows, planar), report


# -- statistics grid ---------------------------------------------------------

@dataclass(frozen=True)
class GridCell:
    threshold: float
    window: WindowSpec
    n_cutin: int
    n_other: int
    comparison: Optional[GroupComparison]  # None marks an EmptySample cell


def build_grid(records: Sequence[Tuple[float, Dict[str, float]]], thresholds: Sequence[float],
               windows: Sequence[WindowSpec], role: str, anchor: str, metric: str) -> List[GridCell]:
    """Group comparison per (threshold, window) for one role/anchor/metric table.

    ``records`` are ``(x_gap_at_t1, values)`` pairs.
    """
    gaps = np.array([g for g, _ in records], dtype=float)
    cells = []
    for th in thresholds:
        is_cut = gaps < th
        for w in windows:
            if w.anchor != anchor:
                continue
            col = value_column(role, w, metric)
            vals = np.array([v.get(col, np.nan) for _, v in records], dtype=float)
            ok = ~np.isnan(vals)
            cut, other = vals[is_cut & ok], vals[~is_cut & ok]
            try:
                comp = compare_groups(cut, other, cell=(th, w.label, metric, role))
            except EmptySample:
                comp = None
            cells.append(GridCell(float(th), w, len(cut), len(other), comp))
    return cells


def build_grids(records, thresholds, windows) -> Dict[Tuple[str, str, str], List[GridCell]]:
    grids = {}
    for role in ROLES:
        for anchor in ANCHORS:
            if not any(w.anchor == anchor for w in windows):
                continue
            for metric in METRIC_NAMES:
                grids[(role, anchor, metric)] = build_grid(records, thresholds, windows, role, anchor, metric)
    return grids


# -- bundle ------------------------------------------------------------------

@dataclass
class ReportBundle:
    config: PipelineConfig
    table1: Dict[float, Tuple[int, int]]
    grids: Dict[Tuple[str, str, str], List[GridCell]]
    events: List[EventRecord]
    drops: List[DropRecord]
    drop_audit: Dict[str, int]
    manifest: List[str]
    ingest: IngestReport = field(default_factory=IngestReport)
    warnings: List[str] = field(default_factory=list)

    @property
    def kept_total(self) -> int:
        return len(self.events)

    @property
    def has_events(self) -> bool:
        return bool(self.events)


def table1_counts(gaps: Sequence[float], thresholds: Sequence[float]) -> Dict[float, Tuple[int, int]]:
    gaps = np.asarray(gaps, dtype=float)
    out = {}
    for th in thresholds:
        n_cut = int(np.count_nonzero(gaps < th))
        out[float(th)] = (n_cut, len(gaps) - n_cut)
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(cfg: PipelineConfig, inputs: Sequence[Path]) -> List[str]:
    lines = cfg.to_lines()
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    head = [f"# cutin {__version__} run manifest", f"# config_sha256 {digest}"]
    for p in inputs:
        head.append(f"# input {Path(p).name} sha256 {_sha256(Path(p))}")
    return head + lines


def run_pipeline(cfg: PipelineConfig) -> ReportBundle:
    cfg.validate()
    params, windows = cfg.params, tuple(cfg.windows)
    ingest = IngestReport()
    inputs: List[Path] = []
    if cfg.synthetic is not None:
        jobs = [("synth", spec, params, windows, cfg.planar) for spec in cfg.synthetic.specs()]
    else:
        directory = Path(cfg.input_dir)
        if not directory.is_dir() or not os.access(directory, os.R_OK | os.X_OK):
            raise DirectoryUnreadable(f"cannot read directory {directory}")
        pairs = discover_pairs(directory)
        for t, m in pairs:
            inputs.append(t)
            if m is not None:
                inputs.append(m)
        jobs = [("file", pair, params, windows, cfg.planar) for pair in pairs]
        if not jobs:
            ingest.warnings.append("no recordings found")

    workers = cfg.n_workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    else:
        outcomes = [_run_job(j) for j in jobs]

    results: List[RecordingResult] = []
    for res, rep in outcomes:
        ingest.merge(rep)
        if res is not None:
            results.append(res)
    if jobs and not results and ingest.failed_files:
        raise IngestError("no recording could be loaded: " + "; ".join(f"{p}: {w}" for p, w in ingest.failed_files))

    results.sort(key=lambda r: r.recording_id)
    events = sorted((e for r in results for e in r.kept), key=lambda e: e.event.key)
    drops = sorted((d for r in results for d in r.drops), key=lambda d: d.key)
    warnings = [w for r in results for w in r.warnings]

    audit: Dict[str, int] = {"transitions": sum(r.transitions for r in results), "kept": len(events)}
    for reason, n in sorted(Counter(d.reason for d in drops).items()):
        audit[f"dropped:{reason}"] = n

    gaps = [e.event.x_gap_at_t1 for e in events]
    records = [(e.event.x_gap_at_t1, e.values) for e in events]
    bundle = ReportBundle(
        config=cfg,
        table1=table1_counts(gaps, params.gap_thresholds),
        grids=build_grids(records, params.gap_thresholds, windows),
        events=events,
        drops=drops,
        drop_audit=audit,
        manifest=build_manifest(cfg, inputs),
        ingest=ingest,
        warnings=warnings,
    )
    for w in warnings:
        log.warning(w)
    return bundle
