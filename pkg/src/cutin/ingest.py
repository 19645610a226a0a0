"""Load highD-style CSV recordings into :class:`~cutin.model.Recording`.

A recording is a pair ``NN_tracks.csv`` + ``NN_recordingMeta.csv``, with an
optional ``NN_tracksMeta.csv`` supplying vehicle class and driving direction.
Header names default to the public highD layout and can be remapped, so other
corpora load without code changes.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import (
    DirectoryUnreadable,
    EmptyRecording,
    IngestError,
    MissingColumn,
    NonContiguousFrames,
    UnknownLaneId,
)
from .model import Recording, VehicleTrack, lanes_from_markings

log = logging.getLogger(__name__)

# canonical name -> header in the tracks file
HIGHD_TRACK_COLUMNS: Dict[str, str] = {
    "frame": "frame",
    "vehicle_id": "id",
    "x": "x",
    "y": "y",
    "length": "width",  # highD "width" is the extent along x
    "width": "height",
    "vx": "xVelocity",
    "vy": "yVelocity",
    "ax": "xAcceleration",
    "ay": "yAcceleration",
    "lane_id": "laneId",
}
OPTIONAL_TRACK_COLUMNS = frozenset({"ay"})

HIGHD_META_COLUMNS: Dict[str, str] = {
    "recording_id": "id",
    "frame_rate": "frameRate",
    "upper_markings": "upperLaneMarkings",
    "lower_markings": "lowerLaneMarkings",
}

HIGHD_TRACKS_META_COLUMNS: Dict[str, str] = {
    "vehicle_id": "id",
    "vehicle_class": "class",
    "driving_direction": "drivingDirection",
}

TRACKS_SUFFIX = "_tracks.csv"
META_SUFFIX = "_recordingMeta.csv"
TRACKS_META_SUFFIX = "_tracksMeta.csv"

# tolerated backwards speed after sign normalization (m/s)
VX_EPS = 0.01


class RowRejection(NamedTuple):
    file: str
    line: int
    vehicle_id: Optional[int]
    reason: str


class Violation(NamedTuple):
    code: str
    vehicle_id: Optional[int]
    frame: Optional[int]
    detail: str


@dataclass
class IngestReport:
    recordings_loaded: int = 0
    tracks_loaded: int = 0
    rejections: List[RowRejection] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    failed_files: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def rows_rejected(self) -> int:
        return len(self.rejections)

    def merge(self, other: "IngestReport") -> None:
        self.recordings_loaded += other.recordings_loaded
        self.tracks_loaded += other.tracks_loaded
        self.rejections.extend(other.rejections)
        self.warnings.extend(other.warnings)
        self.failed_files.extend(other.failed_files)


def parse_markings(value) -> List[float]:
    """Parse a ``"8.51;12.59;16.43"`` style lane-marking field."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return []
    text = str(value).strip().strip("[]")
    if not text:
        return []
    sep = ";" if ";" in text else ","
    return sorted(float(p) for p in text.split(sep) if p.strip())


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyRecording(f"{path}: file is empty") from None
    except pd.errors.ParserError as exc:
        raise IngestError(f"{path}: {exc}") from None


def _require(df: pd.DataFrame, mapping: Mapping[str, str], path: Path, optional=frozenset()) -> None:
    for canon, header in mapping.items():
        if canon not in optional and header not in df.columns:
            raise MissingColumn(header, path)


def _read_meta(meta_file: Path, columns: Mapping[str, str]):
    meta = _read_csv(meta_file)
    _require(meta, columns, meta_file)
    if meta.empty:
        raise EmptyRecording(f"{meta_file}: no metadata row")
    row = meta.iloc[0]
    try:
        rec_id = int(float(row[columns["recording_id"]]))
        frame_rate = float(row[columns["frame_rate"]])
    except ValueError as exc:
        raise IngestError(f"{meta_file}: {exc}") from None
    if not frame_rate > 0:
        raise IngestError(f"{meta_file}: frame rate must be positive, got {frame_rate}")
    upper = parse_markings(row[columns["upper_markings"]])
    lower = parse_markings(row[columns["lower_markings"]])
    return rec_id, frame_rate, upper, lower


def _read_tracks_meta(path: Optional[Path], columns: Mapping[str, str]) -> Dict[int, Tuple[str, Optional[int]]]:
    if path is None or not path.exists():
        return {}
    df = _read_csv(path)
    _require(df, {"vehicle_id": columns["vehicle_id"]}, path)
    out = {}
    cls_col = columns.get("vehicle_class")
    dir_col = columns.get("driving_direction")
    for _, row in df.iterrows():
        vid = int(float(row[columns["vehicle_id"]]))
        cls = str(row[cls_col]).strip().lower() if cls_col in df.columns else "car"
        ddir = None
        if dir_col in df.columns and str(row[dir_col]).strip():
            ddir = int(float(row[dir_col]))
        out[vid] = (cls or "car", ddir)
    return out


def load_recording(
    tracks_file,
    meta_file,
    *,
    tracks_meta_file=None,
    columns: Optional[Mapping[str, str]] = None,
    meta_columns: Optional[Mapping[str, str]] = None,
    report: Optional[IngestReport] = None,
    strict: bool = True,
) -> Recording:
    """Parse one recording.

    Rows with blank or non-numeric kinematics are dropped and listed in
    ``report``. A vehicle left with a frame gap by such drops is removed as a
    whole (with a warning). Gaps or unknown lane ids present in the source
    raise unless ``strict`` is false, in which case the recording is returned
    as-is for :func:`validate_recording` to inspect.

    When ``tracks_meta_file`` is None, a sibling ``NN_tracksMeta.csv`` is
    used if present.
    """
    tracks_file = Path(tracks_file)
    meta_file = Path(meta_file)
    cols = dict(HIGHD_TRACK_COLUMNS)
    cols.update(columns or {})
    mcols = dict(HIGHD_META_COLUMNS)
    mcols.update(meta_columns or {})
    if report is None:
        report = IngestReport()
    if tracks_meta_file is None and tracks_file.name.endswith(TRACKS_SUFFIX):
        sibling = tracks_file.with_name(tracks_file.name[: -len(TRACKS_SUFFIX)] + TRACKS_META_SUFFIX)
        tracks_meta_file = sibling if sibling.exists() else None

    rec_id, frame_rate, upper, lower = _read_meta(meta_file, mcols)
    dt = 1.0 / frame_rate
    centers, directions = lanes_from_markings(upper, lower)
    vmeta = _read_tracks_meta(Path(tracks_meta_file) if tracks_meta_file else None, HIGHD_TRACKS_META_COLUMNS)

    raw = _read_csv(tracks_file)
    _require(raw, cols, tracks_file, OPTIONAL_TRACK_COLUMNS)
    if raw.empty:
        raise EmptyRecording(f"{tracks_file}: no track rows")

    present = [c for c in cols if cols[c] in raw.columns]
    num = {c: pd.to_numeric(raw[cols[c]].str.strip(), errors="coerce").to_numpy(dtype=np.float64) for c in present}
    if "ay" not in num:
        num["ay"] = np.zeros(len(raw))

    bad = np.zeros(len(raw), dtype=bool)
    for c in present:
        nan_rows = ~np.isfinite(num[c])
        for i in np.flatnonzero(nan_rows & ~bad):
            vid = num["vehicle_id"][i]
            report.rejections.append(
                RowRejection(
                    str(tracks_file),
                    int(i) + 2,  # 1-based, after the header line
                    None if not np.isfinite(vid) else int(vid),
                    f"non-numeric {cols[c]}",
                )
            )
        bad |= nan_rows
    touched = {int(v) for v in num["vehicle_id"][bad] if np.isfinite(v)}

    keep = ~bad
    vid_all = num["vehicle_id"][keep].astype(np.int64)
    frame_all = num["frame"][keep].astype(np.int64)
    lines = np.flatnonzero(keep) + 2
    order = np.lexsort((frame_all, vid_all))
    vid_all, frame_all, lines = vid_all[order], frame_all[order], lines[order]
    data = {c: num[c][keep][order] for c in num}
    if len(vid_all) == 0:
        raise EmptyRecording(f"{tracks_file}: every row was rejected")

    breaks = np.flatnonzero(np.diff(vid_all)) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(vid_all)]])

    tracks: Dict[int, VehicleTrack] = {}
    for s, e in zip(starts, ends):
        vid = int(vid_all[s])
        frames = frame_all[s:e]
        gaps = np.diff(frames)
        if np.any(gaps != 1):
            if vid in touched:
                report.warnings.append(f"{tracks_file.name}: vehicle {vid} dropped, rejected rows left a frame gap")
                for ln in lines[s:e]:
                    report.rejections.append(RowRejection(str(tracks_file), int(ln), vid, "vehicle dropped after gap"))
                continue
            if strict:
                k = int(np.flatnonzero(gaps != 1)[0])
                raise NonContiguousFrames(vid, f"{frames[k]}->{frames[k + 1]}")
        lane = data["lane_id"][s:e].astype(np.int64)
        unknown = ~np.isin(lane, list(centers))
        if strict and np.any(unknown):
            k = int(np.flatnonzero(unknown)[0])
            raise UnknownLaneId(vid, int(frames[k]), int(lane[k]))

        cls, ddir = vmeta.get(vid, ("car", None))
        if ddir in (1, 2):
            direction = -1 if ddir == 1 else 1
        elif not unknown[0]:
            direction = directions[int(lane[0])]
        else:
            direction = 1 if np.median(data["vx"][s:e]) >= 0 else -1

        length = float(data["length"][s])
        width = float(data["width"][s])
        vx = data["vx"][s:e] * direction
        if np.any(vx < -VX_EPS):
            report.warnings.append(
                f"{tracks_file.name}: vehicle {vid} moves backwards after normalization (min vx {vx.min():.3f})"
            )
        tracks[vid] = VehicleTrack(
            vehicle_id=vid,
            vehicle_class=cls,
            length=length,
            width=width,
            direction=direction,
            frames=frames,
            x=(data["x"][s:e] + 0.5 * length) * direction,
            y=data["y"][s:e] + 0.5 * width,
            vx=vx,
            vy=data["vy"][s:e],
            ax=data["ax"][s:e] * direction,
            ay=data["ay"][s:e],
            lane_id=lane,
        )

    if not tracks:
        raise EmptyRecording(f"{tracks_file}: no usable tracks")
    rec = Recording(rec_id, dt, centers, directions, tracks, markings={-1: tuple(upper), 1: tuple(lower)})
    report.recordings_loaded += 1
    report.tracks_loaded += len(tracks)
    return rec


def validate_recording(r: Recording) -> List[Violation]:
    """Check model invariants; an empty list means the recording is valid."""
    out: List[Violation] = []
    for lanes in _lanes_by_direction(r).values():
        ys = sorted(r.lane_centers[l] for l in lanes)
        for a, b in zip(ys, ys[1:]):
            if b - a <= 1.0:
                out.append(Violation("LaneGeometry", None, None, f"lane centers {a} and {b} closer than 1 m"))
    for vid, t in r.tracks.items():
        if len(t) == 0:
            out.append(Violation("EmptyTrack", vid, None, "track has no states"))
            continue
        if not (t.length > 0 and t.width > 0):
            out.append(Violation("NonPositiveDimension", vid, None, f"length={t.length} width={t.width}"))
        gaps = np.flatnonzero(np.diff(t.frames) != 1)
        if len(gaps):
            k = int(gaps[0])
            out.append(Violation("NonContiguousFrames", vid, int(t.frames[k]),
                                 f"{t.frames[k]}->{t.frames[k + 1]}"))
        unknown = np.flatnonzero(~np.isin(t.lane_id, list(r.lane_centers)))
        if len(unknown):
            k = int(unknown[0])
            out.append(Violation("UnknownLaneId", vid, int(t.frames[k]), f"lane {t.lane_id[k]}"))
        dirs = {r.lane_directions[int(l)] for l in np.unique(t.lane_id) if int(l) in r.lane_directions}
        if len(dirs) > 1 or (dirs and dirs != {t.direction}):
            out.append(Violation("MixedDirection", vid, None, f"track direction {t.direction}, lanes {sorted(dirs)}"))
    return out


def _lanes_by_direction(r: Recording) -> Dict[int, List[int]]:
    out: Dict[int, List[int]] = {}
    for lane, d in r.lane_directions.items():
        out.setdefault(d, []).append(lane)
    return out


def discover_pairs(directory) -> List[Tuple[Path, Optional[Path]]]:
    directory = Path(directory)
    pairs = []
    for tracks in sorted(directory.glob("*" + TRACKS_SUFFIX)):
        prefix = tracks.name[: -len(TRACKS_SUFFIX)]
        meta = directory / (prefix + META_SUFFIX)
        pairs.append((tracks, meta if meta.exists() else None))
    return pairs


def _load_one(args) -> Tuple[Optional[Recording], IngestReport]:
    tracks, meta, columns = args
    rep = IngestReport()
    if meta is None:
        rep.failed_files.append((str(tracks), "no matching recording meta file"))
        return None, rep
    try:
        rec = load_recording(tracks, meta, columns=columns, report=rep)
    except IngestError as exc:
        rep.failed_files.append((str(tracks), f"{type(exc).__name__}: {exc}"))
        return None, rep
    return rec, rep


def load_corpus(directory, *, columns=None, workers: int = 1) -> Tuple[List[Recording], IngestReport]:
    """Load every recording pair under ``directory``; failures go to the report."""
    directory = Path(directory)
    if not directory.is_dir() or not os.access(directory, os.R_OK | os.X_OK):
        raise DirectoryUnreadable(f"cannot read directory {directory}")
    report = IngestReport()
    jobs = [(t, m, columns) for t, m in discover_pairs(directory)]
    if not jobs:
        report.warnings.append("no recordings found")
        return [], report
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_load_one, jobs))
    else:
        results = [_load_one(j) for j in jobs]
    recordings = []
    for rec, rep in results:
        report.merge(rep)
        if rec is not None:
            recordings.append(rec)
    for path, why in report.failed_files:
        log.warning("skipped %s: %s", path, why)
    return recordings, report
