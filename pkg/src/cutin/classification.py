"""Target-follower attachment, exclusion rules and gap-based cut-in labels."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FrameOutOfRange, VehicleMissingAtFrame
from .model import (
    DEFAULT_WINDOWS,
    DetectionParams,
    LaneChangeEvent,
    Recording,
    WindowSpec,
    window_to_frames,
)

CUT_IN = "CutIn"
OTHER = "OtherLaneChange"

# first rule that fires wins, in this order
NO_TFV = "NoTfvThroughout"
TFV_CHANGED = "TfvChanged"
LOW_SPEED = "LowSpeed"
WINDOW_OFF_TRACK = "WindowOffTrack"
EXCLUSION_CODES = (NO_TFV, TFV_CHANGED, LOW_SPEED, WINDOW_OFF_TRACK)


@dataclass(frozen=True)
class ExclusionReason:
    code: str
    detail: str = ""


@dataclass(frozen=True)
class ClassifiedEvent:
    event: LaneChangeEvent
    labels: Dict[float, str]

    def is_cut_in(self, threshold: float) -> bool:
        return self.labels[threshold] == CUT_IN


def target_following_vehicle(r: Recording, lcv_id: int, target_lane: int, t: int) -> Optional[int]:
    """Nearest vehicle behind the LCV in ``target_lane`` at frame ``t``, if any."""
    lcv = r.tracks[lcv_id]
    if not lcv.has_frame(t):
        raise FrameOutOfRange(lcv_id, t)
    ids, x = _followers_at(r, lcv_id, target_lane, t)
    if len(ids) == 0:
        return None
    nearest = x == x.max()
    return int(ids[nearest].min())


def _followers_at(r: Recording, lcv_id: int, target_lane: int, t: int):
    lcv = r.tracks[lcv_id]
    x_lcv = lcv.x[lcv.index_of(t)]
    fi = r.frame_index
    sl = fi.at(t)
    mask = (
        (fi.lane_id[sl] == target_lane)
        & (fi.direction[sl] == lcv.direction)
        & (fi.vehicle_id[sl] != lcv_id)
        & (fi.x[sl] < x_lcv)
    )
    return fi.vehicle_id[sl][mask], fi.x[sl][mask]


def followers_over(r: Recording, lcv_id: int, target_lane: int, start: int, end: int) -> np.ndarray:
    """TFV id per frame on ``[start, end]``; -1 where there is none."""
    lcv = r.tracks[lcv_id]
    i0, i1 = lcv.index_of(start), lcv.index_of(end)
    fi = r.frame_index
    lo = int(np.searchsorted(fi.frames, start, side="left"))
    hi = int(np.searchsorted(fi.frames, end, side="right"))
    frames = fi.frames[lo:hi]
    x_lcv = lcv.x[i0:i1 + 1][frames - start]
    mask = (
        (fi.lane_id[lo:hi] == target_lane)
        & (fi.direction[lo:hi] == lcv.direction)
        & (fi.vehicle_id[lo:hi] != lcv_id)
        & (fi.x[lo:hi] < x_lcv)
    )
    out = np.full(end - start + 1, -1, dtype=np.int64)
    f, vid, x = frames[mask] - start, fi.vehicle_id[lo:hi][mask], fi.x[lo:hi][mask]
    if len(f) == 0:
        return out
    # nearest = largest x per frame; equal x resolves to the lowest id
    order = np.lexsort((-vid, x, f))
    fs = f[order]
    last = np.flatnonzero(np.r_[fs[1:] != fs[:-1], True])
    out[fs[last]] = vid[order][last]
    return out


def x_gap(r: Recording, lcv_id: int, tfv_id: int, t: int, mode: str = "net_gap") -> float:
    lcv, tfv = r.tracks[lcv_id], r.tracks[tfv_id]
    for trk in (lcv, tfv):
        if not trk.has_frame(t):
            raise VehicleMissingAtFrame(trk.vehicle_id, t)
    xl = float(lcv.x[lcv.index_of(t)])
    xf = float(tfv.x[tfv.index_of(t)])
    if mode == "center_distance":
        return xl - xf
    if mode == "net_gap":
        return max(0.0, (xl - 0.5 * lcv.length) - (xf + 0.5 * tfv.length))
    raise ValueError(f"unknown gap mode {mode!r}")


def exclusion_for(event: LaneChangeEvent, r: Recording, p: DetectionParams,
                  windows: Sequence[WindowSpec] = DEFAULT_WINDOWS) -> Tuple[Optional[ExclusionReason], Optional[int]]:
    """Return (reason, tfv_id); reason is None when the event is kept."""
    lcv = r.tracks[event.lcv_id]
    tfv_ids = followers_over(r, event.lcv_id, event.target_lane, event.t1, event.t3)
    missing = np.flatnonzero(tfv_ids < 0)
    if len(missing):
        return ExclusionReason(NO_TFV, f"no follower at frame {event.t1 + int(missing[0])}"), None
    distinct = np.unique(tfv_ids)
    if len(distinct) > 1:
        return ExclusionReason(TFV_CHANGED, "followers " + ",".join(str(int(v)) for v in distinct)), None
    tfv_id = int(distinct[0])
    tfv = r.tracks[tfv_id]
    v_l = lcv.vx[lcv.index_of(event.t1):lcv.index_of(event.t3) + 1]
    v_f = tfv.vx[tfv.index_of(event.t1):tfv.index_of(event.t3) + 1]
    if np.any(v_l <= p.min_speed) or np.any(v_f <= p.min_speed):
        return ExclusionReason(LOW_SPEED, f"min speeds lcv={v_l.min():.3f} tfv={v_f.min():.3f}"), tfv_id
    for w in windows:
        s, e = window_to_frames(w, event.anchor_frame(w.anchor), r.dt)
        for trk in (lcv, tfv):
            if not (trk.has_frame(s) and trk.has_frame(e)):
                return ExclusionReason(
                    WINDOW_OFF_TRACK, f"{w.label} = [{s},{e}] outside vehicle {trk.vehicle_id}"
                ), tfv_id
    return None, tfv_id


def attach_and_filter(events: Sequence[LaneChangeEvent], r: Recording, p: DetectionParams = DetectionParams(),
                      windows: Sequence[WindowSpec] = DEFAULT_WINDOWS):
    """Split events into kept (with TFV and gap filled in) and dropped with reasons."""
    kept: List[LaneChangeEvent] = []
    dropped: List[Tuple[LaneChangeEvent, ExclusionReason]] = []
    for ev in events:
        reason, tfv_id = exclusion_for(ev, r, p, windows)
        if reason is not None:
            dropped.append((ev, reason))
            continue
        kept.append(replace(ev, tfv_id=tfv_id, x_gap_at_t1=x_gap(r, ev.lcv_id, tfv_id, ev.t1, p.gap_mode)))
    return kept, dropped


def label(gap: float, threshold: float) -> str:
    return CUT_IN if gap < threshold else OTHER


def classify(event: LaneChangeEvent, thresholds: Sequence[float]) -> ClassifiedEvent:
    if event.x_gap_at_t1 is None:
        raise ValueError("event has no x_gap_at_t1; run attach_and_filter first")
    return ClassifiedEvent(event, {float(th): label(event.x_gap_at_t1, th) for th in thresholds})


def count_table(events: Sequence[LaneChangeEvent], thresholds: Sequence[float]) -> Dict[float, Tuple[int, int]]:
    """(cut-in, other) counts per threshold."""
    out = {}
    gaps = np.array([e.x_gap_at_t1 for e in events], dtype=float)
    for th in thresholds:
        n_cut = int(np.sum(gaps < th))
        out[float(th)] = (n_cut, len(gaps) - n_cut)
    return out
