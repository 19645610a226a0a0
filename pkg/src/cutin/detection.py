"""Lane-change detection: lane-id transitions and the start/completion instants.

The start instant ``t1`` of a transition at ``t2`` is the earliest frame
``t`` before ``t2`` (within the run of frames spent in the origin lane) where
the lateral velocity towards the target lane is non-negative, is non-decreasing
for ``tau_s`` seconds, and has reached ``v_s`` at the end of that span.
The completion instant ``t3`` is the earliest frame after ``t2`` from which
``|v| <= v_e`` holds for ``tau_e`` seconds.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .model import DetectionParams, LaneChangeEvent, Recording, VehicleTrack, offset_to_frames

MONOTONE_SLACK = 1e-9

# detection-stage drop reasons
NEAR_TRACK_START = "TransitionNearTrackStart"
NEAR_TRACK_END = "TransitionNearTrackEnd"
NO_T1 = "NoStartInstant"
NO_T3 = "NoCompletionInstant"


class LaneTransition(NamedTuple):
    vehicle_id: int
    t2: int
    from_lane: int
    to_lane: int


@dataclass(frozen=True)
class DetectionDrop:
    recording_id: int
    transition: LaneTransition
    reason: str


@dataclass
class DetectionResult:
    events: List[LaneChangeEvent] = field(default_factory=list)
    drops: List[DetectionDrop] = field(default_factory=list)
    transitions: int = 0

    def drop_counts(self) -> Counter:
        return Counter(d.reason for d in self.drops)


def find_lane_transitions(track: VehicleTrack) -> List[LaneTransition]:
    lanes = track.lane_id
    idx = np.flatnonzero(lanes[1:] != lanes[:-1]) + 1
    return [
        LaneTransition(track.vehicle_id, int(track.frames[i]), int(lanes[i - 1]), int(lanes[i]))
        for i in idx
    ]


def _direction_sign(lane_centers, y: np.ndarray, from_lane: int, to_lane: int) -> np.ndarray:
    target = lane_centers[to_lane]
    s = np.sign(target - y)
    tie = np.sign(target - lane_centers[from_lane])
    return np.where(s == 0, tie, s)


def lateral_velocity_towards(track: VehicleTrack, lane_centers, from_lane: int, to_lane: int) -> np.ndarray:
    """Per-frame lateral velocity, positive when moving towards the target lane center."""
    return track.vy * _direction_sign(lane_centers, track.y, from_lane, to_lane)


def signed_lateral_velocity(r: Recording, track: VehicleTrack, target_lane: int, t: int,
                            origin_lane: Optional[int] = None) -> float:
    i = track.index_of(t)
    if origin_lane is None:
        origin_lane = int(track.lane_id[i])
        if origin_lane == target_lane:
            raise ValueError("origin lane needed when the vehicle already is in the target lane")
    s = _direction_sign(r.lane_centers, track.y[i:i + 1], origin_lane, target_lane)[0]
    return float(track.vy[i] * s)


def _origin_run_start(track: VehicleTrack, i2: int) -> int:
    """First index of the contiguous run of the pre-transition lane ending at ``i2 - 1``."""
    lane = track.lane_id[i2 - 1]
    changes = np.flatnonzero(track.lane_id[:i2] != lane)
    return int(changes[-1]) + 1 if len(changes) else 0


def start_instant_index(v: np.ndarray, lo: int, i2: int, n_tau: int, v_s: float) -> Optional[int]:
    """Index form of the start search over candidates ``lo <= t < i2``."""
    n = len(v)
    hi = min(i2, n - n_tau)  # exclusive: t + n_tau must stay on the track
    if hi <= lo:
        return None
    cand = np.arange(lo, hi)
    bad_step = np.diff(v) < -MONOTONE_SLACK
    csum = np.concatenate([[0], np.cumsum(bad_step)])
    # steps t..t+n_tau-1 must all be non-decreasing
    monotone = (csum[cand + n_tau] - csum[cand]) == 0
    ok = (v[cand] >= 0) & (v[cand + n_tau] >= v_s) & monotone
    hits = np.flatnonzero(ok)
    return int(cand[hits[0]]) if len(hits) else None


def completion_instant_index(v: np.ndarray, i2: int, n_tau: int, v_e: float) -> Optional[int]:
    n = len(v)
    lo, hi = i2 + 1, n - n_tau
    if hi <= lo:
        return None
    inside = np.abs(v) <= v_e
    csum = np.concatenate([[0], np.cumsum(~inside)])
    cand = np.arange(lo, hi)
    ok = (csum[cand + n_tau + 1] - csum[cand]) == 0
    hits = np.flatnonzero(ok)
    return int(cand[hits[0]]) if len(hits) else None


def detect_t1(r: Recording, track: VehicleTrack, transition: LaneTransition,
              p: DetectionParams = DetectionParams()) -> Optional[int]:
    if transition.vehicle_id != track.vehicle_id:
        raise ValueError("transition belongs to another vehicle")
    i2 = track.index_of(transition.t2)
    v = lateral_velocity_towards(track, r.lane_centers, transition.from_lane, transition.to_lane)
    i = start_instant_index(v, _origin_run_start(track, i2), i2, offset_to_frames(p.tau_s, r.dt), p.v_s)
    return None if i is None else int(track.frames[i])


def detect_t3(r: Recording, track: VehicleTrack, transition: LaneTransition,
              p: DetectionParams = DetectionParams()) -> Optional[int]:
    if transition.vehicle_id != track.vehicle_id:
        raise ValueError("transition belongs to another vehicle")
    i2 = track.index_of(transition.t2)
    v = lateral_velocity_towards(track, r.lane_centers, transition.from_lane, transition.to_lane)
    i = completion_instant_index(v, i2, offset_to_frames(p.tau_e, r.dt), p.v_e)
    return None if i is None else int(track.frames[i])


def detect_track(r: Recording, track: VehicleTrack, p: DetectionParams) -> DetectionResult:
    res = DetectionResult()
    n_s = offset_to_frames(p.tau_s, r.dt)
    n_e = offset_to_frames(p.tau_e, r.dt)
    transitions = find_lane_transitions(track)
    res.transitions = len(transitions)
    for tr in transitions:
        i2 = track.index_of(tr.t2)
        if i2 < n_s:
            res.drops.append(DetectionDrop(r.recording_id, tr, NEAR_TRACK_START))
            continue
        if i2 + n_e >= len(track):
            res.drops.append(DetectionDrop(r.recording_id, tr, NEAR_TRACK_END))
            continue
        v = lateral_velocity_towards(track, r.lane_centers, tr.from_lane, tr.to_lane)
        i1 = start_instant_index(v, _origin_run_start(track, i2), i2, n_s, p.v_s)
        if i1 is None:
            res.drops.append(DetectionDrop(r.recording_id, tr, NO_T1))
            continue
        i3 = completion_instant_index(v, i2, n_e, p.v_e)
        if i3 is None:
            res.drops.append(DetectionDrop(r.recording_id, tr, NO_T3))
            continue
        res.events.append(LaneChangeEvent(
            recording_id=r.recording_id,
            lcv_id=track.vehicle_id,
            t1=int(track.frames[i1]),
            t2=tr.t2,
            t3=int(track.frames[i3]),
            origin_lane=tr.from_lane,
            target_lane=tr.to_lane,
        ))
    return res


def extract_events(r: Recording, p: DetectionParams = DetectionParams()) -> DetectionResult:
    """Detect every complete lane change in ``r``, ordered by (vehicle id, t2)."""
    out = DetectionResult()
    for vid in sorted(r.tracks):
        res = detect_track(r, r.tracks[vid], p)
        out.events.extend(res.events)
        out.drops.extend(res.drops)
        out.transitions += res.transitions
    out.events.sort(key=lambda e: (e.lcv_id, e.t2))
    return out
