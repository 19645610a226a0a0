"""In-memory model shared by every stage: tracks, recordings, events, windows.

Coordinates are canonical: for each vehicle ``x`` grows in its direction of
travel and ``vx``/``ax`` are positive when moving/accelerating forward.
``y``/``vy`` keep the source dataset convention, because lane geometry is
expressed in those coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import FrameOutOfRange

DEFAULT_DT = 0.04

# Per-frame arrays every track carries, in storage order.
TRACK_ARRAYS = ("frames", "x", "y", "vx", "vy", "ax", "ay", "lane_id")


class VehicleState(NamedTuple):
    frame: int
    x: float
    y: float
    vx: float
    vy_raw: float
    ax: float
    lane_id: int


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VehicleTrack:
    """Frame-sampled kinematics of one vehicle.

    ``direction`` is +1 for vehicles whose raw x grows while driving and -1
    for the opposite carriageway; canonical ``x``/``vx``/``ax`` are already
    multiplied by it.
    """

    vehicle_id: int
    vehicle_class: str
    length: float
    width: float
    direction: int
    frames: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    lane_id: np.ndarray

    def __post_init__(self):
        n = len(self.frames)
        for name in TRACK_ARRAYS:
            dtype = np.int64 if name in ("frames", "lane_id") else np.float64
            arr = _frozen_array(getattr(self, name), dtype)
            if arr.shape != (n,):
                raise ValueError(f"track {self.vehicle_id}: array {name!r} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if self.direction not in (1, -1):
            raise ValueError(f"track {self.vehicle_id}: direction must be +1 or -1")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def has_frame(self, frame: int) -> bool:
        return len(self.frames) > 0 and self.first_frame <= frame <= self.last_frame

    def index_of(self, frame: int) -> int:
        """Array index of ``frame``; tracks are contiguous so this is an offset."""
        if not self.has_frame(frame):
            raise FrameOutOfRange(self.vehicle_id, frame)
        return int(frame - self.first_frame)

    def state(self, frame: int) -> VehicleState:
        i = self.index_of(frame)
        return VehicleState(
            int(self.frames[i]),
            float(self.x[i]),
            float(self.y[i]),
            float(self.vx[i]),
            float(self.vy[i]),
            float(self.ax[i]),
            int(self.lane_id[i]),
        )

    def states(self) -> Iterator[VehicleState]:
        for f in self.frames:
            yield self.state(int(f))

    def same_as(self, other: "VehicleTrack", atol: float = 0.0) -> bool:
        if (self.vehicle_id, self.vehicle_class, self.direction) != (
            other.vehicle_id,
            other.vehicle_class,
            other.direction,
        ):
            return False
        if not (math.isclose(self.length, other.length, rel_tol=0, abs_tol=atol)
                and math.isclose(self.width, other.width, rel_tol=0, abs_tol=atol)):
            return False
        for name in TRACK_ARRAYS:
            a, b = getattr(self, name), getattr(other, name)
            if a.shape != b.shape:
                return False
            if atol == 0.0:
                if not np.array_equal(a, b):
                    return False
            elif not np.allclose(a, b, rtol=0.0, atol=atol):
                return False
        return True


def lanes_from_markings(upper: Sequence[float], lower: Sequence[float]) -> Tuple[Dict[int, float], Dict[int, int]]:
    """Lane centers and travel directions using the highD numbering scheme.

    Lane ``2 + i`` lies between ``upper[i]`` and ``upper[i+1]``; lower lanes
    continue at ``len(upper) + 2``. Upper lanes travel towards negative x.
    """
    centers: Dict[int, float] = {}
    directions: Dict[int, int] = {}
    upper = sorted(float(m) for m in upper)
    lower = sorted(float(m) for m in lower)
    for i in range(len(upper) - 1):
        lane = 2 + i
        centers[lane] = 0.5 * (upper[i] + upper[i + 1])
        directions[lane] = -1
    base = len(upper) + 2
    for i in range(len(lower) - 1):
        lane = base + i
        centers[lane] = 0.5 * (lower[i] + lower[i + 1])
        directions[lane] = 1
    return centers, directions


@dataclass(frozen=True, eq=False)
class Recording:
    recording_id: int
    dt: float
    lane_centers: Mapping[int, float]
    lane_directions: Mapping[int, int]
    tracks: Mapping[int, VehicleTrack]
    # direction (+1/-1) -> sorted lane markings; kept so files can be rewritten
    markings: Mapping[int, Tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "lane_centers", {int(k): float(v) for k, v in sorted(self.lane_centers.items())})
        object.__setattr__(self, "lane_directions", {int(k): int(v) for k, v in sorted(self.lane_directions.items())})
        object.__setattr__(self, "tracks", dict(sorted(self.tracks.items())))
        object.__setattr__(
            self, "markings", {int(k): tuple(float(m) for m in v) for k, v in sorted(self.markings.items())}
        )

    @classmethod
    def from_markings(cls, recording_id: int, dt: float, upper: Sequence[float], lower: Sequence[float],
                      tracks: Mapping[int, VehicleTrack]) -> "Recording":
        centers, directions = lanes_from_markings(upper, lower)
        return cls(recording_id, dt, centers, directions, tracks,
                   markings={-1: tuple(sorted(upper)), 1: tuple(sorted(lower))})

    def direction_of(self, lane_id: int) -> int:
        return self.lane_directions[int(lane_id)]

    def lane_center(self, lane_id: int) -> float:
        return self.lane_centers[int(lane_id)]

    @cached_property
    def frame_index(self) -> "FrameIndex":
        return FrameIndex.build(self.tracks.values())

    def with_tracks(self, tracks: Mapping[int, VehicleTrack]) -> "Recording":
        return replace(self, tracks=tracks)


@dataclass(frozen=True, eq=False)
class FrameIndex:
    """All track samples of a recording sorted by frame, for per-frame queries."""

    frames: np.ndarray
    vehicle_id: np.ndarray
    x: np.ndarray
    lane_id: np.ndarray
    direction: np.ndarray

    @classmethod
    def build(cls, tracks) -> "FrameIndex":
        tracks = list(tracks)
        if not tracks:
            empty_i = np.zeros(0, dtype=np.int64)
            return cls(empty_i, empty_i, np.zeros(0), empty_i, empty_i)
        frames = np.concatenate([t.frames for t in tracks])
        vid = np.concatenate([np.full(len(t), t.vehicle_id, dtype=np.int64) for t in tracks])
        x = np.concatenate([t.x for t in tracks])
        lane = np.concatenate([t.lane_id for t in tracks])
        direction = np.concatenate([np.full(len(t), t.direction, dtype=np.int64) for t in tracks])
        order = np.lexsort((vid, frames))
        return cls(frames[order], vid[order], x[order], lane[order], direction[order])

    def at(self, frame: int) -> slice:
        lo = int(np.searchsorted(self.frames, frame, side="left"))
        hi = int(np.searchsorted(self.frames, frame, side="right"))
        return slice(lo, hi)


@dataclass(frozen=True)
class DetectionParams:
    v_s: float = 0.15
    tau_s: float = 1.0
    v_e: float = 0.1
    tau_e: float = 1.0
    min_speed: float = 1.0
    gap_thresholds: Tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0)
    gap_mode: str = "net_gap"

    def __post_init__(self):
        object.__setattr__(self, "gap_thresholds", tuple(float(g) for g in self.gap_thresholds))
        for name in ("v_s", "tau_s", "v_e", "tau_e", "min_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.gap_thresholds:
            raise ValueError("gap_thresholds must not be empty")
        if any(g <= 0 for g in self.gap_thresholds):
            raise ValueError("gap_thresholds must be strictly positive")
        if any(b <= a for a, b in zip(self.gap_thresholds, self.gap_thresholds[1:])):
            raise ValueError("gap_thresholds must be strictly increasing")
        if self.gap_mode not in ("net_gap", "center_distance"):
            raise ValueError(f"unknown gap_mode {self.gap_mode!r}")

    def frames(self, seconds: float, dt: float) -> int:
        return offset_to_frames(seconds, dt)


@dataclass(frozen=True)
class LaneChangeEvent:
    recording_id: int
    lcv_id: int
    t1: int
    t2: int
    t3: int
    origin_lane: int
    target_lane: int
    tfv_id: Optional[int] = None
    x_gap_at_t1: Optional[float] = None

    def __post_init__(self):
        if not self.t1 < self.t2 < self.t3:
            raise ValueError(f"event instants must satisfy t1 < t2 < t3, got {self.t1}, {self.t2}, {self.t3}")
        if self.origin_lane == self.target_lane:
            raise ValueError("origin and target lane must differ")
        if self.x_gap_at_t1 is not None and self.x_gap_at_t1 < 0:
            raise ValueError("x_gap_at_t1 must be non-negative")

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.recording_id, self.lcv_id, self.t2)

    def anchor_frame(self, anchor: str) -> int:
        if anchor == "T1":
            return self.t1
        if anchor == "T2":
            return self.t2
        raise ValueError(f"unknown anchor {anchor!r}")


def _fmt_offset(v: float) -> str:
    return f"{v:g}"


@dataclass(frozen=True)
class WindowSpec:
    anchor: str
    start_offset: float
    end_offset: float

    def __post_init__(self):
        if self.anchor not in ("T1", "T2"):
            raise ValueError(f"anchor must be T1 or T2, got {self.anchor!r}")
        if not self.start_offset < self.end_offset:
            raise ValueError("start_offset must be < end_offset")

    @property
    def duration(self) -> float:
        return self.end_offset - self.start_offset

    @property
    def label(self) -> str:
        """Human label such as ``[T1-4,T1+1]`` or ``[T2,T2+2]``."""

        def bound(off: float) -> str:
            if off == 0:
                return self.anchor
            return f"{self.anchor}{'+' if off > 0 else '-'}{_fmt_offset(abs(off))}"

        return f"[{bound(self.start_offset)},{bound(self.end_offset)}]"

    @property
    def key(self) -> str:
        """Column-safe identifier, e.g. ``T1m4p1`` or ``T2m1.5p0.5``."""

        def part(off: float) -> str:
            return ("m" if off < 0 else "p") + _fmt_offset(abs(off))

        return f"{self.anchor}{part(self.start_offset)}{part(self.end_offset)}"

    @classmethod
    def parse(cls, text: str) -> "WindowSpec":
        """Inverse of :attr:`label`."""
        body = text.strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise ValueError(f"bad window {text!r}")
        lo, hi = (p.strip() for p in body[1:-1].split(","))
        anchor = lo[:2]
        if hi[:2] != anchor:
            raise ValueError(f"window bounds use different anchors: {text!r}")

        def off(p: str) -> float:
            rest = p[2:]
            return float(rest) if rest else 0.0

        return cls(anchor, off(lo), off(hi))


T1_WINDOWS: Tuple[WindowSpec, ...] = tuple(
    WindowSpec("T1", -s, 1.0) for s in (4.0, 3.0, 2.0, 1.0)
)
T2_WINDOWS: Tuple[WindowSpec, ...] = (
    WindowSpec("T2", -2.0, 0.0),
    WindowSpec("T2", -1.5, 0.5),
    WindowSpec("T2", -1.0, 1.0),
    WindowSpec("T2", -0.5, 1.5),
    WindowSpec("T2", 0.0, 2.0),
)
DEFAULT_WINDOWS: Tuple[WindowSpec, ...] = T1_WINDOWS + T2_WINDOWS


def offset_to_frames(offset: float, dt: float) -> int:
    """Seconds to whole frames, rounding halves up.

    Rounding half up (rather than away from zero) keeps the frame count of
    every window equal to ``duration / dt + 1`` even when both ends fall on
    half frames, e.g. ``[T2-0.5,T2+1.5]`` at 25 Hz.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    q = round(offset / dt, 9)  # absorb binary noise like 37.49999999999999
    return int(math.floor(q + 0.5))


def window_to_frames(w: WindowSpec, anchor_frame: int, dt: float) -> Tuple[int, int]:
    """Inclusive frame range covered by window ``w`` around ``anchor_frame``."""
    return anchor_frame + offset_to_frames(w.start_offset, dt), anchor_frame + offset_to_frames(w.end_offset, dt)


@dataclass(frozen=True)
class MetricVector:
    p_a: float
    r_v: float
    dv: float
    a_max: float
    a_min: float

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


METRIC_NAMES: Tuple[str, ...] = ("p_a", "r_v", "dv", "a_max", "a_min")


# -- bit-exact persistence ---------------------------------------------------

def save_recording(r: Recording, path) -> Path:
    """Write ``r`` to a single ``.npz`` archive; :func:`load_saved_recording` inverts it."""
    path = Path(path)
    meta = {
        "recording_id": r.recording_id,
        "dt": r.dt.hex(),
        "lane_centers": {str(k): v.hex() for k, v in r.lane_centers.items()},
        "lane_directions": {str(k): v for k, v in r.lane_directions.items()},
        "markings": {str(k): [m.hex() for m in v] for k, v in r.markings.items()},
        "tracks": [
            {
                "vehicle_id": t.vehicle_id,
                "vehicle_class": t.vehicle_class,
                "length": float(t.length).hex(),
                "width": float(t.width).hex(),
                "direction": t.direction,
            }
            for t in r.tracks.values()
        ],
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for t in r.tracks.values():
        for name in TRACK_ARRAYS:
            arrays[f"{t.vehicle_id}/{name}"] = getattr(t, name)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_saved_recording(path) -> Recording:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        tracks = {}
        for tm in meta["tracks"]:
            vid = tm["vehicle_id"]
            tracks[vid] = VehicleTrack(
                vehicle_id=vid,
                vehicle_class=tm["vehicle_class"],
                length=float.fromhex(tm["length"]),
                width=float.fromhex(tm["width"]),
                direction=tm["direction"],
                **{name: data[f"{vid}/{name}"] for name in TRACK_ARRAYS},
            )
    return Recording(
        recording_id=meta["recording_id"],
        dt=float.fromhex(meta["dt"]),
        lane_centers={int(k): float.fromhex(v) for k, v in meta["lane_centers"].items()},
        lane_directions={int(k): v for k, v in meta["lane_directions"].items()},
        tracks=tracks,
        markings={int(k): tuple(float.fromhex(m) for m in v) for k, v in meta["markings"].items()},
    )
