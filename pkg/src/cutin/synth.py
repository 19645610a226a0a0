"""Synthetic recordings with analytically known lane-change ground truth.

Lateral motion is a piecewise-linear velocity profile, so position is
piecewise quadratic and every key instant has a closed form:

* the lane-mark crossing solves a quadratic on one segment;
* the start instant is ``max(a, z, s - tau_s)`` over maximal non-decreasing
  stretches ``[a, b]`` of the profile, where ``z`` is where the profile turns
  non-negative and ``s`` where it first reaches ``v_s``;
* the completion instant is the first stretch where ``|v| <= v_e`` lasts at
  least ``tau_e``.

None of this reuses the frame-scanning detector, so the generated ground
truth can be used to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import InfeasibleSpec
from .model import DEFAULT_DT, DetectionParams, Recording, VehicleTrack, lanes_from_markings

UPPER_MARKINGS = (4.0, 7.75, 11.5, 15.25)
LOWER_MARKINGS = (19.5, 23.25, 27.0, 30.75)

Knots = Tuple[Tuple[float, float], ...]


# -- lateral profiles ---------------------------------------------------------

@dataclass(frozen=True)
class LateralProfile:
    """Velocity towards the target lane over time, relative to maneuver onset.

    ``kind`` is ``ramp``, ``plateau`` or ``composite``. Use the constructors.
    """

    kind: str
    slope: float = 0.0
    v_lat: float = 0.0
    duration: Optional[float] = None
    rise: float = 0.4
    shape: Knots = ()
    # composite only: "area" rescales the whole shape to the lane width,
    # "unit" treats velocities as per metre of lane width, "none" keeps them
    scaling: str = "area"

    @classmethod
    def ramp(cls, slope: float) -> "LateralProfile":
        """Triangle: accelerate laterally at ``slope`` then decelerate symmetrically."""
        return cls("ramp", slope=slope)

    @classmethod
    def plateau(cls, v_lat: float, duration: Optional[float] = None, rise: float = 0.4) -> "LateralProfile":
        """Trapezoid holding ``v_lat``; ``duration`` defaults to landing on the target center."""
        return cls("plateau", v_lat=v_lat, duration=duration, rise=rise)

    @classmethod
    def composite(cls, shape: Sequence[Tuple[float, float]], scaling: str = "area") -> "LateralProfile":
        if scaling not in ("area", "unit", "none"):
            raise ValueError(f"unknown scaling {scaling!r}")
        return cls("composite", shape=tuple((float(t), float(v)) for t, v in shape), scaling=scaling)

    @classmethod
    def out_and_back(cls, v_lat: float, dwell: float = 3.0, rise: float = 0.4) -> "LateralProfile":
        """Change lane, stay ``dwell`` seconds, change back (two unit-width trapezoids)."""
        hold = 1.0 / v_lat - rise
        if hold < 0:
            raise InfeasibleSpec("v_lat too high for the rise time")
        a = 2 * rise + hold
        shape = [
            (0.0, 0.0), (rise, v_lat), (rise + hold, v_lat), (a, 0.0),
            (a + dwell, 0.0), (a + dwell + rise, -v_lat), (a + dwell + rise + hold, -v_lat), (2 * a + dwell, 0.0),
        ]
        return cls.composite(shape, scaling="unit")

    @classmethod
    def hesitant(cls, v_first: float, v_dip: float, v_peak: float, rise: float = 0.6) -> "LateralProfile":
        """Rise to ``v_first``, sag to ``v_dip``, climb to ``v_peak``, settle."""
        shape = [
            (0.0, 0.0), (rise, v_first), (2 * rise, v_dip), (3 * rise, v_peak),
            (3 * rise + 1.0, v_peak), (3 * rise + 1.0 + 2 * rise, 0.0),
        ]
        return cls.composite(shape)

    def knots(self, width: float) -> Knots:
        """Profile knots for a lateral displacement of ``width`` metres."""
        if self.kind == "ramp":
            if not self.slope > 0:
                return ((0.0, 0.0), (1.0, 0.0))
            peak = math.sqrt(width * self.slope)
            tp = peak / self.slope
            return ((0.0, 0.0), (tp, peak), (2 * tp, 0.0))
        if self.kind == "plateau":
            v, r = self.v_lat, self.rise
            if v == 0:
                return ((0.0, 0.0), (1.0, 0.0))
            hold = self.duration if self.duration is not None else width / abs(v) - r
            if hold < 0:
                raise InfeasibleSpec(f"plateau of {v} m/s with rise {r} s overshoots a {width} m lane change")
            return ((0.0, 0.0), (r, v), (r + hold, v), (2 * r + hold, 0.0))
        if self.kind == "composite":
            shape = self.shape
            if len(shape) < 2 or shape[0][1] != 0 or shape[-1][1] != 0:
                raise InfeasibleSpec("composite profile must start and end at zero velocity")
            if self.scaling == "none":
                return shape
            if self.scaling == "unit":
                return tuple((t, v * width) for t, v in shape)
            area = _area(shape)
            if area <= 0:
                return shape
            return tuple((t, v * width / area) for t, v in shape)
        raise ValueError(f"unknown profile kind {self.kind!r}")


def _area(shape: Sequence[Tuple[float, float]]) -> float:
    return sum(0.5 * (v0 + v1) * (t1 - t0) for (t0, v0), (t1, v1) in zip(shape, shape[1:]))


# -- exact piecewise-linear calculus -----------------------------------------

class PiecewiseLinear:
    """Continuous piecewise-linear function on ``[0, t_end]`` with exact integral."""

    def __init__(self, knots: Sequence[Tuple[float, float]], t_end: float):
        ts = [float(t) for t, _ in knots]
        vs = [float(v) for _, v in knots]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must be non-decreasing")
        # extend with constant values to cover [0, t_end]
        if ts[0] > 0:
            ts.insert(0, 0.0)
            vs.insert(0, vs[0])
        if ts[-1] < t_end:
            ts.append(float(t_end))
            vs.append(vs[-1])
        # drop zero-length segments (steps are not supported)
        keep_t, keep_v = [ts[0]], [vs[0]]
        for t, v in zip(ts[1:], vs[1:]):
            if t > keep_t[-1]:
                keep_t.append(t)
                keep_v.append(v)
        self.t = np.array(keep_t)
        self.v = np.array(keep_v)
        dt = np.diff(self.t)
        self.slope = np.diff(self.v) / dt
        self.cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.v[:-1] + self.v[1:]) * dt)])

    @property
    def segments(self):
        for k in range(len(self.t) - 1):
            yield self.t[k], self.t[k + 1], self.v[k], self.v[k + 1]

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.t, self.v)

    def integral(self, t) -> np.ndarray:
        """``int_0^t v``; times before the first knot count from there."""
        t = np.asarray(t, dtype=np.float64)
        k = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        tau = t - self.t[k]
        return self.cum[k] + self.v[k] * tau + 0.5 * self.slope[k] * tau * tau

    def first_crossing(self, level: float, t_from: float = 0.0) -> Optional[float]:
        """Earliest ``t >= t_from`` where the integral passes through ``level``."""
        for k in range(len(self.t) - 1):
            t0, t1 = self.t[k], self.t[k + 1]
            if t1 < t_from:
                continue
            a, b, c = 0.5 * self.slope[k], self.v[k], self.cum[k] - level
            roots = _quadratic_roots(a, b, c)
            lo = max(t_from, t0) - t0
            hits = sorted(r for r in roots if lo - 1e-12 <= r <= (t1 - t0) + 1e-12)
            for r in hits:
                # skip tangent touches: require a sign change around the root
                eps = 1e-7
                before = float(self.integral(t0 + r - eps)) - level
                after = float(self.integral(t0 + r + eps)) - level
                if before * after < 0 or (before != 0 and after == 0):
                    return t0 + r
        return None


def _quadratic_roots(a: float, b: float, c: float) -> List[float]:
    if abs(a) < 1e-15:
        return [] if b == 0 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    roots = [q / a]
    if q != 0:
        roots.append(c / q)
    return roots


def _first_at_least(f: PiecewiseLinear, a: float, b: float, level: float) -> Optional[float]:
    """First time in [a, b] where the non-decreasing ``f`` reaches ``level``."""
    if f(a) >= level:
        return a
    for t0, t1, v0, v1 in f.segments:
        if t1 <= a or t0 >= b:
            continue
        lo, hi = max(t0, a), min(t1, b)
        vlo, vhi = float(f(lo)), float(f(hi))
        if vhi >= level > vlo:
            return lo + (level - vlo) / (vhi - vlo) * (hi - lo)
    return None


def nondecreasing_stretches(f: PiecewiseLinear, tol: float = 1e-12) -> List[Tuple[float, float]]:
    out: List[Tuple[float, float]] = []
    for (t0, t1, _, _), s in zip(f.segments, f.slope):
        if s >= -tol:
            if out and out[-1][1] == t0:
                out[-1] = (out[-1][0], t1)
            else:
                out.append((t0, t1))
    return out


def bounded_stretches(f: PiecewiseLinear, bound: float) -> List[Tuple[float, float]]:
    """Maximal intervals where ``|f| <= bound``."""
    out: List[Tuple[float, float]] = []
    for (t0, t1, v0, v1), s in zip(f.segments, f.slope):
        if s == 0:
            sub = (t0, t1) if abs(v0) <= bound else None
        else:
            # |v0 + s*(t - t0)| <= bound  <=>  t in [lo, hi]
            ta = t0 + (-bound - v0) / s
            tb = t0 + (bound - v0) / s
            lo, hi = max(t0, min(ta, tb)), min(t1, max(ta, tb))
            sub = (lo, hi) if lo <= hi else None
        if sub is None:
            continue
        if out and abs(out[-1][1] - sub[0]) < 1e-12:
            out[-1] = (out[-1][0], sub[1])
        else:
            out.append(sub)
    return out


def closed_form_start(f: PiecewiseLinear, region_start: float, before: float, v_s: float,
                      tau_s: float) -> Optional[float]:
    """Continuous-time start instant: min t in [region_start, before) meeting the start predicate."""
    for a, b in nondecreasing_stretches(f):
        a = max(a, region_start)
        if b - a < tau_s - 1e-12:
            continue
        z = _first_at_least(f, a, b, 0.0)
        s = _first_at_least(f, a, b, v_s)
        if z is None or s is None:
            continue
        t = max(a, z, s - tau_s)
        if t + tau_s <= b + 1e-12 and t < before:
            return t
    return None


def closed_form_end(f: PiecewiseLinear, after: float, v_e: float, tau_e: float) -> Optional[float]:
    """Continuous-time completion instant: min t >= after with |f| <= v_e on [t, t + tau_e]."""
    for c, d in bounded_stretches(f, v_e):
        t = max(c, after)
        if t + tau_e <= d + 1e-12:
            return t
    return None


def _to_frame(t: float, dt: float) -> int:
    return int(math.ceil(t / dt - 1e-9))


# -- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """One kinematic set-piece: an LCV changing lane ahead of a TFV.

    ``initial_gap`` is the bumper-to-bumper gap at the ground-truth start
    instant, so ``x_gap_at_t1`` equals it by construction. Speed knots are
    ``(time_s, speed)`` pairs in absolute recording time and override the
    constant speeds.
    """

    lcv_speed: float = 30.0
    tfv_speed: float = 30.0
    initial_gap: float = 20.0
    lateral_profile: LateralProfile = field(default_factory=lambda: LateralProfile.plateau(0.6))
    onset: float = 6.0
    duration: Optional[float] = None
    seed: int = 0
    direction: int = 1
    origin_lane: Optional[int] = None
    side: int = 1
    tfv_present: bool = True
    lcv_speed_knots: Tuple[Tuple[float, float], ...] = ()
    tfv_speed_knots: Tuple[Tuple[float, float], ...] = ()
    dt: float = DEFAULT_DT
    recording_id: int = 1
    first_frame: int = 0
    upper_markings: Tuple[float, ...] = UPPER_MARKINGS
    lower_markings: Tuple[float, ...] = LOWER_MARKINGS


@dataclass(frozen=True)
class ManeuverTruth:
    t1: Optional[int]
    t2: int
    t3: Optional[int]
    from_lane: int
    to_lane: int

    @property
    def feasible(self) -> bool:
        return self.t1 is not None and self.t3 is not None


@dataclass(frozen=True)
class GroundTruth:
    lcv_id: int
    tfv_id: Optional[int]
    maneuvers: Tuple[ManeuverTruth, ...]
    x_gap_at_t1: Optional[float]
    expected_classification: Dict[float, str]

    @property
    def t1(self):
        return self.maneuvers[0].t1

    @property
    def t2(self):
        return self.maneuvers[0].t2

    @property
    def t3(self):
        return self.maneuvers[0].t3


def lane_ids_for(y: np.ndarray, markings: Sequence[float], first_lane: int) -> np.ndarray:
    """Lane id of each lateral position; marking ``i`` is the lower bound of lane ``first_lane + i``."""
    idx = np.searchsorted(np.asarray(markings), y, side="right") - 1
    if np.any(idx < 0) or np.any(idx >= len(markings) - 1):
        raise InfeasibleSpec("lateral position leaves the carriageway")
    return first_lane + idx


def _first_lane(direction: int, upper: Sequence[float]) -> int:
    return 2 if direction == -1 else len(upper) + 2


def _speed_function(const: float, knots, t_end: float) -> PiecewiseLinear:
    return PiecewiseLinear(knots if knots else ((0.0, const),), t_end)


def _forward_diff(v: np.ndarray, dt: float) -> np.ndarray:
    a = np.empty_like(v)
    if len(v) > 1:
        a[:-1] = np.diff(v) / dt
        a[-1] = a[-2]
    else:
        a[:] = 0.0
    return a


def build_track(vehicle_id: int, frames: np.ndarray, dt: float, *, x0: float, speed: PiecewiseLinear,
                y: np.ndarray, vy: np.ndarray, lane_id: np.ndarray, length: float, width: float,
                direction: int, vehicle_class: str = "car") -> VehicleTrack:
    """Assemble a track whose accelerations are forward differences of its velocities."""
    t = (frames - frames[0]) * dt
    vx = speed(t)
    return VehicleTrack(
        vehicle_id=vehicle_id,
        vehicle_class=vehicle_class,
        length=length,
        width=width,
        direction=direction,
        frames=frames,
        x=x0 + speed.integral(t),
        y=y,
        vx=vx,
        vy=vy,
        ax=_forward_diff(vx, dt),
        ay=_forward_diff(vy, dt),
        lane_id=lane_id,
    )


def lane_keeping_track(vehicle_id: int, frames: np.ndarray, dt: float, *, lane: int, lane_centers, x0: float,
                       speed: PiecewiseLinear, length: float = 4.5, width: float = 1.9,
                       direction: int = 1, vehicle_class: str = "car") -> VehicleTrack:
    n = len(frames)
    return build_track(vehicle_id, frames, dt, x0=x0, speed=speed, y=np.full(n, lane_centers[lane]),
                       vy=np.zeros(n), lane_id=np.full(n, lane), length=length, width=width,
                       direction=direction, vehicle_class=vehicle_class)


def make_lane_change_scenario(spec: ScenarioSpec,
                              params: DetectionParams = DetectionParams()) -> Tuple[Recording, GroundTruth]:
    """Build one recording (LCV id 1, TFV id 2) and its closed-form ground truth."""
    rng = np.random.default_rng(spec.seed)
    len_lcv, len_tfv = (float(v) for v in np.round(rng.uniform(4.0, 5.0, size=2), 3))
    wid_lcv, wid_tfv = (float(v) for v in np.round(rng.uniform(1.8, 2.0, size=2), 3))

    centers, directions = lanes_from_markings(spec.upper_markings, spec.lower_markings)
    markings = spec.upper_markings if spec.direction == -1 else spec.lower_markings
    first = _first_lane(spec.direction, spec.upper_markings)
    lanes = [l for l in centers if directions[l] == spec.direction]
    origin = spec.origin_lane if spec.origin_lane is not None else (lanes[0] if spec.side > 0 else lanes[-1])
    target = origin + (1 if spec.side > 0 else -1)
    if origin not in lanes or target not in lanes:
        raise InfeasibleSpec(f"lanes {origin}->{target} not both on the carriageway")
    width = abs(centers[target] - centers[origin])
    sgn = 1.0 if centers[target] > centers[origin] else -1.0
    boundary = markings[max(origin, target) - first]

    shape = spec.lateral_profile.knots(width)
    if all(v == 0 for _, v in shape):
        raise InfeasibleSpec("lateral profile never moves")
    lat_knots = tuple((spec.onset + t, v) for t, v in shape)
    profile_end = lat_knots[-1][0]
    duration = spec.duration
    if duration is None:
        duration = profile_end + params.tau_e + 4.0
    dt = spec.dt
    n = int(round(duration / dt)) + 1
    t_end = (n - 1) * dt
    frames = spec.first_frame + np.arange(n, dtype=np.int64)
    t = np.arange(n) * dt

    lat = PiecewiseLinear(lat_knots, t_end)
    y = centers[origin] + sgn * lat.integral(t)
    vy = sgn * lat(t)
    lane_lcv = lane_ids_for(y, markings, first)
    if set(np.unique(lane_lcv)) - {origin, target}:
        raise InfeasibleSpec("lateral profile leaves the origin/target lane pair")

    # closed-form instants for each boundary crossing
    level = abs(boundary - centers[origin])
    maneuvers: List[ManeuverTruth] = []
    t_from, region_start, frm, to = 0.0, 0.0, origin, target
    while True:
        tc = lat.first_crossing(level, t_from)
        if tc is None or tc > t_end:
            break
        t2 = int(math.floor(tc / dt + 1e-9)) + 1
        toward = lat if frm == origin else _negated(lat, t_end)
        t1c = closed_form_start(toward, region_start, t2 * dt, params.v_s, params.tau_s)
        t3c = closed_form_end(toward, (t2 + 1) * dt, params.v_e, params.tau_e)
        t1 = _to_frame(t1c, dt) if t1c is not None else None
        t3 = _to_frame(t3c, dt) if t3c is not None else None
        if t3 is not None and t3 * dt + params.tau_e > t_end + 1e-9:
            t3 = None
        maneuvers.append(ManeuverTruth(
            None if t1 is None else spec.first_frame + t1,
            spec.first_frame + t2,
            None if t3 is None else spec.first_frame + t3,
            frm, to,
        ))
        t_from, region_start = tc + 1e-9, t2 * dt
        frm, to = to, frm
    if not maneuvers:
        raise InfeasibleSpec("lateral profile never crosses the lane boundary within the duration")

    lcv_speed = _speed_function(spec.lcv_speed, spec.lcv_speed_knots, t_end)
    x0_lcv = 100.0
    lcv = build_track(1, frames, dt, x0=x0_lcv, speed=lcv_speed, y=y, vy=vy, lane_id=lane_lcv,
                      length=len_lcv, width=wid_lcv, direction=spec.direction)
    tracks = {1: lcv}

    first_m = maneuvers[0]
    t_gap = ((first_m.t1 if first_m.t1 is not None else spec.first_frame + int(round(spec.onset / dt)))
             - spec.first_frame) * dt
    gap = None
    tfv_id = None
    labels: Dict[float, str] = {}
    if spec.tfv_present:
        tfv_speed = _speed_function(spec.tfv_speed, spec.tfv_speed_knots, t_end)
        x_lcv_at = x0_lcv + float(lcv_speed.integral(t_gap))
        x_tfv_at = x_lcv_at - 0.5 * len_lcv - 0.5 * len_tfv - spec.initial_gap
        x0_tfv = x_tfv_at - float(tfv_speed.integral(t_gap))
        tracks[2] = lane_keeping_track(2, frames, dt, lane=target, lane_centers=centers, x0=x0_tfv,
                                       speed=tfv_speed, length=len_tfv, width=wid_tfv,
                                       direction=spec.direction)
        tfv_id = 2
        gap = float(spec.initial_gap)
        labels = {th: ("CutIn" if gap < th else "OtherLaneChange") for th in params.gap_thresholds}

    rec = Recording.from_markings(spec.recording_id, dt, spec.upper_markings, spec.lower_markings, tracks)
    return rec, GroundTruth(1, tfv_id, tuple(maneuvers), gap, labels)


def _negated(f: PiecewiseLinear, t_end: float) -> PiecewiseLinear:
    return PiecewiseLinear(tuple(zip(f.t, -f.v)), t_end)


def make_null_scenario(duration: float, speeds: Sequence[float], *, dt: float = DEFAULT_DT,
                       recording_id: int = 1, seed: int = 0,
                       upper_markings=UPPER_MARKINGS, lower_markings=LOWER_MARKINGS) -> Recording:
    """Vehicles that all keep their lane; lanes are assigned round-robin over both carriageways."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    centers, directions = lanes_from_markings(upper_markings, lower_markings)
    lanes = sorted(centers)
    n = int(round(duration / dt)) + 1
    frames = np.arange(n, dtype=np.int64)
    tracks = {}
    for i, v in enumerate(speeds):
        lane = lanes[i % len(lanes)]
        vid = i + 1
        tracks[vid] = lane_keeping_track(
            vid, frames, dt, lane=lane, lane_centers=centers, x0=30.0 * (i // len(lanes)),
            speed=PiecewiseLinear(((0.0, float(v)),), (n - 1) * dt),
            length=float(np.round(rng.uniform(4.0, 5.0), 3)), direction=directions[lane],
        )
    return Recording.from_markings(recording_id, dt, upper_markings, lower_markings, tracks)


# -- random corpora ----------------------------------------------------------

PROFILE_KINDS = ("ramp", "plateau", "composite")


def random_profile(rng: np.random.Generator, kind: str) -> LateralProfile:
    if kind == "ramp":
        return LateralProfile.ramp(float(rng.uniform(0.15, 0.6)))
    if kind == "plateau":
        return LateralProfile.plateau(float(rng.uniform(0.4, 1.2)), rise=float(rng.uniform(0.3, 1.0)))
    if kind == "composite":
        if rng.random() < 0.5:
            return LateralProfile.out_and_back(float(rng.uniform(0.5, 1.0)), dwell=float(rng.uniform(2.5, 5.0)))
        v_first = float(rng.uniform(0.3, 0.6))
        return LateralProfile.hesitant(v_first, v_first * float(rng.uniform(0.3, 0.8)),
                                       float(rng.uniform(0.7, 1.2)))
    raise ValueError(kind)


def random_scenario_spec(rng: np.random.Generator, *, kind: Optional[str] = None, gap: Optional[float] = None,
                         recording_id: int = 1, react: bool = False) -> ScenarioSpec:
    """Draw a scenario; ``react`` makes the TFV brake briefly after the maneuver starts.

    The follower is never faster than the LCV, so it stays the TFV throughout.
    """
    kind = kind or PROFILE_KINDS[int(rng.integers(len(PROFILE_KINDS)))]
    v_lcv = float(rng.uniform(18.0, 36.0))
    v_tfv = v_lcv - float(rng.uniform(0.0, 4.0))  # never closes on the LCV, so the follower stays behind
    onset = float(rng.uniform(5.5, 8.0))
    tfv_knots: Tuple[Tuple[float, float], ...] = ()
    if react:
        decel = float(rng.uniform(0.4, 1.5))
        t0 = onset + float(rng.uniform(0.0, 1.0))
        tfv_knots = ((t0, v_tfv), (t0 + 1.5, v_tfv - 1.5 * decel), (t0 + 4.0, v_tfv - 1.5 * decel))
    lcv_knots: Tuple[Tuple[float, float], ...] = ()
    if rng.random() < 0.5:
        dv = float(rng.uniform(0.0, 1.5))
        t0 = float(rng.uniform(1.0, onset))
        lcv_knots = ((t0, v_lcv), (t0 + 2.0, v_lcv + dv))
    return ScenarioSpec(
        lcv_speed=v_lcv,
        tfv_speed=v_tfv,
        initial_gap=float(gap if gap is not None else rng.uniform(2.0, 60.0)),
        lateral_profile=random_profile(rng, kind),
        onset=onset,
        seed=int(rng.integers(2**31)),
        direction=int(rng.choice([-1, 1])),
        side=int(rng.choice([-1, 1])),
        lcv_speed_knots=lcv_knots,
        tfv_speed_knots=tfv_knots,
        recording_id=recording_id,
    )


def corpus_specs(n_small: int, n_large: int, seed: int = 0, *, small_gap=(2.0, 9.0),
                 large_gap=(35.0, 60.0)) -> List[ScenarioSpec]:
    """Scenario specs for ``n_small`` close cut-ins followed by ``n_large`` wide-gap lane changes."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_small + n_large):
        small = i < n_small
        lo, hi = small_gap if small else large_gap
        out.append(random_scenario_spec(rng, gap=float(rng.uniform(lo, hi)), recording_id=i + 1, react=small,
                                        kind=PROFILE_KINDS[i % 2]))
    return out


def make_corpus(n_small: int, n_large: int, seed: int = 0, *, small_gap=(2.0, 9.0), large_gap=(35.0, 60.0),
                params: DetectionParams = DetectionParams()) -> List[Tuple[Recording, GroundTruth]]:
    """One recording per scenario of :func:`corpus_specs`."""
    return [make_lane_change_scenario(s, params)
            for s in corpus_specs(n_small, n_large, seed, small_gap=small_gap, large_gap=large_gap)]


# -- highD-format writer -----------------------------------------------------

def write_highd_files(r: Recording, out_dir, prefix: Optional[str] = None) -> Tuple[Path, Path]:
    """Write ``NN_tracks.csv``, ``NN_recordingMeta.csv`` and ``NN_tracksMeta.csv``.

    Inverts the loader's normalization: positions go back to bounding-box
    corners and the x axis back to the raw orientation of each carriageway.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if -1 not in r.markings or 1 not in r.markings:
        raise ValueError("recording has no lane markings to write")
    prefix = prefix or f"{r.recording_id:02d}"
    tracks_path = out_dir / f"{prefix}_tracks.csv"
    meta_path = out_dir / f"{prefix}_recordingMeta.csv"
    tmeta_path = out_dir / f"{prefix}_tracksMeta.csv"

    columns = ["frame", "id", "x", "y", "width", "height", "xVelocity", "yVelocity",
               "xAcceleration", "yAcceleration", "laneId"]
    parts = []
    tmeta = []
    for t in r.tracks.values():
        d = t.direction
        parts.append(pd.DataFrame({
            "frame": t.frames,
            "id": np.full(len(t), t.vehicle_id),
            "x": t.x * d - 0.5 * t.length,
            "y": t.y - 0.5 * t.width,
            "width": np.full(len(t), t.length),
            "height": np.full(len(t), t.width),
            "xVelocity": t.vx * d,
            "yVelocity": t.vy,
            "xAcceleration": t.ax * d,
            "yAcceleration": t.ay,
            "laneId": t.lane_id,
        }))
        tmeta.append({
            "id": t.vehicle_id, "width": t.length, "height": t.width,
            "initialFrame": t.first_frame, "finalFrame": t.last_frame, "numFrames": len(t),
            "class": t.vehicle_class.capitalize(), "drivingDirection": 1 if d == -1 else 2,
        })
    df = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=columns)
    if len(df):
        df = df.sort_values(["frame", "id"], kind="stable")
    df.to_csv(tracks_path, index=False, columns=columns)
    pd.DataFrame(tmeta, columns=["id", "width", "height", "initialFrame", "finalFrame", "numFrames", "class",
                                 "drivingDirection"]).to_csv(tmeta_path, index=False)
    pd.DataFrame([{
        "id": r.recording_id,
        "frameRate": 1.0 / r.dt,
        "numVehicles": len(r.tracks),
        "upperLaneMarkings": ";".join(repr(m) for m in r.markings[-1]),
        "lowerLaneMarkings": ";".join(repr(m) for m in r.markings[1]),
    }]).to_csv(meta_path, index=False)
    return tracks_path, meta_path
