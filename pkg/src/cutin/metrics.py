"""Driving-characteristic metrics over a time window around T1 or T2."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveMinVelocity, WindowOffTrack
from .model import MetricVector, VehicleTrack, WindowSpec, window_to_frames


@dataclass(frozen=True, eq=False)
class WindowSeries:
    vx: np.ndarray
    ax: np.ndarray
    dt: float

    def __post_init__(self):
        vx = np.asarray(self.vx, dtype=np.float64)
        ax = np.asarray(self.ax, dtype=np.float64)
        if vx.shape != ax.shape or vx.ndim != 1 or len(vx) < 2:
            raise ValueError("vx and ax must be 1-D of equal length >= 2")
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "ax", ax)

    @property
    def n_samples(self) -> int:
        return len(self.vx)

    @property
    def n_steps(self) -> int:
        return len(self.vx) - 1


def slice_window(track: VehicleTrack, anchor_frame: int, w: WindowSpec, dt: float,
                 planar: bool = False) -> WindowSeries:
    """Samples on the inclusive frame range of ``w``.

    ``planar`` swaps the longitudinal components for speed magnitude and the
    acceleration along the velocity vector.
    """
    start, end = window_to_frames(w, anchor_frame, dt)
    if not (track.has_frame(start) and track.has_frame(end)):
        raise WindowOffTrack(f"{w.label} at {anchor_frame} -> [{start},{end}] outside vehicle {track.vehicle_id} "
                             f"[{track.first_frame},{track.last_frame}]")
    i, j = track.index_of(start), track.index_of(end) + 1
    if not planar:
        return WindowSeries(track.vx[i:j], track.ax[i:j], dt)
    vx, vy, ax, ay = track.vx[i:j], track.vy[i:j], track.ax[i:j], track.ay[i:j]
    speed = np.hypot(vx, vy)
    with np.errstate(invalid="ignore", divide="ignore"):
        along = np.where(speed > 0, (vx * ax + vy * ay) / speed, ax)
    return WindowSeries(speed, along, dt)


def acceleration_percentage(s: WindowSeries) -> float:
    """Share of the window spent with strictly positive acceleration."""
    t_a = np.count_nonzero(s.ax > 0) * s.dt
    t_total = s.n_samples * s.dt
    return float(t_a / t_total)


def velocity_change_ratio(s: WindowSeries) -> float:
    v_min = float(s.vx.min())
    if not v_min > 0:
        raise NonPositiveMinVelocity(f"minimum velocity {v_min} in window")
    return (float(s.vx.max()) - v_min) / v_min


def cumulative_velocity_change(s: WindowSeries) -> float:
    """Sum of |a_j * dt| over the window's steps (the last sample has no step)."""
    return math.fsum(np.abs(s.ax[:-1] * s.dt))


def max_acceleration(s: WindowSeries) -> float:
    return float(s.ax.max())


def min_deceleration(s: WindowSeries) -> float:
    return float(s.ax.min())


def metrics_of(s: WindowSeries) -> MetricVector:
    return MetricVector(
        p_a=acceleration_percentage(s),
        r_v=velocity_change_ratio(s),
        dv=cumulative_velocity_change(s),
        a_max=max_acceleration(s),
        a_min=min_deceleration(s),
    )


def metric_vector(track: VehicleTrack, anchor_frame: int, w: WindowSpec, dt: float,
                  planar: bool = False) -> MetricVector:
    return metrics_of(slice_window(track, anchor_frame, w, dt, planar=planar))
