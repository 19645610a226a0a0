import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cutin.model import Recording, VehicleTrack
from cutin.synth import LOWER_MARKINGS, UPPER_MARKINGS

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def make_track(vid=1, n=100, *, first_frame=0, x0=0.0, vx=30.0, y=21.375, vy=0.0, ax=0.0, ay=0.0, lane=6, length=4.5,
               width=1.9, direction=1, dt=0.04, lanes=None):
    """Track with scalar or per-frame values; positions follow vx when ``x0`` is scalar."""
    frames = first_frame + np.arange(n)
    vx_arr = np.broadcast_to(np.asarray(vx, dtype=float), (n,)).copy()
    x = x0 + np.concatenate([[0.0], np.cumsum(vx_arr[:-1] * dt)]) if np.isscalar(x0) else np.asarray(x0, float)
    lane_arr = np.broadcast_to(np.asarray(lane if lanes is None else lanes), (n,)).copy()
    return VehicleTrack(
        vehicle_id=vid, vehicle_class="car", length=length, width=width, direction=direction, frames=frames,
        x=x, y=np.broadcast_to(np.asarray(y, float), (n,)), vx=vx_arr,
        vy=np.broadcast_to(np.asarray(vy, float), (n,)), ax=np.broadcast_to(np.asarray(ax, float), (n,)),
        ay=np.broadcast_to(np.asarray(ay, float), (n,)), lane_id=lane_arr,
    )


def make_recording(tracks, recording_id=1, dt=0.04):
    return Recording.from_markings(recording_id, dt, UPPER_MARKINGS, LOWER_MARKINGS,
                                   {t.vehicle_id: t for t in tracks})


@pytest.fixture
def track_factory():
    return make_track


@pytest.fixture
def recording_factory():
    return make_recording


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
