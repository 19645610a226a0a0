"""Lane-change and cut-in analysis of naturalistic highway trajectories."""

__version__ = "0.1.0"

from .errors import CutinError  # noqa: E402
from .model import DetectionParams, LaneChangeEvent, Recording, VehicleTrack, WindowSpec  # noqa: E402

__all__ = ["CutinError", "DetectionParams", "LaneChangeEvent", "Recording", "VehicleTrack", "WindowSpec",
           "__version__"]
