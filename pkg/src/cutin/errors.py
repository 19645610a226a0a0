"""Exception types raised across the pipeline."""

from __future__ import annotations


class CutinError(Exception):
    """Base class for every error this package raises on purpose."""


class IngestError(CutinError):
    pass


class MissingColumn(IngestError):
    def __init__(self, name: str, path=None):
        self.name = name
        self.path = path
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing column {name!r}{where}")


class NonContiguousFrames(IngestError):
    def __init__(self, vehicle_id: int, detail: str = ""):
        self.vehicle_id = vehicle_id
        super().__init__(f"vehicle {vehicle_id}: non-contiguous frames {detail}".rstrip())


class UnknownLaneId(IngestError):
    def __init__(self, vehicle_id: int, frame: int, lane_id: int | None = None):
        self.vehicle_id = vehicle_id
        self.frame = frame
        self.lane_id = lane_id
        super().__init__(f"vehicle {vehicle_id}: unknown lane id {lane_id} at frame {frame}")


class EmptyRecording(IngestError):
    pass


class DirectoryUnreadable(IngestError):
    pass


class InfeasibleSpec(CutinError):
    pass


class FrameOutOfRange(CutinError):
    def __init__(self, vehicle_id: int, frame: int):
        self.vehicle_id = vehicle_id
        self.frame = frame
        super().__init__(f"frame {frame} outside the track of vehicle {vehicle_id}")


class VehicleMissingAtFrame(CutinError):
    def __init__(self, vehicle_id: int, frame: int):
        self.vehicle_id = vehicle_id
        self.frame = frame
        super().__init__(f"vehicle {vehicle_id} not present at frame {frame}")


class WindowOffTrack(CutinError):
    pass


class NonPositiveMinVelocity(CutinError):
    pass


class EmptySample(CutinError):
    def __init__(self, msg: str = "empty sample", cell=None):
        self.cell = cell
        if cell is not None:
            msg = f"{msg} (cell {cell})"
        super().__init__(msg)


class ConfigInvalid(CutinError):
    pass
