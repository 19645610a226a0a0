import os

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutin.errors import (
    DirectoryUnreadable,
    EmptyRecording,
    MissingColumn,
    NonContiguousFrames,
    UnknownLaneId,
)
from cutin.ingest import IngestReport, load_corpus, load_recording, parse_markings, validate_recording
from cutin.model import Recording
from cutin.synth import ScenarioSpec, make_lane_change_scenario, make_null_scenario, write_highd_files

from conftest import make_recording, make_track

META = "id,frameRate,upperLaneMarkings,lowerLaneMarkings\n1,25,4.0;7.75;11.5,15.0;18.75;22.5\n"
HEADER = "frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n"


def _write(tmp_path, tracks_text, meta_text=META, prefix="01"):
    t = tmp_path / f"{prefix}_tracks.csv"
    m = tmp_path / f"{prefix}_recordingMeta.csv"
    t.write_text(tracks_text)
    m.write_text(meta_text)
    return t, m


def _rows(n=3, vid=1, lane=5, x0=10.0, vx=30.0, start=1):
    return "".join(f"{start + i},{vid},{x0 + i * vx * 0.04},15.9,4.5,1.9,{vx},0.0,0.0,0.0,{lane}\n" for i in range(n))


def test_minimal_recording(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(3))
    rep = IngestReport()
    r = load_recording(t, m, report=rep)
    assert r.dt == 0.04
    assert list(r.tracks) == [1]
    trk = r.tracks[1]
    assert len(trk) == 3 and len(list(trk.states())) == 3
    assert rep.rows_rejected == 0
    assert rep.recordings_loaded == 1 and rep.tracks_loaded == 1


def test_bounding_box_corner_becomes_center(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(2))
    trk = load_recording(t, m).tracks[1]
    assert trk.x[0] == pytest.approx(10.0 + 4.5 / 2)
    assert trk.y[0] == pytest.approx(15.9 + 1.9 / 2)
    assert trk.length == 4.5 and trk.width == 1.9


def test_lane_centers_are_marking_midpoints(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(2))
    r = load_recording(t, m)
    assert r.lane_centers == {2: 5.875, 3: 9.625, 5: 16.875, 6: 20.625}
    assert r.direction_of(2) == -1 and r.direction_of(6) == 1


def test_missing_lane_column(tmp_path):
    body = HEADER.replace(",laneId", "") + "".join(",".join(r.split(",")[:-1]) + "\n" for r in _rows(3).splitlines())
    t, m = _write(tmp_path, body)
    with pytest.raises(MissingColumn) as exc:
        load_recording(t, m)
    assert exc.value.name == "laneId"


def test_missing_meta_column(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(3), meta_text="id,frameRate\n1,25\n")
    with pytest.raises(MissingColumn):
        load_recording(t, m)


def test_header_remapping(tmp_path):
    body = HEADER.replace("laneId", "lane").replace("xVelocity", "vel_x") + _rows(3)
    t, m = _write(tmp_path, body)
    r = load_recording(t, m, columns={"lane_id": "lane", "vx": "vel_x"})
    assert r.tracks[1].vx[0] == 30.0


def test_optional_lateral_acceleration(tmp_path):
    header = HEADER.replace(",yAcceleration", "")
    body = "".join(",".join(r.split(",")[:9] + r.split(",")[10:]) + "\n" for r in _rows(3).splitlines())
    t, m = _write(tmp_path, header + body)
    assert np.all(load_recording(t, m).tracks[1].ay == 0)


def test_empty_tracks_file(tmp_path):
    t, m = _write(tmp_path, HEADER)
    with pytest.raises(EmptyRecording):
        load_recording(t, m)


def test_non_contiguous_frames(tmp_path):
    rows = _rows(3) + _rows(2, start=10)
    t, m = _write(tmp_path, HEADER + rows)
    with pytest.raises(NonContiguousFrames) as exc:
        load_recording(t, m)
    assert exc.value.vehicle_id == 1


def test_unknown_lane(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(3, lane=9))
    with pytest.raises(UnknownLaneId) as exc:
        load_recording(t, m)
    assert exc.value.lane_id == 9


def test_blank_field_rejects_row_only(tmp_path):
    rows = _rows(4).splitlines()
    rows[3] = rows[3].replace(",30.0,", ",,", 1)
    t, m = _write(tmp_path, HEADER + "\n".join(rows) + "\n" + _rows(3, vid=2, lane=6))
    rep = IngestReport()
    r = load_recording(t, m, report=rep)
    assert rep.rows_rejected == 1
    assert rep.rejections[0].line == 5 and rep.rejections[0].vehicle_id == 1
    assert "xVelocity" in rep.rejections[0].reason
    assert len(r.tracks[1]) == 3 and len(r.tracks[2]) == 3


def test_rejected_row_inside_track_drops_vehicle(tmp_path):
    rows = _rows(5).splitlines()
    rows[2] = rows[2].replace(",0.0,0.0,0.0,", ",nan,0.0,0.0,", 1)
    t, m = _write(tmp_path, HEADER + "\n".join(rows) + "\n" + _rows(3, vid=2, lane=6))
    rep = IngestReport()
    r = load_recording(t, m, report=rep)
    assert list(r.tracks) == [2]
    assert rep.rows_rejected == 5  # the bad row plus the four orphaned ones
    assert any("vehicle 1 dropped" in w for w in rep.warnings)


def test_upper_carriageway_is_normalized(tmp_path):
    rows = "".join(f"{1 + i},7,{400 - i * 1.2},6.0,4.0,1.8,-30.0,0.1,-0.2,0.0,2\n" for i in range(3))
    meta = "id,frameRate,upperLaneMarkings,lowerLaneMarkings\n1,25,4.0;7.75;11.5,15.0;18.75;22.5\n"
    t, m = _write(tmp_path, HEADER + rows, meta)
    trk = load_recording(t, m).tracks[7]
    assert trk.direction == -1
    assert np.all(trk.vx == 30.0) and np.all(trk.ax == 0.2)
    assert trk.x[0] == pytest.approx(-(400 + 2.0))
    assert np.all(np.diff(trk.x) > 0)


def test_driving_direction_from_tracks_meta(tmp_path):
    r, _ = make_lane_change_scenario(ScenarioSpec(direction=-1, seed=2))
    t, m = write_highd_files(r, tmp_path)
    back = load_recording(t, m)
    assert {trk.direction for trk in back.tracks.values()} == {-1}


def test_backwards_motion_warns(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(3, vx=-0.5))
    rep = IngestReport()
    load_recording(t, m, report=rep)
    assert any("backwards" in w for w in rep.warnings)


@pytest.mark.parametrize("text, expected", [
    ("4.0;7.75;11.5", [4.0, 7.75, 11.5]),
    ("[11.5, 4.0, 7.75]", [4.0, 7.75, 11.5]),
    ("", []),
])
def test_parse_markings(text, expected):
    assert parse_markings(text) == expected


def _three_vehicle_recording():
    return make_recording([
        make_track(1, n=30, x0=50.0, vx=31.5, ax=0.12, vy=0.05, y=21.3),
        make_track(2, n=20, first_frame=5, x0=20.0, vx=28.25, lane=7, y=25.125),
        make_track(3, n=25, first_frame=2, x0=-300.0, vx=25.0, lane=3, y=9.625, direction=-1),
    ], recording_id=4)


def test_write_then_load_round_trip(tmp_path):
    r = _three_vehicle_recording()
    t, m = write_highd_files(r, tmp_path)
    assert t.name == "04_tracks.csv" and m.name == "04_recordingMeta.csv"
    back = load_recording(t, m)
    assert back.recording_id == 4 and back.dt == pytest.approx(r.dt, abs=1e-12)
    assert back.lane_centers == pytest.approx(r.lane_centers)
    for vid, trk in r.tracks.items():
        assert back.tracks[vid].same_as(trk, atol=1e-6)


@given(st.integers(0, 10**6), st.sampled_from([-1, 1]))
def test_speed_magnitudes_survive_normalization(seed, direction):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    lane = 3 if direction == -1 else 7
    vx = rng.uniform(0.5, 40, size=6)
    r = make_recording([make_track(1, n=6, vx=vx, direction=direction, lane=lane, y=9.6 if lane == 3 else 25.1)])
    with tempfile.TemporaryDirectory() as d:
        t, m = write_highd_files(r, d)
        raw = pd.read_csv(t)
        back = load_recording(t, m)
        np.testing.assert_allclose(np.abs(back.tracks[1].vx), np.abs(raw["xVelocity"].to_numpy()), rtol=0,
                                   atol=1e-9)
        assert np.all(back.tracks[1].vx > 0)
        assert Path(d).exists()


def test_loading_is_deterministic(tmp_path):
    r, _ = make_lane_change_scenario(ScenarioSpec(seed=7))
    t, m = write_highd_files(r, tmp_path)
    a, b = load_recording(t, m), load_recording(t, m)
    assert all(a.tracks[v].same_as(b.tracks[v]) for v in a.tracks)


def test_empty_recording_round_trip(tmp_path):
    r = make_recording([])
    t, m = write_highd_files(r, tmp_path)
    with pytest.raises(EmptyRecording):
        load_recording(t, m)


def test_corpus_empty_directory(tmp_path):
    recs, rep = load_corpus(tmp_path)
    assert recs == [] and "no recordings found" in rep.warnings


def test_corpus_unreadable_directory(tmp_path):
    with pytest.raises(DirectoryUnreadable):
        load_corpus(tmp_path / "missing")


def test_corpus_two_valid_pairs(tmp_path):
    for rid in (1, 2):
        write_highd_files(make_null_scenario(5.0, [30, 25, 28], recording_id=rid), tmp_path)
    recs, rep = load_corpus(tmp_path)
    assert [r.recording_id for r in recs] == [1, 2]
    assert rep.rows_rejected == 0 and rep.failed_files == []


def test_corpus_with_corrupt_pair(tmp_path):
    write_highd_files(make_null_scenario(5.0, [30, 25], recording_id=1), tmp_path)
    t, _ = write_highd_files(make_null_scenario(5.0, [30, 25], recording_id=2), tmp_path)
    t.write_text(t.read_text()[:40])  # truncated inside the header
    recs, rep = load_corpus(tmp_path)
    assert [r.recording_id for r in recs] == [1]
    assert [os.path.basename(p) for p, _ in rep.failed_files] == ["02_tracks.csv"]


def test_corpus_missing_meta_is_reported(tmp_path):
    t, m = write_highd_files(make_null_scenario(5.0, [30], recording_id=3), tmp_path)
    m.unlink()
    recs, rep = load_corpus(tmp_path)
    assert recs == [] and len(rep.failed_files) == 1


def test_corpus_parallel_matches_serial(tmp_path):
    for rid in (1, 2, 3):
        write_highd_files(make_null_scenario(4.0, [30, 25, 28, 31], recording_id=rid, seed=rid), tmp_path)
    serial, _ = load_corpus(tmp_path)
    parallel, _ = load_corpus(tmp_path, workers=2)
    assert [r.recording_id for r in serial] == [r.recording_id for r in parallel]
    for a, b in zip(serial, parallel):
        assert all(a.tracks[v].same_as(b.tracks[v]) for v in a.tracks)


def test_validate_well_formed():
    r, _ = make_lane_change_scenario(ScenarioSpec(seed=1))
    assert validate_recording(r) == []


def test_validate_frame_gap(tmp_path):
    t, m = _write(tmp_path, HEADER + _rows(1, start=10) + _rows(1, start=12))
    r = load_recording(t, m, strict=False)
    codes = [v.code for v in validate_recording(r)]
    assert codes == ["NonContiguousFrames"]
    assert validate_recording(r)[0].frame == 10


def test_validate_unknown_lane():
    r = make_recording([make_track(1, n=5, lane=42)])
    assert [v.code for v in validate_recording(r)] == ["UnknownLaneId"]


def test_validate_flags_corrupted_file_row(tmp_path):
    r = _three_vehicle_recording()
    t, m = write_highd_files(r, tmp_path)
    df = pd.read_csv(t)
    df.loc[4, "laneId"] = 99
    df.to_csv(t, index=False)
    back = load_recording(t, m, strict=False)
    problems = validate_recording(back)
    assert [(v.code, v.vehicle_id) for v in problems] == [("UnknownLaneId", int(df.loc[4, "id"]))]


def test_validate_geometry_and_dimensions():
    t = make_track(1, n=3, length=0.0)
    r = Recording(1, 0.04, {2: 1.0, 3: 1.5}, {2: 1, 3: 1}, {1: t})
    codes = {v.code for v in validate_recording(r)}
    assert "LaneGeometry" in codes and "NonPositiveDimension" in codes and "UnknownLaneId" in codes
