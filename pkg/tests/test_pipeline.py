import math
from dataclasses import replace
from pathlib import Path

import pytest

from cutin.errors import ConfigInvalid, DirectoryUnreadable, IngestError
from cutin.model import LaneChangeEvent, WindowSpec
from cutin.pipeline import (
    PipelineConfig,
    SyntheticCorpus,
    build_grid,
    event_values,
    load_config,
    parse_config_text,
    run_pipeline,
    table1_counts,
    value_column,
)
from cutin.report import write_bundle
from cutin.synth import corpus_specs, make_lane_change_scenario, make_null_scenario, write_highd_files

from conftest import make_recording, make_track


@pytest.fixture(scope="module")
def synth_bundle():
    return run_pipeline(PipelineConfig(synthetic=SyntheticCorpus(20, 20, 0)))


def test_config_parse_examples():
    cfg = parse_config_text("""
        # detection
        v_s = 0.2
        gap_thresholds = 5, 50
        gap_mode = center_distance
        windows = [T1-1,T1+1];[T2,T2+2]
        planar = true
        synthetic_small = 3
        workers = auto
        formats = csv, markdown
    """)
    assert cfg.params.v_s == 0.2 and cfg.params.gap_thresholds == (5.0, 50.0)
    assert cfg.params.gap_mode == "center_distance"
    assert [w.label for w in cfg.windows] == ["[T1-1,T1+1]", "[T2,T2+2]"]
    assert cfg.planar is True and cfg.workers == "auto"
    assert cfg.synthetic == SyntheticCorpus(3, 20, 0)
    assert cfg.formats == ("csv", "md")


@pytest.mark.parametrize("text", [
    "v_z = 0.2",
    "synthetic_smal = 4",
    "v_s 0.2",
    "v_s = fast",
    "v_s = -1",
    "planar = maybe",
    "windows = [T3,T3+1]",
    "gap_mode = bumper",
])
def test_config_rejects(text):
    with pytest.raises(ConfigInvalid):
        parse_config_text(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "nope.cfg")


@pytest.mark.parametrize("kw", [
    {},
    {"input_dir": Path("."), "synthetic": SyntheticCorpus()},
    {"synthetic": SyntheticCorpus(), "windows": ()},
    {"synthetic": SyntheticCorpus(), "formats": ("pdf",)},
    {"synthetic": SyntheticCorpus(), "workers": 0},
])
def test_config_validation(kw):
    with pytest.raises(ConfigInvalid):
        PipelineConfig(**kw).validate()


def test_synthetic_corpus_table1(synth_bundle):
    assert synth_bundle.kept_total == 40
    assert all(v == (20, 20) for v in synth_bundle.table1.values())


def test_audit_balances(synth_bundle):
    a = synth_bundle.drop_audit
    dropped = sum(v for k, v in a.items() if k.startswith("dropped:"))
    assert a["transitions"] == a["kept"] + dropped
    assert dropped == len(synth_bundle.drops)


def test_events_sorted_and_complete(synth_bundle):
    keys = [e.event.key for e in synth_bundle.events]
    assert keys == sorted(keys)
    cols = {value_column(r, w, m) for r in ("lcv", "tfv") for w in synth_bundle.config.windows
            for m in ("p_a", "r_v", "dv", "a_max", "a_min")}
    assert all(set(e.values) == cols for e in synth_bundle.events)


def test_grid_covers_every_cell(synth_bundle):
    assert len(synth_bundle.grids) == 20
    for (role, anchor, metric), cells in synth_bundle.grids.items():
        n_w = sum(w.anchor == anchor for w in synth_bundle.config.windows)
        assert len(cells) == 5 * n_w
        assert all(c.n_cutin + c.n_other == 40 for c in cells)


def test_follower_braking_is_detected(synth_bundle):
    # close cut-ins make the follower brake; wide-gap lane changes do not
    cells = synth_bundle.grids[("tfv", "T1", "a_min")]
    assert all(c.comparison.p_value < 0.05 and c.comparison.mean_difference < 0 for c in cells)


def test_empty_group_cells():
    recs = [(5.0, {value_column("lcv", WindowSpec("T1", -1, 1), "dv"): 1.0})]
    cells = build_grid(recs, (10.0, 1.0), (WindowSpec("T1", -1, 1),), "lcv", "T1", "dv")
    assert [c.comparison for c in cells] == [None, None]
    assert [(c.n_cutin, c.n_other) for c in cells] == [(1, 0), (0, 1)]


def test_nan_values_are_left_out():
    w = WindowSpec("T1", -1, 1)
    col = value_column("lcv", w, "r_v")
    recs = [(1.0, {col: 0.1}), (2.0, {col: float("nan")}), (3.0, {col: 0.2}), (40.0, {col: 0.0}), (50.0, {col: 0.3})]
    (cell,) = build_grid(recs, (10.0,), (w,), "lcv", "T1", "r_v")
    assert (cell.n_cutin, cell.n_other) == (2, 2)


def test_table1_counts_partition():
    t = table1_counts([0.0, 9.99, 10.0, 25.0, 31.0], (10.0, 30.0))
    assert t == {10.0: (2, 3), 30.0: (4, 1)}


def test_manifest_reproduces_run(tmp_path, synth_bundle):
    a = tmp_path / "a"
    write_bundle(synth_bundle, a)
    cfg = replace(load_config(a / "manifest.txt"), output_dir=tmp_path / "b")
    b = tmp_path / "b"
    write_bundle(run_pipeline(cfg), b)
    for f in sorted(a.iterdir()):
        assert (b / f.name).read_bytes() == f.read_bytes(), f.name


def _write_corpus(directory, specs):
    for spec in specs:
        rec, _ = make_lane_change_scenario(spec)
        write_highd_files(rec, directory)


def test_directory_run_matches_synthetic_counts(tmp_path):
    _write_corpus(tmp_path, corpus_specs(3, 3, seed=1))
    bundle = run_pipeline(PipelineConfig(input_dir=tmp_path))
    assert bundle.kept_total == 6
    assert bundle.table1[10.0] == (3, 3)
    assert any(line.startswith("# input 01_tracks.csv sha256") for line in bundle.manifest)


def test_null_directory_has_no_events(tmp_path):
    write_highd_files(make_null_scenario(20.0, [25, 30, 35, 28]), tmp_path)
    bundle = run_pipeline(PipelineConfig(input_dir=tmp_path))
    assert not bundle.has_events
    assert bundle.drop_audit == {"transitions": 0, "kept": 0}
    assert all(c.comparison is None for cells in bundle.grids.values() for c in cells)


def test_missing_directory(tmp_path):
    with pytest.raises(DirectoryUnreadable):
        run_pipeline(PipelineConfig(input_dir=tmp_path / "missing"))


def test_all_files_broken(tmp_path):
    (tmp_path / "01_tracks.csv").write_text("frame,id\n1,1\n")
    (tmp_path / "01_recordingMeta.csv").write_text("id\n1\n")
    with pytest.raises(IngestError):
        run_pipeline(PipelineConfig(input_dir=tmp_path))


def test_workers_give_identical_bundles(tmp_path):
    _write_corpus(tmp_path / "in", corpus_specs(2, 2, seed=3))
    outs = []
    for n in (1, 2):
        bundle = run_pipeline(PipelineConfig(input_dir=tmp_path / "in", workers=n))
        out = tmp_path / f"w{n}"
        write_bundle(bundle, out)
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]


def test_standing_follower_gets_nan_ratio_and_a_warning():
    w = WindowSpec("T1", -1, 1)
    lcv = make_track(1, n=200, vx=20.0)
    tfv = make_track(2, n=200, vx=0.0, lane=7, y=25.125)
    ev = LaneChangeEvent(1, 1, 80, 100, 150, 6, 7, 2, 5.0)
    values, warnings = event_values(make_recording([lcv, tfv]), ev, (w,))
    assert math.isnan(values[value_column("tfv", w, "r_v")])
    assert values[value_column("tfv", w, "dv")] == 0.0
    assert values[value_column("lcv", w, "r_v")] == 0.0
    assert len(warnings) == 1 and "vehicle 2" in warnings[0]
