import csv
import subprocess
import sys

import pytest

from cutin.cli import EXIT_CONFIG, EXIT_INGEST, EXIT_NO_EVENTS, EXIT_OK, main
from cutin.ingest import load_corpus
from cutin.synth import corpus_specs, make_null_scenario, write_highd_files


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(d), "--n-small", "3", "--n-large", "3", "--seed", "4"]) == EXIT_OK
    return d


def test_synth_writes_loadable_files(synth_dir):
    recs, report = load_corpus(synth_dir)
    assert len(recs) == 6 and not report.failed_files
    with open(synth_dir / "ground_truth.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and all(r["t1"] and r["t3"] for r in rows)


def test_run_synthetic(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--synthetic", "4,4,1", "--out", str(out)]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"table1.csv", "table1.md", "events.csv", "manifest.txt", "table_lcv_t2_p_a.md"} <= names
    assert "kept=8" in capsys.readouterr().out


def test_run_directory_and_stats_agree(tmp_path, synth_dir):
    out = tmp_path / "run"
    assert main(["run", "--input", str(synth_dir), "--out", str(out), "--format", "csv"]) == EXIT_OK
    again = tmp_path / "stats"
    assert main(["stats", "--input", str(out / "events.csv"), "--out", str(again), "--format", "csv"]) == EXIT_OK
    produced = sorted(p.name for p in again.iterdir())
    assert "table1.csv" in produced
    for name in produced:
        assert (again / name).read_bytes() == (out / name).read_bytes(), name


def test_gaps_flag_changes_columns(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--synthetic", "2,2", "--out", str(out), "--gaps", "5,40", "--format", "csv"]) == EXIT_OK
    gaps = [s.initial_gap for s in corpus_specs(2, 2, 0)]
    cut = [sum(g < th for g in gaps) for th in (5, 40)]
    assert (out / "table1.csv").read_text().splitlines() == [
        "events,5,40", f"Cut-in,{cut[0]},{cut[1]}", f"Other lane change,{4 - cut[0]},{4 - cut[1]}"]


def test_null_input_exits_3(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    write_highd_files(make_null_scenario(10.0, [30, 31]), src)
    out = tmp_path / "out"
    assert main(["run", "--input", str(src), "--out", str(out)]) == EXIT_NO_EVENTS
    assert (out / "table1.csv").read_text() == "events,10,15,20,25,30\n"


def test_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("v_s = 0.15\nspeed_limit = 3\n")
    assert main(["run", "--synthetic", "1,1", "--out", str(tmp_path / "o"), "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text("tau_s = -2\n")
    assert main(["run", "--synthetic", "1,1", "--out", str(tmp_path / "o"), "--config", str(cfg)]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["run", "--out", "x"],
    ["run", "--synthetic", "a,b", "--out", "x"],
    ["run", "--synthetic", "1,1", "--out", "x", "--gaps", "ten"],
    ["run", "--synthetic", "1,1", "--out", "x", "--workers", "0"],
    ["run", "--synthetic", "1,1", "--out", "x", "--format", "pdf"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG


def test_missing_input_exits_2(tmp_path):
    assert main(["run", "--input", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == EXIT_INGEST
    assert main(["validate", "--input", str(tmp_path / "nope")]) == EXIT_INGEST


def test_validate_clean_and_broken(tmp_path, synth_dir, capsys):
    assert main(["validate", "--input", str(synth_dir)]) == EXIT_OK
    assert "0 violations" in capsys.readouterr().out
    bad = tmp_path / "bad"
    bad.mkdir()
    text = (synth_dir / "01_tracks.csv").read_text().splitlines()
    (bad / "01_tracks.csv").write_text("\n".join(text[:50] + text[52:]) + "\n")
    (bad / "01_recordingMeta.csv").write_text((synth_dir / "01_recordingMeta.csv").read_text())
    assert main(["validate", "--input", str(bad)]) == EXIT_INGEST
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["validate", "--input", str(empty)]) == EXIT_INGEST


def test_stats_on_missing_file_exits_2(tmp_path):
    assert main(["stats", "--input", str(tmp_path / "events.csv"), "--out", str(tmp_path / "o")]) == EXIT_INGEST


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cutin", "run", "--synthetic", "1,1", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_OK, res.stderr
