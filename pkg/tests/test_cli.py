from __future__ import annotations

import csv
import hashlib
import subprocess
import sys

import pytest
import yaml

from atomdetect.analysis import read_stream
from atomdetect.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from atomdetect.config import ExperimentConfig


def _digest(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def sim_dirs(tmp_path_factory):
    """One with-atoms and one background run, 2 s each, at the Faraday drive."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "faraday.yaml"
    ExperimentConfig().replace(**{"drive.intensity_Y": 0.4}).dump(cfg)
    with_dir, without_dir = root / "with", root / "without"
    assert main(["simulate", "--config", str(cfg), "--seed", "1", "--duration", "2s",
                 "--out", str(with_dir)]) == EXIT_OK
    assert main(["simulate", "--config", str(cfg), "--seed", "2", "--duration", "2s",
                 "--out", str(without_dir), "--no-atoms"]) == EXIT_OK
    return with_dir, without_dir


def test_simulate_is_reproducible(tmp_path, sim_dirs):
    with_dir, _ = sim_dirs
    cfg = with_dir.parent / "faraday.yaml"
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(cfg), "--seed", "1", "--duration", "2s",
                 "--out", str(again)]) == EXIT_OK
    for name in ("ch0.phts", "ch1.phts", "truth.yaml"):
        assert _digest(again / name) == _digest(with_dir / name)


def test_sidecar_reparses_to_equal_config(sim_dirs):
    with_dir, _ = sim_dirs
    side = yaml.safe_load((with_dir / "truth.yaml").read_text())
    expect = ExperimentConfig().replace(**{"drive.intensity_Y": 0.4, "run.seed": 1,
                                           "run.duration": 2.0})
    assert ExperimentConfig.from_dict(side) == expect


def test_file_sizes_match_rate_budget(sim_dirs):
    with_dir, _ = sim_dirs
    truth = yaml.safe_load((with_dir / "truth.yaml").read_text())
    n = sum(len(read_stream(with_dir / f"ch{i}.phts")) for i in (0, 1))
    size = sum((with_dir / f"ch{i}.phts").stat().st_size for i in (0, 1))
    assert size == 2 * 16 + 16 * n
    bg = 2 * 300 + 2000 + 2500 * 0.4
    expected = (truth["expected"]["signal_rate"] + bg) * 2.0
    assert n == pytest.approx(expected, rel=0.10)


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.yaml"
    code = main(["simulate", "--config", str(missing), "--out", str(tmp_path)])
    assert code != EXIT_OK
    assert "absent.yaml" in capsys.readouterr().err


def test_invalid_config_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("detector:\n  efficiency: 2.0\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "detector.efficiency" in capsys.readouterr().err


@pytest.mark.parametrize("content, defect", [
    (b"NOPE" + bytes(12), "magic"),
    (b"PHTS\x09\x00\x00\x00" + bytes(8), "version"),
])
def test_malformed_stream_exit(tmp_path, capsys, content, defect):
    p = tmp_path / "bad.phts"
    p.write_bytes(content)
    assert main(["correlate", str(p), str(p), "--out", str(tmp_path / "g.csv")]) == EXIT_IO
    assert defect in capsys.readouterr().err


def test_unsorted_stream_exit(tmp_path, capsys):
    p = tmp_path / "u.csv"
    p.write_text("channel,timestamp_ps\n0,100\n0,50\n")
    assert main(["mandel", str(p), "--out", str(tmp_path / "m.yaml")]) == EXIT_IO
    assert "unsorted" in capsys.readouterr().err


def test_correlate_empty_file(tmp_path):
    p = tmp_path / "empty.phts"
    p.write_bytes(b"")
    assert main(["correlate", str(p), str(p), "--out", str(tmp_path / "g.csv")]) != EXIT_OK
    q = tmp_path / "none.csv"
    q.write_text("channel,timestamp_ps\n")
    assert main(["correlate", str(q), str(q), "--out", str(tmp_path / "g.csv")]) != EXIT_OK


def test_correlate_fit_mandel_fidelity(tmp_path, sim_dirs):
    with_dir, without_dir = sim_dirs
    g2 = tmp_path / "g2.csv"
    assert main(["correlate", str(with_dir / "ch0.phts"), str(with_dir / "ch1.phts"),
                 "--out", str(g2)]) == EXIT_OK
    with open(g2) as fh:
        assert next(csv.reader(fh)) == ["tau_s", "g2", "g2_error", "raw_count"]
    g2_again = tmp_path / "g2_again.csv"
    main(["correlate", str(with_dir / "ch0.phts"), str(with_dir / "ch1.phts"),
          "--out", str(g2_again)])
    assert _digest(g2) == _digest(g2_again)

    code = main(["fit", str(g2), "--drive-y", "0.4", "--bg-to-signal", "0.1",
                 "--out", str(tmp_path / "fit.yaml")])
    assert code == EXIT_OK
    rep = yaml.safe_load((tmp_path / "fit.yaml").read_text())
    assert rep["parameters"]["n_bar"]["estimate"] > 0
    assert rep["fixed"]["drive_Y"] == 0.4 and rep["reduced_chi2"] > 0

    streams = [str(with_dir / "ch0.phts"), str(with_dir / "ch1.phts")]
    assert main(["mandel", *streams, "--duration", "2s",
                 "--out", str(tmp_path / "m.yaml")]) == EXIT_OK
    m = yaml.safe_load((tmp_path / "m.yaml").read_text())
    assert {"alpha", "alpha_std_error", "slope", "fit_range_mean_n"} <= set(m)

    out = tmp_path / "fid.csv"
    assert main(["fidelity", "--with", *streams, "--without", str(without_dir / "ch0.phts"),
                 str(without_dir / "ch1.phts"), "--gates", "0.1us,0.5us,1us,2us,5us",
                 "--duration-with", "2s", "--duration-without", "2s",
                 "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert all(0.9 < float(r["fidelity"]) <= 1.0 for r in rows)


def test_sweep_small(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--duration", "0.5s", "--drives", "0.1,0.4", "--seed", "3",
                 "--out", str(out)]) == EXIT_OK
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["Y"]) for r in rows] == [0.1, 0.4]
    assert float(rows[1]["rate_signal"]) > float(rows[0]["rate_signal"])


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "atomdetect.cli", "simulate", "--config",
                        str(tmp_path / "missing.yaml")], capture_output=True, text=True)
    assert r.returncode == EXIT_IO and "missing.yaml" in r.stderr


def test_fit_flat_correlogram_is_numerical_failure(tmp_path, sim_dirs):
    _, without_dir = sim_dirs
    g2 = tmp_path / "flat.csv"
    assert main(["correlate", str(without_dir / "ch0.phts"), str(without_dir / "ch1.phts"),
                 "--out", str(g2)]) == EXIT_OK
    assert main(["fit", str(g2), "--out", str(tmp_path / "f.yaml")]) == EXIT_NUMERICAL
