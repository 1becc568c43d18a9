import json
import shutil
import subprocess

import pytest

from cavity_scatter.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, parse_grid
from cavity_scatter.scenario import PRESETS, load_scenario, preset

SMALL = ["--max-dof", "2500"]


def test_grid_arithmetic():
    assert len(parse_grid("-85:5:85")) == 35
    assert len(parse_grid("2:0.25:18")) == 65
    assert list(parse_grid("1,2.5,4")) == [1.0, 2.5, 4.0]
    assert parse_grid("").size == 0
    assert parse_grid("5:1:1").size == 0


def test_preset_list(capsys):
    assert main(["preset", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == list(PRESETS)


def test_preset_emit_round_trip(tmp_path):
    p = tmp_path / "ex4.json"
    assert main(["preset", "emit", "example4_sweep", "--out", str(p)]) == EXIT_OK
    assert load_scenario(p.read_text()) == preset("example4_sweep")


def test_unknown_preset_lists_names(tmp_path, capsys):
    assert main(["run", "--preset", "nope", "--out", str(tmp_path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert all(name in err for name in PRESETS)


def test_bad_flag_is_usage_error():
    assert main(["run", "--no-such-flag"]) == EXIT_USAGE


def test_empty_grid(tmp_path):
    assert main(["sweep", "--preset", "example1_empty", "--angles", "5:1:1", "--out", str(tmp_path)]) == EXIT_USAGE


def test_polarization_mismatch(tmp_path):
    args = ["compare", "--preset", "example1_empty", "--polarization", "TE", "--angles", "10", "--out", str(tmp_path)]
    assert main(args) == EXIT_USAGE


def test_invalid_scenario_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"polarization": "TM"}')
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path)]) == EXIT_USAGE


def test_numerical_failure_exit_code(tmp_path):
    doc = json.loads(json.dumps(json.loads(open_preset("example1_empty"))))
    doc["kappa0"] = 0.01
    p = tmp_path / "weak.json"
    p.write_text(json.dumps(doc))
    assert main(["run", "--scenario", str(p), "--sigma0", "0.01", "--out", str(tmp_path)]) == EXIT_NUMERIC


def open_preset(name):
    from cavity_scatter.scenario import dump_scenario

    return dump_scenario(preset(name))


@pytest.mark.parametrize("method", ["pml", "tbc"])
def test_run_writes_artifacts(tmp_path, method, capsys):
    out = tmp_path / method
    args = ["run", "--preset", "example1_lossy", "--theta", "0.7853981634", "--method", method, "--out", str(out)]
    assert main(args + SMALL) == EXIT_OK
    for name in ("history.csv", "timing.csv", "estimate.csv", "field.vtk", "summary.txt"):
        assert (out / name).stat().st_size > 0
    summary = (out / "summary.txt").read_text()
    assert f"method: {method}" in summary
    assert "stop: max_dof" in summary
    dof = int(next(l for l in summary.splitlines() if l.startswith("dof:")).split()[1])
    assert dof >= 2500


def test_csvs_are_byte_identical(tmp_path):
    for k in (1, 2):
        assert main(["run", "--preset", "example1_empty", "--out", str(tmp_path / str(k))] + SMALL) == EXIT_OK
    for name in ("history.csv", "estimate.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_single_point_compare(tmp_path, capsys):
    args = ["compare", "--preset", "example1_empty", "--angles", "30", "--degree", "2", "--out", str(tmp_path)]
    assert main(args + SMALL) == EXIT_OK
    rows = (tmp_path / "delta.csv").read_text().splitlines()
    assert rows[0] == "axis,value,delta_db" and len(rows) == 2
    assert (tmp_path / "rcs_pml.csv").exists() and (tmp_path / "rcs_tbc.csv").exists()
    assert "max_abs_delta_db" in (tmp_path / "summary.txt").read_text()


def test_sweep_threads_match_serial(tmp_path):
    base = ["sweep", "--preset", "example1_empty", "--angles", "10:10:30", "--max-dof", "1500"]
    assert main(base + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(base + ["--threads", "2", "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "rcs.csv").read_text()
    assert a == (tmp_path / "b" / "rcs.csv").read_text()
    assert len(a.splitlines()) == 4


def test_frequency_sweep(tmp_path):
    args = ["sweep", "--preset", "example4_sweep", "--freqs", "2,3", "--max-dof", "1500", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    rows = (tmp_path / "rcs.csv").read_text().splitlines()
    assert rows[1].startswith("frequency_ghz,2.000000,") and rows[1].endswith(",pml,TE")


def test_console_script(tmp_path):
    exe = shutil.which("cavity-scatter")
    if exe is None:
        pytest.skip("console script not installed")
    r = subprocess.run([exe, "preset", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "example1_empty" in r.stdout
