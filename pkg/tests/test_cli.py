import csv
import subprocess
import sys

import numpy as np
import pytest

from pxflow import cli
from pxflow.experiments import default_er_mesh_path
from pxflow.mesh import Triangulation, export_mesh, unit_square


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_converge_writes_csv(tmp_path, capsys):
    code, out, _ = run(["converge", "--element", "mini", "--p-minus", "2.0", "--levels", "2",
                        "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    path = tmp_path / "converge_mini_case1_p2_a1_b1_g1.csv"
    rows = read_rows(path)
    assert tuple(rows[0]) == cli.CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    assert rows[1][3] == "" and rows[1][5] == ""  # no EOC on the coarsest level
    # every number is written with 17 significant digits
    for r in rows[1:]:
        for cell in r[1:]:
            if cell:
                assert cell == format(float(cell), ".17g")
    assert float(rows[1][6]) == pytest.approx(1.0 * min(1.0, (3 / 2) / 2))
    assert "theory" in out and "wrote" in out


def test_levels_zero_single_row(tmp_path, capsys):
    code, _, _ = run(["converge", "--element", "taylor-hood", "--p-minus", "2.5",
                      "--alpha", "0.5", "--beta", "0.5", "--gamma", "0.5", "--case", "2",
                      "--levels", "0", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = read_rows(tmp_path / "converge_taylor-hood_case2_p2.5_a0.5_b0.5_g0.5.csv")
    assert len(rows) == 2
    assert rows[1][3] == "" and rows[1][5] == ""


def test_csv_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(["converge", "--element", "mini", "--p-minus", "1.5", "--levels", "1",
                    "--out", str(tmp_path / d)], capsys)[0] == 0
    name = "converge_mini_case1_p1.5_a1_b1_g1.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("# study\nelement = taylor-hood\np-minus = 2.0 2.5\nlevels = 3\n"
                   f"out = {tmp_path}\n")
    code, out, _ = run(["converge", "--config", str(cfg), "--levels", "0", "--element", "mini"],
                       capsys)
    assert code == 0
    for p in ("2", "2.5"):
        rows = read_rows(tmp_path / f"converge_mini_case1_p{p}_a1_b1_g1.csv")
        assert len(rows) == 2


@pytest.mark.parametrize("argv", [
    ["converge", "--element", "foo", "--p-minus", "2"],
    ["converge", "--p-minus", "2"],
    ["converge", "--element", "mini"],
    ["converge", "--element", "mini", "--p-minus", "1.0"],
    ["converge", "--element", "mini", "--p-minus", "2", "--alpha", "1.5"],
    ["converge", "--element", "mini", "--p-minus", "2", "--levels", "7"],
    ["converge", "--element", "mini", "--p-minus", "2", "--levels", "-1"],
    ["converge", "--element", "mini", "--p-minus", "nan"],
    ["converge", "--config", "/nonexistent/file.cfg"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == cli.EXIT_USAGE
    assert err


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("element = mini\nspeed = 3\n")
    code, _, err = run(["converge", "--config", str(cfg), "--p-minus", "2"], capsys)
    assert code == 2 and "bad.cfg:2" in err


def test_mesh_info_unit_square(tmp_path, capsys):
    export_mesh(unit_square(0), tmp_path / "sq.txt")
    code, out, _ = run(["mesh-info", str(tmp_path / "sq.txt")], capsys)
    assert code == 0
    assert "vertices:  5" in out and "triangles: 4" in out
    assert "conformity: OK" in out


def test_mesh_info_er_asset(capsys):
    code, out, _ = run(["mesh-info", str(default_er_mesh_path())], capsys)
    assert code == 0 and "conformity: OK" in out


def test_mesh_info_non_conforming(tmp_path, capsys):
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)
    t = np.array([[0, 1, 2], [0, 4, 3], [4, 2, 3]])
    export_mesh(Triangulation(v, t), tmp_path / "nc.txt")
    code, out, _ = run(["mesh-info", str(tmp_path / "nc.txt")], capsys)
    assert code == cli.EXIT_FAILURE and "conformity: FAIL" in out


def test_mesh_info_unreadable(tmp_path, capsys):
    (tmp_path / "junk.txt").write_text("hello\n")
    assert run(["mesh-info", str(tmp_path / "junk.txt")], capsys)[0] == 2
    assert run(["mesh-info", str(tmp_path / "missing.txt")], capsys)[0] == 2


def test_er_demo_missing_mesh(tmp_path, capsys):
    code, _, err = run(["er-demo", "--mesh", str(tmp_path / "none.txt")], capsys)
    assert code == 2 and "not found" in err


@pytest.mark.slow
def test_er_demo_without_field(tmp_path, capsys):
    code, out, _ = run(["er-demo", "--no-field", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "p = 4" in out
    assert (tmp_path / "er_velocity_nofield.vtk").is_file()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pxflow", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "converge" in res.stdout
