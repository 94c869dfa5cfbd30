import numpy as np

from halr.cli import main
from halr.fileio import write_halr
from halr.matrix import HalrMatrix
from util import random_square_halr


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def table(out):
    lines = [ln for ln in out.strip().splitlines() if ln]
    header = lines[0].split("\t")
    return header, [dict(zip(header, ln.split("\t"))) for ln in lines[1:]]


def test_approximate_gaussian(tmp_path, capsys):
    code, out, _ = run(
        capsys, "approximate", "gaussian", "--n", "128", "--n-min", "32", "--out", str(tmp_path)
    )
    assert code == 0
    header, rows = table(out)
    assert header[:2] == ["n_rows", "n_cols"]
    assert rows[0]["n_rows"] == "128"
    assert float(rows[0]["fraction_of_dense"]) < 0.2
    for suffix in (".halr", ".structure.json", ".svg"):
        assert (tmp_path / f"gaussian{suffix}").exists()


def test_approximate_white_noise_stays_dense(tmp_path, capsys):
    code, out, _ = run(
        capsys, "approximate", "white-noise", "--n", "64", "--n-min", "16", "--out", str(tmp_path)
    )
    assert code == 0
    _, rows = table(out)
    assert rows[0]["fraction_of_dense"] == "1"
    assert rows[0]["lowrank_leaves"] == "0"


def test_approximate_unknown_source_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "approximate", "no-such-thing", "--out", str(tmp_path))
    assert code == 2
    assert "no such builtin or file" in err


def test_approximate_npy_input(tmp_path, capsys):
    path = tmp_path / "m.npy"
    np.save(path, np.random.default_rng(1).standard_normal((48, 48)))
    code, out, _ = run(
        capsys, "approximate", str(path), "--n-min", "16", "--out", str(tmp_path)
    )
    assert code == 0
    assert (tmp_path / "m.halr").exists()


def test_refine_roundtrip(tmp_path, capsys):
    rng = np.random.default_rng(2)
    a = random_square_halr(rng, 64, rank=3)
    src = tmp_path / "a.halr"
    write_halr(src, a)
    code, out, _ = run(
        capsys, "refine", str(src), "--maxrank", "10", "--n-min", "16", "--out", str(tmp_path)
    )
    assert code == 0
    assert (tmp_path / "a.refined.halr").exists()


def test_corrupt_input_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.halr"
    bad.write_bytes(b"not a matrix at all")
    code, _, err = run(capsys, "refine", str(bad), "--out", str(tmp_path))
    assert code == 2
    assert "HALR1" in err


def test_sylvester_solves_and_reports(tmp_path, capsys):
    rng = np.random.default_rng(3)
    c = HalrMatrix.from_dense(rng.standard_normal((64, 64)))
    src = tmp_path / "c.halr"
    write_halr(src, c)
    code, out, _ = run(
        capsys,
        "sylvester", str(src),
        "--dt", "1e-3", "--coefficient", "0.01", "--tol", "1e-8",
        "--n-min", "32", "--out", str(tmp_path),
    )
    assert code == 0
    header, rows = table(out)
    assert header == ["converged", "iterations", "rel_residual", "T_total_s", "storage_MB", "halr_rank"]
    assert rows[0]["converged"] == "True"
    assert float(rows[0]["rel_residual"]) <= 1e-7
    assert (tmp_path / "c.solution.halr").exists()


def test_sylvester_rejects_rectangular_rhs(tmp_path, capsys):
    rng = np.random.default_rng(4)
    src = tmp_path / "r.halr"
    write_halr(src, HalrMatrix.from_dense(rng.standard_normal((32, 48))))
    code, _, err = run(capsys, "sylvester", str(src), "--out", str(tmp_path))
    assert code == 2
    assert "square" in err


def test_run_burgers_table_and_artifacts(tmp_path, capsys):
    code, out, _ = run(
        capsys,
        "burgers",
        "--n", "64", "--dt", "1e-3", "--steps", "2", "--coefficient", "0.01",
        "--maxrank", "30", "--eps-step", "1e-6", "--tol", "1e-7", "--n-min", "32",
        "--out", str(tmp_path),
    )
    assert code == 0
    header, rows = table(out)
    assert header[0] == "step" and len(rows) == 2
    assert (tmp_path / "burgers-report.csv").exists()
    assert (tmp_path / "burgers-final.halr").exists()


def test_config_file_with_flag_override(tmp_path, capsys):
    cfgfile = tmp_path / "exp.cfg"
    cfgfile.write_text(
        "# comment\nn = 32\nsteps = 1\ndt = 1e-3\ncoefficient = 0.01\n"
        "maxrank = 30\neps-step = 1e-6\ntol = 1e-7\nn-min = 16\n"
    )
    code, out, _ = run(
        capsys, "burgers", "--config", str(cfgfile), "--n", "64", "--out", str(tmp_path)
    )
    assert code == 0
    # the flag beat the file: a 64-point run writes a 64x64 final matrix
    from halr.fileio import read_halr

    assert read_halr(tmp_path / "burgers-final.halr").shape == (64, 64)


def test_bad_config_value_is_usage_error(tmp_path, capsys):
    cfgfile = tmp_path / "exp.cfg"
    cfgfile.write_text("wavelength = 3\n")
    code, _, err = run(capsys, "burgers", "--config", str(cfgfile))
    assert code == 2
    assert "wavelength" in err


def test_render_is_deterministic(tmp_path, capsys):
    rng = np.random.default_rng(5)
    src = tmp_path / "a.halr"
    write_halr(src, random_square_halr(rng, 64, rank=2))
    out1 = tmp_path / "one"
    out2 = tmp_path / "two"
    assert run(capsys, "render", str(src), "--out", str(out1))[0] == 0
    assert run(capsys, "render", str(src), "--out", str(out2))[0] == 0
    assert (out1 / "a.svg").read_bytes() == (out2 / "a.svg").read_bytes()


def test_helmholtz_command_reports_iterations(tmp_path, capsys):
    code, out, _ = run(
        capsys,
        "helmholtz",
        "--n", "64", "--tol", "1e-3", "--maxrank", "20", "--n-min", "32",
        "--out", str(tmp_path),
    )
    assert code == 0
    blocks = out.strip().split("\n")
    # second table reports the outer iteration count
    assert any(ln.startswith("iterations") for ln in blocks)
    assert (tmp_path / "helmholtz-final.halr").exists()
