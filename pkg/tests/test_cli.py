import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from strmor.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_bench_gen_writes_bundle(runner, tmp_path):
    out = tmp_path / "planted"
    res = runner.invoke(main, [
        "bench", "gen", "--name", "planted", "--size", "10", "--seed", "0",
        "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    assert (out / "system.json").exists()


def test_bench_gen_unknown_name_is_usage_error(runner, tmp_path):
    res = runner.invoke(main, [
        "bench", "gen", "--name", "mystery", "--size", "10",
        "--out", str(tmp_path / "x"),
    ])
    assert res.exit_code == 2


def test_bench_gen_bad_size_is_usage_error(runner, tmp_path):
    res = runner.invoke(main, [
        "bench", "gen", "--name", "chafee", "--size", "1",
        "--out", str(tmp_path / "x"),
    ])
    assert res.exit_code == 2


def _plan_file(tmp_path, count=6, families=("L", "N1", "H2"), galerkin=False):
    doc = {
        "flags": {"families": list(families), "galerkin": galerkin},
        "grid": {"sigma": f"log:0.5:3:{count}", "axis": "real"},
    }
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(doc))
    return path


def test_rom_build_recovers_planted_order(runner, tmp_path):
    sys_dir = tmp_path / "sys"
    rom_dir = tmp_path / "rom"
    r = runner.invoke(main, [
        "bench", "gen", "--name", "planted", "--size", "12", "--seed", "0",
        "--out", str(sys_dir),
    ])
    assert r.exit_code == 0
    plan = _plan_file(tmp_path, count=8)
    r = runner.invoke(main, [
        "rom", "build", str(sys_dir), "--plan", str(plan), "--tol", "1e-10",
        "--out", str(rom_dir),
    ])
    assert r.exit_code == 0, r.output
    assert "reduced order 3" in r.output
    assert (rom_dir / "system.json").exists()
    assert (rom_dir / "provenance.json").exists()
    assert (rom_dir / "singular_values.png").exists()
    rows = _read_csv(rom_dir / "singular_values.csv")
    assert rows[0] == ["index", "sigma_horizontal", "sigma_vertical",
                       "ratio_horizontal", "ratio_vertical"]
    assert float(rows[1][3]) == 1.0


def test_rom_build_explicit_order_and_no_plot(runner, tmp_path):
    sys_dir = tmp_path / "sys"
    runner.invoke(main, ["bench", "gen", "--name", "delay-rod", "--size", "40",
                         "--out", str(sys_dir)])
    doc = {
        "flags": {"families": ["L", "N1"]},
        "grid": {"sigma": "log:1e-2:1e2:12", "p": "rand:1:10", "seed": 0},
    }
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps(doc))
    rom_dir = tmp_path / "rom"
    r = runner.invoke(main, [
        "rom", "build", str(sys_dir), "--plan", str(plan), "--order", "5",
        "--out", str(rom_dir), "--no-plot",
    ])
    assert r.exit_code == 0, r.output
    assert not (rom_dir / "singular_values.png").exists()
    prov = json.loads((rom_dir / "provenance.json").read_text())
    assert prov["order"] == 5


def test_tf_eval_single_point_scalar_inverse(runner, tmp_path):
    # scalar system K = s: F_L(2j) = -0.5j
    import strmor
    from strmor import save_system
    sys = strmor.System(
        operator=strmor.StructuredOperator(n=1, terms=((strmor.S, np.eye(1)),)),
        input_map=strmor.ParamMatrix.constant(np.eye(1)),
        output_map=strmor.ParamMatrix.constant(np.eye(1)),
    )
    sys_dir = tmp_path / "scalar"
    save_system(sys, sys_dir)
    out = tmp_path / "tf.csv"
    r = runner.invoke(main, [
        "tf", "eval", str(sys_dir), "--family", "L", "--s", "0+2j",
        "--out", str(out),
    ])
    assert r.exit_code == 0, r.output
    rows = _read_csv(out)
    assert rows[0][:3] == ["family", "s1_re", "s1_im"]
    assert float(rows[1][3]) == pytest.approx(0.0, abs=1e-14)
    assert float(rows[1][4]) == pytest.approx(-0.5)


def test_tf_eval_grid_with_compare(runner, tmp_path):
    sys_dir = tmp_path / "sys"
    rom_dir = tmp_path / "rom"
    runner.invoke(main, ["bench", "gen", "--name", "planted", "--size", "12",
                         "--seed", "0", "--out", str(sys_dir)])
    plan = _plan_file(tmp_path, count=8)
    runner.invoke(main, ["rom", "build", str(sys_dir), "--plan", str(plan),
                         "--order", "3", "--out", str(rom_dir)])
    out = tmp_path / "sweep.csv"
    r = runner.invoke(main, [
        "tf", "eval", str(sys_dir), "--family", "L", "--grid", "log:0.1:10:9",
        "--compare", str(rom_dir), "--out", str(out),
    ])
    assert r.exit_code == 0, r.output
    rows = _read_csv(out)
    assert rows[0][-1] == "abs_err"
    assert len(rows) == 10
    assert out.with_suffix(".png").exists()


def test_tf_eval_wrong_arity_is_usage_error(runner, tmp_path):
    sys_dir = tmp_path / "sys"
    runner.invoke(main, ["bench", "gen", "--name", "planted", "--size", "10",
                         "--seed", "0", "--out", str(sys_dir)])
    r = runner.invoke(main, [
        "tf", "eval", str(sys_dir), "--family", "H2", "--s", "1+0j",
        "--out", str(tmp_path / "x.csv"),
    ])
    assert r.exit_code == 2


def test_sim_and_compare_flow(runner, tmp_path):
    sys_dir = tmp_path / "rod"
    runner.invoke(main, ["bench", "gen", "--name", "delay-rod", "--size", "30",
                         "--out", str(sys_dir)])
    traj = tmp_path / "traj.csv"
    r = runner.invoke(main, [
        "sim", str(sys_dir), "--input", "0.05*(cos(10*t)+cos(5*t))",
        "--t-end", "2.0", "--dt", "0.02", "--p", "2.0", "--out", str(traj),
    ])
    assert r.exit_code == 0, r.output
    rows = _read_csv(traj)
    assert rows[0] == ["t", "y1"]
    assert len(rows) == 102
    assert traj.with_suffix(".png").exists()

    doc = {
        "flags": {"families": ["L", "N1"]},
        "grid": {"sigma": "log:1e-2:1e2:10", "p": "rand:1:10", "seed": 0},
    }
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps(doc))
    rom_dir = tmp_path / "rom"
    r = runner.invoke(main, ["rom", "build", str(sys_dir), "--plan", str(plan),
                             "--order", "6", "--out", str(rom_dir)])
    assert r.exit_code == 0, r.output
    cmp_dir = tmp_path / "cmp"
    r = runner.invoke(main, [
        "compare", str(sys_dir), str(rom_dir),
        "--input", "0.05*(cos(10*t)+cos(5*t))",
        "--t-end", "2.0", "--dt", "0.02", "--p", "1.0", "--p", "5.0",
        "--p", "10.0", "--out", str(cmp_dir),
    ])
    assert r.exit_code == 0, r.output
    metrics = {row[0]: float(row[1]) for row in _read_csv(cmp_dir / "metrics.csv")[1:]}
    assert "e_max" in metrics and metrics["e_max"] < 1e-2
    sweep_rows = _read_csv(cmp_dir / "sweep.csv")
    assert sweep_rows[0] == ["p0", "t", "error"]
    assert (cmp_dir / "sweep.png").exists()


def test_compare_single_parameter_metrics(runner, tmp_path):
    sys_dir = tmp_path / "rod"
    runner.invoke(main, ["bench", "gen", "--name", "delay-rod", "--size", "20",
                         "--out", str(sys_dir)])
    cmp_dir = tmp_path / "cmp"
    r = runner.invoke(main, [
        "compare", str(sys_dir), str(sys_dir),
        "--input", "0.05*(cos(10*t)+cos(5*t))",
        "--t-end", "1.0", "--dt", "0.02", "--p", "3.0", "--out", str(cmp_dir),
    ])
    assert r.exit_code == 0, r.output
    metrics = {row[0]: float(row[1]) for row in _read_csv(cmp_dir / "metrics.csv")[1:]}
    assert metrics["l2"] == 0.0 and metrics["linf"] == 0.0
    assert (cmp_dir / "compare.png").exists()


def test_sim_bad_signal_is_usage_error(runner, tmp_path):
    sys_dir = tmp_path / "rod"
    runner.invoke(main, ["bench", "gen", "--name", "delay-rod", "--size", "20",
                         "--out", str(sys_dir)])
    r = runner.invoke(main, [
        "sim", str(sys_dir), "--input", "__import__('os')",
        "--t-end", "1.0", "--dt", "0.02", "--out", str(tmp_path / "t.csv"),
    ])
    assert r.exit_code == 2


def test_bench_gen_is_deterministic(runner, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        r = runner.invoke(main, ["bench", "gen", "--name", "planted",
                                 "--size", "12", "--seed", "7", "--out", str(out)])
        assert r.exit_code == 0
    for name in sorted(p.name for p in a.iterdir()):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_numerical_failure_exit_code(runner, tmp_path):
    # delay not a multiple of dt -> numerical failure, exit 1
    sys_dir = tmp_path / "rod"
    runner.invoke(main, ["bench", "gen", "--name", "delay-rod", "--size", "20",
                         "--out", str(sys_dir)])
    r = runner.invoke(main, [
        "sim", str(sys_dir), "--input", "t", "--t-end", "0.9", "--dt", "0.3",
        "--p", "1.0", "--out", str(tmp_path / "t.csv"),
    ])
    assert r.exit_code == 1
