import subprocess
import sys

import numpy as np
import pytest
import yaml

from wellposed.cli import CONFIG_KEYS, EXPERIMENTS, PROBLEM_EXPERIMENTS, main, validate_config
from wellposed.errors import SchemaError
from wellposed.gpfield import read_matrix_csv, read_pgm
from wellposed.measures import Gaussian1D, Grid1D, discretize, write_grid_measure

FAST_ARGS = ["--grid-n", "201"]


def run(*argv):
    return main(list(argv))


def rows(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_help_lists_experiments_and_keys():
    out = subprocess.run([sys.executable, "-m", "wellposed", "run", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for name in EXPERIMENTS:
        assert name in out.stdout
    for key in CONFIG_KEYS:
        assert key in out.stdout


def test_unknown_key_is_schema_error(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("piror:\n  family: uniform\n")
    assert run("run", "--config", str(cfg), "--out", str(tmp_path)) == 2
    assert "piror: unknown key" in capsys.readouterr().err
    with pytest.raises(SchemaError, match="sweep.step"):
        validate_config({"prior": {"family": "uniform"}, "sweep": {"y_ref": 0, "y_min": 0, "y_max": 1}})


def test_config_reproduces_named_experiment(tmp_path):
    cfg = tmp_path / "fig1.yaml"
    cfg.write_text(yaml.safe_dump(PROBLEM_EXPERIMENTS["fig1-cubic"][0]))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("run", "--experiment", "fig1-cubic", "--out", str(a), *FAST_ARGS) == 0
    assert run("run", "--config", str(cfg), "--out", str(b), *FAST_ARGS) == 0
    assert (a / "fig1-cubic.csv").read_bytes() == (b / "fig1-cubic.csv").read_bytes()


def test_zero_evidence_rows_are_kept(tmp_path):
    cfg = tmp_path / "far.yaml"
    cfg.write_text(yaml.safe_dump({
        "name": "far",
        "prior": {"family": "uniform", "grid_n": 201},
        "likelihood": {"forward": "identity", "noise_variance": 1e-4},
        "sweep": {"y_ref": 0.5, "y_min": -20, "y_max": 1, "step": 0.5, "metrics": "hellinger,kl"},
    }))
    assert run("run", "--config", str(cfg), "--out", str(tmp_path)) == 0
    lines = rows(tmp_path / "far.csv")
    assert lines[0] == "param,hellinger,kl,status"
    assert lines[1] == "-20,,,ZeroEvidence"
    assert lines[-1].endswith(",ok")


def test_metrics_command(tmp_path, capsys):
    g = Grid1D(-8, 9, 2001)
    write_grid_measure(discretize(Gaussian1D(0, 1), g), tmp_path / "a.csv")
    write_grid_measure(discretize(Gaussian1D(1, 1), g), tmp_path / "b.csv")
    assert run("metrics", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
               "--metrics", "hellinger,kl") == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header == "hellinger,tv,prokhorov,wasserstein_p,p,kl"
    f = row.split(",")
    assert float(f[0]) == pytest.approx(0.34279, abs=1e-5)
    assert float(f[5]) == pytest.approx(0.5, abs=1e-4)

    assert run("metrics", str(tmp_path / "a.csv"), str(tmp_path / "a.csv")) == 0
    f = capsys.readouterr().out.splitlines()[1].split(",")
    assert [float(v) for i, v in enumerate(f) if i != 4] == [0, 0, 0, 0, 0]

    write_grid_measure(discretize(Gaussian1D(0, 1), Grid1D(-8, 9, 1001)), tmp_path / "c.csv")
    assert run("metrics", str(tmp_path / "a.csv"), str(tmp_path / "c.csv")) == 2


def test_exit_codes(tmp_path):
    assert run("run", "--experiment", "nope", "--out", str(tmp_path)) == 2
    assert run("run", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)) == 4
    assert run("run", "--experiment", "fig1-cubic", "--grid-n", "0", "--out", str(tmp_path)) == 2
    with pytest.raises(SystemExit) as exc:
        run("run")
    assert exc.value.code == 2


def test_runs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("run", "--experiment", "fig5-sigmoid", "--out", str(d), *FAST_ARGS) == 0
    names = sorted(p.name for p in a.iterdir())
    assert len(names) == 8
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_delta_and_model_select_outputs(tmp_path):
    assert run("run", "--experiment", "delta-homeo", "--out", str(tmp_path)) == 0
    assert rows(tmp_path / "delta-homeo.csv")[0] == "param,tv,wasserstein_1,status"
    assert run("run", "--experiment", "model-select-demo", "--out", str(tmp_path), *FAST_ARGS) == 0
    head = rows(tmp_path / "model-select-demo.csv")[0]
    assert head == "param,weight_identity,weight_square,hellinger,status"


def test_gp_outputs_and_svg(tmp_path):
    assert run("run", "--experiment", "fig6-gp", "--out", str(tmp_path), "--image-n", "16",
               "--replicates", "3", "--emit-svg") == 0
    lines = rows(tmp_path / "fig6-gp.csv")
    assert lines[0].startswith("sigma,mean_sq_hellinger,mean_rel_frobenius")
    assert lines[1].startswith("0,0,0,")
    orig = read_matrix_csv(tmp_path / "fig6-original.csv")
    assert orig.shape == (16, 16)
    assert np.abs(read_pgm(tmp_path / "fig6-original.pgm") - orig).max() <= 0.5
    obs = read_matrix_csv(tmp_path / "fig6-observations.csv")
    assert np.isnan(obs).sum() == 16 * 16 - 16
    for name in ("fig6-gp.svg", "fig6-images.svg"):
        text = (tmp_path / name).read_text()
        assert text.lstrip().startswith("<?xml") and "<svg" in text


def test_problem_svg(tmp_path):
    assert run("run", "--experiment", "fig4-floor", "--out", str(tmp_path), "--grid-n", "101",
               "--emit-svg") == 0
    assert (tmp_path / "fig4-floor-floor.svg").exists()
    assert (tmp_path / "fig4-floor-floor-assumptions.txt").read_text().strip()
