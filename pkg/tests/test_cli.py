import json
import subprocess
import sys

import numpy as np
import pytest

from crossmesh_pod.cli import RunConfig, main
from crossmesh_pod.store import read_csv

SMALL = ["--problem", "example-6-3", "--nx", "4", "--dt", "0.1", "--T", "0.5", "--theta", "5"]


def _run_all(out, extra=()):
    assert main(["solve-fe", "--out", str(out), *SMALL, *extra]) == 0
    for stage in ("gramian", "pod", "solve-rom", "report"):
        assert main([stage, "--out", str(out), "--ells", "1,2,3"]) == 0, stage


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    _run_all(out)
    return out


def test_pipeline_artifacts(run_dir):
    for name in ("config.json", "fe_log.csv", "gramian.csv", "mass.csv", "stiffness.csv",
                 "eigen.csv", "phi.csv", "ranks.csv", "errors.csv", "report.md", "timing.json",
                 "eta_1.csv", "eta_3.csv"):
        assert (run_dir / name).exists(), name
    K = read_csv(run_dir / "gramian.csv")
    assert K.shape == (6, 6) and np.allclose(K, K.T, atol=1e-15)
    log = read_csv(run_dir / "fe_log.csv", header=True)
    assert log.shape == (6, 5)
    errs = read_csv(run_dir / "errors.csv", header=True)
    assert list(errs[:, 0]) == [1, 2, 3]
    assert np.all(errs[:, 1] <= 1.0) and np.all(errs[:, 4] <= 1.0 + 1e-15)
    cfg = json.loads((run_dir / "config.json").read_text())
    assert cfg["nx"] == 4 and cfg["theta"] == 5.0
    report = (run_dir / "report.md").read_text()
    assert "theta" in report.lower() and "4" in report


def test_rerun_is_byte_identical(run_dir, tmp_path):
    _run_all(tmp_path)
    for name in ("gramian.csv", "stiffness.csv", "eigen.csv", "phi.csv", "ranks.csv",
                 "errors.csv", "eta_2.csv", "fe_log.csv"):
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes(), name


def test_missing_stage_input_exit_code(tmp_path, capsys):
    assert main(["pod", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "stage pod failed" in err and "gramian" in err


def test_invalid_config_exit_code(tmp_path, capsys):
    assert main(["solve-fe", "--out", str(tmp_path), "--dt", "0.3", "--T", "1.0"]) == 1
    assert "multiple of dt" in capsys.readouterr().err
    assert main(["solve-fe", "--out", str(tmp_path), "--theta", "1",
                 "--refine-fraction", "0.2"]) == 1


def test_config_file_layering(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# small run\nnx = 3\ndt = 0.25\nT = 0.5\nells = 1, 2\n")
    out = tmp_path / "out"
    assert main(["--config", str(conf), "solve-fe", "--out", str(out), "--nx", "2"]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["nx"] == 2 and cfg["dt"] == 0.25 and cfg["ells"] == [1, 2]
    bad = tmp_path / "bad.cfg"
    bad.write_text("mesh_size = 3\n")
    assert main(["--config", str(bad), "solve-fe", "--out", str(out)]) == 1


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.ny == cfg.nx == 16 and cfg.T == 1.0 and cfg.n_steps == 100
    with pytest.raises(ValueError):
        RunConfig(problem="nope")
    with pytest.raises(ValueError):
        RunConfig(ps=[1.5])


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "crossmesh_pod.cli", "gramian", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "crossmesh_pod.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "solve-fe" in r.stdout
