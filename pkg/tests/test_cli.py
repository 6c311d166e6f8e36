import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fracinv.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

# observation of dirichlet-h-sine at t = 0, 0.5, 1 from the first verified run;
# L1 stepping at N = 8192 agrees to 6e-7
GOLDEN_E = [0.16666003460197223, 0.012307775263126819, 0.010237733801071642]


def read_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


FORWARD = """\
name: tiny
mode: forward
operator: {kind: dirichlet}
functional: {kind: mean_value}
alpha: 0.5
N: 32
n_modes: 4
data:
  h: {constant: 1}
  sigma: {constant: SIGMA}
"""


def test_forward_golden(tmp_path):
    code = main(["run", "--scenario", str(SCENARIOS / "dirichlet-h-sine.yaml"), "--out", str(tmp_path)])
    assert code == 0
    obs = read_csv(tmp_path / "observation.csv")
    np.testing.assert_allclose(obs[[0, 128, 256], 1], GOLDEN_E, rtol=1e-10)
    header = (tmp_path / "data.csv").read_text().splitlines()[0]
    assert header.startswith("t,v_1,v_2") and header.endswith(",E")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0
    assert manifest["backend"] in ("compiled", "python")
    assert set(manifest["files"]) >= {"data.csv", "observation.csv", "sigma.csv", "manifest.json"}


def test_run_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--scenario", str(SCENARIOS / "table-operator.yaml"),
                     "--out", str(tmp_path / d)]) == 0
    for name in ("data.csv", "observation.csv", "diagnostics.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_validation_exit(tmp_path, capsys):
    code = main(["run", "--scenario", str(SCENARIOS / "malformed-missing-alpha.yaml"), "--out", str(tmp_path)])
    assert code == 1
    assert "alpha: required field is missing" in capsys.readouterr().err


def test_solver_failure_exit(tmp_path, capsys):
    path = write(tmp_path, "neg.yaml", FORWARD.replace("SIGMA", "-1"))
    assert main(["run", "--scenario", path, "--out", str(tmp_path / "o")]) == 2
    assert "DomainError" in capsys.readouterr().err
    diag = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert diag["status"] == "failed"


def test_expectation_exit(tmp_path):
    src = (SCENARIOS / "constant-state.yaml").read_text().replace("sigma: {constant: 1}", "sigma: {constant: 2}")
    path = write(tmp_path, "cs.yaml", src)
    assert main(["run", "--scenario", path, "--out", str(tmp_path / "o")]) == 3
    diag = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert diag["expectation"]["passed"] is False


def test_inverse_constant_state(tmp_path):
    assert main(["run", "--scenario", str(SCENARIOS / "constant-state.yaml"), "--out", str(tmp_path)]) == 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["bracket"]["lower"] == pytest.approx(0.4698411, abs=1e-7)
    sigma = read_csv(tmp_path / "sigma.csv")
    np.testing.assert_allclose(sigma[:, 1], 1.0, atol=1e-6)


def test_describe(capsys):
    assert main(["describe", "--scenario", str(SCENARIOS / "constant-state.yaml")]) == 0
    text = capsys.readouterr().out
    assert "bracket       [0.4698411, 1]" in text
    assert main(["describe", "--scenario", str(SCENARIOS / "verify-involution.yaml")]) == 0
    assert "admissible" in capsys.readouterr().out


def test_verify(tmp_path, capsys):
    code = main(["verify", "--scenario", str(SCENARIOS / "verify-involution.yaml"),
                 "--out", str(tmp_path), "--seed", "7"])
    out = capsys.readouterr().out
    assert code == 0
    assert "FAIL" not in out and "PASS forward.contraction" in out
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["seed"] == 7 and report["passed"]


def test_overrides_and_many_scenarios(tmp_path):
    a = write(tmp_path, "a.yaml", FORWARD.replace("SIGMA", "1").replace("name: tiny", "name: one"))
    b = write(tmp_path, "b.yaml", FORWARD.replace("SIGMA", "2").replace("name: tiny", "name: two"))
    code = main(["run", "--scenario", a, "--scenario", b, "--out", str(tmp_path / "o"),
                 "--grid", "16", "--modes", "2", "--method", "l1", "--jobs", "2"])
    assert code == 0
    data = read_csv(tmp_path / "o" / "two" / "data.csv")
    assert data.shape == (17, 4)
    manifest = json.loads((tmp_path / "o" / "one" / "manifest.json").read_text())
    assert manifest["scenario"]["N"] == 16


def test_missing_verb_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["--scenario", "x.yaml"])
    assert exc.value.code == 2


def test_console_entry(tmp_path):
    exe = shutil.which("fracinv")
    cmd = [exe] if exe else [sys.executable, "-m", "fracinv"]
    out = subprocess.run(cmd + ["describe", "--scenario", str(SCENARIOS / "table-operator.yaml")],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "table-operator" in out.stdout
