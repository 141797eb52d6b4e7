import json
import math
import subprocess
import sys

import numpy as np
import pytest

from monoflow.cli import run
from monoflow.serialize import dumps, to_jsonable


@pytest.fixture
def linear_spec(tmp_path):
    p = tmp_path / "model_linear.json"
    p.write_text(json.dumps({"dim": 2, "kind": "model_linear", "matrices": {"L": [[1, 0], [0, 2]]}}),
                 encoding="utf-8")
    return p


def invoke(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_count(capsys, linear_spec):
    code, out, _ = invoke(capsys, "count", "--spec", linear_spec, "--interval", 0, 6.2832)
    rep = json.loads(out)
    assert code == 0 and rep["crossing_count"] == 3 and rep["discrepancy"] < 2


def test_log_builtin(capsys):
    code, out, _ = invoke(capsys, "log", "--builtin", "sec4_counterexample", "--b", 0.5, "--at", 0)
    rep = json.loads(out)
    d = np.array([[complex(*z) for z in row] for row in rep["D"]])
    assert code == 0
    np.testing.assert_allclose(d, 0.25 * np.eye(2), atol=1e-12)
    assert rep["lambda_min_A_prime"] == -0.5


def test_log_with_lift(capsys):
    code, out, _ = invoke(capsys, "log", "--builtin", "sec4_counterexample", "--interval", -0.3, 0.3)
    rep = json.loads(out)
    assert code == 0 and rep["lift"]["max_generator_difference"] < 1e-9
    assert rep["monotone_check"]["implication_holds"]


def test_twoparam(capsys):
    code, out, _ = invoke(capsys, "twoparam", "--builtin", "sec5_example", "--rect", -0.1, 0.1, -0.1, 0.1)
    rep = json.loads(out)
    assert code == 0 and len(rep["curves"]) == 2
    slopes = sorted(c["slope"] for c in rep["curves"])
    np.testing.assert_allclose(slopes, [-0.57735, 0.57735], atol=1e-4)
    assert rep["schur_agreement"]


def test_twoparam_csv(capsys, tmp_path):
    path = tmp_path / "curves.csv"
    code, _, _ = invoke(capsys, "twoparam", "--builtin", "sec5_example", "--n-y", 5, "--csv", path)
    assert code == 0 and path.read_text(encoding="utf-8").startswith("y,branch,x,sigma_min")


def test_kato_rejected(capsys):
    code, out, err = invoke(capsys, "twoparam", "--builtin", "kato_negative")
    diag = json.loads(err)
    assert code == 1 and out == ""
    assert diag["error"] == "not_monotone" and diag["lambda_min"] == pytest.approx(-1.0)


def test_count_violation_exit_code(capsys, linear_spec):
    code, out, _ = invoke(capsys, "count", "--spec", linear_spec, "--interval", 0, 2 * math.pi,
                          "--closed", "open")
    assert code == 2 and json.loads(out)["violated"]


@pytest.mark.parametrize("argv", [
    ["count", "--interval", "0", "1"],
    ["count", "--spec", "missing.json", "--interval", "0", "1"],
    ["count", "--builtin", "sec5_example", "--interval", "0", "1"],
    ["bounds", "--builtin", "sec4_counterexample", "--b", "2", "--interval", "0", "1"],
    ["bounds", "--builtin", "sec4_counterexample", "--interval", "1", "0"],
    ["nonsense"],
])
def test_usage_errors(capsys, argv):
    code = run(argv)
    _, err = capsys.readouterr()
    assert code == 1
    if not argv[0] == "nonsense" and "--spec" not in argv[:1]:
        assert "error" in json.loads(err.strip().splitlines()[-1])


def test_malformed_spec(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"dim": 2, "kind": "model_linear", "matrices": {"L": [[1, 0], [0, -1]]}}', encoding="utf-8")
    code, _, err = invoke(capsys, "bounds", "--spec", p, "--interval", 0, 1)
    assert code == 1 and json.loads(err)["error"] == "malformed_spec"


def test_flow_csv(capsys, linear_spec):
    code, out, _ = invoke(capsys, "flow", "--spec", linear_spec, "--interval", 0, 1)
    assert code == 0 and out.startswith("x,j,mu,velocity\n")


def test_crossings_and_oracle_agree(capsys, linear_spec):
    _, out, _ = invoke(capsys, "crossings", "--spec", linear_spec, "--interval", 0.5, 7)
    fast = json.loads(out)["crossings"]
    _, out, _ = invoke(capsys, "oracle", "--spec", linear_spec, "--interval", 0.5, 7)
    slow = json.loads(out)["crossings"]
    assert [c["multiplicity"] for c in fast] == [c["multiplicity"] for c in slow] == [1, 2]


def test_bounds(capsys, linear_spec):
    _, out, _ = invoke(capsys, "bounds", "--spec", linear_spec, "--interval", 0, 1)
    rep = json.loads(out)
    assert rep["d_min"] == pytest.approx(1 / 1.05) and rep["d_2"] == pytest.approx(4 * 1.05)


def test_weyl(capsys):
    code, out, _ = invoke(capsys, "weyl", "--L", 1, math.sqrt(2), "--B-max", 100)
    rows = json.loads(out)["rows"]
    assert code == 0 and abs(rows[-1]["count"] - (1 + math.sqrt(2)) * 100 / (2 * math.pi)) < 2


def test_stability_synthesized(capsys, linear_spec):
    code, out, _ = invoke(capsys, "stability", "--spec", linear_spec, "--x0", 3.1416, "--synthesize-noise", 1e-5)
    rep = json.loads(out)
    assert code == 0 and rep["dist_ok"] and rep["defect_ok"]


def test_stability_vector_file(capsys, linear_spec, tmp_path):
    v = tmp_path / "phi.json"
    v.write_text("[[0, 0], [1, 0]]", encoding="utf-8")
    code, out, _ = invoke(capsys, "stability", "--spec", linear_spec, "--x0", math.pi, "--vector", v)
    assert code == 0 and json.loads(out)["projection_defect"] < 1e-12


def test_seed_env_override(capsys, linear_spec, monkeypatch):
    argv = ["stability", "--spec", linear_spec, "--x0", 3.1, "--synthesize-noise", 1e-3]
    monkeypatch.setenv("MONOFLOW_SEED", "7")
    _, a, _ = invoke(capsys, *argv, "--seed", 1)
    _, b, _ = invoke(capsys, *argv, "--seed", 2)
    monkeypatch.delenv("MONOFLOW_SEED")
    _, c, _ = invoke(capsys, *argv, "--seed", 1)
    _, d, _ = invoke(capsys, *argv, "--seed", 2)
    assert a == b and c != d


def test_verify(capsys, linear_spec):
    code, out, _ = invoke(capsys, "verify", "--spec", linear_spec, "--interval", 0, 7)
    rep = json.loads(out)
    assert code == 0 and rep["ok"] and all(c["ok"] for c in rep["checks"].values())


def test_output_file_and_determinism(capsys, linear_spec, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert run(["crossings", "--spec", str(linear_spec), "--interval", "0", "7", "-o", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] and capsys.readouterr().out == ""


def test_module_entry_point(linear_spec):
    proc = subprocess.run([sys.executable, "-m", "monoflow", "count", "--spec", str(linear_spec),
                           "--interval", "0", "6.2832"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["crossing_count"] == 3


class TestSerialize:
    def test_types(self):
        obj = {"a": np.float64(0.1), "b": np.bool_(True), "c": 1 + 2j, "d": np.arange(2), "e": math.inf}
        assert to_jsonable(obj) == {"a": 0.1, "b": True, "c": [1.0, 2.0], "d": [0, 1], "e": "inf"}

    def test_round_trip_floats(self):
        x = 1 / 3
        assert json.loads(dumps([x])) == [x]

    def test_unknown(self):
        with pytest.raises(TypeError):
            dumps(object())
