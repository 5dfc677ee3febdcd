import json
import subprocess
import sys

import numpy as np
import pytest

from stratperm.cli import main, scaling_table
from stratperm.core import StratifiedMatrix
from stratperm.errors import InvariantViolation
from stratperm.formats import LabelsReindexed, read_design, read_matrix


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def swap_json(tmp_path):
    return write(tmp_path / "a.json", json.dumps({"sizes": [2], "blocks": [[[0, 1], [1, 0]]]}))


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_oracle_swap(swap_json, capsys):
    code, out, _ = run(["oracle", swap_json], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and rep["schema_version"] == 1
    assert all(r["max_violation"] < 1e-10 for r in rep["reports"] if r["identity"] != "wasserstein_bound")


def test_oracle_failure_exit(tmp_path, capsys):
    A = write(tmp_path / "b.json", json.dumps({"sizes": [3], "blocks": [np.eye(3).tolist()]}))
    code, out, _ = run(["oracle", A, "--tolerance", "-1"], capsys)
    assert code == 2 and not json.loads(out)["pass"]


def test_malformed_csv(tmp_path, capsys):
    p = write(tmp_path / "d.csv", "unit,stratum,Y,n1\n1,a,1.0,1\n2,a,oops,1\n")
    code, _, err = run(["design", p], capsys)
    payload = json.loads(err.strip().splitlines()[-1])
    assert code == 1 and payload["error"] == "ParseError"
    assert payload["line"] == 3 and payload["column"] == 3


def test_malformed_json(tmp_path, capsys):
    p = write(tmp_path / "m.json", '{"sizes": [2],\n "blocks": [[[0, 1], [1, 0]]')
    code, _, err = run(["bound", p], capsys)
    assert code == 1 and json.loads(err)["line"] == 2


def test_simulate_byte_identical(swap_json, tmp_path):
    outs = []
    for i, w in enumerate(("1", "1", "3")):
        o = tmp_path / f"s{i}.json"
        assert main(["simulate", swap_json, "--reps", "5000", "--seed", "7", "--workers", w, "--out", str(o)]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_matrix_round_trip(tmp_path, rng):
    A = StratifiedMatrix.from_blocks([rng.standard_normal((3, 3)), rng.standard_normal((2, 2))])
    p = write(tmp_path / "r.json", A.to_json())
    assert read_matrix(p) == A


def test_label_gap(tmp_path):
    p = write(tmp_path / "g.csv", "unit,stratum,Y,n1\nu1,3,1,1\nu2,1,2,1\nu3,3,5,1\nu4,1,4,1\n")
    with pytest.warns(LabelsReindexed):
        d, _, table = read_design(p)
    assert table.labels == [1, 3] and d.layout.sizes == (2, 2)
    assert table.units == ["u2", "u4", "u1", "u3"]
    np.testing.assert_array_equal(d.outcomes, [2, 4, 1, 5])


def test_sample_size_too_large(tmp_path):
    p = write(tmp_path / "x.csv", "unit,stratum,Y,n1\n1,a,1,3\n2,a,2,3\n")
    with pytest.raises(InvariantViolation):
        read_design(p)


def test_design_report(tmp_path, capsys):
    p = write(tmp_path / "y.csv", "unit,stratum,Y,z\n1,s,1,1\n2,s,2,1\n3,s,3,0\n4,s,4,0\n")
    code, out, _ = run(["design", p], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["estimate"] == 1.5 and rep["variance"] == pytest.approx(5 / 12)


def test_test_command(tmp_path, capsys):
    p = write(tmp_path / "t.csv", "stratum,z,y\n0,1,3\n0,0,1\n0,0,2\n")
    code, out, _ = run(["test", p, "--alternative", "greater"], capsys)
    assert code == 0 and json.loads(out)["result"]["p_value"] == pytest.approx(1 / 3)


def test_invert_command(tmp_path, capsys):
    rows = "\n".join(f"{k},{z},{0.3 * i + 2 * z}" for i, (k, z) in enumerate([(0, 1), (0, 0)] * 4 + [(1, 1), (1, 0)] * 4))
    p = write(tmp_path / "iv.csv", "stratum,z,y\n" + rows + "\n")
    code, out, _ = run(["test", p, "--invert", "--grid=-2:6:17", "--reps", "2000", "--method", "monte_carlo"], capsys)
    assert code == 0 and "interval" in json.loads(out)


def test_config_precedence(swap_json, tmp_path, capsys):
    cfg = write(tmp_path / "c.json", json.dumps({"reps": 123, "seed": 5}))
    _, out, _ = run(["simulate", swap_json, "--config", cfg, "--reps", "50"], capsys)
    rep = json.loads(out)
    assert rep["reps"] == 50 and rep["seed"] == 5


def test_poststrat_command(tmp_path, capsys):
    p = write(tmp_path / "p.csv", "stratum,Y\n0,1\n0,2\n1,4\n")
    code, out, _ = run(["poststrat", p, "--n1", "2", "--reps", "500"], capsys)
    rep = json.loads(out)["report"]
    assert code == 0 and rep["accepted"] == 500


def test_scaling_rows():
    rows = scaling_table("normal", [1, 4], [64], 2000, 1, 1)
    assert [(r["K"], r["n"]) for r in rows] == [(1, 64), (4, 64)]
    assert all(r["d_K_scaled"] == pytest.approx(r["d_K"] * 64 ** r["delta"]) for r in rows)


def test_console_entry(swap_json):
    r = subprocess.run([sys.executable, "-m", "stratperm.cli", "bound", swap_json], capture_output=True, text=True)
    assert r.returncode == 0 and "theorem1" in json.loads(r.stdout)["bounds"]


def test_usage_error_is_input_error(capsys):
    assert main(["simulate"]) == 1
    assert main(["--version"]) == 0
