import csv
import io
import json

import numpy as np
import pytest

from conftest import frequency_peak_ddae, two_delay_ddae
from ddae_hinf.cli import main
from ddae_hinf.model import DdaeSystem


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def eliminated_loop():
    B2 = np.array([[-0.5], [1.0]])
    K = np.array([[-1115.1, -16189.0]])
    return DdaeSystem(
        np.diag([1.0, 0.0]),
        [B2 @ K, [[-1.0, 0.0], [1.0, -1.0]]],
        [[1.0], [1.0]],
        np.array([[1.0, 0.2]]) + 0.1 * K,
        (1.2,),
    )


# ---------------------------------------------------------------- validate

def test_validate_ok(tmp_path, capsys):
    path = write(tmp_path, "c3.json", eliminated_loop().to_dict())
    assert main(["validate", path]) == 0
    out = capsys.readouterr().out
    assert "nu = 1" in out and "ok" in out


def test_malformed_json_reports_position(tmp_path, capsys):
    path = write(tmp_path, "bad.json", '{"n": 2,\n "E": [1, }')
    assert main(["validate", path]) == 1
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_assumption_violation(tmp_path, capsys):
    s = DdaeSystem(np.diag([1.0, 0.0]), [[[-1.0, 0.0], [0.0, 0.0]]], [[1.0], [1.0]], [[1.0, 1.0]])
    path = write(tmp_path, "sing.json", s.to_dict())
    assert main(["validate", path]) == 1
    assert "U^T A_0 V" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["norm", "/nonexistent/system.json"]) == 1


def test_unknown_command():
    assert main(["frobnicate"]) == 1


# ---------------------------------------------------------------- norm

def test_norm_asymptotic(tmp_path, capsys):
    path = write(tmp_path, "s.json", two_delay_ddae().to_dict())
    assert main(["norm", path]) == 0
    out = capsys.readouterr().out
    assert "strong norm: 4.0000" in out and "asymptotic" in out


def test_norm_frequency(tmp_path, capsys):
    path = write(tmp_path, "s.json", frequency_peak_ddae().to_dict())
    assert main(["norm", path]) == 0
    out = capsys.readouterr().out
    assert "strong norm: 2.385" in out and "omega_hat: 1.7721" in out


def test_norm_json(tmp_path, capsys):
    path = write(tmp_path, "s.json", two_delay_ddae().to_dict())
    assert main(["norm", path, "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["command"] == "norm" and abs(rep["result"]["value"] - 4.0) <= 1e-9


def test_ta_norm(tmp_path, capsys):
    path = write(tmp_path, "s.json", two_delay_ddae().to_dict())
    assert main(["ta-norm", path]) == 0
    assert "4.000000" in capsys.readouterr().out


def test_unstable_exit_code(tmp_path, capsys):
    s = DdaeSystem(np.eye(1), [[[0.5]]], [[1.0]], [[1.0]])
    path = write(tmp_path, "u.json", s.to_dict())
    assert main(["norm", path]) == 3
    assert main(["stability", path]) == 3


# ---------------------------------------------------------------- sweep

def test_sweep_finds_perturbed_local_peak(tmp_path):
    path = write(tmp_path, "s.json", two_delay_ddae((0.99, 2.0)).to_dict())
    out = tmp_path / "sweep.csv"
    assert main(["sweep", path, "--wmin", "1", "--wmax", "1e3", "--points", "20000",
                 "--log", "-o", str(out)]) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0][:2] == ["omega", "sigma1"] and len(rows) == 20001
    data = np.array(rows[1:], dtype=float)
    w, s = data[np.argmax(data[:, 1]), :2]
    assert abs(w - 158.66) <= 0.5 and abs(s - 3.9993) <= 2e-3


def test_sweep_single_point_and_bad_range(tmp_path, capsys):
    path = write(tmp_path, "s.json", two_delay_ddae().to_dict())
    assert main(["sweep", path, "--wmin", "2", "--points", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].startswith("2,")
    assert main(["sweep", path, "--wmin", "5", "--wmax", "1"]) == 1


# ---------------------------------------------------------------- bench

def test_bench_list(capsys):
    assert main(["bench", "--list"]) == 0
    assert "c6_robust" in capsys.readouterr().out


def test_bench_case(capsys):
    assert main(["bench", "c6_robust"]) == 0
    out = capsys.readouterr().out
    assert "3.314" in out and "match" in out


def test_bench_json_prefix(capsys):
    assert main(["bench", "c8", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 4 and all(r["match"] for r in rows)


def test_bench_unknown_name():
    assert main(["bench", "zz"]) == 1


# ---------------------------------------------------------------- assemble / synthesize

PLANT = {
    "A": [{"delay": 0, "matrix": [[-1.0]]}, {"delay": 1, "matrix": [[-0.5]]}],
    "B1": [{"matrix": [[1.0]]}],
    "B2": [{"delay": 0.2, "matrix": [[1.0]]}],
    "C1": [{"matrix": [[1.0]]}],
    "D12": [{"delay": 0.2, "matrix": [[1.0]]}],
    "C2": [{"matrix": [[1.0]]}],
}
TEMPLATE = {"nK": 0, "DK": [{"delay": 0, "matrix": [[-3.0]], "mask": [["free"]]}]}


def test_assemble_writes_loadable_system(tmp_path, capsys):
    pp, tp = write(tmp_path, "p.json", PLANT), write(tmp_path, "t.json", TEMPLATE)
    out = tmp_path / "cl.json"
    assert main(["assemble", pp, tp, "-p", "-0.8813", "-o", str(out)]) == 0
    assert "layout" in json.loads(out.read_text())
    assert main(["norm", str(out)]) == 0
    assert "strong norm: 0.21" in capsys.readouterr().out


def test_synthesize_smoke(tmp_path, capsys):
    pp, tp = write(tmp_path, "p.json", PLANT), write(tmp_path, "t.json", TEMPLATE)
    assert main(["synthesize", pp, tp, "--max-iter", "20", "--seed", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    res = rep["result"]
    assert res["xi"] <= 0.2137 + 1e-3 and res["trace"][0]["phase"] == "start"
    assert abs(res["p"][0] + 0.8813) <= 0.05


@pytest.mark.parametrize("cmd", ["assemble", "synthesize"])
def test_template_parse_error(tmp_path, capsys, cmd):
    pp, tp = write(tmp_path, "p.json", PLANT), write(tmp_path, "t.json", {"DK": []})
    assert main([cmd, pp, tp]) == 1
