import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from qfound.cli import main
from qfound.core import operator_from_json

UT_RHO_F = np.array([[0.5, 0, 0, 0.25], [0, 0, 0, 0], [0, 0, 0, 0], [0.25, 0, 0, 0.5]])


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_json(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_tctc_builtin_json(capsys):
    code, out, _ = run(capsys, "ctc", "--builtin", "unproved_theorem", "--model", "tctc")
    assert code == 0
    doc = json.loads(out)
    rho = operator_from_json(doc["rho_f"])
    assert np.abs(rho.matrix - UT_RHO_F).max() <= 1e-10


def test_ctc_circuit_file(tmp_path, capsys):
    spec = write_json(tmp_path, "c.json", {"builtin": "unproved_theorem"})
    code, out, _ = run(capsys, "ctc", "--circuit", spec, "--model", "pctc")
    assert code == 0
    assert "rho_f" in json.loads(out)
    swap = np.eye(4)[[0, 2, 1, 3]].tolist()
    spec = write_json(tmp_path, "s.json", {"d_cr": 2, "d_cv": 2, "unitary": swap})
    code, out, _ = run(capsys, "ctc", spec, "--model", "dctc")
    assert code == 0


def test_paradox_exit_code(capsys):
    code, out, err = run(capsys, "ctc", "--builtin", "grandfather", "--model", "pctc")
    assert code == 1
    assert json.loads(out)["error"] == "DynamicalParadox"


def test_empty_file_is_input_error(tmp_path, capsys):
    path = tmp_path / "empty.json"
    path.write_text("")
    code, _, err = run(capsys, "ctc", str(path))
    assert code == 2
    assert "empty" in err
    code, _, _ = run(capsys, "overlap", str(tmp_path / "missing.json"))
    assert code == 2


def test_bad_arguments_exit_two(capsys):
    code, _, _ = run(capsys, "ctc", "--model", "nonsense")
    assert code == 2


def test_bounds_csv(capsys):
    code, out, _ = run(capsys, "bounds", "--alpha", "0.245", "--d", "6", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["alpha", "d", "epsilon", "bound", "value", "applicable"]
    by_name = {r[3]: float(r[4]) for r in rows[1:]}
    assert by_name["symmetricError"] == pytest.approx(0.0224, abs=1e-3)


def test_same_seed_is_byte_identical(capsys):
    args = ("ctc", "--builtin", "unproved_theorem", "--model", "tctc-mc", "--samples", "5000", "--seed", "7")
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args)
    assert first == second
    _, other, _ = run(capsys, *args[:-1], "8")
    assert other != first
    _, c1, _ = run(capsys, "comm", "--seed", "3")
    _, c2, _ = run(capsys, "comm", "--seed", "3")
    assert c1 == c2


def test_out_flag_writes_file(tmp_path, capsys):
    target = tmp_path / "r.json"
    code, out, _ = run(capsys, "bounds", "--alpha", "0.2", "--d", "5", "--out", str(target))
    assert code == 0 and out == ""
    assert "largeD" in target.read_text()


def test_selftest_and_negative_control(capsys):
    code, out, err = run(capsys, "selftest")
    assert code == 0
    assert json.loads(out)["passed"]
    assert err.count("PASS") == 10
    code, out, err = run(capsys, "selftest", "--corrupt", "P-CTC")
    assert code == 1
    assert json.loads(out)["failed"] == ["unproved theorem P-CTC output"]
    assert "FAIL" in err


def test_qci_builtin_channels(tmp_path, capsys):
    spec = write_json(tmp_path, "q.json", {"channel": {"builtin": "incoherent_copy"}})
    code, out, _ = run(capsys, "qci", "check", spec)
    doc = json.loads(out)
    assert code == 0 and doc["all_conditions"]
    assert doc["cmi_bits"] == pytest.approx(0.0, abs=1e-9)
    spec = write_json(tmp_path, "q2.json", {"channel": {"builtin": "coherent_copy"}, "skip_dilation": True})
    _, out, _ = run(capsys, "qci", "check", spec)
    doc = json.loads(out)
    assert not doc["all_conditions"]
    assert doc["cmi_bits"] == pytest.approx(1.0, abs=1e-9)


def test_causal_predict_and_classical_limit(tmp_path, capsys):
    # A -> B with a bit flip on a biased coin
    flip = np.zeros((4, 4))
    for b, a in [(1, 0), (0, 1)]:
        flip[2 * b + a, 2 * b + a] = 1
    spec = {
        "nodes": [{"label": "A", "d": 2}, {"label": "B", "d": 2}],
        "edges": [["A", "B"]],
        "channels": {"A": [[0.8, 0], [0, 0.2]], "B": flip.tolist()},
    }
    path = write_json(tmp_path, "m.json", spec)
    code, out, _ = run(capsys, "causal", "classical-limit", path)
    assert code == 0
    code, out, _ = run(capsys, "causal", "predict", path)
    assert code == 0
    text = json.dumps(json.loads(out))
    assert "0.8" in text and "0.2" in text


def test_overlap_spec(tmp_path, capsys):
    spec = {
        "model": {"states": ["a", "b", "c"], "preparations": {"mu": [0.4, 0.4, 0.2], "nu": [0.5, 0.3, 0.2]}},
        "query": {"target": "nu", "given": "mu", "epsilon": 0.25},
        "symmetric": ["mu", "nu"],
    }
    code, out, _ = run(capsys, "overlap", write_json(tmp_path, "o.json", spec))
    doc = json.loads(out)
    assert code == 0
    assert doc["epsilon_asymmetric"] == pytest.approx(0.8)
    assert doc["asymmetric"] == pytest.approx(1.0)


def test_comm_default(capsys):
    code, out, _ = run(capsys, "comm")
    doc = json.loads(out)
    assert code == 0
    assert doc["triples_checked"] == 56 and doc["triples_ok"]
    assert (doc["min_messages"], doc["min_bits"]) == (4, 2)
    assert doc["max_pairwise_overlap"] < 0.25


def test_console_script():
    res = subprocess.run(
        [sys.executable, "-m", "qfound.cli", "bounds", "--alpha", "0.245", "--d", "6"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0
    assert "symmetricError" in res.stdout
