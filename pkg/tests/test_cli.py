import json
import math

import pytest

from freeentropy.cli import main

LOG_2PIE = math.log(2 * math.pi * math.e)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def semicircle_file(tmp_path):
    p = tmp_path / "semicircle.json"
    p.write_text(json.dumps({"type": "semicircle", "variance": 1.0}))
    return str(p)


def test_verify_semicircular(capsys):
    code, out, _ = run(["verify-inequality", "--builtin", "semicircular", "--seed", "3"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert abs(rep["margin"]) <= 1e-6
    assert rep["seed"] == 3 and "numpy" in rep["versions"]


def test_chi_star_semicircle(semicircle_file, capsys, tmp_path):
    out_path = tmp_path / "r.json"
    code, out, _ = run(["chi-star", "--law", semicircle_file, "--m", "1", "--out", str(out_path)], capsys)
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(0.5 * LOG_2PIE, abs=1e-6)
    assert len(json.loads(out_path.read_text())["samples"]) == 64


def test_phi_star(semicircle_file, capsys):
    code, out, _ = run(["phi-star", "--law", semicircle_file, "--m", "2", "--degree", "3", "--flow-t", "1"], capsys)
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("argv", [
    ["chi-star", "--m", "1"],
    ["verify-inequality"],
    ["verify-inequality", "--builtin", "nope"],
    ["rmt"],
    ["bogus"],
])
def test_usage_errors_exit_one(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1
    assert "error" in err


def test_malformed_config_exits_one(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"base": {"type": "atoms", "points": [1]}, "t0": -1}')
    assert run(["verify-inequality", "--config", str(p)], capsys)[0] == 1
    p.write_text("{not json")
    assert run(["verify-inequality", "--config", str(p)], capsys)[0] == 1


def test_violation_exits_two(tmp_path, capsys, monkeypatch):
    from freeentropy import harness

    real = harness.run_inequality_experiment

    def broken(cfg, write=True):
        rep = real(cfg, write)
        rep["verdict"] = "fail"
        return rep

    monkeypatch.setattr(harness, "run_inequality_experiment", broken)
    assert run(["verify-inequality", "--builtin", "semicircular", "--quiet"], capsys)[0] == 2


def test_rmt_gue(capsys):
    code, out, _ = run(["rmt", "gue", "--n", "10", "--samples", "2000", "--seed", "5"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["seed"] == 5
    assert abs(rep["mean_tr_s2"][0] - 1) <= 3 * rep["mean_tr_s2_stderr"]


def test_rmt_ibp_check(tmp_path, capsys):
    f = tmp_path / "f.txt"
    f.write_text("# one polynomial for x1\nx1.x1 + 0.5*x1\n")
    code, out, _ = run(["rmt", "ibp-check", "--f", str(f), "--n", "8", "--samples", "3000"], capsys)
    assert code == 0
    assert json.loads(out)["within_3_stderr"]


def test_rmt_entropy_with_center(tmp_path, capsys):
    from freeentropy.rmt import matrix_to_json
    import numpy as np

    c = tmp_path / "c.json"
    c.write_text(json.dumps(matrix_to_json(np.diag([1.0, -1.0, 0.5]))))
    code, out, _ = run(["rmt", "entropy", "--center", str(c), "--t", "2", "--samples", "2000"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["entropy_exact"] == pytest.approx(0.5 * math.log(4 * math.pi * math.e))
    mc = rep["entropy_mc"]
    assert abs(mc["value"] - rep["entropy_exact"]) <= 3 * mc["stderr"]


def test_freeness_table(capsys, tmp_path):
    out = tmp_path / "t.json"
    code, _, _ = run(["freeness-table", "--n", "40", "--samples", "40", "--max-len", "3", "--quiet", "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(out.read_text())["all_ok"]
