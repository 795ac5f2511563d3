import io
import json

import pytest

from tempering_lab.cli import main
from tempering_lab.model import HypothesisClass, Instance, Posterior, save_instance
from tempering_lab.tempering import ell_lambda


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


@pytest.fixture
def two_hyp(tmp_path):
    path = tmp_path / "two.json"
    save_instance(Instance(HypothesisClass([0.1, 0.9], [0.1, 0.3]), Posterior.point_mass(2, 0), 0.1), path)
    return str(path)


def test_curves_rows_match_formula(capsys):
    code, out = run(["curves", "--lambdas", "1", "--points", "3", "--grid-min", "0.1", "--grid-max", "0.3"])
    assert code == 0
    rows = out.strip().splitlines()[1:]
    assert len(rows) == 3
    for row in rows:
        lam, x, e = map(float, row.split(","))
        assert e == pytest.approx(ell_lambda(lam, x), rel=1e-11)


def test_curves_prints_crossings(tmp_path):
    code, out = run(["curves", "--lambdas", "0.5,2", "--points", "4", "--out", str(tmp_path / "c.csv")])
    assert code == 0
    assert "crossing lambda=0.5 l_star=0.110027864438" in out
    assert "lambda=2 " not in out


def test_curves_empty_list_is_usage_error():
    assert run(["curves", "--lambdas", ""])[0] == 2


def test_curves_zero_lambda_is_domain_error(capsys):
    assert run(["curves", "--lambdas", "0,1"])[0] == 1
    assert "unregularized" in capsys.readouterr().err


def test_missing_flag_is_usage_error():
    assert run(["curves"])[0] == 2


def test_posterior_profile(two_hyp):
    code, out = run(["posterior", "--instance", two_hyp, "--counts", "2", "6", "--m", "20", "--rule", "profile",
                     "--lambda", "1"])
    assert code == 0
    lines = out.splitlines()
    assert float(lines[1].split(",")[3]) == pytest.approx(0.97120685095502218943, abs=1e-11)
    assert json.loads(lines[-1])["provenance"] == "profile"


def test_posterior_eb_diagnostics(two_hyp):
    code, out = run(["posterior", "--instance", two_hyp, "--counts", "2,6", "--m", "20", "--rule",
                     "empirical_bayes"])
    assert code == 0
    assert "beta_star" in json.loads(out.splitlines()[-1])["diagnostics"]


def test_posterior_count_mismatch(two_hyp):
    assert run(["posterior", "--instance", two_hyp, "--counts", "2", "--m", "20", "--rule", "profile"])[0] == 2
    assert run(["posterior", "--instance", two_hyp, "--counts", "2", "30", "--m", "20", "--rule", "profile"])[0] == 1


def write_cfg(tmp_path, **over):
    d = {"instance": {"spec": {"lstar": 0.1, "lprime": 0.3, "regime": "two_hypothesis"}},
         "rule": {"name": "empirical_bayes"}, "schedule": {"kind": "constant", "value": 2.0},
         "m_grid": [200], "trials": 200}
    d.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


def test_sweep_trials_zero_is_schema_error(tmp_path):
    cfg = write_cfg(tmp_path, trials=0)
    assert run(["sweep", "--config", cfg, "--out-dir", str(tmp_path)])[0] == 2


def test_sweep_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, trials=50)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["sweep", "--config", cfg, "--out-dir", str(a), "--threads", "1"])[0] == 0
    assert run(["sweep", "--config", cfg, "--out-dir", str(b), "--threads", "4"])[0] == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


def test_audit_passes(tmp_path):
    cfg = write_cfg(tmp_path)
    code, out = run(["audit", "--config", cfg, "--out-dir", str(tmp_path), "--delta", "0.05"])
    assert code == 0
    summary = json.loads((tmp_path / "audit.json").read_text())
    assert summary["violation_rate"] <= 0.05


def test_equivalence_gate(tmp_path):
    code, out = run(["equivalence", "--out-dir", str(tmp_path), "--trials", "30", "--expect-decreasing"])
    assert code == 0
    assert json.loads(out)["strictly_decreasing"]


def test_verify_kernels():
    code, out = run(["verify", "--suite", "kernels"])
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert all(x["status"] == "PASS" for x in lines)


def test_verify_unknown_suite():
    assert run(["verify", "--suite", "nope"])[0] == 2


@pytest.mark.parametrize("cmd", ["curves", "sweep", "audit", "equivalence", "posterior", "verify"])
def test_help_documents_outputs(cmd, capsys):
    assert run([cmd, "--help"])[0] == 0
    assert "column" in capsys.readouterr().out.lower() or cmd == "verify"
