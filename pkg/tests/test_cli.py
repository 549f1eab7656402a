from __future__ import annotations

import json
import math

import numpy as np
import pytest

from phiquad import cli
from phiquad.applications import reverify_report
from phiquad.primal import QuadrangleResult


@pytest.fixture
def two_atoms(tmp_path):
    path = tmp_path / "two_atoms.csv"
    path.write_text("value\n0\n2\n")
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _value(out, key):
    for line in out.splitlines():
        if line.startswith(f"{key} = "):
            return float(line.split("=", 1)[1])
    raise AssertionError(f"{key} not printed:\n{out}")


def test_compute_closed_and_primal(capsys, two_atoms, tmp_path):
    code, out, _ = run(capsys, "compute", "--spec", "pearson_chi2_extended:beta=1", "--data", two_atoms,
                       "--which", "risk", "--route", "closed")
    assert code == 0 and _value(out, "risk") == 2.0
    out_json = tmp_path / "p.json"
    code, out, _ = run(capsys, "compute", "--spec", "pearson_chi2_extended:beta=1", "--data", two_atoms,
                       "--route", "primal", "--out", out_json)
    assert code == 0 and abs(_value(out, "risk") - 2.0) <= 1e-5
    doc = json.loads(out_json.read_text())
    assert {"command", "spec", "beta", "values", "optimizers", "diagnostics"} <= set(doc)
    assert set(doc["values"]) == {"risk", "deviation", "regret", "error", "statistic_lo", "statistic_hi"}
    assert set(doc["optimizers"]) >= {"C", "t"}


def test_compute_constant(capsys, tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("value\n3\n3\n3\n")
    code, out, _ = run(capsys, "compute", "--spec", "kl", "--beta", "0.5", "--data", path)
    assert code == 0 and _value(out, "risk") == 3.0 and _value(out, "deviation") == 0.0


def test_compute_dual_prints_identifier(capsys, two_atoms):
    code, out, _ = run(capsys, "compute", "--spec", "pearson_chi2_extended", "--beta", "1", "--data", two_atoms,
                       "--route", "dual")
    assert code == 0 and "identifier:" in out and abs(_value(out, "risk") - 2.0) <= 1e-6


def test_homogeneous_spec_needs_no_beta(capsys, two_atoms):
    code, out, _ = run(capsys, "compute", "--spec", "indicator_cvar:alpha=0.5", "--data", two_atoms)
    assert code == 0 and _value(out, "risk") == 2.0


@pytest.mark.parametrize("argv", [
    ["compute", "--spec", "nope", "--beta", "1"],
    ["compute", "--spec", "kl"],
    ["compute", "--spec", "kl:beta=1", "--beta", "2"],
    ["compute", "--spec", "kl", "--beta", "-1"],
    ["compute", "--spec", "kl", "--beta", "1", "--data", "/nonexistent.csv"],
    ["frobnicate"],
])
def test_input_errors_exit_2(capsys, two_atoms, argv):
    if "--data" not in argv and argv[0] == "compute":
        argv = argv + ["--data", str(two_atoms)]
    code, _, err = run(capsys, *argv)
    assert code == 2


def test_verify_passes(capsys, tmp_path):
    path = tmp_path / "four.csv"
    path.write_text("value\n-1\n0.5\n1.2\n3\n")
    code, out, _ = run(capsys, "verify", "--spec", "kl", "--beta", "0.5", "--data", path)
    assert code == 0, out
    code, out, _ = run(capsys, "verify", "--spec", "indicator_cvar:alpha=0.75", "--beta", "0.3", "--data", path)
    assert code == 0 and "beta" in out.lower()


def test_verify_negative_control(capsys, two_atoms, monkeypatch):
    real = cli.closed_form_quadrangle

    def corrupted(spec, beta, X):
        r = real(spec, beta, X)
        return QuadrangleResult(r.risk + 0.1, r.deviation + 0.1, r.regret, r.error, r.statistic_interval,
                                r.optimal_t, r.optimal_C, r.beta, r.spec_name, r.shift, r.regret_t)

    monkeypatch.setattr(cli, "closed_form_quadrangle", corrupted)
    code, _, err = run(capsys, "verify", "--spec", "kl", "--beta", "0.5", "--data", two_atoms)
    assert code == 4 and "verification failed" in err


def test_identify_csv(capsys, two_atoms, tmp_path):
    out = tmp_path / "id.csv"
    code, _, _ = run(capsys, "identify", "--spec", "pearson_chi2_extended", "--beta", "1", "--data", two_atoms,
                     "--out", out)
    lines = out.read_text().splitlines()
    assert code == 0, _
    assert lines[0] == "atom_index,value,prob,weight"
    assert [float(r.split(",")[3]) for r in lines[1:]] == pytest.approx([0.0, 2.0], abs=1e-9)


def test_portfolio_symmetric(capsys, tmp_path):
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=30), rng.normal(size=30)
    rows = np.vstack([np.column_stack([a, b]), np.column_stack([b, a])])
    path = tmp_path / "L.csv"
    path.write_text("a0,a1\n" + "\n".join(f"{float(x)!r},{float(y)!r}" for x, y in rows) + "\n")
    out = tmp_path / "rep.json"
    code, stdout, _ = run(capsys, "portfolio", "--spec", "pearson_chi2_extended", "--beta", "2", "--data", path,
                          "--out", out, "--emit-plot", tmp_path / "plot")
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["decision"]["weights"] == pytest.approx([0.5, 0.5], abs=1e-3)
    assert reverify_report(doc) == pytest.approx(doc["objective"], abs=1e-9)
    assert (tmp_path / "plot.csv").exists()
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")


def test_regress_and_classify_need_columns(capsys, tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x0,x1\n1,2\n3,4\n5,7\n")
    assert run(capsys, "regress", "--spec", "kl", "--beta", "1", "--data", path)[0] == 2
    assert run(capsys, "classify", "--spec", "kl", "--beta", "1", "--data", path)[0] == 2


def test_regress_command(capsys, tmp_path):
    rng = np.random.default_rng(1)
    x = rng.normal(size=40)
    y = 0.5 * x + rng.normal(scale=0.3, size=40)
    path = tmp_path / "r.csv"
    path.write_text("x0,y\n" + "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in zip(x, y)) + "\n")
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "regress", "--spec", "pearson_chi2_extended:beta=100", "--data", path,
                          "--out", out)
    assert code == 0 and "route gap" in stdout
    doc = json.loads(out.read_text())
    assert doc["objective_gap"] <= 1e-4 and "values" in doc


def test_casestudy_regress_deterministic(capsys, tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        code, stdout, _ = run(capsys, "casestudy", "--which", "regress", "--seed", "1", "--outdir", d)
        assert code == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == ["regress_seed1_data.csv", "regress_seed1_identifier.csv",
                     "regress_seed1_identifier.svg", "regress_seed1_report.json"]
    for n in names:
        assert (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes()
    doc = json.loads((dirs[0] / "regress_seed1_report.json").read_text())
    assert 0.4 <= doc["route_b"]["decision"]["coef"][0] <= 0.6


def test_config_file_and_flag_precedence(capsys, two_atoms, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# experiment\nspec = pearson_chi2_extended\nbeta = 4\ndata = {two_atoms}\nwhich = deviation\n")
    code, out, _ = run(capsys, "compute", "--config", cfg)
    assert code == 0 and _value(out, "deviation") == 2.0
    code, out, _ = run(capsys, "compute", "--config", cfg, "--beta", "1")
    assert code == 0 and _value(out, "deviation") == 1.0
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(capsys, "compute", "--config", bad)[0] == 2


def test_recover_command(capsys, tmp_path):
    out = tmp_path / "rec.json"
    code, stdout, _ = run(capsys, "recover", "--spec", "pearson_chi2", "--weights", "0,2", "--route", "risk",
                          "--out", out)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["values"]["risk"] == pytest.approx(1.0, rel=0.05)
    assert run(capsys, "recover", "--spec", "kl", "--weights", "0.5,x")[0] == 2


def test_solver_error_exit_3(capsys, two_atoms, monkeypatch):
    from phiquad.errors import NonConvergence

    def failing(spec, beta, X):
        raise NonConvergence("injected")

    monkeypatch.setattr(cli, "closed_form_quadrangle", failing)
    code, _, err = run(capsys, "compute", "--spec", "kl", "--beta", "0.5", "--data", two_atoms)
    assert code == 3 and "closed solve failed" in err and "injected" in err
