import csv
import json
import subprocess
import sys

import pytest

from pcrh.cli import main

FULL = "fixed=1+GA+CT+CT:GA+BMI+CSES+DCES+OB+PAR"


def run(argv):
    """Run the CLI in-process; argparse usage errors surface as their exit code."""
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def cohort_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run(["simulate", "--seed", 3, "--out-dir", d]) == 0
    return d / "cohort.csv"


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_simulate_default(tmp_path):
    assert run(["simulate", "--out-dir", tmp_path]) == 0
    rows = _rows(tmp_path / "cohort.csv")
    assert len({r["subject_id"] for r in rows}) == 88
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["beta"]["GA"] == 0.142 and truth["beta"]["CT-Sum"] == -0.088
    assert truth["schema_version"] == 1


def test_simulate_two_rows(tmp_path):
    assert run(["simulate", "--subjects", 2, "--visits", 1, "--out-dir", tmp_path]) == 0
    assert len(_rows(tmp_path / "cohort.csv")) == 2


def test_simulate_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["simulate", "--seed", 9, "--out-dir", d]) == 0
    for name in ("cohort.csv", "truth.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_describe(cohort_csv, tmp_path):
    assert run(["describe", "--input", cohort_csv, "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "describe.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["quantitative"]["pcrh"]["skewness"] > 1
    assert abs(sum(r["percent"] for r in doc["categorical"]["ct_sum"]) - 100) < 0.1


def test_describe_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert run(["describe", "--input", p, "--out-dir", tmp_path]) == 3


def test_describe_missing_file(tmp_path):
    assert run(["describe", "--input", tmp_path / "nope.csv", "--out-dir", tmp_path]) == 3


def test_fit_reml_table(cohort_csv, tmp_path):
    assert run(["fit", "--input", cohort_csv, "--method", "reml", "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert doc["schema_version"] == 1 and doc["criterion"] == "REML"
    assert len(doc["coefficients"]) == 9
    assert {"term", "estimate", "se", "df", "t", "p"} <= set(doc["coefficients"][0])
    assert len(_rows(tmp_path / "residuals.csv")) == doc["n_obs"]
    assert len(_rows(tmp_path / "qq.csv")) == doc["n_obs"]


def test_fit_hinge_table(cohort_csv, tmp_path):
    assert run(["fit", "--input", cohort_csv, "--model", FULL + "+hinge@20 random=1", "--out-dir", tmp_path]) == 0
    terms = [c["term"] for c in json.loads((tmp_path / "fit.json").read_text())["coefficients"]]
    assert len(terms) == 10 and "(GA-20)+" in terms


def test_fit_bayes_summary(cohort_csv, tmp_path):
    assert run(["fit", "--input", cohort_csv, "--bayes", "--iters", 10000, "--export-b",
                "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "bayes_summary.json").read_text())
    assert doc["n_retained"] == 8000 and doc["schema_version"] == 1
    for c in doc["coefficients"]:
        assert c["lower_95"] <= c["posterior_mean"] <= c["upper_95"]
    assert "dic" in doc and 0 <= doc["ppc"]["p_b"] <= 1
    for name in ("trace.csv", "acf.csv", "ppc.csv", "random_effects.csv"):
        assert (tmp_path / name).stat().st_size > 0


def test_fit_byte_reproducible(cohort_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["fit", "--input", cohort_csv, "--bayes", "--iters", 500, "--seed", 4, "--out-dir", d]) == 0
        assert run(["fit", "--input", cohort_csv, "--out-dir", d]) == 0
    for name in ("bayes_summary.json", "trace.csv", "acf.csv", "ppc.csv", "fit.json", "residuals.csv", "qq.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_fit_prior_override(cohort_csv, tmp_path):
    assert run(["fit", "--input", cohort_csv, "--bayes", "--iters", 200, "--prior", "a=0.5,d=2,slsq=100",
                "--out-dir", tmp_path]) == 0
    pri = json.loads((tmp_path / "bayes_summary.json").read_text())["priors"]
    assert pri["a"] == 0.5 and pri["d"] == 2 and pri["sigma_l_sq"] == 100


def test_compare_self(cohort_csv, tmp_path):
    spec = FULL + " random=1"
    assert run(["compare", "--input", cohort_csv, "--null", spec, "--alt", spec, "--out-dir", tmp_path]) == 0
    lrt = json.loads((tmp_path / "compare.json").read_text())["lrt"]
    assert lrt["statistic"] == 0 and lrt["p_value"] == 1


def test_compare_random_slope(cohort_csv, tmp_path):
    assert run(["compare", "--input", cohort_csv, "--null", FULL + " random=1", "--alt", FULL + " random=1+GA",
                "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "compare.json").read_text())
    assert doc["lrt"]["method"] == "boundary_mixture" and doc["lrt"]["df"] is None


def test_compare_hinge_vs_jump(cohort_csv, tmp_path):
    assert run(["compare", "--input", cohort_csv, "--null", FULL + "+hinge@20", "--alt",
                FULL + "+hinge@20+jump@20", "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "compare.json").read_text())
    assert doc["criterion"] == "ML"
    assert doc["lrt"]["method"] == "standard" and doc["lrt"]["df"] == 1


def test_compare_dic(cohort_csv, tmp_path):
    assert run(["compare", "--input", cohort_csv, "--null", FULL + " random=1", "--alt", FULL + " random=1+GA",
                "--bayes", "--iters", 500, "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "compare.json").read_text())
    assert doc["preferred"] in ("null", "alt") and set(doc["dic"]) == {"null", "alt"}


def test_compare_not_nested(cohort_csv, tmp_path):
    assert run(["compare", "--input", cohort_csv, "--null", FULL + "+hinge@20", "--alt", FULL,
                "--out-dir", tmp_path]) == 2


def test_effects_interaction_preset(tmp_path):
    assert run(["effects", "--preset", "interaction", "--ga", "40", "--out-dir", tmp_path]) == 0
    (row,) = _rows(tmp_path / "effects.csv")
    assert abs(float(row["percent_change"]) - 11.9) <= 0.15


def test_effects_piecewise(tmp_path):
    assert run(["effects", "--preset", "hinge", "--ct", "1.2", "--piecewise", "--out-dir", tmp_path]) == 0
    rows = [r for r in _rows(tmp_path / "effects.csv") if r["kind"] == "weekly_slope"]
    got = {r["segment"]: float(r["percent_change"]) for r in rows}
    assert abs(got["before"] - 3.8) <= 0.15 and abs(got["after"] - 17.9) <= 0.15


def test_effects_zero(tmp_path):
    assert run(["effects", "--beta-ct", 0, "--beta-ctga", 0, "--beta-ga", 0, "--beta-hinge", 0, "--piecewise",
                "--out-dir", tmp_path]) == 0
    assert all(float(r["percent_change"]) == 0 for r in _rows(tmp_path / "effects.csv"))


def test_effects_from_fit(cohort_csv, tmp_path):
    assert run(["fit", "--input", cohort_csv, "--out-dir", tmp_path]) == 0
    assert run(["effects", "--from-fit", tmp_path / "fit.json", "--out-dir", tmp_path]) == 0
    assert len(_rows(tmp_path / "effects.csv")) == 3


@pytest.mark.parametrize("argv", [
    [],
    ["fit"],
    ["fit", "--input", "x.csv", "--burn", "1.5"],
    ["effects"],
    ["fit", "--input", "{csv}", "--model", "fixed=GA"],
    ["fit", "--input", "{csv}", "--bayes", "--prior", "zz=1"],
])
def test_usage_errors(argv, cohort_csv, tmp_path):
    argv = [a.replace("{csv}", str(cohort_csv)) for a in argv]
    if argv:
        argv += ["--out-dir", str(tmp_path)]
    assert run(argv) == 2


def test_validation_error_exit(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("subject_id,ga_weeks,pcrh,ct_sum,bmi,cses,dces,ob_risk,parity\nA,20,-1,1,22,11,0.4,0,1\n")
    assert run(["fit", "--input", p, "--out-dir", tmp_path]) == 3


def test_rank_deficient_exit(tmp_path):
    p = tmp_path / "flat.csv"
    rows = [f"S{i},{15 + j * 5},{100 + i + j},2,22,11,0.4,0,1" for i in range(10) for j in range(3)]
    p.write_text("subject_id,ga_weeks,pcrh,ct_sum,bmi,cses,dces,ob_risk,parity\n" + "\n".join(rows) + "\n")
    assert run(["fit", "--input", p, "--out-dir", tmp_path]) == 3


def test_convergence_failure_exit(cohort_csv, tmp_path, monkeypatch):
    import pcrh.lmm.fit as fitmod
    monkeypatch.setattr(fitmod, "MAX_ITER", 2)
    assert run(["fit", "--input", cohort_csv, "--model", FULL + " random=1+GA", "--out-dir", tmp_path]) == 4


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pcrh", "effects", "--preset", "interaction", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "+11.85%" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "pcrh", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
