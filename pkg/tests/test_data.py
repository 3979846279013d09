import math

import numpy as np
import pytest

from pcrh.data import (CSV_COLUMNS, Cohort, DesignParams, SimulationTruth, Subject, Visit, describe,
                       load_csv, simulate_cohort, write_csv)
from pcrh.errors import DomainError, EmptyCohort, ParseError, ValidationError
from pcrh.numerics import sample_skewness

HEADER = ",".join(CSV_COLUMNS)


def _write(tmp_path, lines):
    p = tmp_path / "c.csv"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def _subject(sid, ct=0, visits=((20.0, 10.0),)):
    return Subject(sid, ct, 24.0, 11.0, 0.5, 0, 1, tuple(Visit(g, p) for g, p in visits))


def test_load_two_subjects(tmp_path):
    p = _write(tmp_path, [HEADER, "A,15,100,1,22.5,11,0.4,0,1", "A,30,200,1,22.5,11,0.4,0,1",
                          "B,20,150,0,30.1,9,1.2,1,0"])
    c = load_csv(p)
    assert len(c) == 2 and c.n_obs == 3
    assert [s.id for s in c.subjects] == ["A", "B"]


def test_load_resorts_visits(tmp_path):
    p = _write(tmp_path, [HEADER, "A,30,200,1,22.5,11,0.4,0,1", "A,15,100,1,22.5,11,0.4,0,1",
                          "A,22,120,1,22.5,11,0.4,0,1"])
    assert [v.ga_weeks for v in load_csv(p).subjects[0].visits] == [15.0, 22.0, 30.0]


@pytest.mark.parametrize("row,line", [
    ("A,15,-1,1,22.5,11,0.4,0,1", 3),
    ("A,15,100,7,22.5,11,0.4,0,1", 3),
    ("A,10,100,1,22.5,11,0.4,0,1", 3),
    ("A,20,100,1,22.5,11,0.4,0,1", 3),   # duplicate (id, ga)
    ("A,25,100,1,99,11,0.4,0,1", 3),     # subject column not constant
])
def test_validation_errors_name_line(tmp_path, row, line):
    p = _write(tmp_path, [HEADER, "A,20,100,1,22.5,11,0.4,0,1", row])
    with pytest.raises(ValidationError) as exc:
        load_csv(p)
    assert f"line {line}" in str(exc.value)


@pytest.mark.parametrize("lines", [
    [],
    ["subject_id,ga"],
    [HEADER, "A,20,100"],
    [HEADER, "A,twenty,100,1,22.5,11,0.4,0,1"],
])
def test_parse_errors(tmp_path, lines):
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(lines), encoding="utf-8")
    with pytest.raises(ParseError):
        load_csv(p)


def test_round_trip(tmp_path):
    cohort, _ = simulate_cohort(seed=4)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(cohort, a)
    back = load_csv(a)
    assert back == cohort
    write_csv(back, b)
    assert a.read_bytes() == b.read_bytes()


def test_cohort_duplicate_ids():
    with pytest.raises(ValidationError):
        Cohort((_subject("A"), _subject("A")))


def test_describe_ct_percentages():
    counts = [45, 15, 13, 11, 4]
    subs = [_subject(f"S{k}_{j}", ct=k) for k, c in enumerate(counts) for j in range(c)]
    d = describe(Cohort(tuple(subs)))
    pct = [d.categorical["ct_sum"][k][1] for k in range(5)]
    for got, want in zip(pct, [51.1, 17.0, 14.8, 12.5, 4.5]):
        assert abs(got - want) <= 0.1
    for var, levels in d.categorical.items():
        assert abs(sum(p for _, p in levels.values()) - 100.0) <= 0.1


def test_describe_single_visit():
    d = describe(Cohort((_subject("A"),)))
    for q in d.quantitative.values():
        assert q.range == 0.0 and q.skewness is None


def test_describe_empty():
    with pytest.raises(EmptyCohort):
        describe(Cohort(()))


def test_simulator_calibration():
    d = describe(simulate_cohort(seed=0)[0])
    assert 24 <= d.quantitative["ga"].mean <= 29
    assert d.quantitative["pcrh"].skewness > 1


def test_simulator_ct_frequencies():
    cohort, _ = simulate_cohort(seed=0)
    d = describe(cohort)
    target = np.array([45, 15, 13, 11, 4]) / 88 * 100
    got = np.array([d.categorical["ct_sum"][k][1] for k in range(5)])
    assert np.all(np.abs(got - target) <= 10)


def test_simulator_large_cohort_frequencies():
    cohort, _ = simulate_cohort(design=DesignParams(n_subjects=10_000, visits_min=1, visits_max=1), seed=9)
    d = describe(cohort)
    for var, counts in (("ct_sum", [45, 15, 13, 11, 4]), ("parity", [35, 34, 11, 6, 2]), ("ob_risk", [60, 28])):
        target = np.array(counts) / 88 * 100
        got = np.array([d.categorical[var][k][1] for k in range(len(counts))])
        assert np.all(np.abs(got - target) <= 1.5), var
    # quantitative calibration targets (population mean and skewness)
    assert abs(d.quantitative["bmi"].mean - 24.56) < 0.3
    assert abs(d.quantitative["bmi"].skewness - 1.15) < 0.2
    assert abs(d.quantitative["dces"].mean - 0.65) < 0.03
    assert abs(d.quantitative["dces"].skewness - 0.88) < 0.1
    assert abs(d.quantitative["cses"].mean - 11.5) < 0.1
    assert abs(d.quantitative["cses"].skewness + 0.77) < 0.1


def test_simulator_noise_free():
    truth = SimulationTruth(tau1_sq=0.0, sigma_eps_sq=0.0)
    cohort, _ = simulate_cohort(truth, seed=2)
    b = truth.beta
    for s in cohort.subjects:
        for v in s.visits:
            eta = (b["Intercept"] + b["GA"] * v.ga_weeks + b["CT-Sum"] * s.ct_sum
                   + b["CT-Sum*GA"] * s.ct_sum * v.ga_weeks + b["BMI"] * s.bmi + b["CSES"] * s.cses
                   + b["DCES"] * s.dces + b["OB-risk"] * s.ob_risk + b["Parity"] * s.parity)
            assert abs(math.log(v.pcrh) - eta) < 1e-12


def test_simulator_determinism():
    a, ta = simulate_cohort(seed=17)
    b, tb = simulate_cohort(seed=17)
    assert a == b and ta.b1 == tb.b1
    assert simulate_cohort(seed=18)[0] != a


def test_simulator_positive_and_sorted():
    cohort, truth = simulate_cohort(seed=1)
    assert len(truth.b1) == 88 and truth.seed == 1
    for s in cohort.subjects:
        assert 3 <= s.n_visits <= 5
        assert all(v.pcrh > 0 for v in s.visits)


def test_simulator_negative_variance():
    with pytest.raises(DomainError):
        simulate_cohort(SimulationTruth(tau1_sq=-1.0))


def test_subject_level_skewness_helper_consistent():
    cohort, _ = simulate_cohort(seed=3)
    d = describe(cohort)
    assert math.isclose(d.quantitative["bmi"].skewness, sample_skewness([s.bmi for s in cohort.subjects]))
