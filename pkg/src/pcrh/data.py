"""Cohort data model, CSV ingestion, descriptive statistics and the
synthetic cohort simulator."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from .errors import DegenerateInput, DomainError, EmptyCohort, ParseError, ValidationError

CSV_COLUMNS = ("subject_id", "ga_weeks", "pcrh", "ct_sum", "bmi", "cses", "dces", "ob_risk", "parity")
GA_MIN, GA_MAX = 14.0, 40.0


@dataclass(frozen=True)
class Visit:
    ga_weeks: float
    pcrh: float


@dataclass(frozen=True)
class Subject:
    id: str
    ct_sum: int
    bmi: float
    cses: float
    dces: float
    ob_risk: int
    parity: int
    visits: tuple[Visit, ...]

    def __post_init__(self):
        if not self.visits:
            raise ValidationError(f"subject {self.id!r} has no visits")
        if self.ct_sum not in range(5):
            raise ValidationError(f"subject {self.id!r}: ct_sum {self.ct_sum} outside 0-4")
        if self.parity not in range(5):
            raise ValidationError(f"subject {self.id!r}: parity {self.parity} outside 0-4")
        if self.ob_risk not in (0, 1):
            raise ValidationError(f"subject {self.id!r}: ob_risk must be 0 or 1")
        if not self.bmi > 0:
            raise ValidationError(f"subject {self.id!r}: bmi must be positive")
        for v in self.visits:
            if not v.pcrh > 0 or not math.isfinite(v.pcrh):
                raise ValidationError(f"subject {self.id!r}: pcrh must be positive")
            if not GA_MIN <= v.ga_weeks <= GA_MAX:
                raise ValidationError(f"subject {self.id!r}: ga_weeks {v.ga_weeks} outside [14, 40]")
        ga = [v.ga_weeks for v in self.visits]
        if any(b <= a for a, b in zip(ga, ga[1:])):
            raise ValidationError(f"subject {self.id!r}: visits not strictly increasing in ga_weeks")

    @property
    def n_visits(self) -> int:
        return len(self.visits)


@dataclass(frozen=True)
class Cohort:
    subjects: tuple[Subject, ...]

    def __post_init__(self):
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate subject ids")

    def __len__(self):
        return len(self.subjects)

    @property
    def n_obs(self) -> int:
        return sum(s.n_visits for s in self.subjects)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(cohort: Cohort, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in cohort.subjects:
        for v in s.visits:
            w.writerow([s.id, _num(v.ga_weeks), _num(v.pcrh), s.ct_sum, _num(s.bmi),
                        _num(s.cses), _num(s.dces), s.ob_risk, s.parity])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _parse_int(text, name, line):
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"{name}: cannot parse {text!r} as a number", line) from None
    if not val.is_integer():
        raise ValidationError(f"{name} must be an integer, got {text!r}", line)
    return int(val)


def _parse_float(text, name, line):
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"{name}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(val):
        raise ValidationError(f"{name} must be finite", line)
    return val


def load_csv(path) -> Cohort:
    """Read the long-format cohort CSV (one row per visit)."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    if tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise ParseError(f"header must be {','.join(CSV_COLUMNS)}", 1)

    rows: dict[str, list] = {}
    attrs: dict[str, tuple] = {}
    first_line: dict[str, int] = {}
    seen = set()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_COLUMNS):
            raise ParseError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line)
        sid = row[0].strip()
        if not sid:
            raise ParseError("empty subject_id", line)
        ga = _parse_float(row[1], "ga_weeks", line)
        pcrh = _parse_float(row[2], "pcrh", line)
        if pcrh <= 0:
            raise ValidationError(f"pcrh must be positive, got {row[2]}", line)
        if not GA_MIN <= ga <= GA_MAX:
            raise ValidationError(f"ga_weeks {row[1]} outside [14, 40]", line)
        ct = _parse_int(row[3], "ct_sum", line)
        if ct not in range(5):
            raise ValidationError(f"ct_sum {ct} outside 0-4", line)
        subj = (
            ct,
            _parse_float(row[4], "bmi", line),
            _parse_float(row[5], "cses", line),
            _parse_float(row[6], "dces", line),
            _parse_int(row[7], "ob_risk", line),
            _parse_int(row[8], "parity", line),
        )
        if subj[1] <= 0:
            raise ValidationError("bmi must be positive", line)
        if subj[4] not in (0, 1):
            raise ValidationError("ob_risk must be 0 or 1", line)
        if subj[5] not in range(5):
            raise ValidationError(f"parity {subj[5]} outside 0-4", line)
        if (sid, ga) in seen:
            raise ValidationError(f"duplicate visit ({sid}, {row[1]})", line)
        seen.add((sid, ga))
        if sid in attrs:
            if attrs[sid] != subj:
                raise ValidationError(
                    f"subject-level columns differ from line {first_line[sid]} for subject {sid!r}", line)
        else:
            attrs[sid] = subj
            first_line[sid] = line
            rows[sid] = []
        rows[sid].append(Visit(ga, pcrh))

    if not rows:
        raise ParseError("no data rows", 2)
    subjects = []
    for sid, visits in rows.items():
        ct, bmi, cses, dces, ob, par = attrs[sid]
        visits = tuple(sorted(visits, key=lambda v: v.ga_weeks))
        subjects.append(Subject(sid, ct, bmi, cses, dces, ob, par, visits))
    return Cohort(tuple(subjects))


# ---------------------------------------------------------------------------
# descriptive statistics
# ---------------------------------------------------------------------------


@dataclass
class QuantSummary:
    mean: float
    range: float
    skewness: float | None


@dataclass
class DescriptiveSummary:
    n_subjects: int
    n_obs: int
    categorical: dict[str, dict[int, tuple[int, float]]]
    quantitative: dict[str, QuantSummary]

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "n_obs": self.n_obs,
            "categorical": {
                var: [{"level": lvl, "count": c, "percent": p} for lvl, (c, p) in levels.items()]
                for var, levels in self.categorical.items()
            },
            "quantitative": {
                var: {"mean": q.mean, "range": q.range, "skewness": q.skewness}
                for var, q in self.quantitative.items()
            },
        }

    def format_table(self) -> str:
        lines = [f"subjects: {self.n_subjects}   observations: {self.n_obs}", "",
                 f"{'variable':<10}{'level':>6}{'count':>8}{'percent':>10}"]
        for var, levels in self.categorical.items():
            for lvl, (c, p) in levels.items():
                lines.append(f"{var:<10}{lvl:>6}{c:>8}{p:>9.1f}%")
        lines += ["", f"{'variable':<10}{'mean':>10}{'range':>10}{'skewness':>10}"]
        for var, q in self.quantitative.items():
            sk = "NA" if q.skewness is None else f"{q.skewness:.2f}"
            lines.append(f"{var:<10}{q.mean:>10.2f}{q.range:>10.2f}{sk:>10}")
        return "\n".join(lines)


def _quant(values) -> QuantSummary:
    a = np.asarray(values, dtype=float)
    try:
        sk = numerics.sample_skewness(a)
    except DegenerateInput:
        sk = None
    return QuantSummary(float(a.mean()), float(a.max() - a.min()), sk)


def describe(cohort: Cohort) -> DescriptiveSummary:
    """Category counts/percentages and mean/range/skewness per variable.

    GA and pCRH are summarized over all visits; the remaining variables
    over subjects.
    """
    if len(cohort) == 0:
        raise EmptyCohort("cohort has no subjects")
    subs = cohort.subjects
    m = len(subs)
    categorical = {}
    for var, levels in (("ct_sum", range(5)), ("ob_risk", (0, 1)), ("parity", range(5))):
        vals = [getattr(s, var) for s in subs]
        categorical[var] = {lvl: (vals.count(lvl), 100.0 * vals.count(lvl) / m) for lvl in levels}
    quantitative = {
        "dces": _quant([s.dces for s in subs]),
        "bmi": _quant([s.bmi for s in subs]),
        "cses": _quant([s.cses for s in subs]),
        "ga": _quant([v.ga_weeks for s in subs for v in s.visits]),
        "pcrh": _quant([v.pcrh for s in subs for v in s.visits]),
    }
    return DescriptiveSummary(m, cohort.n_obs, categorical, quantitative)


# ---------------------------------------------------------------------------
# simulator
# ---------------------------------------------------------------------------

# Category frequencies: 88-subject cohort counts.
CT_SUM_PROBS = np.array([45, 15, 13, 11, 4]) / 88
OB_RISK_PROB = 28 / 88
PARITY_PROBS = np.array([35, 34, 11, 6, 2]) / 88

# BMI = shift + lognormal; mean 24.56, sd 5.5, skewness 1.15.
BMI_SHIFT, BMI_LOG_MU, BMI_LOG_SIGMA = 9.568453398276244, 2.6443481147100103, 0.355354379873267
# Truncated normals: parent (loc, sd) chosen so the truncated mean and
# skewness land on 0.65/0.88 (DCES, floor 0) and 11.5/-0.77 (CSES, cap 15).
DCES_LOC, DCES_SD = 0.21247323556120598, 0.7087316564905481
CSES_LOC, CSES_SD, CSES_MAX = 13.084670355706372, 3.3501539526478537, 15.0

DEFAULT_BETA = {
    "Intercept": 1.750, "GA": 0.142, "CT-Sum": -0.088, "CT-Sum*GA": 0.005, "BMI": -0.021,
    "CSES": -0.018, "DCES": -0.093, "OB-risk": 0.035, "Parity": -0.076,
}


@dataclass
class SimulationTruth:
    beta: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BETA))
    tau1_sq: float = 0.40**2
    sigma_eps_sq: float = 0.25**2
    hinge_beta: float = 0.0
    knot: float = 20.0
    tau2_sq: float = 0.0  # random GA-slope variance, independent of the intercept
    b1: list[float] | None = None
    b2: list[float] | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "beta": dict(self.beta), "hinge_beta": self.hinge_beta, "knot": self.knot,
            "tau1_sq": self.tau1_sq, "tau2_sq": self.tau2_sq, "sigma_eps_sq": self.sigma_eps_sq,
            "b1": self.b1, "b2": self.b2, "seed": self.seed,
        }


@dataclass(frozen=True)
class DesignParams:
    n_subjects: int = 88
    visits_min: int = 3
    visits_max: int = 5


def _truncnorm(rng, loc, sd, n, lower=-np.inf, upper=np.inf):
    out = np.empty(n)
    filled = 0
    while filled < n:
        z = rng.normal(loc, sd, 2 * (n - filled) + 8)
        z = z[(z > lower) & (z < upper)][: n - filled]
        out[filled:filled + z.size] = z
        filled += z.size
    return out


def simulate_cohort(truth: SimulationTruth | None = None, design: DesignParams | None = None,
                    seed: int = 0) -> tuple[Cohort, SimulationTruth]:
    """Draw a synthetic cohort whose log(pCRH) follows the random-intercept model.

    Returns the cohort and a copy of ``truth`` carrying the realized
    subject effects and the seed.
    """
    truth = truth or SimulationTruth()
    design = design or DesignParams()
    if truth.tau1_sq < 0 or truth.sigma_eps_sq < 0 or truth.tau2_sq < 0:
        raise DomainError("variances must be nonnegative")
    if design.n_subjects < 1 or not 1 <= design.visits_min <= design.visits_max:
        raise DomainError("invalid design parameters")
    rng = numerics.make_rng(seed)
    m = design.n_subjects
    ct = rng.choice(5, size=m, p=CT_SUM_PROBS)
    ob = (rng.random(m) < OB_RISK_PROB).astype(int)
    parity = rng.choice(5, size=m, p=PARITY_PROBS)
    bmi = BMI_SHIFT + np.exp(rng.normal(BMI_LOG_MU, BMI_LOG_SIGMA, m))
    cses = _truncnorm(rng, CSES_LOC, CSES_SD, m, upper=CSES_MAX)
    dces = _truncnorm(rng, DCES_LOC, DCES_SD, m, lower=0.0)
    n_vis = rng.integers(design.visits_min, design.visits_max + 1, size=m)
    b1 = rng.normal(0.0, math.sqrt(truth.tau1_sq), m)
    b2 = rng.normal(0.0, math.sqrt(truth.tau2_sq), m)

    beta = {k: truth.beta.get(k, 0.0) for k in DEFAULT_BETA}
    subjects = []
    for i in range(m):
        ga = np.sort(rng.uniform(GA_MIN, GA_MAX, n_vis[i]))
        eps = rng.normal(0.0, math.sqrt(truth.sigma_eps_sq), n_vis[i])
        eta = (beta["Intercept"] + beta["GA"] * ga + beta["CT-Sum"] * ct[i]
               + beta["CT-Sum*GA"] * ct[i] * ga + beta["BMI"] * bmi[i] + beta["CSES"] * cses[i]
               + beta["DCES"] * dces[i] + beta["OB-risk"] * ob[i] + beta["Parity"] * parity[i]
               + truth.hinge_beta * np.maximum(ga - truth.knot, 0.0))
        log_pcrh = eta + b1[i] + b2[i] * ga + eps
        visits = tuple(Visit(float(g), float(math.exp(lp))) for g, lp in zip(ga, log_pcrh))
        subjects.append(Subject(f"S{i + 1:03d}", int(ct[i]), float(bmi[i]), float(cses[i]),
                                float(dces[i]), int(ob[i]), int(parity[i]), visits))
    realized = SimulationTruth(dict(truth.beta), truth.tau1_sq, truth.sigma_eps_sq, truth.hinge_beta,
                               truth.knot, truth.tau2_sq, b1.tolist(), b2.tolist(), seed)
    return Cohort(tuple(subjects)), realized
