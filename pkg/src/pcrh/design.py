"""Model specifications and their fixed/random design matrices."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .data import Cohort
from .errors import DomainError, ParseError, RankDeficient
from .numerics import TOL

# term token -> column label; hinge/jump labels depend on the knot
TERM_LABELS = {
    "1": "Intercept",
    "GA": "GA",
    "CT": "CT-Sum",
    "CT:GA": "CT-Sum*GA",
    "BMI": "BMI",
    "CSES": "CSES",
    "DCES": "DCES",
    "OB": "OB-risk",
    "PAR": "Parity",
}
RANDOM_TERMS = ("1", "GA")


def _fmt_knot(knot: float) -> str:
    return f"{knot:g}"


@dataclass(frozen=True)
class ModelSpec:
    """Fixed terms (ordered) and random terms for one mixed model.

    Fixed-term tokens: ``1 GA CT CT:GA BMI CSES DCES OB PAR hinge jump``.
    ``hinge`` adds max(GA - knot, 0); ``jump`` adds the indicator GA > knot.
    Random-term tokens: ``1`` (intercept) and ``GA`` (slope).
    """

    fixed_terms: tuple[str, ...] = ("1", "GA", "CT", "CT:GA", "BMI", "CSES", "DCES", "OB", "PAR")
    random_terms: tuple[str, ...] = ("1",)
    knot: float = 20.0

    def __post_init__(self):
        fixed = tuple(self.fixed_terms)
        if "1" not in fixed:
            raise DomainError("fixed terms must include the intercept")
        if len(set(fixed)) != len(fixed):
            raise DomainError("duplicate fixed terms")
        for t in fixed:
            if t not in TERM_LABELS and t not in ("hinge", "jump"):
                raise DomainError(f"unknown fixed term {t!r}")
        random = tuple(self.random_terms)
        if not random or any(t not in RANDOM_TERMS for t in random) or len(set(random)) != len(random):
            raise DomainError(f"random terms must be a non-empty subset of {RANDOM_TERMS}")
        if ("hinge" in fixed or "jump" in fixed) and not self.knot > 14:
            raise DomainError("knot must exceed 14")
        object.__setattr__(self, "fixed_terms", fixed)
        object.__setattr__(self, "random_terms", tuple(t for t in RANDOM_TERMS if t in random))

    @property
    def labels(self) -> list[str]:
        out = []
        for t in self.fixed_terms:
            if t == "hinge":
                out.append(f"(GA-{_fmt_knot(self.knot)})+")
            elif t == "jump":
                out.append(f"I(GA>{_fmt_knot(self.knot)})")
            else:
                out.append(TERM_LABELS[t])
        return out

    @property
    def random_labels(self) -> list[str]:
        return ["Intercept" if t == "1" else "GA" for t in self.random_terms]

    def without(self, term: str) -> "ModelSpec":
        return ModelSpec(tuple(t for t in self.fixed_terms if t != term), self.random_terms, self.knot)

    def to_string(self) -> str:
        fixed = []
        for t in self.fixed_terms:
            fixed.append(f"{t}@{_fmt_knot(self.knot)}" if t in ("hinge", "jump") else t)
        return f"fixed={'+'.join(fixed)} random={'+'.join(self.random_terms)}"

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Parse ``fixed=1+GA+CT+CT:GA+... random=1[+GA]`` (``hinge@20``/``jump@20`` allowed)."""
        parts = dict.fromkeys(("fixed", "random"))
        for chunk in text.split():
            key, sep, val = chunk.partition("=")
            if not sep or key not in parts or parts[key] is not None:
                raise ParseError(f"bad model spec chunk {chunk!r}")
            parts[key] = val
        if parts["fixed"] is None:
            raise ParseError("model spec needs fixed=...")
        knot = None
        fixed = []
        for tok in parts["fixed"].split("+"):
            m = re.fullmatch(r"(hinge|jump)@([0-9.]+)", tok)
            if m:
                k = float(m.group(2))
                if knot is not None and k != knot:
                    raise ParseError("only one knot is supported")
                knot = k
                fixed.append(m.group(1))
            else:
                fixed.append(tok)
        random = tuple((parts["random"] or "1").split("+"))
        try:
            return cls(tuple(fixed), random, 20.0 if knot is None else knot)
        except DomainError as exc:
            raise ParseError(str(exc)) from None


MODEL4 = ModelSpec()
MODEL2 = ModelSpec(random_terms=("1", "GA"))
MODEL5 = ModelSpec(("1", "GA", "hinge", "CT", "CT:GA", "BMI", "CSES", "PAR", "DCES", "OB"))


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    spec: ModelSpec
    y: np.ndarray          # (N,) log pCRH
    X: np.ndarray          # (N, p)
    Z: np.ndarray          # (N, q) random-effect design, rows grouped by subject
    group: np.ndarray      # (N,) subject index 0..m-1
    subject_ids: tuple[str, ...]
    labels: tuple[str, ...]

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.n_subjects)


def _check_rank(X: np.ndarray, labels) -> None:
    """Pivoted Cholesky on the column-normalized cross-product."""
    norms = np.sqrt(np.sum(X * X, axis=0))
    if np.any(norms == 0):
        raise RankDeficient(f"all-zero column(s): {[l for l, n in zip(labels, norms) if n == 0]}")
    A = (X / norms).T @ (X / norms)
    p = A.shape[0]
    thresh = TOL.rank * np.max(np.diag(A))
    perm = list(range(p))
    A = A.copy()
    for k in range(p):
        j = k + int(np.argmax(np.diag(A)[k:]))
        if A[j, j] <= thresh:
            dep = [labels[perm[i]] for i in range(k, p)]
            raise RankDeficient(f"fixed-effect columns are linearly dependent (involving {dep})")
        A[[k, j]] = A[[j, k]]
        A[:, [k, j]] = A[:, [j, k]]
        perm[k], perm[j] = perm[j], perm[k]
        A[k, k] = np.sqrt(A[k, k])
        A[k + 1:, k] /= A[k, k]
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k + 1:, k])


def build_design(cohort: Cohort, spec: ModelSpec = MODEL4) -> DesignMatrices:
    """Realize ``spec`` on ``cohort``. Rows follow cohort iteration order."""
    ga, y, group = [], [], []
    cov = {k: [] for k in ("ct_sum", "bmi", "cses", "dces", "ob_risk", "parity")}
    for i, s in enumerate(cohort.subjects):
        for v in s.visits:
            ga.append(v.ga_weeks)
            y.append(v.pcrh)
            group.append(i)
            for k in cov:
                cov[k].append(getattr(s, k))
    ga = np.asarray(ga, dtype=float)
    cov = {k: np.asarray(v, dtype=float) for k, v in cov.items()}
    columns = {
        "1": np.ones_like(ga),
        "GA": ga,
        "CT": cov["ct_sum"],
        "CT:GA": cov["ct_sum"] * ga,
        "BMI": cov["bmi"],
        "CSES": cov["cses"],
        "DCES": cov["dces"],
        "OB": cov["ob_risk"],
        "PAR": cov["parity"],
        "hinge": np.maximum(ga - spec.knot, 0.0),
        "jump": (ga > spec.knot).astype(float),
    }
    X = np.column_stack([columns[t] for t in spec.fixed_terms])
    Z = np.column_stack([columns[t] for t in spec.random_terms])
    labels = tuple(spec.labels)
    if X.shape[0] <= X.shape[1]:
        raise RankDeficient(f"{X.shape[0]} observations for {X.shape[1]} fixed effects")
    _check_rank(X, labels)
    y = np.log(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite log response")
    return DesignMatrices(spec, y, X, Z, np.asarray(group, dtype=np.intp),
                          tuple(s.id for s in cohort.subjects), labels)
