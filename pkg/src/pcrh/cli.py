"""Command-line entry point: ``pcrh simulate|describe|fit|compare|effects``.

Exit codes: 0 success, 2 usage error, 3 data validation error,
4 convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bayes, data, lmm
from .design import MODEL4, ModelSpec, build_design
from .errors import (ConvergenceFailure, EmptyCohort, NotNested, ParseError, PcrhError, RankDeficient,
                     ValidationError)
from .numerics import make_rng

SCHEMA_VERSION = 1
EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 2, 3, 4

# Published coefficient sets for the effects subcommand.
PRESETS = {
    "interaction": {"CT-Sum": -0.088, "CT-Sum*GA": 0.005, "GA": 0.142},
    "hinge": {"CT-Sum": -0.107, "CT-Sum*GA": 0.005, "GA": 0.032, "hinge": 0.127},
}


class UsageError(PcrhError):
    pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n", encoding="utf-8")


def _g(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_g(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_prior(text: str | None) -> bayes.PriorHyperparams:
    if not text:
        return bayes.PriorHyperparams()
    keys = {"a": "a", "b": "b", "c": "c", "d": "d", "slsq": "sigma_l_sq"}
    kw = {}
    for item in text.split(","):
        k, sep, v = item.partition("=")
        if not sep or k.strip() not in keys:
            raise UsageError(f"bad prior override {item!r}; keys are a,b,c,d,slsq")
        try:
            kw[keys[k.strip()]] = float(v)
        except ValueError:
            raise UsageError(f"bad prior value {item!r}") from None
    try:
        return bayes.PriorHyperparams(**kw)
    except PcrhError as exc:
        raise UsageError(str(exc)) from None


def _parse_model(text: str | None, knot: float | None) -> ModelSpec:
    try:
        spec = MODEL4 if not text else ModelSpec.parse(text)
    except ParseError as exc:
        raise UsageError(f"bad model spec: {exc}") from None
    if knot is not None:
        spec = ModelSpec(spec.fixed_terms, spec.random_terms, knot)
    return spec


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    visits = args.visits.split("-")
    try:
        vmin, vmax = (int(visits[0]), int(visits[-1]))
    except ValueError:
        raise UsageError(f"--visits must be N or MIN-MAX, got {args.visits!r}") from None
    truth = data.SimulationTruth(tau1_sq=args.tau1_sq, sigma_eps_sq=args.sigma_eps_sq,
                                 tau2_sq=args.tau2_sq, hinge_beta=args.hinge_beta, knot=args.knot)
    design = data.DesignParams(args.subjects, vmin, vmax)
    cohort, realized = data.simulate_cohort(truth, design, args.seed)
    data.write_csv(cohort, out / "cohort.csv")
    _write_json(out / "truth.json", {"schema_version": SCHEMA_VERSION, **realized.to_dict(),
                                     "n_subjects": design.n_subjects,
                                     "visits": [design.visits_min, design.visits_max]})
    print(f"wrote {cohort.n_obs} rows for {len(cohort)} subjects to {out / 'cohort.csv'}")
    return 0


def cmd_describe(args) -> int:
    out = _out_dir(args)
    summary = data.describe(data.load_csv(args.input))
    _write_json(out / "describe.json", {"schema_version": SCHEMA_VERSION, **summary.to_dict()})
    print(summary.format_table())
    return 0


def _fit_frequentist(dm, args, out: Path) -> None:
    fit = lmm.fit_lmm(dm, args.method.upper())
    if not fit.converged:
        raise ConvergenceFailure(f"fit did not converge after {fit.iterations} iterations",
                                 iterations=fit.iterations, grad_norm=fit.grad_norm)
    doc = lmm.fit_to_dict(fit, dm)
    _write_json(out / "fit.json", doc)
    res = lmm.pearson_residuals(fit, dm)
    fitted = lmm.fitted_values(fit, dm)
    ga = dm.X[:, dm.labels.index("GA")] if "GA" in dm.labels else np.full(dm.n_obs, np.nan)
    _write_rows(out / "residuals.csv", ["row", "subject_id", "ga_weeks", "fitted", "pearson_residual"],
                [(k, dm.subject_ids[dm.group[k]], ga[k], fitted[k], res[k]) for k in range(dm.n_obs)])
    _write_rows(out / "qq.csv", ["theoretical", "empirical"], [tuple(r) for r in lmm.qq_points(res)])
    print(f"{'term':<12}{'estimate':>10}{'se':>9}{'df':>9}{'t':>9}{'p':>9}")
    for c in doc["coefficients"]:
        df = "NA" if c["df"] is None else f"{c['df']:.1f}"
        print(f"{c['term']:<12}{c['estimate']:>10.4f}{c['se']:>9.4f}{df:>9}{c['t']:>9.3f}{c['p']:>9.4f}")


def _fit_bayes(dm, args, out: Path) -> None:
    priors = _parse_prior(args.prior)
    chain = bayes.run_gibbs(dm, priors, args.iters, args.burn, args.seed)
    summary = bayes.summary_dict(chain)
    d = bayes.dic(chain, dm)
    ppc = bayes.posterior_predictive_pvalue(chain, dm, make_rng(args.seed, stream=1))
    summary["dic"] = d.to_dict()
    summary["ppc"] = {"p_b": ppc.p_b}
    _write_json(out / "bayes_summary.json", summary)
    bayes.write_chain_csv(chain, out / "trace.csv")
    if args.export_b:
        bayes.write_effects_csv(chain, out / "random_effects.csv")
    diags = bayes.chain_diagnostics(chain, min(50, chain.n_retained - 1))
    rows = [(name, lag, float(v)) for name, dg in diags.items() for lag, v in enumerate(dg.acf)]
    _write_rows(out / "acf.csv", ["parameter", "lag", "acf"], rows)
    _write_rows(out / "ppc.csv", ["draw", "t_obs", "t_rep"], ppc.to_rows())
    print(f"{'term':<12}{'mean':>10}{'2.5%':>10}{'97.5%':>10}{'ess':>9}")
    for r in summary["coefficients"] + summary["variance_components"]:
        ess = "NA" if r["ess"] is None else f"{r['ess']:.0f}"
        print(f"{r['term']:<12}{r['posterior_mean']:>10.4f}{r['lower_95']:>10.4f}{r['upper_95']:>10.4f}{ess:>9}")
    print(f"DIC {d.dic:.2f} (p_D {d.p_d:.2f})   p_B {ppc.p_b:.3f}")


def cmd_fit(args) -> int:
    out = _out_dir(args)
    cohort = data.load_csv(args.input)
    dm = build_design(cohort, _parse_model(args.model, args.knot))
    if args.bayes:
        _fit_bayes(dm, args, out)
    else:
        _fit_frequentist(dm, args, out)
    return 0


def cmd_compare(args) -> int:
    out = _out_dir(args)
    cohort = data.load_csv(args.input)
    null_spec = _parse_model(args.null, args.knot)
    alt_spec = _parse_model(args.alt, args.knot)
    dm0, dm1 = build_design(cohort, null_spec), build_design(cohort, alt_spec)
    report = {"schema_version": SCHEMA_VERSION, "null_model": null_spec.to_string(),
              "alt_model": alt_spec.to_string()}
    if args.bayes:
        priors = _parse_prior(args.prior)
        res = {}
        for key, dm in (("null", dm0), ("alt", dm1)):
            chain = bayes.run_gibbs(dm, priors, args.iters, args.burn, args.seed)
            res[key] = bayes.dic(chain, dm).to_dict()
        report["dic"] = res
        report["preferred"] = "null" if res["null"]["dic"] <= res["alt"]["dic"] else "alt"
        print(f"DIC null {res['null']['dic']:.2f}  alt {res['alt']['dic']:.2f}  -> {report['preferred']}")
    else:
        fixed_differ = set(dm0.labels) != set(dm1.labels)
        criterion = "ML" if fixed_differ else args.method.upper()
        method = args.test
        if method == "auto":
            slope_test = (not fixed_differ and null_spec.random_terms == ("1",)
                          and alt_spec.random_terms == ("1", "GA"))
            method = "boundary_mixture" if slope_test else "standard"
        f0, f1 = lmm.fit_lmm(dm0, criterion), lmm.fit_lmm(dm1, criterion)
        for f in (f0, f1):
            if not f.converged:
                raise ConvergenceFailure(f"fit did not converge ({f.spec.to_string()})", iterations=f.iterations)
        result = lmm.lrt(f0, f1, method)
        report["criterion"] = criterion
        report["loglik"] = {"null": f0.loglik, "alt": f1.loglik}
        report["lrt"] = result.to_dict()
        print(f"LRT ({criterion}, {result.null_distribution}): statistic {result.statistic:.4f}, "
              f"p = {result.p_value:.4g}")
    _write_json(out / "compare.json", report)
    return 0


def _coefs_from_file(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for row in doc.get("coefficients", []):
        val = row.get("estimate", row.get("posterior_mean"))
        term = row["term"]
        if term.startswith("(GA-") and term.endswith(")+"):
            term = "hinge"
        out[term] = val
    return out


def cmd_effects(args) -> int:
    out = _out_dir(args)
    coefs = {}
    if args.preset:
        coefs.update(PRESETS[args.preset])
    if args.from_fit:
        coefs.update(_coefs_from_file(args.from_fit))
    for key, val in (("CT-Sum", args.beta_ct), ("CT-Sum*GA", args.beta_ctga), ("GA", args.beta_ga),
                     ("hinge", args.beta_hinge)):
        if val is not None:
            coefs[key] = val
    if "CT-Sum" not in coefs or "CT-Sum*GA" not in coefs:
        raise UsageError("need CT-Sum and CT-Sum*GA coefficients (--preset, --from-fit or --beta-ct/--beta-ctga)")
    rows = []
    for ga in _floats(args.ga):
        for delta in _floats(args.ct):
            r = lmm.effect_percent(coefs["CT-Sum"], coefs["CT-Sum*GA"], ga, delta)
            rows.append(("ct_effect", ga, delta, "", r.log_effect, r.percent_change))
    if args.piecewise:
        if "GA" not in coefs or "hinge" not in coefs:
            raise UsageError("--piecewise needs GA and hinge coefficients")
        for ct in _floats(args.ct):
            for seg in ("before", "after"):
                pct = lmm.piecewise_slope_percent(coefs["GA"], coefs["hinge"], coefs["CT-Sum*GA"], ct, seg)
                slope = coefs["GA"] + ct * coefs["CT-Sum*GA"] + (coefs["hinge"] if seg == "after" else 0.0)
                rows.append(("weekly_slope", "", ct, seg, slope, pct))
    _write_rows(out / "effects.csv", ["kind", "ga", "ct", "segment", "log_effect", "percent_change"], rows)
    for r in rows:
        where = f"GA {r[1]:g}" if r[0] == "ct_effect" else f"{r[3]} knot"
        print(f"{r[0]:<13}{where:<14}ct {r[2]:<5g}{r[5]:>+8.2f}%")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out-dir", default=".", help="directory for output files")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", help='model spec, e.g. "fixed=1+GA+CT+CT:GA+BMI+CSES+DCES+OB+PAR random=1"')
    model.add_argument("--knot", type=float, help="override the hinge/jump knot")

    sampler = argparse.ArgumentParser(add_help=False)
    sampler.add_argument("--iters", type=int, default=10_000)
    sampler.add_argument("--burn", type=float, default=0.2)
    sampler.add_argument("--prior", help="overrides: a=..,b=..,c=..,d=..,slsq=..")

    parser = argparse.ArgumentParser(prog="pcrh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic cohort CSV and truth JSON")
    p.add_argument("--subjects", type=int, default=88)
    p.add_argument("--visits", default="3-5", help="visits per subject: N or MIN-MAX")
    p.add_argument("--tau1-sq", type=float, default=0.16)
    p.add_argument("--sigma-eps-sq", type=float, default=0.0625)
    p.add_argument("--tau2-sq", type=float, default=0.0)
    p.add_argument("--hinge-beta", type=float, default=0.0)
    p.add_argument("--knot", type=float, default=20.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("describe", parents=[common], help="descriptive statistics of a cohort CSV")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("fit", parents=[common, model, sampler], help="fit a mixed model (REML/ML or Gibbs)")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=["reml", "ml"], default="reml")
    p.add_argument("--bayes", action="store_true", help="Gibbs sampler instead of REML/ML")
    p.add_argument("--export-b", action="store_true", help="also write per-draw subject effects")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", parents=[common, sampler], help="LRT or DIC comparison of two models")
    p.add_argument("--input", required=True)
    p.add_argument("--null", required=True, help="null model spec")
    p.add_argument("--alt", required=True, help="alternative model spec")
    p.add_argument("--knot", type=float)
    p.add_argument("--method", choices=["reml", "ml"], default="reml",
                   help="criterion for variance-component tests (fixed-effect tests always use ML)")
    p.add_argument("--test", choices=["auto", "standard", "boundary_mixture"], default="auto")
    p.add_argument("--bayes", action="store_true", help="compare by DIC")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("effects", parents=[common], help="percent effects of CT-Sum on median pCRH")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--from-fit", help="fit.json or bayes_summary.json supplying coefficients")
    p.add_argument("--beta-ct", type=float)
    p.add_argument("--beta-ctga", type=float)
    p.add_argument("--beta-ga", type=float)
    p.add_argument("--beta-hinge", type=float)
    p.add_argument("--ga", default="14,26.7,40", help="comma-separated gestational ages")
    p.add_argument("--ct", default="1", help="comma-separated CT-Sum differences / levels")
    p.add_argument("--piecewise", action="store_true", help="also report weekly growth before/after the knot")
    p.set_defaults(func=cmd_effects)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "burn") and not 0 <= args.burn < 1:
        parser.error("--burn must be in [0, 1)")
    try:
        return args.func(args)
    except (ParseError, ValidationError, EmptyCohort, RankDeficient, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (UsageError, NotNested, PcrhError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
