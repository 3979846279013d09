"""Chain export: draws CSV, subject-effects CSV and the posterior summary JSON."""
from __future__ import annotations

import csv

from .gibbs import SCHEMA_VERSION, GibbsChain


def _g(x) -> str:
    return format(float(x), ".17g")


def write_chain_csv(chain: GibbsChain, path) -> None:
    """One row per retained iteration: iteration, each beta by label, variances."""
    names = list(chain.parameters())
    traces = list(chain.parameters().values())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration"] + names)
        for k in range(chain.n_retained):
            w.writerow([chain.n_burn + k + 1] + [_g(tr[k]) for tr in traces])


def write_effects_csv(chain: GibbsChain, path) -> None:
    """Long format: iteration, subject_id, one column per random effect."""
    cols = [f"b{k + 1}" for k in range(chain.b.shape[2])]
    ids = chain.subject_ids or tuple(str(i) for i in range(chain.b.shape[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "subject_id"] + cols)
        for k in range(chain.n_retained):
            for i, sid in enumerate(ids):
                w.writerow([chain.n_burn + k + 1, sid] + [_g(v) for v in chain.b[k, i]])


def summary_dict(chain: GibbsChain) -> dict:
    """Posterior mean, sd, 95% equal-tailed interval and ESS per parameter."""
    s = chain.summaries

    def row(name):
        r = s[name]
        return {"term": name, "posterior_mean": r.mean, "posterior_sd": r.sd,
                "lower_95": r.lower, "upper_95": r.upper, "ess": r.ess}

    return {
        "schema_version": SCHEMA_VERSION,
        "model": chain.model,
        "n_iter": chain.n_iter,
        "burn_fraction": chain.burn_fraction,
        "n_retained": chain.n_retained,
        "seed": chain.seed,
        "priors": chain.priors.to_dict(),
        "coefficients": [row(lab) for lab in chain.labels],
        "variance_components": [row(n) for n in chain.variance_names],
    }
