"""Marginal-likelihood approximations for model selection: BIC, the
Cheeseman-Stutz score on completed data, and its dimension-corrected
form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .core import POISSON, Dataset, DirichletPrior, ModelParams, ModelStructure, unadjusted_dimension
from .dimension import regular_dimension
from .em import ExpectedStats, e_step, em_fit
from .inference import loglik

CRITERIA = ("cs", "cs-raw", "bic")
SCORE_FORMAT = "cimlearn-scores/1"
SCORE_COLUMNS = ("model_id", "N", "criterion", "log_score", "d", "d_unadjusted", "posterior")


def _dirichlet_multinomial(counts: np.ndarray, alpha: np.ndarray) -> float:
    """log of the Dirichlet integral for (possibly fractional) counts, summed over rows."""
    counts = np.atleast_2d(counts)
    alpha = np.atleast_2d(alpha)
    a_row = alpha.sum(axis=1)
    n_row = counts.sum(axis=1)
    return float(np.sum(gammaln(a_row) - gammaln(a_row + n_row)) + np.sum(gammaln(alpha + counts) - gammaln(alpha)))


def _no_poisson(model: ModelStructure):
    if any(m.family == POISSON for m in model.mechanisms):
        raise ValueError("closed-form complete-data marginal is only available for multinomial mechanisms")


def complete_data_log_marginal(model: ModelStructure, stats: ExpectedStats, prior: DirichletPrior, clamps=()) -> float:
    """log p(D' | S) for completed data under the Dirichlet prior.

    Clamped rows have no free parameters and contribute nothing.
    """
    _no_poisson(model)
    total = sum(_dirichlet_multinomial(n, a) for n, a in zip(stats.cause_counts, prior.cause_alpha))
    clamped = {(c[0], c[1]) for c in clamps}
    for i in range(model.n_mechanisms):
        free = [j for j in range(model.n_configs(i)) if (i, j) not in clamped]
        if free:
            total += _dirichlet_multinomial(stats.mech_counts[i][free], prior.mech_alpha[i][free])
    return float(total)


def completed_loglik(model: ModelStructure, stats: ExpectedStats, params: ModelParams) -> float:
    """log p(D' | theta): expected counts times log parameters."""
    _no_poisson(model)
    total = sum(xlogy(n, p).sum() for n, p in zip(stats.cause_counts, params.cause_priors))
    total += sum(xlogy(n, t).sum() for n, t in zip(stats.mech_counts, params.tables))
    return float(total)


def bic_score(loglik_at_mode: float, d: int, n: int) -> float:
    if n < 1:
        raise ValueError("BIC needs N >= 1")
    return loglik_at_mode - 0.5 * d * np.log(n)


@dataclass(frozen=True)
class CSParts:
    """The pieces every criterion is assembled from, for one fitted model."""

    n: int
    cs_raw: float
    completed_loglik: float
    loglik: float

    def score(self, criterion: str, d: int, d_unadjusted: int) -> float:
        if criterion == "bic":
            return bic_score(self.loglik, d, self.n)
        if criterion == "cs-raw":
            return self.cs_raw
        if criterion == "cs":
            log_n = np.log(self.n)
            return self.cs_raw - self.completed_loglik + 0.5 * d_unadjusted * log_n + self.loglik - 0.5 * d * log_n
        raise ValueError(f"unknown criterion {criterion!r}")


def cs_parts(model: ModelStructure, data: Dataset, params: ModelParams, prior: DirichletPrior) -> CSParts:
    """One E-step at ``params`` to form the completed data, then every term."""
    stats = e_step(model, params, data)
    ll = loglik(model, params, data)
    if any(m.family == POISSON for m in model.mechanisms):
        return CSParts(len(data), np.nan, np.nan, ll)
    return CSParts(
        len(data),
        complete_data_log_marginal(model, stats, prior, params.clamps),
        completed_loglik(model, stats, params),
        ll,
    )


def cs_raw(model: ModelStructure, data: Dataset, params: ModelParams, prior: DirichletPrior) -> float:
    _no_poisson(model)
    return cs_parts(model, data, params, prior).cs_raw


def cs_adjusted(model, data, params, prior, d: int, d_unadjusted: int) -> float:
    """Cheeseman-Stutz with the likelihood and dimension correction."""
    _no_poisson(model)
    if d > d_unadjusted:
        raise ValueError("adjusted dimension exceeds the parameter count")
    return cs_parts(model, data, params, prior).score("cs", d, d_unadjusted)


def model_posteriors(scores) -> np.ndarray:
    """Normalised posteriors under a uniform model prior; NaN scores get NaN."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("need at least one candidate")
    ok = np.isfinite(scores)
    out = np.full(scores.shape, np.nan)
    if ok.any():
        out[ok] = np.exp(scores[ok] - logsumexp(scores[ok]))
    return out


@dataclass
class ScoreRow:
    model_id: str
    n: int
    criterion: str
    log_score: float
    d: int
    d_unadjusted: int
    posterior: float = np.nan
    mode: str = "map"
    restarts: int = 0


@dataclass
class ScoreReport:
    rows: list = field(default_factory=list)

    def normalise(self) -> "ScoreReport":
        post = model_posteriors([r.log_score for r in self.rows])
        for r, p in zip(self.rows, post):
            r.posterior = float(p)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# format: {SCORE_FORMAT}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r in self.rows:
            w.writerow([r.model_id, r.n, r.criterion, repr(float(r.log_score)), r.d, r.d_unadjusted, repr(float(r.posterior))])
        return buf.getvalue()


def score_models(
    candidates,
    data: Dataset,
    criterion: str = "cs",
    dims: dict | None = None,
    mode: str = "map",
    restarts: int = 5,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
    n_points: int = 10,
) -> ScoreReport:
    """Fit and score each ``(structure, clamps)`` candidate on ``data``.

    ``dims`` maps model ids to ``(d, d_unadjusted)``; missing entries are
    computed with :func:`regular_dimension`.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    dims = dict(dims or {})
    report = ScoreReport()
    for k, (model, clamps) in enumerate(candidates):
        if model.model_id not in dims:
            if model.effect.is_count:
                # no finite observable joint to differentiate; BIC uses the parameter count
                d_unadj = unadjusted_dimension(model, clamps)
                dims[model.model_id] = (d_unadj, d_unadj)
            else:
                rep = regular_dimension(model, n_points=n_points, seed=seed, clamps=clamps)
                dims[model.model_id] = (rep.d, rep.d_unadjusted)
        d, d_unadj = dims[model.model_id]
        prior = DirichletPrior.uniform(model)
        fit = em_fit(model, data, mode, prior, tol=tol, max_iter=max_iter, restarts=restarts, seed=seed, clamps=frozenset(clamps))
        parts = cs_parts(model, data, fit.params, prior)
        crit = "bic" if any(m.family == POISSON for m in model.mechanisms) else criterion
        report.rows.append(ScoreRow(model.model_id, len(data), crit, parts.score(crit, d, d_unadj), d, d_unadj, mode=mode, restarts=restarts))
    return report.normalise()
