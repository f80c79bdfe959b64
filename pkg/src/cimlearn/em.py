"""EM for ML and MAP parameters with hidden mechanism variables.

Causes and effect are always observed, so the E-step only needs the
posterior over mechanism values for each distinct (causes, effect) cell;
the data are reduced to cell counts once and every expectation is a
count-weighted sum over cells.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.special import gammaln, xlogy

from .catalog import random_params
from .core import MULTINOMIAL, POISSON, Dataset, DirichletPrior, ModelParams, ModelStructure
from .inference import (
    brute_force_posterior,
    cause_logprob,
    effect_logprob,
    nmi_batch_posteriors,
    poisson_batch_share,
)

log = logging.getLogger(__name__)

RATE_FLOOR = 1e-10


class EMFailure(RuntimeError):
    pass


@dataclass(eq=False)
class ExpectedStats:
    """Expected sufficient statistics: the completed (imaginary) data set.

    ``mech_counts[i][j, k]`` is E[N_ijk]; ``poisson_totals[i][j]`` the
    expected sum of X_i over cases in configuration ``j``;
    ``exposures[i][j]`` the number of such cases.
    """

    cause_counts: list
    mech_counts: list
    poisson_totals: list
    exposures: list
    n_cases: int

    @classmethod
    def zeros(cls, model: ModelStructure) -> "ExpectedStats":
        mech, tot, exp = [], [], []
        for i, m in enumerate(model.mechanisms):
            q = model.n_configs(i)
            mech.append(np.zeros((q, m.cardinality)) if m.family == MULTINOMIAL else None)
            tot.append(np.zeros(q) if m.family == POISSON else None)
            exp.append(np.zeros(q, dtype=np.int64))
        return cls([np.zeros(c.cardinality, dtype=np.int64) for c in model.causes], mech, tot, exp, 0)

    def __add__(self, other: "ExpectedStats") -> "ExpectedStats":
        def add(a, b):
            return [None if x is None else x + y for x, y in zip(a, b)]

        return ExpectedStats(
            add(self.cause_counts, other.cause_counts),
            add(self.mech_counts, other.mech_counts),
            add(self.poisson_totals, other.poisson_totals),
            add(self.exposures, other.exposures),
            self.n_cases + other.n_cases,
        )


@dataclass(eq=False)
class FitResult:
    params: ModelParams
    trace: list
    converged: bool
    iterations: int
    best_restart: int
    mode: str = "map"
    restart_scores: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.trace[-1]


def _accumulate_cells(model, params, rows, counts):
    st = ExpectedStats.zeros(model)
    st.n_cases = int(counts.sum())
    if rows.shape[0] == 0:
        return st
    causes, effects = rows[:, :-1], rows[:, -1]
    for c in range(model.n_causes):
        st.cause_counts[c] += np.bincount(causes[:, c], weights=counts, minlength=model.causes[c].cardinality).astype(np.int64)
    cfg = model.config_indices(causes)
    for i in range(model.n_mechanisms):
        st.exposures[i] += np.bincount(cfg[:, i], weights=counts, minlength=model.n_configs(i)).astype(np.int64)

    kind = model.combo.kind
    families = {m.family for m in model.mechanisms}
    if kind == "max" and families == {MULTINOMIAL}:
        posts = nmi_batch_posteriors(model, params, causes, effects)
        for i, post in enumerate(posts):
            np.add.at(st.mech_counts[i], cfg[:, i], post * counts[:, None])
    elif kind == "sum" and families == {POISSON}:
        expected = poisson_batch_share(model, params, causes) * effects[:, None]
        for i in range(model.n_mechanisms):
            np.add.at(st.poisson_totals[i], cfg[:, i], expected[:, i] * counts)
    else:
        for row, (c, e) in enumerate(zip(causes, effects)):
            post = brute_force_posterior(model, params, c, int(e))
            for i, p in enumerate(post.probs):
                j = cfg[row, i]
                if model.mechanisms[i].family == POISSON:
                    st.poisson_totals[i][j] += counts[row] * float(np.arange(p.size) @ p)
                else:
                    st.mech_counts[i][j] += counts[row] * p
    return st


def e_step(model: ModelStructure, params: ModelParams, data: Dataset) -> ExpectedStats:
    rows, counts = data.cells()
    return _accumulate_cells(model, params, rows, counts)


def _normalise_rows(counts, previous):
    total = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        rows = counts / total
    # a configuration no case visits keeps its previous row
    return np.where(total > 0, rows, previous)


def _restore_clamps(tables, params: ModelParams):
    for i, j, _ in params.clamps:
        tables[i][j] = params.tables[i][j]
    return tables


def m_step_ml(model: ModelStructure, stats: ExpectedStats, params: ModelParams) -> ModelParams:
    """Frequency estimates from expected counts; ``params`` supplies clamps and
    rows for unvisited configurations."""
    priors = [
        stats.cause_counts[c] / stats.n_cases if stats.n_cases else params.cause_priors[c] for c in range(model.n_causes)
    ]
    tables, rates = [], []
    for i, mech in enumerate(model.mechanisms):
        if mech.family == POISSON:
            exp = stats.exposures[i]
            with np.errstate(invalid="ignore", divide="ignore"):
                lam = np.where(exp > 0, stats.poisson_totals[i] / exp, params.rates[i])
            rates.append(np.maximum(lam, RATE_FLOOR))
            tables.append(None)
        else:
            tables.append(_normalise_rows(stats.mech_counts[i], params.tables[i]))
            rates.append(None)
    return params.replace(cause_priors=tuple(priors), tables=tuple(_restore_clamps(tables, params)), rates=tuple(rates))


def m_step_map(model: ModelStructure, stats: ExpectedStats, prior: DirichletPrior, params: ModelParams) -> ModelParams:
    """theta_ijk = (alpha_ijk + E[N_ijk]) / sum_k (alpha_ijk + E[N_ijk]);
    Poisson rates take the Gamma posterior mode."""
    priors = [(stats.cause_counts[c] + a) / (stats.cause_counts[c] + a).sum() for c, a in enumerate(prior.cause_alpha)]
    tables, rates = [], []
    for i, mech in enumerate(model.mechanisms):
        if mech.family == POISSON:
            a, b = prior.gamma[i]
            lam = (a - 1.0 + stats.poisson_totals[i]) / (b + stats.exposures[i])
            rates.append(np.maximum(lam, RATE_FLOOR))
            tables.append(None)
        else:
            post = stats.mech_counts[i] + prior.mech_alpha[i]
            tables.append(post / post.sum(axis=1, keepdims=True))
            rates.append(None)
    return params.replace(cause_priors=tuple(priors), tables=tuple(_restore_clamps(tables, params)), rates=tuple(rates))


def _log_dirichlet(row, alpha):
    return gammaln(alpha.sum()) - gammaln(alpha).sum() + xlogy(alpha - 1.0, row).sum()


def log_prior_density(model: ModelStructure, params: ModelParams, prior: DirichletPrior) -> float:
    """Log prior density whose posterior mode is the MAP update above.

    The update ``(alpha + N) / sum(alpha + N)`` is the mode of a
    Dirichlet(alpha + 1) prior, so that is the density used here; clamped
    rows carry no density.
    """
    total = sum(_log_dirichlet(p, a + 1.0) for p, a in zip(params.cause_priors, prior.cause_alpha))
    clamped = {(i, j) for i, j, _ in params.clamps}
    for i, mech in enumerate(model.mechanisms):
        if mech.family == POISSON:
            a, b = prior.gamma[i]
            total += sps.gamma.logpdf(params.rates[i], a, scale=1.0 / b).sum()
            continue
        alpha = prior.mech_alpha[i]
        for j, row in enumerate(params.tables[i]):
            if (i, j) not in clamped:
                total += _log_dirichlet(row, alpha[j] + 1.0)
    return float(total)


def _cells_loglik(model, params, rows, counts) -> float:
    if rows.shape[0] == 0:
        return 0.0
    causes, effects = rows[:, :-1], rows[:, -1]
    per_cell = cause_logprob(model, params, causes) + effect_logprob(model, params, causes, effects)
    with np.errstate(invalid="ignore"):
        return float(np.sum(counts * per_cell))


def g_objective(model: ModelStructure, params: ModelParams, data: Dataset, prior: DirichletPrior | None = None) -> float:
    """log p(D | theta) plus, in MAP mode (``prior`` given), the log prior density."""
    rows, counts = data.cells()
    value = _cells_loglik(model, params, rows, counts)
    if prior is not None:
        value += log_prior_density(model, params, prior)
    return value


def em_step(model, params, data, mode="map", prior=None) -> ModelParams:
    """One E-step followed by the mode's M-step."""
    stats = e_step(model, params, data)
    if mode == "ml":
        return m_step_ml(model, stats, params)
    return m_step_map(model, stats, prior or DirichletPrior.uniform(model), params)


def _run(model, rows, counts, params, mode, prior, tol, max_iter):
    trace = []
    step = np.inf
    for it in range(max_iter):
        stats = _accumulate_cells(model, params, rows, counts)
        g = _cells_loglik(model, params, rows, counts)
        if mode == "map":
            g += log_prior_density(model, params, prior)
        trace.append(g)
        if not np.isfinite(g):
            return params, trace, False
        if it > 0 and abs(g - trace[-2]) < tol * (1.0 + abs(g)) and step < tol:
            return params, trace, True
        new = m_step_map(model, stats, prior, params) if mode == "map" else m_step_ml(model, stats, params)
        step = new.max_abs_diff(params)
        params = new
    return params, trace, False


def em_fit(
    model: ModelStructure,
    data: Dataset,
    mode: str = "map",
    prior: DirichletPrior | None = None,
    init: ModelParams | None = None,
    tol: float = 1e-6,
    max_iter: int = 500,
    restarts: int = 5,
    seed: int = 0,
    clamps=None,
) -> FitResult:
    """Best of ``restarts`` EM runs.

    Restart 0 starts from ``init`` when given; the rest start from
    Dirichlet(1) rows and Gamma(2, 1) rates drawn from a stream derived
    from ``(seed, restart)``.  A run stops once the change in the objective
    is below ``tol * (1 + |g|)`` and no parameter moved by ``tol`` or more
    in the last step.
    """
    if mode not in ("ml", "map"):
        raise ValueError(f"mode must be 'ml' or 'map', got {mode!r}")
    if len(data) == 0:
        raise ValueError("EM needs at least one case")
    if mode == "map" and prior is None:
        prior = DirichletPrior.uniform(model)
    if clamps is None:
        clamps = init.clamps if init is not None else frozenset()
    rows, counts = data.cells()

    best = None
    scores = []
    for r in range(max(restarts, 1)):
        if r == 0 and init is not None:
            start = init
        else:
            start = random_params(model, np.random.default_rng(np.random.SeedSequence([seed, r])), clamps)
        params, trace, converged = _run(model, rows, counts, start, mode, prior, tol, max_iter)
        final = trace[-1] if trace else -np.inf
        scores.append(final)
        log.debug("restart %d: g=%.6f after %d iterations (converged=%s)", r, final, len(trace), converged)
        if np.isfinite(final) and (best is None or final > best.objective):
            best = FitResult(params, trace, converged, len(trace), r, mode)
    if best is None:
        raise EMFailure("no restart produced a finite objective")
    best.restart_scores = scores
    return best
