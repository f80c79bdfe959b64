"""Model dimension as the generic rank of the Jacobian of the map from
network parameters to the joint distribution of the observed variables.

The Jacobian is built by central finite differences and its rank read off
the singular values.  The flat parameter layout is: each cause prior's
first ``r - 1`` entries, then per mechanism and per unclamped parent
configuration (in index order) the first ``r_i - 1`` entries of the row,
or the single rate for a Poisson mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import random_params
from .core import POISSON, ModelParams, ModelStructure, unadjusted_dimension
from .inference import effect_distribution

INTERIOR_MIN = 1e-3


@dataclass
class DimensionReport:
    model_id: str
    d: int
    d_unadjusted: int
    ranks: list[int]
    sv_gap: float
    n_points: int
    seed: int
    singular_values: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def min_rank(self) -> int:
        return min(self.ranks)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def csv_row(self) -> dict:
        return {
            "model_id": self.model_id,
            "d": self.d,
            "d_unadjusted": self.d_unadjusted,
            "n_points": self.n_points,
            "min_rank": self.min_rank,
            "max_rank": self.max_rank,
            "sv_gap": self.sv_gap,
            "seed": self.seed,
        }


def _free_rows(model: ModelStructure, params: ModelParams):
    clamped = {(i, j) for i, j, _ in params.clamps}
    for i, mech in enumerate(model.mechanisms):
        for j in range(model.n_configs(i)):
            if (i, j) not in clamped:
                yield i, j, mech.family


def flatten_params(model: ModelStructure, params: ModelParams) -> np.ndarray:
    parts = [p[:-1] for p in params.cause_priors]
    for i, j, family in _free_rows(model, params):
        if family == POISSON:
            parts.append(params.rates[i][j : j + 1])
        else:
            parts.append(params.tables[i][j, :-1])
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_params(model: ModelStructure, theta: np.ndarray, template: ModelParams) -> ModelParams:
    """Inverse of :func:`flatten_params`; clamped rows are copied from ``template``."""
    theta = np.asarray(theta, dtype=float)
    pos = 0
    priors = []
    for spec in model.causes:
        head = theta[pos : pos + spec.cardinality - 1]
        pos += spec.cardinality - 1
        priors.append(np.append(head, 1.0 - head.sum()))
    tables = [None if t is None else np.array(t) for t in template.tables]
    rates = [None if r is None else np.array(r) for r in template.rates]
    for i, j, family in _free_rows(model, template):
        if family == POISSON:
            rates[i][j] = theta[pos]
            pos += 1
        else:
            r = tables[i].shape[1]
            head = theta[pos : pos + r - 1]
            pos += r - 1
            tables[i][j] = np.append(head, 1.0 - head.sum())
    if pos != theta.size:
        raise ValueError(f"flat vector has length {theta.size}, expected {pos}")
    return template.replace(cause_priors=tuple(priors), tables=tuple(tables), rates=tuple(rates))


def observable_joint(model: ModelStructure, params: ModelParams) -> np.ndarray:
    """p(c, e) over cause configurations (row-major) times effect states."""
    if model.effect.is_count:
        raise ValueError("observable map needs a finite effect domain")
    r = model.effect.cardinality
    configs = model.cause_configs()
    joint = np.empty((len(configs), r))
    for row, c in enumerate(configs):
        p_c = np.prod([params.cause_priors[k][s] for k, s in enumerate(c)])
        joint[row] = p_c * effect_distribution(model, params, c).probs[:r]
    return joint


def observable_map(model: ModelStructure, theta: np.ndarray, template: ModelParams) -> np.ndarray:
    """Joint observable probabilities with the last cell dropped."""
    params = unflatten_params(model, theta, template)
    for p in params.cause_priors:
        if np.any(p <= 0):
            raise ValueError("parameter vector is outside the open simplex")
    for i, j, family in _free_rows(model, template):
        row = params.rates[i][j : j + 1] if family == POISSON else params.tables[i][j]
        if np.any(row <= 0):
            raise ValueError("parameter vector is outside the open simplex")
    return observable_joint(model, params).ravel()[:-1]


def jacobian(model: ModelStructure, theta0: np.ndarray, template: ModelParams, fd_step: float = 1e-5) -> np.ndarray:
    theta0 = np.asarray(theta0, dtype=float)
    cols = []
    for k in range(theta0.size):
        step = np.zeros_like(theta0)
        step[k] = fd_step
        hi = observable_map(model, theta0 + step, template)
        lo = observable_map(model, theta0 - step, template)
        cols.append((hi - lo) / (2.0 * fd_step))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def numerical_rank(sv: np.ndarray, rank_tol: float) -> int:
    if sv.size == 0:
        return 0
    if sv[0] == 0:
        raise ArithmeticError("Jacobian vanishes identically")
    return int(np.count_nonzero(sv > rank_tol * sv[0]))


def jacobian_rank(model, theta0, template, fd_step: float = 1e-5, rank_tol: float = 1e-7, return_sv: bool = False):
    sv = np.linalg.svd(jacobian(model, theta0, template, fd_step), compute_uv=False)
    rank = numerical_rank(sv, rank_tol)
    return (rank, sv) if return_sv else rank


def interior_point(model: ModelStructure, rng: np.random.Generator, clamps=()) -> ModelParams:
    """Dirichlet(1) rows, redrawn until no entry is below ``INTERIOR_MIN``."""
    while True:
        params = random_params(model, rng, clamps)
        theta = flatten_params(model, params)
        full = [*params.cause_priors]
        full += [params.tables[i][j] for i, j, fam in _free_rows(model, params) if fam != POISSON]
        if all(row.min() >= INTERIOR_MIN for row in full) and np.all(theta > 0):
            return params


def regular_dimension(
    model: ModelStructure,
    n_points: int = 10,
    seed: int = 0,
    fd_step: float = 1e-5,
    rank_tol: float = 1e-7,
    clamps=(),
) -> DimensionReport:
    """Maximal Jacobian rank over ``n_points`` random interior parameter draws."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    ranks, svs = [], []
    for _ in range(n_points):
        params = interior_point(model, rng, clamps)
        rank, sv = jacobian_rank(model, flatten_params(model, params), params, fd_step, rank_tol, return_sv=True)
        ranks.append(rank)
        svs.append(sv)
    d = max(ranks)
    gaps = [
        (sv[d - 1] / sv[d]) if d < sv.size and sv[d] > 0 else np.inf
        for rank, sv in zip(ranks, svs)
        if rank == d and d > 0
    ]
    return DimensionReport(
        model_id=model.model_id,
        d=d,
        d_unadjusted=unadjusted_dimension(model, clamps),
        ranks=ranks,
        sv_gap=float(min(gaps)) if gaps else float("inf"),
        n_points=n_points,
        seed=seed,
        singular_values=svs,
    )
