"""The five binary noisy-max interaction models of the simulation study,
reference parameters for them, and forward sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    MAX,
    MULTINOMIAL,
    POISSON,
    Dataset,
    Mechanism,
    ModelParams,
    ModelStructure,
    VariableSpec,
    clamp_tables,
    unadjusted_dimension,
    variable_names,
)
from .inference import eval_combination

CAUSES = ("C1", "C2", "C3")

# Parent sets per mechanism, as cause indices.  F4 uses the three pairwise
# mechanisms: it has 15 free parameters and its observable map has rank 10.
CATALOG_PARENTS = {
    "F1": ((0,), (1,), (2,)),
    "F2": ((0, 1), (2,)),
    "F3": ((0, 1), (0, 2)),
    "F4": ((0, 1), (0, 2), (1, 2)),
    "F5": ((0, 1, 2),),
}

# (adjusted, unadjusted) dimensions reported for the study models.  F2's
# Jacobian rank here is 8: no structure containing F1 with 9 parameters
# reaches 7 in this model class.
EXPECTED_DIMENSIONS = {
    "F1": (7, 9),
    "F2": (7, 9),
    "F3": (9, 11),
    "F4": (10, 15),
    "F5": (11, 11),
}


@dataclass(frozen=True)
class CatalogEntry:
    model_id: str
    structure: ModelStructure
    expected_d: int
    expected_d_unadjusted: int


def binary_nmi(parent_sets, model_id: str = "") -> ModelStructure:
    """Binary max-combination model over C1..Cn with one mechanism per parent set."""
    n = max((max(p) for p in parent_sets if p), default=-1) + 1
    n = max(n, len(CAUSES))
    causes = tuple(VariableSpec(f"C{c + 1}", 2) for c in range(n))
    mechs = tuple(Mechanism(tuple(p), MULTINOMIAL, 2, f"X{i + 1}") for i, p in enumerate(parent_sets))
    return ModelStructure(causes, VariableSpec("E", 2), mechs, MAX, model_id)


def catalog() -> list[CatalogEntry]:
    out = []
    for model_id, parents in CATALOG_PARENTS.items():
        d, d_unadj = EXPECTED_DIMENSIONS[model_id]
        out.append(CatalogEntry(model_id, binary_nmi(parents, model_id), d, d_unadj))
    return out


def catalog_entry(model_id: str) -> CatalogEntry:
    for entry in catalog():
        if entry.model_id == model_id:
            return entry
    raise KeyError(f"unknown catalog model {model_id!r}")


def _bounded_dirichlet(rng: np.random.Generator, size: int, low: float, high: float) -> np.ndarray:
    """Dirichlet(1) draw shrunk affinely so every entry lies in ``[low, high]``.

    Unlike clipping this keeps the law continuous, so no two rows coincide.
    """
    row = rng.dirichlet(np.ones(size))
    if low == 0.0 and high == 1.0:
        return row
    if size * low >= 1.0 or 1.0 - (size - 1) * low > high + 1e-12:
        raise ValueError(f"cannot fit {size} entries in [{low}, {high}] by shrinking")
    return low + (1.0 - size * low) * row


def random_params(model: ModelStructure, rng: np.random.Generator, clamps=(), low: float = 0.0, high: float = 1.0) -> ModelParams:
    """Dirichlet(1) rows (optionally shrunk into ``[low, high]``) and Gamma(2, 1) rates."""
    priors = [_bounded_dirichlet(rng, c.cardinality, low, high) for c in model.causes]
    tables, rates = [], []
    for i, mech in enumerate(model.mechanisms):
        q = model.n_configs(i)
        if mech.family == POISSON:
            tables.append(None)
            rates.append(rng.gamma(2.0, 1.0, size=q))
        else:
            tables.append(np.array([_bounded_dirichlet(rng, mech.cardinality, low, high) for _ in range(q)]))
            rates.append(None)
    tables = clamp_tables(tables, clamps)
    return ModelParams(tuple(priors), tuple(tables), tuple(rates), frozenset(clamps))


def reference_params(entry: CatalogEntry | ModelStructure, seed: int = 0) -> ModelParams:
    """Seeded interior generating parameters, every entry within [0.05, 0.95]."""
    structure = entry.structure if isinstance(entry, CatalogEntry) else entry
    tag = [ord(ch) for ch in structure.model_id]
    rng = np.random.default_rng(np.random.SeedSequence([seed, *tag]))
    return random_params(structure, rng, low=0.05, high=0.95)


def forward_sample(model: ModelStructure, params: ModelParams, n: int, seed: int = 0, emit_latent: bool = False):
    """Ancestral sampling of ``n`` complete cases.

    Every cause and every mechanism draws from its own child stream,
    consumed in case order, so the first ``k`` cases of an ``n``-sample
    equal the ``k``-sample for the same seed.  With ``emit_latent`` the
    mechanism values are returned as a second array.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(model.n_causes + model.n_mechanisms)]
    causes = np.empty((n, model.n_causes), dtype=np.int64)
    for c, prior in enumerate(params.cause_priors):
        causes[:, c] = _categorical(streams[c], np.broadcast_to(prior, (n, prior.size)))
    cfg = model.config_indices(causes)
    latent = np.empty((n, model.n_mechanisms), dtype=np.int64)
    for i, mech in enumerate(model.mechanisms):
        rng = streams[model.n_causes + i]
        if mech.family == POISSON:
            latent[:, i] = rng.poisson(params.rates[i][cfg[:, i]]) if n else np.zeros(0, dtype=np.int64)
        else:
            latent[:, i] = _categorical(rng, params.tables[i][cfg[:, i]])
    effect = eval_combination(model.combo, latent) if n else np.zeros(0, dtype=np.int64)
    data = Dataset(variable_names(model), np.column_stack([causes, np.asarray(effect, dtype=np.int64).reshape(n)]))
    return (data, latent) if emit_latent else data


def _categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    n = probs.shape[0]
    u = rng.random(n)
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0 + 1e-12
    return (u[:, None] >= cdf).sum(axis=1).astype(np.int64)


def check_entry(entry: CatalogEntry) -> bool:
    return unadjusted_dimension(entry.structure) == entry.expected_d_unadjusted
