"""Domain types for causal interaction models.

A model is a set of observed causes, one observed effect and a layer of
hidden mechanism variables.  Each mechanism variable depends on a subset
of the causes (an empty subset is a leak term) and the effect is a
deterministic combination of the mechanism values.

Parent configurations are indexed mixed-radix over the mechanism's
parents in declared order, first parent most significant.  Effect states
are ordered by index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MULTINOMIAL = "multinomial"
POISSON = "poisson"
FAMILIES = (MULTINOMIAL, POISSON)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class VariableSpec:
    """A named variable; ``cardinality=None`` means the counting numbers."""

    name: str
    cardinality: int | None = 2

    @property
    def is_count(self) -> bool:
        return self.cardinality is None

    def contains(self, value: int) -> bool:
        if value < 0:
            return False
        return self.is_count or value < self.cardinality


@dataclass(frozen=True)
class Mechanism:
    parents: tuple[int, ...] = ()
    family: str = MULTINOMIAL
    cardinality: int | None = 2
    name: str = ""

    @property
    def is_leak(self) -> bool:
        return not self.parents


@dataclass(frozen=True)
class Combination:
    """Deterministic combination function: max, sum, nof (threshold) or parity."""

    kind: str
    threshold: int | None = None

    def __post_init__(self):
        if self.kind not in ("max", "sum", "nof", "parity"):
            raise ValueError(f"unknown combination function {self.kind!r}")
        if self.kind == "nof" and (self.threshold is None or self.threshold < 1):
            raise ValueError("nof combination needs a positive threshold")

    @property
    def binary_only(self) -> bool:
        return self.kind in ("nof", "parity")

    def __str__(self) -> str:
        return f"nof({self.threshold})" if self.kind == "nof" else self.kind


MAX = Combination("max")
SUM = Combination("sum")
PARITY = Combination("parity")


def nof(threshold: int) -> Combination:
    return Combination("nof", threshold)


@dataclass(frozen=True)
class ModelStructure:
    causes: tuple[VariableSpec, ...]
    effect: VariableSpec
    mechanisms: tuple[Mechanism, ...]
    combo: Combination = MAX
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))

    @property
    def n_causes(self) -> int:
        return len(self.causes)

    @property
    def n_mechanisms(self) -> int:
        return len(self.mechanisms)

    @property
    def cause_cards(self) -> tuple[int, ...]:
        return tuple(c.cardinality for c in self.causes)

    def n_configs(self, i: int) -> int:
        """q_i, the number of parent configurations of mechanism ``i``."""
        return int(np.prod([self.causes[p].cardinality for p in self.mechanisms[i].parents], dtype=np.int64))

    def mech_card(self, i: int) -> int | None:
        mech = self.mechanisms[i]
        return None if mech.family == POISSON else mech.cardinality

    def parent_config_index(self, i: int, assignment: Sequence[int]) -> int:
        if len(assignment) != self.n_causes:
            raise ValueError(f"assignment has {len(assignment)} states, model has {self.n_causes} causes")
        for c, (spec, s) in enumerate(zip(self.causes, assignment)):
            if not 0 <= s < spec.cardinality:
                raise ValueError(f"state {s} out of range for cause {spec.name!r} (index {c})")
        j = 0
        for p in self.mechanisms[i].parents:
            j = j * self.causes[p].cardinality + int(assignment[p])
        return j

    def enumerate_configs(self, i: int) -> list[tuple[int, ...]]:
        """Parent-state tuples of mechanism ``i``, listed in index order."""
        cards = [self.causes[p].cardinality for p in self.mechanisms[i].parents]
        return list(itertools.product(*[range(r) for r in cards]))

    def config_indices(self, assignments: np.ndarray) -> np.ndarray:
        """Vectorised parent-configuration indices, shape ``(n, m)``."""
        assignments = np.asarray(assignments, dtype=np.int64).reshape(-1, self.n_causes)
        out = np.zeros((assignments.shape[0], self.n_mechanisms), dtype=np.int64)
        for i, mech in enumerate(self.mechanisms):
            for p in mech.parents:
                out[:, i] = out[:, i] * self.causes[p].cardinality + assignments[:, p]
        return out

    def cause_configs(self) -> np.ndarray:
        """All joint cause assignments in row-major order (first cause slowest)."""
        grids = itertools.product(*[range(r) for r in self.cause_cards])
        return np.array(list(grids), dtype=np.int64).reshape(-1, self.n_causes)

    def cause_index(self, name: str) -> int:
        for c, spec in enumerate(self.causes):
            if spec.name == name:
                return c
        raise KeyError(name)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Cause priors plus one parameter table per mechanism.

    ``tables[i]`` is a ``(q_i, r_i)`` array for multinomial mechanisms and
    ``None`` for Poisson ones; ``rates[i]`` is the mirror image.  ``clamps``
    holds ``(mechanism, config, state)`` triples whose rows are fixed point
    masses.
    """

    cause_priors: tuple[np.ndarray, ...]
    tables: tuple[np.ndarray | None, ...]
    rates: tuple[np.ndarray | None, ...] = ()
    clamps: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        m = len(self.tables)
        rates = tuple(self.rates) if self.rates else (None,) * m
        object.__setattr__(self, "cause_priors", tuple(_frozen(p) for p in self.cause_priors))
        object.__setattr__(self, "tables", tuple(None if t is None else _frozen(t) for t in self.tables))
        object.__setattr__(self, "rates", tuple(None if r is None else _frozen(r) for r in rates))
        object.__setattr__(self, "clamps", frozenset(tuple(int(x) for x in c) for c in self.clamps))

    def clamp_map(self) -> dict[tuple[int, int], int]:
        return {(i, j): k for i, j, k in self.clamps}

    def is_clamped(self, i: int, j: int) -> bool:
        return any(ci == i and cj == j for ci, cj, _ in self.clamps)

    def replace(self, **changes) -> "ModelParams":
        kw = dict(cause_priors=self.cause_priors, tables=self.tables, rates=self.rates, clamps=self.clamps)
        kw.update(changes)
        return ModelParams(**kw)

    def allclose(self, other: "ModelParams", atol: float = 0.0) -> bool:
        pairs = list(zip(self.cause_priors, other.cause_priors))
        pairs += [(a, b) for a, b in zip(self.tables, other.tables) if a is not None]
        pairs += [(a, b) for a, b in zip(self.rates, other.rates) if a is not None]
        return all(b is not None and a.shape == b.shape and np.allclose(a, b, rtol=0, atol=atol) for a, b in pairs)

    def max_abs_diff(self, other: "ModelParams") -> float:
        diffs = [np.max(np.abs(a - b)) for a, b in zip(self.cause_priors, other.cause_priors)]
        diffs += [np.max(np.abs(a - b)) for a, b in zip(self.tables, other.tables) if a is not None]
        diffs += [np.max(np.abs(a - b)) for a, b in zip(self.rates, other.rates) if a is not None]
        return float(max(diffs, default=0.0))


def clamp_tables(tables: Iterable[np.ndarray | None], clamps: Iterable[tuple[int, int, int]]) -> list:
    """Return copies of ``tables`` with every clamped row set to its point mass."""
    out = [None if t is None else np.array(t, dtype=float) for t in tables]
    for i, j, k in clamps:
        out[i][j, :] = 0.0
        out[i][j, k] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class DirichletPrior:
    """Conjugate hyperparameters: Dirichlet rows for causes and multinomial
    mechanisms, ``(shape, rate)`` Gamma pairs for Poisson mechanisms."""

    cause_alpha: tuple[np.ndarray, ...]
    mech_alpha: tuple[np.ndarray | None, ...]
    gamma: tuple[tuple[float, float] | None, ...] = ()

    def __post_init__(self):
        m = len(self.mech_alpha)
        object.__setattr__(self, "cause_alpha", tuple(_frozen(a) for a in self.cause_alpha))
        object.__setattr__(self, "mech_alpha", tuple(None if a is None else _frozen(a) for a in self.mech_alpha))
        object.__setattr__(self, "gamma", tuple(self.gamma) if self.gamma else (None,) * m)
        for a in list(self.cause_alpha) + [a for a in self.mech_alpha if a is not None]:
            if np.any(a <= 0):
                raise ValueError("Dirichlet hyperparameters must be strictly positive")
        for g in self.gamma:
            if g is not None and (g[0] <= 0 or g[1] <= 0):
                raise ValueError("Gamma hyperparameters must be strictly positive")

    @classmethod
    def uniform(cls, model: ModelStructure, alpha: float = 1.0, gamma: tuple[float, float] = (1.0, 0.01)):
        cause_alpha = [np.full(c.cardinality, alpha) for c in model.causes]
        mech_alpha, gam = [], []
        for i, mech in enumerate(model.mechanisms):
            if mech.family == POISSON:
                mech_alpha.append(None)
                gam.append(tuple(gamma))
            else:
                mech_alpha.append(np.full((model.n_configs(i), mech.cardinality), alpha))
                gam.append(None)
        return cls(tuple(cause_alpha), tuple(mech_alpha), tuple(gam))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Complete cases: one column per cause, then the effect."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.int64).reshape(-1, len(self.names))
        vals.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", vals)

    @classmethod
    def empty(cls, model: ModelStructure) -> "Dataset":
        return cls(variable_names(model), np.zeros((0, model.n_causes + 1), dtype=np.int64))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def causes(self) -> np.ndarray:
        return self.values[:, :-1]

    @property
    def effect(self) -> np.ndarray:
        return self.values[:, -1]

    def head(self, n: int) -> "Dataset":
        return Dataset(self.names, self.values[:n])

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows (lexicographic order) and their multiplicities."""
        if len(self) == 0:
            return self.values.copy(), np.zeros(0, dtype=np.int64)
        rows, counts = np.unique(self.values, axis=0, return_counts=True)
        return rows, counts


def variable_names(model: ModelStructure) -> tuple[str, ...]:
    return tuple(c.name for c in model.causes) + (model.effect.name,)


def validate(model: ModelStructure, params: ModelParams | None = None) -> list[str]:
    """List every broken invariant of ``model`` (and ``params`` if given)."""
    out: list[str] = []
    eff = model.effect
    if model.n_mechanisms == 0:
        out.append("model has no mechanisms")
    for c, spec in enumerate(model.causes):
        if spec.is_count or spec.cardinality < 2:
            out.append(f"cause {spec.name!r}: causes must be finite with cardinality >= 2")
    if not eff.is_count and eff.cardinality < 2:
        out.append(f"effect {eff.name!r}: cardinality must be >= 2")
    names = variable_names(model)
    if len(set(names)) != len(names):
        out.append("variable names are not unique")

    kind = model.combo.kind
    if model.combo.binary_only and eff.cardinality != 2:
        out.append(f"{kind} requires binary effect")
    if kind == "max" and eff.is_count:
        out.append("max requires a finite effect domain")
    if kind == "sum" and not eff.is_count:
        out.append("sum requires a counting-number effect")
    if kind == "nof" and model.combo.threshold > model.n_mechanisms:
        out.append(f"nof threshold {model.combo.threshold} exceeds mechanism count {model.n_mechanisms}")

    for i, mech in enumerate(model.mechanisms):
        tag = f"mechanism {i}"
        if mech.family not in FAMILIES:
            out.append(f"{tag}: unknown family {mech.family!r}")
            continue
        if any(not 0 <= p < model.n_causes for p in mech.parents):
            out.append(f"{tag}: parent index out of range")
            continue
        if len(set(mech.parents)) != len(mech.parents):
            out.append(f"{tag}: repeated parent")
        if mech.family == MULTINOMIAL and (mech.cardinality is None or mech.cardinality < 2):
            out.append(f"{tag}: multinomial mechanisms need cardinality >= 2")
            continue
        if mech.family == POISSON and kind != "sum":
            out.append(f"{tag}: poisson mechanisms require the sum combination")
        if model.combo.binary_only and mech.cardinality != 2:
            out.append(f"{tag}: {kind} requires binary mechanisms")
        if kind == "max" and mech.family == MULTINOMIAL and not eff.is_count and mech.cardinality > eff.cardinality:
            out.append(f"{tag}: domain is not a subset of the effect domain")

    if params is None or out:
        return out
    out.extend(_validate_params(model, params))
    return out


def _validate_params(model: ModelStructure, params: ModelParams) -> list[str]:
    out: list[str] = []
    if len(params.cause_priors) != model.n_causes:
        out.append("wrong number of cause priors")
    else:
        for spec, p in zip(model.causes, params.cause_priors):
            if p.shape != (spec.cardinality,):
                out.append(f"cause {spec.name!r}: prior has shape {p.shape}")
            elif np.any(p < 0) or abs(p.sum() - 1.0) > ROW_SUM_TOL:
                out.append(f"cause {spec.name!r}: prior row sum != 1 or negative entry")
    if len(params.tables) != model.n_mechanisms or len(params.rates) != model.n_mechanisms:
        out.append("wrong number of mechanism tables")
        return out
    clamps = params.clamp_map()
    if len(clamps) != len(params.clamps):
        out.append("a row is clamped twice")
    for (i, j), k in clamps.items():
        if not 0 <= i < model.n_mechanisms or model.mechanisms[i].family != MULTINOMIAL:
            out.append(f"clamp ({i}, {j}): not a multinomial mechanism")
        elif not 0 <= j < model.n_configs(i) or not 0 <= k < model.mechanisms[i].cardinality:
            out.append(f"clamp ({i}, {j}, {k}): index out of range")
    for i, mech in enumerate(model.mechanisms):
        q = model.n_configs(i)
        tag = f"mechanism {i}"
        if mech.family == POISSON:
            rates = params.rates[i]
            if rates is None or rates.shape != (q,):
                out.append(f"{tag}: expected {q} Poisson rates")
            elif np.any(~(rates > 0)) or not np.all(np.isfinite(rates)):
                out.append(f"{tag}: Poisson rates must be positive and finite")
            continue
        table = params.tables[i]
        if table is None or table.shape != (q, mech.cardinality):
            out.append(f"{tag}: expected table of shape {(q, mech.cardinality)}")
            continue
        for j, row in enumerate(table):
            if abs(row.sum() - 1.0) > ROW_SUM_TOL:
                out.append(f"{tag} row {j}: row sum != 1 ({row.sum():.6g})")
            if (i, j) in clamps:
                point = np.zeros_like(row)
                point[clamps[(i, j)]] = 1.0
                if clamps[(i, j)] < row.size and not np.array_equal(row, point):
                    out.append(f"{tag} row {j}: clamped row is not a point mass")
            elif np.any(row <= 0):
                out.append(f"{tag} row {j}: unclamped entries must be > 0")
    return out


def unadjusted_dimension(model: ModelStructure, clamps: Iterable = ()) -> int:
    """Free-parameter count, hidden mechanism parameters included."""
    clamped = {(c[0], c[1]) for c in clamps}
    d = sum(c.cardinality - 1 for c in model.causes)
    for i, mech in enumerate(model.mechanisms):
        free = sum(1 for j in range(model.n_configs(i)) if (i, j) not in clamped)
        d += free if mech.family == POISSON else free * (mech.cardinality - 1)
    return d
