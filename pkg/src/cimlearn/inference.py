"""Effect distributions and mechanism posteriors.

Closed forms cover max-combination models with multinomial mechanisms
(product of mechanism CDFs) and sum-combination models with Poisson
mechanisms (Poisson superposition / binomial thinning).  Everything else,
and every closed form in the test-suite, goes through exhaustive
enumeration of the joint mechanism outcomes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import MULTINOMIAL, POISSON, Combination, Dataset, ModelParams, ModelStructure

ENUMERATION_CAP = 10**7
LOG_SPACE_MIN_MECHANISMS = 32


class ZeroProbabilityEvidence(ValueError):
    """Conditioning on an effect value the model gives probability zero."""


class EnumerationLimitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EffectDistribution:
    """p(E | causes).  Finite effects carry ``probs``; Poisson sums carry ``rate``."""

    probs: np.ndarray | None = None
    rate: float | None = None

    @property
    def support(self) -> np.ndarray | None:
        return None if self.probs is None else np.arange(self.probs.size)

    def pmf(self, e: int) -> float:
        if self.rate is not None:
            return float(stats.poisson.pmf(e, self.rate))
        return float(self.probs[e]) if 0 <= e < self.probs.size else 0.0

    def logpmf(self, e: int) -> float:
        if self.rate is not None:
            return float(stats.poisson.logpmf(e, self.rate))
        p = self.pmf(e)
        return float(np.log(p)) if p > 0 else -np.inf


@dataclass(frozen=True, eq=False)
class MechanismPosterior:
    """p(X_i = k | causes, effect) for every mechanism ``i``."""

    probs: tuple[np.ndarray, ...]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.probs[i]

    def __len__(self) -> int:
        return len(self.probs)

    def max_abs_diff(self, other: "MechanismPosterior") -> float:
        worst = 0.0
        for a, b in zip(self.probs, other.probs):
            n = max(a.size, b.size)
            a = np.pad(a, (0, n - a.size))
            b = np.pad(b, (0, n - b.size))
            worst = max(worst, float(np.max(np.abs(a - b))))
        return worst


def eval_combination(combo: Combination, values) -> np.ndarray | int:
    """Effect value(s) for mechanism values along the last axis."""
    values = np.asarray(values, dtype=np.int64)
    if combo.kind == "max":
        out = values.max(axis=-1)
    elif combo.kind == "sum":
        out = values.sum(axis=-1)
    elif combo.kind == "nof":
        out = (np.count_nonzero(values == 1, axis=-1) >= combo.threshold).astype(np.int64)
    else:
        # effect is 1 iff an even number of mechanisms are 1, zero ones included
        out = (np.count_nonzero(values == 1, axis=-1) % 2 == 0).astype(np.int64)
    return int(out) if np.ndim(out) == 0 else out


def _as_batch(model: ModelStructure, causes, effects=None):
    causes = np.asarray(causes, dtype=np.int64).reshape(-1, model.n_causes)
    for c, spec in enumerate(model.causes):
        col = causes[:, c]
        if np.any((col < 0) | (col >= spec.cardinality)):
            raise ValueError(f"state out of range for cause {spec.name!r}")
    if effects is None:
        return causes
    effects = np.asarray(effects, dtype=np.int64).reshape(-1)
    if effects.shape[0] != causes.shape[0]:
        raise ValueError("causes and effects have different lengths")
    return causes, effects


def _require(model: ModelStructure, kind: str, family: str):
    if model.combo.kind != kind:
        raise ValueError(f"needs the {kind} combination, model uses {model.combo}")
    if any(m.family != family for m in model.mechanisms):
        raise ValueError(f"needs {family} mechanisms throughout")


# ---------------------------------------------------------------------------
# noisy-max interaction


def _nmi_cdf_terms(model, params, causes, effects):
    """P(X_i <= e) and P(X_i < e) per case and mechanism, shape ``(n, m)``."""
    cfg = model.config_indices(causes)
    n, m = cfg.shape
    le = np.empty((n, m))
    lt = np.empty((n, m))
    rows = np.arange(n)
    for i in range(m):
        table = params.tables[i]
        r = table.shape[1]
        cdf = np.cumsum(table[cfg[:, i]], axis=1)
        cdf[:, -1] = 1.0
        le[:, i] = cdf[rows, np.clip(effects, 0, r - 1)]
        lt[:, i] = np.where(effects > 0, cdf[rows, np.clip(effects - 1, 0, r - 1)], 0.0)
    return cfg, le, lt


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def nmi_effect_cdf(model: ModelStructure, params: ModelParams, c, e: int) -> float:
    """p(E <= e | c): the product of the mechanism CDFs at ``e``."""
    _require(model, "max", MULTINOMIAL)
    causes, effects = _as_batch(model, c, [e])
    if e < 0:
        return 0.0
    if e >= model.effect.cardinality - 1:
        return 1.0
    _, le, _ = _nmi_cdf_terms(model, params, causes, effects)
    if model.n_mechanisms > LOG_SPACE_MIN_MECHANISMS:
        return float(np.exp(_log(le[0]).sum()))
    return float(np.prod(le[0]))


def _nmi_log_effect_prob(le: np.ndarray, lt: np.ndarray) -> np.ndarray:
    log_a = _log(le).sum(axis=1)
    log_b = _log(lt).sum(axis=1)
    with np.errstate(invalid="ignore"):
        gap = -np.expm1(log_b - log_a)
        out = log_a + _log(np.maximum(gap, 0.0))
    return np.where(np.isfinite(log_a), out, -np.inf)


def nmi_effect_distribution(model: ModelStructure, params: ModelParams, c) -> EffectDistribution:
    _require(model, "max", MULTINOMIAL)
    r = model.effect.cardinality
    cdf = np.array([nmi_effect_cdf(model, params, c, e) for e in range(r)])
    probs = np.diff(cdf, prepend=0.0)
    return EffectDistribution(probs=np.clip(probs, 0.0, None))


def nmi_batch_posteriors(model: ModelStructure, params: ModelParams, causes, effects) -> list[np.ndarray]:
    """Mechanism posteriors for many cases at once; entry ``i`` has shape ``(n, r_i)``.

    For k < e the posterior is theta_ik times the leave-one-out CDF gap
    ratio, k = e uses theta_ie over its own CDF term, and k > e is zero.  Products are
    formed in log space so many mechanisms do not underflow.
    """
    _require(model, "max", MULTINOMIAL)
    causes, effects = _as_batch(model, causes, effects)
    cfg, le, lt = _nmi_cdf_terms(model, params, causes, effects)
    n, m = le.shape
    log_le, log_lt = _log(le), _log(lt)
    log_a = log_le.sum(axis=1)
    log_b = log_lt.sum(axis=1)
    denom = -np.expm1(log_b - log_a) if n else np.zeros(0)
    bad = ~np.isfinite(log_a) | ~(denom > 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ZeroProbabilityEvidence(f"p(E={effects[k]} | causes={causes[k].tolist()}) = 0")

    # leave-one-out sums of log P(X < e); -inf entries propagate without NaN
    zeros = np.zeros((n, 1))
    prefix = np.concatenate([zeros, np.cumsum(log_lt, axis=1)[:, :-1]], axis=1)
    suffix = np.concatenate([np.cumsum(log_lt[:, ::-1], axis=1)[:, ::-1][:, 1:], zeros], axis=1)
    loo_b = prefix + suffix
    ratio = (np.exp(-log_le) - np.exp(loo_b - log_a[:, None])) / denom[:, None]

    out = []
    rows = np.arange(n)
    for i in range(m):
        table = params.tables[i]
        r = table.shape[1]
        k = np.arange(r)[None, :]
        theta = table[cfg[:, i]]
        post = np.where(k < effects[:, None], theta * ratio[:, i : i + 1], 0.0)
        # k = e: theta_ie * prod_{a != i} P_a(<= e) / p(E = e), which equals the
        # complement 1 - sum_{l < e} but stays exactly 0 when theta_ie is 0
        inside = effects < r
        at = rows[inside], effects[inside]
        post[at] = theta[at] * np.exp(-log_le[inside, i]) / denom[inside]
        out.append(post)
    return out


def nmi_mech_posterior(model: ModelStructure, params: ModelParams, c, e: int) -> MechanismPosterior:
    batch = nmi_batch_posteriors(model, params, [c], [e])
    return MechanismPosterior(tuple(p[0] for p in batch))


# ---------------------------------------------------------------------------
# Poisson noisy-additive interaction


def _poisson_rates(model, params, causes) -> np.ndarray:
    cfg = model.config_indices(causes)
    lam = np.empty(cfg.shape)
    for i in range(model.n_mechanisms):
        lam[:, i] = params.rates[i][cfg[:, i]]
    if np.any(~(lam > 0)):
        raise ValueError("Poisson rates must be positive")
    return lam


def poisson_nai_effect(model: ModelStructure, params: ModelParams, c) -> EffectDistribution:
    """E | c is Poisson with the summed rates of the active mechanism rows."""
    _require(model, "sum", POISSON)
    lam = _poisson_rates(model, params, _as_batch(model, c))
    return EffectDistribution(rate=float(lam[0].sum()))


def poisson_batch_share(model: ModelStructure, params: ModelParams, causes) -> np.ndarray:
    """Thinning probabilities lambda_i / Lambda, shape ``(n, m)``."""
    lam = _poisson_rates(model, params, _as_batch(model, causes))
    return lam / lam.sum(axis=1, keepdims=True)


def poisson_nai_mech_posterior(model: ModelStructure, params: ModelParams, c, e: int) -> MechanismPosterior:
    """X_i | c, E=e ~ Binomial(e, lambda_i / Lambda) on support 0..e."""
    _require(model, "sum", POISSON)
    if e < 0:
        raise ZeroProbabilityEvidence(f"p(E={e}) = 0")
    share = poisson_batch_share(model, params, c)[0]
    k = np.arange(e + 1)
    return MechanismPosterior(tuple(stats.binom.pmf(k, e, s) for s in share))


def poisson_nested_sum_posterior(model: ModelStructure, params: ModelParams, c, e: int) -> MechanismPosterior:
    """Posterior from the truncated nested-sum expression.

    For each mechanism ``i`` and value ``k`` the numerator sums the product
    of the other mechanisms' Poisson masses over all ways of splitting
    ``e - k`` among them; the denominator runs the same sum over all
    mechanisms for ``e``.  Exponential in ``m``; meant for checking.
    """
    _require(model, "sum", POISSON)
    lam = _poisson_rates(model, params, _as_batch(model, c))[0]
    m = lam.size
    logpmf = [stats.poisson.logpmf(np.arange(e + 1), lam_i) for lam_i in lam]

    def split_mass(indices, total):
        # sum over l_1 + ... + l_t = total of prod p_a(l_a), by recursion on the first index
        if not indices:
            return 1.0 if total == 0 else 0.0
        if len(indices) == 1:
            return float(np.exp(logpmf[indices[0]][total]))
        head, rest = indices[0], indices[1:]
        return sum(float(np.exp(logpmf[head][l])) * split_mass(rest, total - l) for l in range(total + 1))

    probs = []
    denom = split_mass(list(range(m)), e)
    for i in range(m):
        others = [a for a in range(m) if a != i]
        num = np.array([np.exp(logpmf[i][k]) * split_mass(others, e - k) for k in range(e + 1)])
        probs.append(num / denom)
    return MechanismPosterior(tuple(probs))


# ---------------------------------------------------------------------------
# enumeration


def _mechanism_masses(model, params, cfg_row, e_bound):
    masses = []
    for i, mech in enumerate(model.mechanisms):
        j = cfg_row[i]
        if mech.family == POISSON:
            if e_bound is None:
                raise EnumerationLimitError("Poisson mechanisms need an effect bound for enumeration")
            masses.append(stats.poisson.pmf(np.arange(e_bound + 1), params.rates[i][j]))
        else:
            masses.append(np.asarray(params.tables[i][j], dtype=float))
    return masses


def _enumerate(model, masses, cap):
    total = int(np.prod([len(p) for p in masses], dtype=np.float64))
    if total > cap:
        raise EnumerationLimitError(f"{total} joint mechanism outcomes exceed the cap of {cap}")
    grid = np.array(list(itertools.product(*[range(len(p)) for p in masses])), dtype=np.int64)
    weight = np.ones(len(grid))
    for i, p in enumerate(masses):
        weight *= p[grid[:, i]]
    return grid, weight, eval_combination(model.combo, grid)


def brute_force_posterior(model: ModelStructure, params: ModelParams, c, e: int, cap: int = ENUMERATION_CAP) -> MechanismPosterior:
    """Enumerate every joint mechanism outcome, keep those combining to ``e``.

    Poisson supports are truncated to 0..e, which loses nothing under the
    sum combination.
    """
    causes = _as_batch(model, c)
    cfg = model.config_indices(causes)[0]
    masses = _mechanism_masses(model, params, cfg, e if e >= 0 else 0)
    grid, weight, effect = _enumerate(model, masses, cap)
    keep = effect == e
    z = weight[keep].sum()
    if not z > 0:
        raise ZeroProbabilityEvidence(f"p(E={e} | causes={list(causes[0])}) = 0")
    probs = []
    for i, p in enumerate(masses):
        post = np.bincount(grid[keep, i], weights=weight[keep], minlength=len(p)) / z
        probs.append(post)
    return MechanismPosterior(tuple(probs))


def enumerated_effect_distribution(model: ModelStructure, params: ModelParams, c, cap: int = ENUMERATION_CAP) -> EffectDistribution:
    """Effect distribution by enumeration; finite mechanism domains only."""
    causes = _as_batch(model, c)
    cfg = model.config_indices(causes)[0]
    masses = _mechanism_masses(model, params, cfg, None)
    _, weight, effect = _enumerate(model, masses, cap)
    size = model.effect.cardinality if not model.effect.is_count else int(effect.max()) + 1
    return EffectDistribution(probs=np.bincount(effect, weights=weight, minlength=size))


def effect_distribution(model: ModelStructure, params: ModelParams, c) -> EffectDistribution:
    kind = model.combo.kind
    families = {m.family for m in model.mechanisms}
    if kind == "max" and families == {MULTINOMIAL}:
        return nmi_effect_distribution(model, params, c)
    if kind == "sum" and families == {POISSON}:
        return poisson_nai_effect(model, params, c)
    return enumerated_effect_distribution(model, params, c)


def mech_posterior(model: ModelStructure, params: ModelParams, c, e: int) -> MechanismPosterior:
    """Dispatch to the closed form when one exists, else enumerate."""
    kind = model.combo.kind
    families = {m.family for m in model.mechanisms}
    if kind == "max" and families == {MULTINOMIAL}:
        return nmi_mech_posterior(model, params, c, e)
    if kind == "sum" and families == {POISSON}:
        return poisson_nai_mech_posterior(model, params, c, e)
    return brute_force_posterior(model, params, c, e)


# ---------------------------------------------------------------------------
# likelihood


def effect_logprob(model: ModelStructure, params: ModelParams, causes, effects) -> np.ndarray:
    """log p(E = e | c) for many cases."""
    causes, effects = _as_batch(model, causes, effects)
    kind = model.combo.kind
    families = {m.family for m in model.mechanisms}
    if kind == "max" and families == {MULTINOMIAL}:
        out = np.full(effects.shape, -np.inf)
        ok = (effects >= 0) & (effects < model.effect.cardinality)
        _, le, lt = _nmi_cdf_terms(model, params, causes[ok], effects[ok])
        out[ok] = _nmi_log_effect_prob(le, lt)
        return out
    if kind == "sum" and families == {POISSON}:
        lam = _poisson_rates(model, params, causes).sum(axis=1)
        return stats.poisson.logpmf(effects, lam)
    return np.array([effect_distribution(model, params, c).logpmf(int(e)) for c, e in zip(causes, effects)])


def cause_logprob(model: ModelStructure, params: ModelParams, causes) -> np.ndarray:
    causes = _as_batch(model, causes)
    out = np.zeros(causes.shape[0])
    for c, prior in enumerate(params.cause_priors):
        out += _log(prior[causes[:, c]])
    return out


def loglik_case(model: ModelStructure, params: ModelParams, case) -> float:
    """log p(c, e): cause-prior terms plus the effect term."""
    case = np.asarray(case, dtype=np.int64)
    causes, effect = case[:-1], case[-1:]
    return float(cause_logprob(model, params, causes)[0] + effect_logprob(model, params, causes, effect)[0])


def loglik(model: ModelStructure, params: ModelParams, data: Dataset) -> float:
    """Observed-data log-likelihood, summed over distinct cells times counts."""
    if len(data) == 0:
        return 0.0
    rows, counts = data.cells()
    per_cell = cause_logprob(model, params, rows[:, :-1]) + effect_logprob(model, params, rows[:, :-1], rows[:, -1])
    with np.errstate(invalid="ignore"):
        return float(np.sum(counts * per_cell))
