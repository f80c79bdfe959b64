"""Learning causal interaction models: noisy-max and Poisson noisy-additive
local structure, EM with hidden mechanism variables, Jacobian-rank model
dimension and Cheeseman-Stutz model scoring."""

__version__ = "0.1.0"

from .core import (
    MAX,
    PARITY,
    SUM,
    Combination,
    Dataset,
    DirichletPrior,
    Mechanism,
    ModelParams,
    ModelStructure,
    VariableSpec,
    nof,
    unadjusted_dimension,
    validate,
)

__all__ = [
    "MAX",
    "PARITY",
    "SUM",
    "Combination",
    "Dataset",
    "DirichletPrior",
    "Mechanism",
    "ModelParams",
    "ModelStructure",
    "VariableSpec",
    "nof",
    "unadjusted_dimension",
    "validate",
]
