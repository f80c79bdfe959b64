import numpy as np
import pytest

from cimlearn.catalog import binary_nmi, catalog_entry, reference_params
from cimlearn.core import (
    MAX,
    MULTINOMIAL,
    POISSON,
    SUM,
    Mechanism,
    ModelParams,
    ModelStructure,
    VariableSpec,
)


def two_cause_max(rows1=(0.3, 0.7), rows2=(0.6, 0.4)):
    """Two binary causes, one single-row mechanism each (parents empty), binary max."""
    model = ModelStructure(
        (VariableSpec("C1", 2), VariableSpec("C2", 2)),
        VariableSpec("E", 2),
        (Mechanism((), MULTINOMIAL, 2, "X1"), Mechanism((), MULTINOMIAL, 2, "X2")),
        MAX,
    )
    params = ModelParams(
        (np.array([0.5, 0.5]), np.array([0.5, 0.5])),
        (np.array([rows1]), np.array([rows2])),
    )
    return model, params


def poisson_model(rates):
    """One binary cause, leak-only Poisson mechanisms with the given rates, sum."""
    model = ModelStructure(
        (VariableSpec("C1", 2),),
        VariableSpec("E", None),
        tuple(Mechanism((), POISSON, None, f"X{i + 1}") for i in range(len(rates))),
        SUM,
    )
    params = ModelParams(
        (np.array([0.5, 0.5]),),
        (None,) * len(rates),
        tuple(np.array([float(r)]) for r in rates),
    )
    return model, params


@pytest.fixture
def f1():
    entry = catalog_entry("F1")
    return entry.structure, reference_params(entry, 0)


@pytest.fixture(params=["F1", "F2", "F3", "F4", "F5"])
def catalog_model(request):
    entry = catalog_entry(request.param)
    return entry.structure, reference_params(entry, 0)


__all__ = ["two_cause_max", "poisson_model", "binary_nmi"]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
