import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimlearn.catalog import binary_nmi, catalog
from cimlearn.core import (
    MAX,
    MULTINOMIAL,
    PARITY,
    POISSON,
    SUM,
    Dataset,
    Mechanism,
    ModelParams,
    ModelStructure,
    VariableSpec,
    clamp_tables,
    nof,
    unadjusted_dimension,
    validate,
)


def _model(effect_card=2, combo=MAX, family=MULTINOMIAL, mech_card=2):
    return ModelStructure(
        (VariableSpec("C1", 2), VariableSpec("C2", 2), VariableSpec("C3", 2)),
        VariableSpec("E", effect_card),
        (Mechanism((0, 2), family, mech_card, "X1"), Mechanism((1,), family, mech_card, "X2")),
        combo,
    )


class TestParentConfigIndex:
    def test_mixed_radix_example(self):
        model = _model()
        assert model.parent_config_index(0, (1, 0, 1)) == 3
        assert model.parent_config_index(1, (1, 0, 1)) == 0

    def test_first_parent_most_significant(self):
        model = ModelStructure(
            (VariableSpec("A", 3), VariableSpec("B", 2)),
            VariableSpec("E", 3),
            (Mechanism((0, 1), MULTINOMIAL, 3),),
        )
        assert model.parent_config_index(0, (2, 1)) == 5
        assert model.parent_config_index(0, (1, 0)) == 2

    def test_out_of_range_state(self):
        with pytest.raises(ValueError):
            _model().parent_config_index(0, (0, 2, 0))

    @given(st.lists(st.integers(2, 4), min_size=1, max_size=4))
    def test_bijection_onto_configs(self, cards):
        causes = tuple(VariableSpec(f"C{k}", r) for k, r in enumerate(cards))
        model = ModelStructure(causes, VariableSpec("E", 2), (Mechanism(tuple(range(len(cards))), MULTINOMIAL, 2),))
        seen = [model.parent_config_index(0, a) for a in model.cause_configs()]
        assert sorted(seen) == list(range(int(np.prod(cards))))
        assert seen == list(range(len(seen)))

    def test_vectorised_matches_scalar(self):
        model = _model()
        configs = model.cause_configs()
        batch = model.config_indices(configs)
        for row, a in zip(batch, configs):
            assert list(row) == [model.parent_config_index(i, a) for i in range(2)]

    def test_enumerate_configs_order(self):
        assert _model().enumerate_configs(0) == [(0, 0), (0, 1), (1, 0), (1, 1)]


class TestValidate:
    def test_valid_structure(self):
        assert validate(_model()) == []

    def test_parity_needs_binary_effect(self):
        problems = validate(_model(effect_card=3, combo=PARITY))
        assert any("parity requires binary effect" in p for p in problems)

    def test_poisson_needs_sum(self):
        assert validate(_model(effect_card=None, combo=MAX, family=POISSON, mech_card=None))

    def test_sum_of_poisson_is_valid(self):
        assert validate(_model(effect_card=None, combo=SUM, family=POISSON, mech_card=None)) == []

    def test_mechanism_domain_must_fit_effect(self):
        assert validate(_model(effect_card=2, mech_card=3))

    def test_no_mechanisms(self):
        model = ModelStructure((VariableSpec("C1", 2),), VariableSpec("E", 2), ())
        assert validate(model)

    def test_row_sum(self):
        model = _model()
        params = ModelParams(
            (np.array([0.5, 0.5]),) * 3,
            (np.array([[0.5, 0.5]] * 3 + [[0.5, 0.6]]), np.array([[0.5, 0.5]] * 2)),
        )
        assert any("row sum != 1" in p for p in validate(model, params))

    def test_clamped_row_must_be_point_mass(self):
        model = _model()
        tables = (np.full((4, 2), 0.5), np.full((2, 2), 0.5))
        params = ModelParams((np.array([0.5, 0.5]),) * 3, tables, clamps=frozenset({(0, 0, 0)}))
        assert validate(model, params)
        fixed = params.replace(tables=tuple(clamp_tables(tables, params.clamps)))
        assert validate(model, fixed) == []

    def test_unclamped_zero_entry_rejected(self):
        model = _model()
        params = ModelParams((np.array([0.5, 0.5]),) * 3, (np.array([[1.0, 0.0]] * 4), np.full((2, 2), 0.5)))
        assert validate(model, params)

    def test_nof_threshold_positive(self):
        with pytest.raises(ValueError):
            nof(0)


class TestUnadjustedDimension:
    def test_catalog_values(self):
        assert [unadjusted_dimension(e.structure) for e in catalog()] == [9, 9, 11, 15, 11]

    def test_clamped_rows_are_free_of_parameters(self):
        model = binary_nmi([(0,), (1,), (2,)])
        assert unadjusted_dimension(model, [(0, 0, 0), (1, 0, 0)]) == 7

    def test_poisson_rate_counts_once_per_config(self):
        model = _model(effect_card=None, combo=SUM, family=POISSON, mech_card=None)
        assert unadjusted_dimension(model) == 3 + 4 + 2


class TestDataset:
    def test_cells_counts(self):
        data = Dataset(("C1", "E"), [[0, 1], [1, 0], [0, 1]])
        rows, counts = data.cells()
        assert rows.tolist() == [[0, 1], [1, 0]]
        assert counts.tolist() == [2, 1]

    def test_values_are_read_only(self):
        data = Dataset(("C1", "E"), [[0, 1]])
        with pytest.raises(ValueError):
            data.values[0, 0] = 1

    def test_params_are_read_only(self):
        params = ModelParams((np.array([0.5, 0.5]),), (np.array([[0.5, 0.5]]),))
        with pytest.raises(ValueError):
            params.tables[0][0, 0] = 1.0
