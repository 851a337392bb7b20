import math

import pytest

from geam.chem import parse_smiles
from geam.errors import BudgetExceeded, OracleFailure, PropertyRangeError
from geam.oracles import (
    OracleComponent,
    PropertyOracle,
    alkene_component,
    motif_oracle,
    motif_sa_oracle,
    normalize_ds,
    normalize_sa,
    normalize_unit,
    planted_motif_component,
    surrogate_sa,
)


def test_normalize_ds():
    assert normalize_ds(-20.0) == 1.0
    assert normalize_ds(-25.0) == 1.0  # clipped at -20
    assert normalize_ds(-10.0) == 0.5
    assert normalize_ds(0.0) == 0.0
    assert normalize_ds(5.0) == 0.0  # clipped at 0
    assert math.copysign(1.0, normalize_ds(0.0)) == 1.0  # never -0.0


def test_normalize_sa():
    assert normalize_sa(1.0) == 1.0
    assert normalize_sa(10.0) == 0.0
    assert normalize_sa(5.5) == 0.5
    assert normalize_sa(0.0) == 1.0
    assert normalize_sa(12.0) == 0.0


def test_normalize_unit_clips():
    assert normalize_unit(0.5) == 0.5
    assert normalize_unit(-1.0) == 0.0
    assert normalize_unit(2.0) == 1.0


def test_surrogate_sa_monotone_in_size():
    small = surrogate_sa(parse_smiles("CCCC"))
    big = surrogate_sa(parse_smiles("C" * 30))
    assert 1.0 <= small < big <= 10.0


def test_surrogate_sa_penalizes_rings_and_branches():
    chain = surrogate_sa(parse_smiles("CCCCCC"))
    ring = surrogate_sa(parse_smiles("C1CCCCC1"))
    branched = surrogate_sa(parse_smiles("CC(C)(C)CC"))
    assert ring > chain
    assert branched > chain


def test_motif_detected_through_chain_attachment():
    comp = planted_motif_component("c1ccncc1")
    assert comp.fn(parse_smiles("CCc1ccncc1")) == pytest.approx(0.9)
    assert comp.fn(parse_smiles("CCCC")) == pytest.approx(0.1)


def test_motif_substitution_positions_ignored():
    comp = planted_motif_component("c1ccncc1")
    # Two different attachment positions on the pyridine still count.
    assert comp.fn(parse_smiles("CCc1ccncc1")) == comp.fn(
        parse_smiles("CCc1cccnc1")
    )


def test_motif_hidden_behind_aromatic_join():
    comp = planted_motif_component("c1ccncc1")
    # A direct ring-ring bond is never cut, so the pyridine stays buried
    # inside one big fragment and earns no bonus.
    assert comp.fn(parse_smiles("c1ccccc1c1ccncc1")) == pytest.approx(0.1)


def test_motif_count_grading():
    comp = planted_motif_component("c1ccncc1", count_cap=3)
    # 0, 1, 2, 3 pyridines -> base + bonus * count / cap.
    assert comp.fn(parse_smiles("CCCC")) == pytest.approx(0.1)
    assert comp.fn(parse_smiles("CCc1ccncc1")) == pytest.approx(0.1 + 0.8 / 3)
    assert comp.fn(parse_smiles("c1ccncc1CCc1ccncc1")) == pytest.approx(
        0.1 + 1.6 / 3
    )
    assert comp.fn(
        parse_smiles("c1ccncc1CC(c1ccncc1)Cc1ccncc1")
    ) == pytest.approx(0.9)


def test_motif_count_saturates_at_cap():
    binary = planted_motif_component("c1ccncc1")
    # Default cap of one keeps the historical occurrence behaviour.
    assert binary.fn(parse_smiles("c1ccncc1CCc1ccncc1")) == pytest.approx(0.9)
    with pytest.raises(PropertyRangeError):
        planted_motif_component("c1ccncc1", count_cap=0)


def test_alkene_component():
    comp = alkene_component()
    assert comp.fn(parse_smiles("C=CCC")) == pytest.approx(0.9)
    assert comp.fn(parse_smiles("CCCC")) == pytest.approx(0.1)
    # Aromatic bonds are not counted as double bonds.
    assert comp.fn(parse_smiles("c1ccccc1")) == pytest.approx(0.1)
    assert comp.name == "alkene"


def test_composite_y_is_product():
    oracle = motif_sa_oracle("c1ccncc1")
    res = oracle.evaluate("CCc1ccncc1")
    motif_value = res.component("motif")[1]
    sa_value = res.component("sa")[1]
    assert res.y == pytest.approx(motif_value * sa_value)
    assert res.component("sa")[0] == surrogate_sa(parse_smiles("CCc1ccncc1"))


def test_cache_hits_do_not_charge():
    oracle = motif_oracle("c1ccncc1", budget=5)
    first = oracle.evaluate("CCO")
    again = oracle.evaluate("OCC")  # same canonical molecule
    assert first.charged is True
    assert again.charged is False
    assert first.y == again.y
    assert oracle.charged == 1
    assert oracle.requests == 2


def test_budget_enforced_before_evaluation():
    oracle = motif_oracle("c1ccncc1", budget=2)
    oracle.evaluate("CC")
    oracle.evaluate("CCC")
    with pytest.raises(BudgetExceeded):
        oracle.evaluate("CCCC")
    # Known molecules still answer from cache after exhaustion.
    assert oracle.evaluate("CC").charged is False


def test_component_validation():
    bad_range = PropertyOracle(
        [OracleComponent("bad", lambda m: 2.0, lambda r: r)]
    )
    with pytest.raises(PropertyRangeError):
        bad_range.evaluate("CC")
    bad_value = PropertyOracle(
        [OracleComponent("nan", lambda m: float("nan"), lambda r: 0.5)]
    )
    with pytest.raises(OracleFailure):
        bad_value.evaluate("CC")
    with pytest.raises(OracleFailure):
        PropertyOracle([])


def test_noise_is_deterministic_per_seed():
    a = planted_motif_component("c1ccncc1", noise_sigma=0.05, seed=7)
    b = planted_motif_component("c1ccncc1", noise_sigma=0.05, seed=7)
    xs = ["CC", "CCC", "CCCC"]
    assert [a.fn(parse_smiles(x)) for x in xs] == [
        b.fn(parse_smiles(x)) for x in xs
    ]


def test_result_smiles_is_canonical():
    oracle = motif_oracle("c1ccncc1")
    res = oracle.evaluate("OCC")
    assert res.smiles == oracle.evaluate("CCO").smiles
