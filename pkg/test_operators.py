import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.core import operators
from src.core.documents import dump_document, element_from_pattern, element_from_spec, load_document
from src.core.errors import NotIsometryError, ValidationError
from src.core.hilbert_core import DenseMatrix, MeasureSpace, is_isometry, operator_norm_estimate


def test_build_from_recipes():
    space, T = operators.build({"kind": "cyclic_permutation", "period": 3})
    assert list(T.atom_map) == [1, 2, 0]
    space, T = operators.build({"kind": "discretized_rotation", "numerator": 1, "denominator": 4, "atoms": 8})
    assert list(T.atom_map)[:2] == [2, 3]
    space, T = operators.build({"kind": "random_orthogonal", "dim": 4, "seed": 0})
    assert is_isometry(T)


def test_recipes_reject_missing_and_unknown_fields():
    with pytest.raises(ValidationError):
        operators.build({"kind": "cyclic_permutation"})
    with pytest.raises(ValidationError):
        operators.build({"kind": "cyclic_permutation", "period": 2, "colour": "red"})
    with pytest.raises(ValidationError):
        operators.build({"kind": "baker_map", "atoms": 4})


def test_rotation_needs_divisible_atom_count():
    with pytest.raises(ValidationError):
        operators.discretized_rotation(1, 3, 8)
    assert operators.rotation_order(2, 8) == 4


def test_doubling_map_rotates_bits():
    _, T = operators.doubling_map(8)
    assert T.atom_map[1] == 2
    assert T.atom_map[4] == 1
    assert T.atom_map[7] == 7
    with pytest.raises(ValidationError):
        operators.doubling_map(6)


def test_seeded_recipes_are_reproducible():
    _, first = operators.random_koopman(12, seed=5)
    space, second = operators.random_koopman(12, seed=5)
    assert np.array_equal(first.atom_map, second.atom_map)
    assert sum(space.weights, Fraction(0)) == 1
    _, perm = operators.random_permutation(12, seed=5)
    assert sorted(perm.atom_map.tolist()) == list(range(12))
    assert np.array_equal(perm.atom_map, operators.random_permutation(12, seed=5)[1].atom_map)


def test_named_systems_resolve_from_yaml():
    recipe = operators.named_system("two_cycle")
    assert recipe.kind == "cyclic_permutation"
    space, T = operators.build(recipe)
    assert space.atom_count == 2
    with pytest.raises(ValidationError):
        operators.named_system("no_such_system")


def test_system_documents():
    doc = {"space": {"weights": ["1/4", "1/4", "1/2"]},
           "operator": {"kind": "koopman", "atom_map": [1, 0, 2]},
           "f": [1, "1/2", {"num": -1, "den": 4}]}
    space, T, f = load_document(doc)
    assert space.weights[2] == Fraction(1, 2)
    assert list(f.coords) == [1.0, 0.5, -0.25]
    assert dump_document(space, T, f)["operator"] == {"kind": "koopman", "atom_map": [1, 0, 2]}
    with pytest.raises(ValidationError):
        load_document({"space": {"atoms": 2}})


def test_element_patterns():
    space = operators.cyclic_permutation(4)[0]
    assert list(element_from_pattern("half_indicator", space).coords) == [1, 1, 0, 0]
    assert list(element_from_pattern("centered_half_indicator", space).coords) == [0.5, 0.5, -0.5, -0.5]
    with pytest.raises(ValidationError):
        element_from_pattern("spiral", space)
    with pytest.raises(ValidationError):
        element_from_spec([1, 2], space)


def test_claimed_isometries_are_checked():
    for dim, seed in [(2, 0), (5, 3), (16, 11)]:
        _, T = operators.build({"kind": "random_orthogonal", "dim": dim, "seed": seed})
        assert T.claimed_class == "isometry"
    quarter_turn = {"space": {"atoms": 2},
                    "operator": {"kind": "dense", "matrix": [[0, -1], [1, 0]], "claimed_class": "isometry"}}
    _, T, _ = load_document(quarter_turn)
    assert is_isometry(T)
    halving = {"space": {"atoms": 2},
               "operator": {"kind": "dense", "matrix": [[0.5, 0], [0, 0.5]], "claimed_class": "isometry"}}
    with pytest.raises(NotIsometryError):
        load_document(halving)
    # a contraction is fine as long as it only claims to be nonexpansive
    DenseMatrix([[0.5, 0], [0, 0.5]], MeasureSpace.uniform(2))
    with pytest.raises(ValidationError):
        DenseMatrix(operators.random_contraction(4, seed=2).entries, claimed_class="isometry")


@given(st.integers(0, 40), st.integers(1, 24))
def test_rotations_close_their_orbits(numerator, denominator):
    _, T = operators.discretized_rotation(numerator, denominator, denominator)
    order = operators.rotation_order(numerator, denominator)
    assert order == denominator // math.gcd(numerator, denominator)
    points = np.arange(denominator)
    for step in range(1, order + 1):
        points = T.atom_map[points]
        if step < order:
            assert not np.array_equal(points, np.arange(denominator))
    assert np.array_equal(points, np.arange(denominator))
    assert T.is_permutation


def test_random_contractions():
    for seed in range(5):
        single = operators.random_contraction(1, seed)
        assert abs(single.entries[0, 0]) <= 1
    first = operators.random_contraction(6, seed=3)
    assert np.array_equal(first.entries, operators.random_contraction(6, seed=3).entries)
    estimate = operator_norm_estimate(operators.random_contraction(8, seed=42))
    assert 0 < estimate.value <= 1 + 1e-9
