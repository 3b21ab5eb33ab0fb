import logging
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.core import operators
from src.core.computable_rates import (HaltingTable, build_specker_system, dyadic_oracle, exact_oracle,
                                       limit_function_exact, limit_norm_ergodic, pointwise_rate_from_limit_norm,
                                       r_stage, r_value, rate_from_limit_norm, recover_halting_bits,
                                       specker_norm, specker_norm_direct)
from src.core.errors import CapExceededError, OraclePrecisionError, ValidationError
from src.core.hilbert_core import Element, MeasureSpace, fixed_space_projection, identity_operator, norm

halting_tables = st.dictionaries(st.integers(0, 5), st.integers(1, 4), max_size=6)


def test_rate_on_the_swap(two_cycle, alternating):
    _, T = two_cycle
    certificate = rate_from_limit_norm(T, alternating, 0, 0.5)
    assert certificate.i_used == 0
    assert certificate.u_norm == pytest.approx(0.5)
    assert certificate.m == 8
    assert certificate.verified
    assert certificate.to_document()["provenance"]["a"] == pytest.approx(1.0)


def test_rate_of_a_fixed_point():
    space = MeasureSpace.uniform(2)
    f = Element.of([1.0, 2.0], space)
    certificate = rate_from_limit_norm(identity_operator(space), f, math.sqrt(2.5), 0.1)
    assert certificate.fixed_point
    assert certificate.m == 1


def test_rate_rejects_impossible_limit_norms(two_cycle, alternating):
    space, T = two_cycle
    with pytest.raises(ValidationError):
        rate_from_limit_norm(T, alternating, 2, 0.5)
    with pytest.raises(ValidationError):
        rate_from_limit_norm(T, alternating, 0, 0)
    # ||f*|| = 1/2 for f = (1, 0); claiming 0 leaves a gap the trace cannot close
    with pytest.raises(CapExceededError) as info:
        rate_from_limit_norm(T, Element.of([1.0, 0.0], space), 0, 0.1)
    assert info.value.partial["saturated"]


@given(st.integers(2, 10), st.integers(0, 5000), st.lists(st.integers(-3, 3), min_size=10, max_size=10),
       st.floats(0.1, 1.0))
def test_certificates_hold_on_random_systems(atoms, seed, values, eps):
    space, T = operators.random_koopman(atoms, seed)
    f = Element.of([float(v) for v in values[:atoms]], space)
    if not np.any(f.coords):
        return
    limit = limit_function_exact(T, f)
    norm_fstar = math.sqrt(float(sum(w * v * v for w, v in zip(space.weights, limit))))
    certificate = rate_from_limit_norm(T, f, norm_fstar, eps)
    assert certificate.verified


def test_pointwise_rate_on_the_swap(two_cycle, alternating):
    _, T = two_cycle
    certificate = pointwise_rate_from_limit_norm(T, alternating, 0, 0.5, 0.5)
    assert certificate.n == 8192
    assert certificate.exceptional_measure == 0
    assert certificate.verified


def test_limit_norm_for_ergodic_systems(two_cycle, alternating, four_cycle, caplog):
    _, T = two_cycle
    assert limit_norm_ergodic(alternating, T, check=True) == 0
    space, T4 = four_cycle
    assert limit_norm_ergodic(Element.of([1.0, 0.0, 0.0, 0.0], space), T4) == Fraction(1, 4)
    with caplog.at_level(logging.WARNING, logger="ergodic_workbench.computable_rates"):
        limit_norm_ergodic(Element.of([1.0, 0.0, 0.0, 0.0], space), identity_operator(space), check=True)
    assert "orbit components" in caplog.text


def test_limit_function_exact(two_cycle):
    space, T = two_cycle
    assert limit_function_exact(T, Element.of([1.0, 0.0], space)) == [Fraction(1, 2)] * 2
    assert limit_function_exact(identity_operator(space), Element.of([1.0, 0.0], space)) == [1, 0]


def test_halting_table_contract():
    table = HaltingTable({"1": 2, "4": None})
    assert table.halts_at(1) == 2
    assert table.halts_at(4) is None
    assert table.bits(3) == [0, 1, 0]
    assert table.halted_by(1, 2) and not table.halted_by(1, 1)
    assert HaltingTable.from_json(table.to_json()) == table
    with pytest.raises(ValidationError):
        HaltingTable({0: 0})
    with pytest.raises(ValidationError):
        HaltingTable({-1: 3})
    with pytest.raises(ValidationError):
        HaltingTable.from_json("[1, 2]")


@pytest.mark.parametrize("entries,N,norm_sq,r,bits", [
    ({"1": 2}, 3, Fraction(7, 16), Fraction(1, 16), [0, 1, 0]),
    ({0: 1}, 1, Fraction(3, 8), Fraction(1, 8), [1]),
    ({}, 4, Fraction(1, 2), Fraction(0), [0, 0, 0, 0]),
])
def test_specker_examples(entries, N, norm_sq, r, bits):
    table = HaltingTable(entries)
    system = build_specker_system(table, N)
    assert specker_norm(system) == norm_sq
    assert specker_norm_direct(system) == norm_sq
    assert r_value(table, N) == r
    assert recover_halting_bits(exact_oracle(r), table, N) == bits


@given(halting_tables, st.integers(1, 6))
def test_specker_norm_encodes_the_halting_sum(entries, N):
    table = HaltingTable(entries)
    system = build_specker_system(table, N)
    norm_sq = specker_norm(system)
    assert norm_sq == specker_norm_direct(system)
    assert Fraction(1, 2) - norm_sq == r_value(table, N)


@given(halting_tables, st.integers(1, 6))
def test_halting_bits_are_recovered(entries, N):
    table = HaltingTable(entries)
    r = r_value(table, N)
    assert recover_halting_bits(exact_oracle(r), table, N) == table.bits(N)
    assert recover_halting_bits(dyadic_oracle(r, max_bits=N + 4), table, N) == table.bits(N)


def test_stages_and_oracle_failures():
    table = HaltingTable({"0": 3, "2": 1})
    assert r_stage(table, 3, 0) == 0
    assert r_stage(table, 3, 1) == Fraction(1, 32)
    assert r_stage(table, 3, 3) == r_value(table, 3)
    with pytest.raises(OraclePrecisionError):
        recover_halting_bits(dyadic_oracle(r_value(table, 3), max_bits=3), table, 3)
    with pytest.raises(CapExceededError):
        recover_halting_bits(exact_oracle(Fraction(1, 2)), HaltingTable({}), 3)


def test_specker_system_limits():
    with pytest.raises(ValidationError):
        build_specker_system(HaltingTable({}), 0)
    with pytest.raises(ValidationError):
        build_specker_system(HaltingTable({0: 30}), 1)
    system = build_specker_system(HaltingTable({"1": 2}), 3)
    assert system.tail.weight == Fraction(1, 8)
    assert system.space.atom_count == 2 + 8 + 2 + 2


@given(st.integers(2, 8), st.integers(0, 5000), st.sampled_from([0.5, 0.1]))
def test_certificates_hold_on_dense_isometries(dim, seed, eps):
    T = operators.random_orthogonal(dim, seed)
    f = Element(np.random.Generator(np.random.PCG64(seed + 1)).standard_normal(dim), T.space)
    norm_fstar = norm(fixed_space_projection(T, f))
    certificate = rate_from_limit_norm(T, f, norm_fstar, eps)
    assert certificate.verified
    assert certificate.max_deviation <= eps + 1e-6
    assert certificate.verified_up_to == max(certificate.m, min(10 * certificate.m, 10_000))
