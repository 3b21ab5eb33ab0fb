import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.core import operators
from src.core.errors import ValidationError
from src.core.hilbert_core import Element, apply, identity_operator, norm
from src.core.projection import compute_trace, difference_vector, projection_oracle, trace_rows, trace_to_csv


def _random_system(dim, seed):
    T = operators.random_orthogonal(dim, seed)
    f = Element(np.random.Generator(np.random.PCG64(seed + 1)).standard_normal(dim), T.space)
    return T, f


def test_trace_of_the_alternating_function(two_cycle, alternating):
    _, T = two_cycle
    trace = compute_trace(T, alternating, 10)
    assert trace.a_at(0) == pytest.approx(1.0)
    assert trace.u_norm_at(0) == pytest.approx(0.5)
    assert trace.saturated
    assert trace.is_skipped(1)
    # saturated traces answer later indices with the final values
    assert trace.a_at(100) == trace.a_at(trace.last_computed)


def test_trace_of_a_fixed_point():
    space = operators.cyclic_permutation(3)[0]
    T = identity_operator(space)
    trace = compute_trace(T, Element.of([1.0, 2.0, 3.0], space), 10)
    assert trace.saturated
    assert trace.a_at(0) == 0.0
    assert trace.rank(trace.last_computed) == 0


def test_trace_input_validation(two_cycle):
    space, T = two_cycle
    with pytest.raises(ValidationError):
        compute_trace(T, Element.of([0.0, 0.0], space), 5)
    with pytest.raises(ValidationError):
        compute_trace(T, Element.of([1.0, 0.0], space), -1)
    with pytest.raises(ValidationError):
        difference_vector(T, Element.of([1.0, 0.0], space), -1)


def test_trace_agrees_with_the_gram_solve():
    T, f = _random_system(6, seed=11)
    trace = compute_trace(T, f, 3)
    for i in range(3):
        oracle, singular = projection_oracle(T, f, i)
        assert not singular
        assert np.allclose(trace.g_at(i).coords, oracle.coords, atol=1e-6)


def test_trace_export(tmp_path, two_cycle, alternating):
    _, T = two_cycle
    trace = compute_trace(T, alternating, 4)
    rows = trace_rows(trace)
    assert rows[0]["i"] == 0 and rows[0]["skipped"] is False
    path = tmp_path / "trace.csv"
    count = trace_to_csv(trace, str(path))
    assert count == len(rows)
    assert path.read_text().splitlines()[0] == "i,a_i,u_norm,skipped"


@given(st.integers(2, 7), st.integers(0, 500))
def test_trace_invariants(dim, seed):
    T, f = _random_system(dim, seed)
    trace = compute_trace(T, f, 2 * dim)
    previous = 0.0
    for i in range(trace.last_computed + 1):
        a_i = trace.a_at(i)
        assert a_i >= previous - 1e-9
        assert a_i <= norm(f) + 1e-9
        previous = a_i
        u = trace.u_at(i)
        assert np.allclose((u - apply(T, u)).coords, trace.g_at(i).coords, atol=1e-6 * max(1.0, norm(u)))


def test_trace_matches_the_gram_solve_further_out():
    T, f = _random_system(6, seed=7)
    trace = compute_trace(T, f, 5)
    oracle, singular = projection_oracle(T, f, 3)
    assert not singular
    assert norm(trace.g_at(3) - oracle) <= 1e-6 * norm(f)


@given(st.integers(2, 7), st.integers(0, 500), st.booleans())
def test_projections_grow_by_orthogonal_increments(dim, seed, contraction):
    T, f = _random_system(dim, seed)
    if contraction:
        T = operators.random_contraction(dim, seed)
    trace = compute_trace(T, f, 3 * dim)
    size = norm(f)
    for i in range(trace.last_computed + 1):
        for j in range(i, trace.last_computed + 1):
            step = norm(trace.g_at(j) - trace.g_at(i))
            a_i, a_j = trace.a_at(i), trace.a_at(j)
            assert abs(step ** 2 - (a_j ** 2 - a_i ** 2)) <= 1e-8 * size ** 2
            # close a values force close projections
            eps = math.sqrt(2 * size * abs(a_j - a_i))
            assert step <= eps + 1e-6


@given(st.integers(2, 7), st.integers(0, 500), st.sampled_from([0.5, 0.25]))
def test_residuals_become_almost_invariant_within_d_steps(dim, seed, eps):
    T, f = _random_system(dim, seed)
    f = f * (1.0 / norm(f))
    d = math.ceil(32 / eps ** 4)
    trace = compute_trace(T, f, dim * (dim + 1))
    assert trace.saturated
    for i in range(trace.last_computed + 1):
        for j in range(i, i + d):
            residual = f - trace.g_at(j)
            if norm(apply(T, residual) - residual) <= eps:
                break
        else:
            pytest.fail(f"no almost invariant residual within {d} steps of i = {i}")
        assert j - i < d


def test_residual_of_the_swap_is_invariant_at_once(two_cycle):
    space, T = two_cycle
    f = Element.of([1.0, 0.0], space)
    trace = compute_trace(T, f, 4)
    residual = f - trace.g_at(0)
    assert np.allclose(residual.coords, [0.5, 0.5])
    assert norm(apply(T, residual) - residual) == pytest.approx(0.0)
