from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.core import operators
from src.core.errors import DimensionMismatchError, NotNonexpansiveError, ValidationError
from src.core.hilbert_core import (AveragesCache, DenseMatrix, Element, KoopmanMap, MeasureSpace, apply,
                                   averages_prefix, ergodic_average, fixed_space_projection, inner, iterates,
                                   is_isometry, norm, norm_l1, norm_l1_exact, norm_sq_exact, norm_sup,
                                   norm_sup_exact, operator_norm_estimate)


def test_measure_space_validates_weights():
    with pytest.raises(ValidationError):
        MeasureSpace(["1/2", "1/3"])
    with pytest.raises(ValidationError):
        MeasureSpace([Fraction(3, 2), Fraction(-1, 2)])
    with pytest.raises(ValidationError):
        MeasureSpace([])
    space = MeasureSpace(["1/4", "3/4"])
    assert space.measure([False, True]) == Fraction(3, 4)


def test_weighted_inner_product():
    space = MeasureSpace(["1/4", "3/4"])
    f = Element.of([2.0, 1.0], space)
    assert inner(f, f) == pytest.approx(0.25 * 4 + 0.75)
    assert norm_sq_exact(f) == Fraction(7, 4)
    assert norm_l1(f) == pytest.approx(1.25)
    assert norm_l1_exact(f) == Fraction(5, 4)
    assert norm_sup(f) == 2.0
    assert norm_sup_exact(Element.of([-3.0, 1.0], space)) == 3


def test_elements_on_different_spaces_do_not_mix():
    f = Element.of([1.0, 0.0])
    g = Element.of([1.0, 0.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        inner(f, g)
    with pytest.raises(DimensionMismatchError):
        Element(np.zeros(3), MeasureSpace.uniform(2))


def test_operator_validation():
    with pytest.raises(NotNonexpansiveError):
        DenseMatrix([[2.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValidationError):
        KoopmanMap([0, 0], MeasureSpace.uniform(2))
    space = MeasureSpace(["1/4", "1/4", "1/2"])
    assert KoopmanMap([1, 0, 2], space).is_permutation
    with pytest.raises(ValidationError):
        KoopmanMap([2, 1, 0], space)


def test_ergodic_averages_on_the_swap(two_cycle, alternating):
    _, T = two_cycle
    assert np.allclose(ergodic_average(T, alternating, 1).coords, [1, -1])
    assert np.allclose(ergodic_average(T, alternating, 2).coords, [0, 0])
    assert np.allclose(ergodic_average(T, alternating, 3).coords, [1 / 3, -1 / 3])
    prefix = averages_prefix(T, alternating, 5)
    assert np.allclose(prefix[4].coords, ergodic_average(T, alternating, 5).coords)


def test_averages_cache_streams_beyond_its_limit():
    T = operators.random_orthogonal(5, seed=3)
    f = Element.of([1.0, -2.0, 0.5, 0.0, 3.0])
    cache = AveragesCache(T, f, limit=16)
    assert np.allclose(cache.average(40), ergodic_average(T, f, 40).coords)
    streamed = np.vstack([rows for _, rows in cache.window(10, 30)])
    assert streamed.shape == (21, 5)
    assert np.allclose(streamed[-1], ergodic_average(T, f, 30).coords)


def test_cached_averages_match_direct_averages(two_cycle, alternating):
    _, T = two_cycle
    cache = AveragesCache(T, alternating, limit=16)
    for m in range(1, 41):
        assert np.allclose(cache.average(m), ergodic_average(T, alternating, m).coords), m
    T = operators.random_orthogonal(4, seed=8)
    f = Element.of([0.5, -1.0, 2.0, 0.0])
    cache = AveragesCache(T, f, limit=16)
    rows = np.vstack([rows for _, rows in cache.window(1, 24)])
    direct = np.array([ergodic_average(T, f, m).coords for m in range(1, 25)])
    assert np.allclose(rows, direct)
    deviation, m = cache.deviations(3, 24)
    expected = [norm(ergodic_average(T, f, k) - ergodic_average(T, f, 3)) for k in range(3, 25)]
    assert deviation == pytest.approx(max(expected))
    assert m == 3 + int(np.argmax(expected))


def test_norm_estimates():
    estimate = operator_norm_estimate(DenseMatrix([[0.5, 0.0], [0.0, 0.25]]))
    assert estimate.converged
    assert estimate.value == pytest.approx(0.5, abs=1e-8)
    assert is_isometry(operators.random_orthogonal(6, seed=1))
    assert not is_isometry(operators.random_contraction(6, seed=1))


def test_fixed_space_projection_of_the_swap(two_cycle):
    space, T = two_cycle
    f = Element.of([1.0, 0.0], space)
    assert np.allclose(fixed_space_projection(T, f).coords, [0.5, 0.5])


@given(st.integers(2, 8), st.integers(0, 1000), st.integers(1, 30))
def test_averages_never_grow(dim, seed, n):
    T = operators.random_contraction(dim, seed)
    f = Element(np.random.Generator(np.random.PCG64(seed)).standard_normal(dim), T.space)
    assert norm(ergodic_average(T, f, n)) <= norm(f) * (1 + 1e-9)


def _nonexpansive_system(dim, seed, isometry):
    T = operators.random_orthogonal(dim, seed) if isometry else operators.random_contraction(dim, seed)
    rng = np.random.Generator(np.random.PCG64(seed + 17))
    return T, Element(rng.standard_normal(dim), T.space), Element(rng.standard_normal(dim), T.space)


systems = st.tuples(st.integers(1, 16), st.integers(0, 10_000), st.booleans())


@given(systems, st.integers(1, 128))
def test_averages_of_coboundaries_telescope(system, n):
    T, u, _ = _nonexpansive_system(*system)
    coboundary = u - apply(T, u)
    telescoped = (u - u.with_coords(iterates(T, u, n + 1)[n])) * (1.0 / n)
    average = ergodic_average(T, coboundary, n)
    assert norm(average - telescoped) <= 1e-8 * max(1.0, norm(u))
    assert norm(average) <= 2 * norm(u) / n + 1e-8 * max(1.0, norm(u))


@given(systems, st.integers(1, 128), st.floats(1e-3, 10.0))
def test_averaging_does_not_spread_nearby_functions(system, n, scale):
    T, f, direction = _nonexpansive_system(*system)
    g = f + direction * scale
    eps = norm(f - g)
    assert norm(ergodic_average(T, f, n) - ergodic_average(T, g, n)) <= eps + 1e-8 * max(1.0, norm(f))


@given(systems)
def test_small_correlation_defect_means_almost_invariant(system):
    T, f, _ = _nonexpansive_system(*system)
    eps = max(inner(f, f - apply(T, f)), 0.0)
    # ||Tf - f||^2 <= 2 <f, f - Tf>, compared squared to stay stable near zero
    assert norm(apply(T, f) - f) ** 2 <= 2 * eps + 1e-8 * norm(f) ** 2


@given(systems, st.integers(1, 128), st.integers(0, 127))
def test_averages_of_almost_invariant_functions_move_slowly(system, n, extra):
    T, f, _ = _nonexpansive_system(*system)
    m = min(n + extra, 128)
    eps = norm(apply(T, f) - f)
    gap = norm(ergodic_average(T, f, m) - ergodic_average(T, f, n))
    assert gap <= (m - n) * eps / 2 + 1e-8 * max(1.0, norm(f))
