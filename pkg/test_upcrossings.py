import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.core import growth, operators, upcrossings
from src.core.errors import NotKoopmanError, ValidationError
from src.core.hilbert_core import Element, norm
from src.core.upcrossings import (bishop_check, bishop_pet_bound, compare_bounds, count_downcrossings,
                                  count_fluctuations, count_series_fluctuations, count_upcrossings,
                                  crossing_profile, ivanov_check, kachurovskii_bound, kachurovskii_met_bound,
                                  windowed_crossings)


def test_greedy_crossing_counts():
    series = [0, 2, 0, 2]
    assert count_upcrossings(series, 0.5, 1.5) == 2
    assert count_downcrossings(series, 0.5, 1.5) == 1
    # touching the interval ends does not count
    assert count_upcrossings([0.5, 1.5, 0.5, 1.5], 0.5, 1.5) == 0
    with pytest.raises(ValidationError):
        count_upcrossings(series, 1, 1)


@given(st.lists(st.integers(-5, 5), max_size=60), st.integers(-4, 3))
def test_up_and_down_crossings_alternate(values, alpha):
    up = count_upcrossings(values, alpha, alpha + 1)
    down = count_downcrossings(values, alpha, alpha + 1)
    assert abs(up - down) <= 1


def test_bishop_on_the_swap(two_cycle):
    space, T = two_cycle
    f = Element.of([1.0, 0.0], space)
    check = bishop_check(T, f, Fraction(1, 4), Fraction(3, 4), 16)
    assert check.rhs == Fraction(3, 4)
    assert check.lhs == 0
    assert check.holds
    assert check.to_document()["inequality"] == "bishop"


@given(st.integers(2, 10), st.integers(0, 5000), st.lists(st.integers(0, 4), min_size=10, max_size=10))
def test_crossing_inequalities_on_random_systems(atoms, seed, values):
    space, T = operators.random_koopman(atoms, seed)
    f = Element.of([float(v) for v in values[:atoms]], space)
    assert bishop_check(T, f, Fraction(1), Fraction(2), 40).holds
    assert ivanov_check(T, f, Fraction(1), Fraction(2), 1, 40).holds


def test_ivanov_preconditions(two_cycle, alternating):
    space, T = two_cycle
    with pytest.raises(ValidationError):
        ivanov_check(T, alternating, Fraction(1, 4), Fraction(3, 4), 1, 8)
    f = Element.of([1.0, 0.0], space)
    with pytest.raises(ValidationError):
        ivanov_check(T, f, 0, Fraction(3, 4), 1, 8)
    check = ivanov_check(T, f, Fraction(1, 4), Fraction(3, 4), 1, 16)
    assert check.rhs == Fraction(1, 3)
    assert check.holds


def test_exact_and_float_profiles_agree(monkeypatch):
    space, T = operators.random_koopman(9, seed=2)
    f = Element.of([3.0, 0.0, 1.0, 2.0, 0.0, 4.0, 1.0, 0.0, 2.0], space)
    exact = crossing_profile(T, f, Fraction(141421, 100000), Fraction(173205, 100000), 60)
    monkeypatch.setattr(upcrossings, "EXACT_CELLS", 0)
    approx = crossing_profile(T, f, Fraction(141421, 100000), Fraction(173205, 100000), 60)
    assert exact.exact and not approx.exact
    assert exact.up == approx.up and exact.down == approx.down


def test_crossings_need_a_koopman_system():
    T = operators.random_orthogonal(3, seed=0)
    with pytest.raises(NotKoopmanError):
        crossing_profile(T, Element.of([1.0, 0.0, 0.0]), 0, 1, 5)


def test_profile_csv(tmp_path, two_cycle, alternating):
    _, T = two_cycle
    path = tmp_path / "profile.csv"
    crossing_profile(T, alternating, Fraction(-1, 2), Fraction(1, 2), 10).to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "atom,up,down"
    assert len(lines) == 3


def test_bishop_bound_iterates_K():
    f = Element.of([1.0, -1.0])
    report = bishop_pet_bound(f, 1, 1, growth.parse("2n"))
    assert report.e == 16
    assert report.bound == 65536
    assert report.rho == 1
    # rho tracks ||f||_inf / (lambda1 sqrt(lambda2)) instead of staying at 1
    narrow = bishop_pet_bound(f, Fraction(1, 2), 1, growth.parse("2n"))
    assert (narrow.e, narrow.rho) == (64, 2)
    assert narrow.bound == 2 ** 64
    shallow = bishop_pet_bound(f, 1, Fraction(1, 2), growth.parse("2n"))
    assert (shallow.e, shallow.rho) == (32, 2)


def test_series_fluctuations():
    pairs = count_series_fluctuations(np.array([0.0, 1.0, 0.0, 1.0]), 0.5)
    assert pairs == [(1, 2), (2, 3), (3, 4)]
    assert count_series_fluctuations(np.array([0.0, 0.1, 0.2]), 0.5) == []


def test_fluctuations_of_averages(two_cycle, alternating):
    _, T = two_cycle
    profile = count_fluctuations(T, alternating, 0.4, 8)
    assert profile.count >= 1
    assert profile.pairs[0] == (1, 2)
    with pytest.raises(ValidationError):
        count_fluctuations(T, alternating, 0, 8)


def test_kachurovskii_bound():
    assert kachurovskii_bound(1, 2) == 1.0
    assert kachurovskii_bound(1, 0.5, C=2.0) == pytest.approx(2 * 16 * (1 + math.log(2)))
    report = kachurovskii_met_bound(Element.of([1.0, -1.0]), 0.5, growth.parse("n+1"))
    assert report.e == math.ceil(16 * (1 + math.log(2)))
    assert report.bound == 1 + report.e
    assert report.rho == 2
    assert "disclaimer" in report.to_document()


def test_windowed_crossings_partition(two_cycle):
    space, T = two_cycle
    f = Element.of([1.0, 0.0], space)
    result = windowed_crossings(T, f, Fraction(1, 2), growth.parse("2n"), 16, 64)
    assert result["windows"][0] == [1, 2]
    assert result["windows"][-1] == [32, 64]
    assert len(result["intervals"]) == 8
    assert result["holds"]
    assert result["counting"] == "within-window"


def test_compare_bounds_rows(alternating):
    rows = compare_bounds(alternating, growth.identity(), eps=1, lambda1=1, lambda2=1, budget=5000)
    methods = [row["method"] for row in rows]
    assert methods == ["projection (isometry)", "projection (nonexpansive)", "fluctuations (Kachurovskii)",
                       "projection", "upcrossings (Bishop)"]
    by_method = {row["method"]: row for row in rows}
    assert by_method["projection (isometry)"]["e"] == 512
    assert by_method["projection (nonexpansive)"]["budget_exceeded"]
    assert by_method["upcrossings (Bishop)"]["e"] == 16
    assert by_method["upcrossings (Bishop)"]["bound"] == "1"
    with pytest.raises(ValidationError):
        compare_bounds(alternating, growth.identity())


def _most_alternations(series, low, high):
    """Largest k with i_1 < j_1 < ... < i_k < j_k, series[i] in low and series[j] in high."""
    for k in range(len(series) // 2, 0, -1):
        for picks in itertools.combinations(range(len(series)), 2 * k):
            if all(low(series[i]) for i in picks[0::2]) and all(high(series[j]) for j in picks[1::2]):
                return k
    return 0


quarters = st.sampled_from([Fraction(k, 4) for k in range(5)])


@given(st.lists(quarters, max_size=12), quarters, quarters)
def test_greedy_counts_are_maximal(series, alpha, beta):
    if not alpha < beta:
        alpha, beta = min(alpha, beta), max(alpha, beta) + Fraction(1, 8)
    below, above = (lambda v: v < alpha), (lambda v: v > beta)
    assert count_upcrossings(series, alpha, beta) == _most_alternations(series, below, above)
    assert count_downcrossings(series, alpha, beta) == _most_alternations(series, above, below)


@pytest.mark.parametrize("system", [
    operators.cyclic_permutation(2),
    operators.doubling_map(64),
    operators.random_koopman(12, seed=9),
    operators.discretized_rotation(3, 8, 16),
])
def test_bishop_inequality_on_a_grid(system):
    space, T = system
    eighths = np.random.Generator(np.random.PCG64(space.atom_count)).integers(0, 9, space.atom_count) / 8
    f = Element(eighths, space)
    grid = [Fraction(k, 9) for k in range(10)]
    for alpha, beta in itertools.combinations(grid, 2):
        assert bishop_check(T, f, alpha, beta, 256).holds, (alpha, beta)


def test_ivanov_inequality_on_the_doubling_map():
    space, T = operators.doubling_map(256)
    f = Element.of([1.0] * 128 + [0.0] * 128, space)
    alpha, beta = Fraction(3, 10), Fraction(3, 5)
    check = ivanov_check(T, f, alpha, beta, 2, 64)
    assert check.rhs == Fraction(1, 4)
    assert check.lhs <= Fraction(1, 4)
    for k in range(6):
        assert ivanov_check(T, f, alpha, beta, k, 64).holds, k


@given(st.integers(2, 6), st.integers(0, 2000), st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(2, 30))
def test_fluctuation_counts_are_monotone(dim, seed, eps_a, eps_b, N):
    T = operators.random_orthogonal(dim, seed)
    f = Element(np.random.Generator(np.random.PCG64(seed)).standard_normal(dim), T.space)
    small, large = min(eps_a, eps_b), max(eps_a, eps_b)
    assert count_fluctuations(T, f, small, N).count >= count_fluctuations(T, f, large, N).count
    assert count_fluctuations(T, f, small, N).count >= count_fluctuations(T, f, small, N - 1).count
    assert count_fluctuations(T, f, 2 * norm(f) + 1e-6, N).count == 0


@given(st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.floats(0.1, 5.0))
def test_kachurovskii_bound_shrinks_as_eps_grows(eps_a, eps_b, sup_norm):
    small, large = min(eps_a, eps_b), max(eps_a, eps_b)
    assert kachurovskii_bound(sup_norm, small) >= kachurovskii_bound(sup_norm, large) * (1 - 1e-12)
