from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from src.core import growth
from src.core.errors import BudgetExceededError, ValidationError
from src.core.exact import (as_rational, big_int_summary, ceil_fraction, ceil_sqrt, check_budget,
                            decimal_digits, guard_power, log2_int)


def test_as_rational_reads_every_input_form():
    assert as_rational(0.1) == Fraction(1, 10)
    assert as_rational("3/4") == Fraction(3, 4)
    assert as_rational({"num": 1, "den": 2}) == Fraction(1, 2)
    assert as_rational(7) == 7


@pytest.mark.parametrize("bad", [True, "abc", float("inf"), [1, 2]])
def test_as_rational_rejects_non_numbers(bad):
    with pytest.raises(ValidationError):
        as_rational(bad)


def test_ceil_helpers():
    assert ceil_fraction(Fraction(7, 2)) == 4
    assert ceil_fraction(Fraction(-7, 2)) == -3
    assert ceil_sqrt(Fraction(4)) == 2
    assert ceil_sqrt(Fraction(5)) == 3
    assert ceil_sqrt(Fraction(0)) == 0


@given(st.fractions(min_value=Fraction(1, 10 ** 6), max_value=10 ** 12))
def test_ceil_sqrt_is_least_integer_root(q):
    r = ceil_sqrt(q)
    assert r * r >= q
    assert (r - 1) * (r - 1) < q


def test_digit_counts_and_summaries():
    assert decimal_digits(0) == 1
    assert decimal_digits(10 ** 50) == 51
    assert big_int_summary(12345) == {"digits": 5, "value": "12345"}
    summary = big_int_summary(3 ** 200)
    assert summary["digits"] == decimal_digits(3 ** 200)
    assert summary["leading"] == str(3 ** 200)[:20]
    assert log2_int(2 ** 5000) == pytest.approx(5000)


@pytest.mark.parametrize("k", [1300, 1500, 5000, 20000])
def test_digit_counts_at_powers_of_ten(k):
    assert decimal_digits(10 ** k) == k + 1
    assert decimal_digits(10 ** k - 1) == k
    assert decimal_digits(-(10 ** k)) == k + 1


def test_budget_check_at_the_boundary():
    assert check_budget(10 ** 5000 - 1, 5000) == 10 ** 5000 - 1
    with pytest.raises(BudgetExceededError) as info:
        check_budget(10 ** 5000, 5000)
    assert info.value.digits == 5001
    with pytest.raises(BudgetExceededError):
        check_budget(10 ** 40, 40)


def test_guard_power_refuses_before_evaluating():
    with pytest.raises(BudgetExceededError) as info:
        guard_power(2, 10 ** 7, budget=100)
    assert info.value.digits > 100
    assert guard_power(3, 4, budget=100) == 81


@pytest.mark.parametrize("text,family,params", [
    ("n", "identity", {}),
    ("identity", "identity", {}),
    ("n+5", "affine", {"c": 1, "d": 5}),
    ("3n+1", "affine", {"c": 3, "d": 1}),
    ("double", "affine", {"c": 2, "d": 0}),
    ("n^2", "polynomial", {"degree": 2}),
    ("2^n", "exponential", {"base": 2}),
])
def test_parse_growth_expressions(text, family, params):
    K = growth.parse(text)
    assert K.family == family
    assert K.params == params


def test_parse_rejects_garbage():
    with pytest.raises(ValidationError):
        growth.parse("log n")
    with pytest.raises(ValidationError):
        growth.parse({"family": "weird"})


def test_table_growth_is_validated():
    assert growth.table([1, 2, 3])(2) == 3
    with pytest.raises(ValidationError):
        growth.table([0, 1, 1])
    with pytest.raises(ValidationError):
        growth.table([1, 3, 2])


def test_iterate_small_families():
    assert growth.iterate(growth.affine(1, 1), 10) == 11
    assert growth.iterate(growth.parse("2n"), 5) == 32
    # identity has the fixed point 1
    assert growth.iterate(growth.identity(), 10 ** 9) == 1


def test_iterate_affine_closed_form_matches_recurrence():
    K = growth.affine(2, 1)
    assert growth.iterate(K, 100) == 2 ** 101 - 1
    assert growth.iterate(growth.affine(1, 3), 100) == 301
    value = 1
    for _ in range(growth.AFFINE_CLOSED_FORM + 10):
        value = 3 * value + 2
    assert growth.iterate(growth.affine(3, 2), growth.AFFINE_CLOSED_FORM + 10) == value


def test_iterate_reports_progress_when_budget_runs_out():
    with pytest.raises(BudgetExceededError) as info:
        growth.iterate(growth.exponential(2), 10, budget=50)
    # 1 -> 2 -> 4 -> 16 -> 65536, then 2^65536 is refused
    assert info.value.iterations_completed == 4
    assert info.value.partial["last_value_digits"] == 5


def test_affine_closed_form_budget_refusal():
    with pytest.raises(BudgetExceededError) as info:
        growth.iterate(growth.affine(2, 0), 10 ** 8, budget=1000)
    assert 0 < info.value.iterations_completed < 10 ** 8
