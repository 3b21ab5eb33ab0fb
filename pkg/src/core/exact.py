"""
Exact arithmetic helpers.

Every bound formula goes through these: inputs are read as Fractions (floats by
their shortest decimal representation), ceilings are taken on rationals, and
ceilings of square roots are settled by comparing squares. Big-integer sizes are
estimated from bit lengths so a digit budget can be enforced before a value is
materialized.
"""

import math
from fractions import Fraction
from numbers import Rational
from typing import Any, Dict, Union

import numpy as np

from src.core.errors import BudgetExceededError, ValidationError

Number = Union[int, float, str, Fraction, np.floating, np.integer]

LOG10_2 = math.log10(2)


def as_rational(x: Number) -> Fraction:
    """Read a number as an exact Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise ValidationError(f"Expected a number, got {x!r}")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(float(x)):
            raise ValidationError(f"Non-finite value {x!r}")
        return Fraction(repr(float(x)))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"Cannot read {x!r} as a rational: {e}") from e
    if isinstance(x, dict) and set(x) == {"num", "den"}:
        return fraction_from_json(x)
    raise ValidationError(f"Cannot read {x!r} as a rational")


def ceil_fraction(q: Fraction) -> int:
    """Ceiling of a rational as an int."""
    return -((-q.numerator) // q.denominator)


def ceil_sqrt(q: Fraction) -> int:
    """Least integer r >= 0 with r*r >= q."""
    if q <= 0:
        return 0
    c = ceil_fraction(q)
    return math.isqrt(c - 1) + 1


def decimal_digits(n: int) -> int:
    """Number of decimal digits of |n| (1 for zero)."""
    n = abs(n)
    if n < 10:
        return 1
    bits = n.bit_length()
    if bits < 4000:
        return len(str(n))
    # the bit-length estimate is off by at most one either way
    estimate = int((bits - 1) * LOG10_2) + 1
    if n >= 10 ** estimate:
        return estimate + 1
    if n < 10 ** (estimate - 1):
        return estimate - 1
    return estimate


def log2_int(n: int) -> float:
    """log2 of a positive big integer, without converting it to float."""
    if n <= 0:
        raise ValidationError("log2 of a non-positive integer")
    bits = n.bit_length()
    if bits <= 1000:
        return math.log2(n)
    shift = bits - 64
    return math.log2(n >> shift) + shift


def check_budget(value: int, budget: int, iterations_completed: int = 0) -> int:
    """Return value, or raise BudgetExceededError when it has more than budget digits."""
    if value.bit_length() * LOG10_2 >= budget:
        digits = decimal_digits(value)
        if digits > budget:
            raise BudgetExceededError(
                f"value with {digits} digits exceeds the budget of {budget}",
                iterations_completed=iterations_completed, digits=digits)
    return value


def guard_power(base: int, exponent: int, budget: int, iterations_completed: int = 0) -> int:
    """base**exponent, refusing before evaluation when the result cannot fit the budget."""
    if exponent < 0:
        raise ValidationError("negative exponent in an integer power")
    if abs(base) > 1 and exponent > 0:
        predicted = exponent * math.log10(abs(base))
        if predicted > budget + 1:
            raise BudgetExceededError(
                f"{base}**{exponent} would have about {int(predicted) + 1} digits",
                iterations_completed=iterations_completed, digits=int(predicted) + 1)
    return check_budget(base ** exponent, budget, iterations_completed)


def fraction_to_json(q: Fraction) -> Dict[str, int]:
    return {"num": q.numerator, "den": q.denominator}


def fraction_from_json(doc: Any) -> Fraction:
    if isinstance(doc, dict):
        try:
            return Fraction(int(doc["num"]), int(doc["den"]))
        except (KeyError, ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"Bad rational document {doc!r}: {e}") from e
    return as_rational(doc)


def big_int_summary(n: int, full: bool = False) -> Dict[str, Any]:
    """Report form of a big integer: digit count and leading 20 digits, or the full value."""
    digits = decimal_digits(n)
    if full or digits <= 20:
        return {"digits": digits, "value": str(n)}
    if n.bit_length() < 200_000:
        leading = str(n)[:20]
    else:
        # leading digits from the top bits only
        drop = max(0, digits - 40)
        leading = str(n // 10 ** drop)[:20]
    return {"digits": digits, "leading": leading}
