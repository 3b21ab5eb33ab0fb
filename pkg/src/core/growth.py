"""
Growth Functions

Nondecreasing integer functions K with K(n) >= n, evaluated over big integers
under a digit budget. Families know how fast they grow so that a hopeless
evaluation (2**n for an n with a million digits) is refused before it starts.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Mapping, Optional, Sequence, Union

from src.core.errors import BudgetExceededError, ValidationError
from src.core.exact import check_budget, decimal_digits, guard_power

# Configure logging
logger = logging.getLogger("ergodic_workbench.growth")

FAMILIES = ("identity", "affine", "polynomial", "exponential", "table", "custom")
# affine iterates beyond this many steps use the closed form
AFFINE_CLOSED_FORM = 64


@dataclass(frozen=True)
class GrowthFunction:
    """
    A growth function n -> K(n).

    Attributes:
        family: One of FAMILIES
        params: Family parameters (c, d for affine; degree; base; table values)
        name: Human-readable description used in reports
    """
    family: str
    params: Dict[str, Any] = field(default_factory=dict)
    name: str = ""
    fn: Optional[Callable[[int, Optional[int]], int]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"Unknown growth family: {self.family}")
        if not self.name:
            object.__setattr__(self, "name", describe(self.family, self.params))

    def evaluate(self, n: int, budget: Optional[int] = None) -> int:
        """Evaluate K(n); with a budget, refuse results larger than budget digits."""
        if n < 0:
            raise ValidationError(f"growth functions are evaluated on n >= 0, got {n}")
        fam, p = self.family, self.params
        if fam == "identity":
            value = n
        elif fam == "affine":
            value = p["c"] * n + p["d"]
        elif fam == "polynomial":
            if budget is not None:
                return guard_power(n, p["degree"], budget)
            value = n ** p["degree"]
        elif fam == "exponential":
            if budget is not None:
                return guard_power(p["base"], n, budget)
            value = p["base"] ** n
        elif fam == "table":
            values = p["values"]
            if n >= len(values):
                raise ValidationError(f"table growth function undefined at {n} (table length {len(values)})")
            value = values[n]
        else:
            value = self.fn(n, budget)
        if budget is not None:
            check_budget(value, budget)
        return value

    def __call__(self, n: int) -> int:
        return self.evaluate(n)

    def describe(self) -> str:
        return self.name

    def to_document(self) -> Dict[str, Any]:
        if self.family == "custom":
            return {"family": "custom", "name": self.name}
        return {"family": self.family, **self.params}


def describe(family: str, params: Mapping[str, Any]) -> str:
    if family == "identity":
        return "n"
    if family == "affine":
        c, d = params["c"], params["d"]
        lead = "n" if c == 1 else f"{c}n"
        return lead if d == 0 else f"{lead}+{d}"
    if family == "polynomial":
        return f"n^{params['degree']}"
    if family == "exponential":
        return f"{params['base']}^n"
    if family == "table":
        return f"table[{len(params['values'])}]"
    return "custom"


def identity() -> GrowthFunction:
    return GrowthFunction("identity")


def affine(c: int, d: int) -> GrowthFunction:
    """n -> c*n + d; K(n) >= n needs c >= 1 and d >= 0."""
    if c < 1 or d < 0:
        raise ValidationError(f"affine growth needs c >= 1 and d >= 0, got c={c}, d={d}")
    if c == 1 and d == 0:
        return identity()
    return GrowthFunction("affine", {"c": int(c), "d": int(d)})


def polynomial(degree: int) -> GrowthFunction:
    if degree < 1:
        raise ValidationError(f"polynomial growth needs degree >= 1, got {degree}")
    if degree == 1:
        return identity()
    return GrowthFunction("polynomial", {"degree": int(degree)})


def exponential(base: int = 2) -> GrowthFunction:
    if base < 2:
        raise ValidationError(f"exponential growth needs base >= 2, got {base}")
    return GrowthFunction("exponential", {"base": int(base)})


def table(values: Sequence[int]) -> GrowthFunction:
    """Lookup-table growth function on 0..len(values)-1; validated on every entry."""
    values = [int(v) for v in values]
    fn = GrowthFunction("table", {"values": values})
    validate(fn, range(len(values)))
    return fn


def custom(fn: Callable[[int], int], name: str = "custom") -> GrowthFunction:
    """Wrap a plain callable; the budget is checked on its results."""
    return GrowthFunction("custom", {}, name=name, fn=lambda n, budget: fn(n))


def validate(K: GrowthFunction, probes: Iterable[int]) -> None:
    """Check K(n) >= n and monotonicity on the probed arguments."""
    previous = None
    for n in sorted(set(probes)):
        value = K(n)
        if value < n:
            raise ValidationError(f"growth function {K.name} has K({n}) = {value} < {n}")
        if previous is not None and value < previous[1]:
            raise ValidationError(
                f"growth function {K.name} decreases: K({previous[0]}) = {previous[1]} > K({n}) = {value}")
        previous = (n, value)


_AFFINE_RE = re.compile(r"^(?:(\d+)\s*\*?\s*)?n(?:\s*\+\s*(\d+))?$")
_POLY_RE = re.compile(r"^n\s*(?:\^|\*\*)\s*(\d+)$")
_EXP_RE = re.compile(r"^(\d+)\s*(?:\^|\*\*)\s*n$")

_ALIASES = {
    "identity": "n",
    "double": "2n",
    "square": "n^2",
    "exp2": "2^n",
}


def parse(spec: Union[str, Mapping[str, Any], GrowthFunction]) -> GrowthFunction:
    """
    Build a growth function from a report/config description.

    Accepts the aliases identity/double/square/exp2, expressions such as
    "n+5", "3n+1", "n^2", "2^n", or a document {"family": ..., params...}.
    """
    if isinstance(spec, GrowthFunction):
        return spec
    if isinstance(spec, Mapping):
        doc = dict(spec)
        family = doc.pop("family", None)
        if family == "identity":
            return identity()
        if family == "affine":
            return affine(int(doc.get("c", 1)), int(doc.get("d", 0)))
        if family == "polynomial":
            return polynomial(int(doc.get("degree", 2)))
        if family == "exponential":
            return exponential(int(doc.get("base", 2)))
        if family == "table":
            return table(doc.get("values", []))
        raise ValidationError(f"Unknown growth function document: {spec!r}")

    text = _ALIASES.get(spec.strip().lower(), spec.strip().lower())
    match = _AFFINE_RE.match(text)
    if match:
        return affine(int(match.group(1) or 1), int(match.group(2) or 0))
    match = _POLY_RE.match(text)
    if match:
        return polynomial(int(match.group(1)))
    match = _EXP_RE.match(text)
    if match:
        return exponential(int(match.group(1)))
    raise ValidationError(f"Cannot parse growth function {spec!r}")


def iterate(K: GrowthFunction, times: int, start: int = 1, budget: Optional[int] = None) -> int:
    """
    K^times(start) in exact arithmetic.

    Raises:
        BudgetExceededError: with iterations_completed and the digits of the last value that fit
    """
    if K.family == "affine" and times > AFFINE_CLOSED_FORM:
        return _iterate_affine(K, times, start, budget)
    value = start
    for k in range(times):
        try:
            nxt = K.evaluate(value, budget)
        except BudgetExceededError as e:
            e.iterations_completed = k
            e.partial = {"last_value_digits": decimal_digits(value)}
            raise
        if nxt == value:
            # fixed point of K: further iterations change nothing
            logger.debug(f"{K.name} reached a fixed point at iteration {k}")
            return value
        value = nxt
    return value



def _iterate_affine(K: GrowthFunction, times: int, start: int, budget: Optional[int]) -> int:
    """c^t s + d (c^t - 1) / (c - 1), or s + t d when c = 1."""
    c, d = K.params["c"], K.params["d"]
    if c == 1:
        value = start + times * d
    else:
        try:
            power = c ** times if budget is None else guard_power(c, times, budget)
        except BudgetExceededError as e:
            base = math.log10(start + d / (c - 1))
            e.iterations_completed = max(0, int((budget - base) // math.log10(c)))
            e.partial = {"last_value_digits": min(budget, int(base + e.iterations_completed * math.log10(c)) + 1)}
            raise
        value = power * start + d * (power - 1) // (c - 1)
    if budget is not None:
        try:
            check_budget(value, budget)
        except BudgetExceededError as e:
            e.iterations_completed = times - 1
            e.partial = {"last_value_digits": budget}
            raise
    return value
