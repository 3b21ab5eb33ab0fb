"""
Pointwise ergodic bounds on finite Koopman systems.

Exceptional sets are sets of atoms, and their measures are exact sums of atom
weights. Per-atom partial sums S_i f(x) = sum_{j<i} f(tau^j x) are computed
exactly (integers after scaling by the common denominator of f) whenever the
window is small enough; larger windows fall back to the compensated float
averages of AveragesCache.
"""

import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import BudgetExceededError, ValidationError
from src.core.exact import as_rational, ceil_fraction, ceil_sqrt, decimal_digits, fraction_to_json
from src.core.growth import GrowthFunction
from src.core.hilbert_core import (AveragesCache, Element, Operator, apply,
                                   norm_l1_exact, norm_sq_exact, require_koopman)
from src.core.mean_bounds import DEFAULT_DIGIT_BUDGET, DEFAULT_WINDOW_CAP, BoundReport, iterate_bound
from src.core.projection import ProjectionTrace

# Configure logging
logger = logging.getLogger("ergodic_workbench.pointwise")

# windows with dim * length below this use exact integer partial sums
EXACT_CELLS = 1 << 20


def _positive(name: str, value) -> Fraction:
    q = as_rational(value)
    if q <= 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return q


class OrbitSums:
    """
    Exact partial sums along orbits of a Koopman map.

    Row i of the table is D * S_i f as Python integers, where D is the common
    denominator of the coordinates of f.
    """

    def __init__(self, T: Operator, f: Element):
        T = require_koopman(T)
        exact = f.exact_coords()
        scale = 1
        for v in exact:
            scale = scale * v.denominator // math.gcd(scale, v.denominator)
        self.scale = scale
        self.values = np.array([int(v * scale) for v in exact], dtype=object)
        self.atom_map = T.atom_map
        self._rows = [np.zeros(f.dim, dtype=object)]
        self._positions = np.arange(f.dim)

    def extend(self, N: int) -> None:
        while len(self._rows) <= N:
            self._rows.append(self._rows[-1] + self.values[self._positions])
            self._positions = self.atom_map[self._positions]

    def row(self, i: int) -> np.ndarray:
        self.extend(i)
        return self._rows[i]

    def table(self, start: int, end: int) -> np.ndarray:
        """Rows start..end as an object array of shape (end - start + 1, dim)."""
        self.extend(end)
        return np.array(self._rows[start:end + 1], dtype=object)


def _measure(space, mask) -> Fraction:
    return space.measure([bool(b) for b in mask])


# ---------------------------------------------------------------------------
# Maximal inequality, Chebyshev, splitting
# ---------------------------------------------------------------------------

@dataclass
class MaximalCheck:
    atoms: List[int]
    integral: Fraction
    n: int

    @property
    def holds(self) -> bool:
        return self.integral >= 0

    def to_document(self) -> Dict[str, Any]:
        return {"n": self.n, "set": self.atoms, "integral": fraction_to_json(self.integral),
                "holds": self.holds}


def maximal_theorem_check(T: Operator, f: Element, n: int) -> MaximalCheck:
    """A = {x : max_{i<=n} S_i f(x) > 0}; the maximal ergodic theorem says the integral of f over A is >= 0."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    sums = OrbitSums(T, f)
    table = sums.table(1, n)
    in_set = np.any((table > 0).astype(bool), axis=0)
    atoms = [int(x) for x in np.nonzero(in_set)[0]]
    exact = f.exact_coords()
    integral = sum((f.space.weights[x] * exact[x] for x in atoms), Fraction(0))
    result = MaximalCheck(atoms, integral, n)
    if not result.holds:
        logger.error(f"maximal ergodic theorem violated: integral {integral} over A")
    return result


@dataclass
class MeasureCheck:
    measure: Fraction
    bound: Fraction

    @property
    def holds(self) -> bool:
        return self.measure <= self.bound

    def to_document(self) -> Dict[str, Any]:
        return {"measure": fraction_to_json(self.measure), "bound": fraction_to_json(self.bound),
                "holds": self.holds}


def maximal_set_measure(T: Operator, f: Element, n: int, lam) -> MeasureCheck:
    """mu{x : max_{1<=i<=n} |A_i f(x)| > lam}, against the bound ||f||_1 / lam."""
    lam = _positive("lambda", lam)
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    sums = OrbitSums(T, f)
    table = sums.table(1, n)
    counts = np.arange(1, n + 1, dtype=object)[:, None]
    # |S_i / (i D)| > lam  <=>  |S_i| * lam.den > lam.num * i * D
    exceeds = np.abs(table) * lam.denominator > counts * (lam.numerator * sums.scale)
    result = MeasureCheck(_measure(f.space, np.any(exceeds.astype(bool), axis=0)), norm_l1_exact(f) / lam)
    if not result.holds:
        logger.error(f"maximal inequality violated: {result.measure} > {result.bound}")
    return result


def chebyshev_measure(f: Element, lam) -> MeasureCheck:
    """mu{x : |f(x)| >= lam}, against ||f||_2^2 / lam^2."""
    lam = _positive("lambda", lam)
    mask = [abs(v) >= lam for v in f.exact_coords()]
    return MeasureCheck(_measure(f.space, mask), norm_sq_exact(f) / (lam * lam))


def split_function(u: Element, L) -> Tuple[Element, Element]:
    """
    u = u' + u'' with u' the truncation of u at level L (u where |u| <= L, else 0).

    ||u'||_inf <= L and ||u''||_1 <= ||u||_2^2 / L.
    """
    L = _positive("L", L)
    keep = np.array([abs(v) <= L for v in u.exact_coords()])
    truncated = np.where(keep, u.coords, 0.0)
    remainder = np.where(keep, 0.0, u.coords)
    head, tail = u.with_coords(truncated), u.with_coords(remainder)
    if norm_l1_exact(tail) > norm_sq_exact(u) / L:
        logger.error("split_function: L1 bound on the remainder violated")
    return head, tail


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseParams:
    lambda1: Fraction
    lambda2: Fraction
    rho: int
    e: int


def pointwise_params(f, lambda1, lambda2) -> PointwiseParams:
    """
    rho = ceil(||f||_2 / (lambda1 sqrt(lambda2))) and
    e = ceil(2^7 ||f||_2^2 / (lambda1 sqrt(lambda2))), computed by squaring.
    """
    l1 = _positive("lambda1", lambda1)
    l2 = _positive("lambda2", lambda2)
    n2 = norm_sq_exact(f) if isinstance(f, Element) else as_rational(f)
    if n2 <= 0:
        raise ValidationError("the bound needs f != 0")
    denom = l1 * l1 * l2
    rho = max(1, ceil_sqrt(n2 / denom))
    e = ceil_sqrt((2 ** 7 * n2) ** 2 / denom)
    return PointwiseParams(l1, l2, rho, e)


def pointwise_khat(K: GrowthFunction, rho: int) -> GrowthFunction:
    """i -> i + 2^34 rho^6 K(2^12 K(1)^3 i^2 rho^4)."""
    if rho < 1:
        raise ValidationError(f"rho must be >= 1, got {rho}")
    k1_cubed = K(1) ** 3
    scale = 2 ** 34 * rho ** 6

    def step(i: int, budget: Optional[int]) -> int:
        return i + scale * K.evaluate(2 ** 12 * k1_cubed * i * i * rho ** 4, budget)

    return GrowthFunction("custom", {}, name=f"Khat_pw[{K.name}, rho={rho}]", fn=step)


def second_term_increment(k: int, rho: int) -> int:
    """2^34 k^7 rho^6, the window length attached to an index k."""
    return 2 ** 34 * k ** 7 * rho ** 6


def pet_bound(f, lambda1, lambda2, K: GrowthFunction, budget: int = DEFAULT_DIGIT_BUDGET) -> BoundReport:
    """Khat^e(1) for the pointwise Khat above, under the digit budget."""
    params = pointwise_params(f, lambda1, lambda2)
    fn = pointwise_khat(K, params.rho)
    report = iterate_bound(fn, params.e, budget,
                           "Khat^e(1), Khat(i) = i + 2^34 rho^6 K(2^12 K(1)^3 i^2 rho^4), "
                           "e = ceil(2^7 ||f||_2^2 / (lambda1 sqrt(lambda2)))", params.rho)
    logger.info(f"pet_bound rho={params.rho} e={params.e} budget_exceeded={report.budget_exceeded}")
    return report


# ---------------------------------------------------------------------------
# Witness search
# ---------------------------------------------------------------------------

@dataclass
class DeviationReport:
    """
    n, the window end K(n), and the measure of atoms whose averages move by
    more than lambda1 across [n, K(n)].
    """
    n: int
    window_end: int
    exceptional_measure: Fraction
    lambda1: float
    lambda2: float
    found: bool = True
    exact: bool = True
    searched_up_to: int = 0

    def to_document(self) -> Dict[str, Any]:
        doc = asdict(self)
        doc["exceptional_measure"] = fraction_to_json(self.exceptional_measure)
        return doc


class WindowDeviation:
    """Exceptional sets {x : max_{n<=m<=end} |A_m f(x) - A_n f(x)| > lam} for one system."""

    def __init__(self, T: Operator, f: Element, cache_limit: int = 262_144):
        self.operator = require_koopman(T)
        self.element = f
        self._sums: Optional[OrbitSums] = None
        self._cache: Optional[AveragesCache] = None
        self.cache_limit = cache_limit

    def mask(self, n: int, end: int, lam: Fraction) -> Tuple[np.ndarray, bool]:
        dim = self.element.dim
        if dim * (end + 1) <= EXACT_CELLS:
            if self._sums is None:
                self._sums = OrbitSums(self.operator, self.element)
            sums = self._sums
            rows = sums.table(n, end)
            anchor = sums.row(n)
            ms = np.arange(n, end + 1, dtype=object)[:, None]
            diff = rows * n - anchor[None, :] * ms
            exceeds = np.abs(diff) * lam.denominator > ms * (n * lam.numerator * sums.scale)
            return np.any(exceeds.astype(bool), axis=0), True
        if self._cache is None:
            self._cache = AveragesCache(self.operator, self.element, self.cache_limit)
        anchor = np.array(self._cache.average(n))
        worst = np.zeros(dim)
        for _, rows in self._cache.window(n, end):
            np.maximum(worst, np.max(np.abs(rows - anchor), axis=0), out=worst)
        return worst > float(lam), False

    def measure(self, n: int, end: int, lam: Fraction) -> Tuple[Fraction, bool]:
        mask, exact = self.mask(n, end, lam)
        return _measure(self.element.space, mask), exact


def find_pointwise_stable_n(T: Operator, f: Element, lambda1, lambda2, K: GrowthFunction, horizon: int,
                            cache_limit: int = 262_144,
                            window_cap: int = DEFAULT_WINDOW_CAP) -> DeviationReport:
    """
    Least n <= horizon whose exceptional set over [n, K(n)] at level lambda1
    has measure <= lambda2. Not found: the n of smallest measure, found=False.
    """
    l1 = _positive("lambda1", lambda1)
    l2 = _positive("lambda2", lambda2)
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    windows = WindowDeviation(T, f, cache_limit)
    best: Optional[DeviationReport] = None
    for n in range(1, horizon + 1):
        end = K(n)
        if end - n > window_cap:
            logger.warning(f"window [{n}, {end}] exceeds the cap {window_cap}; search stopped")
            if best is None:
                return DeviationReport(n, end, Fraction(1), float(l1), float(l2), found=False, searched_up_to=n - 1)
            best.searched_up_to = n - 1
            return best
        measure, exact = windows.measure(n, end, l1)
        report = DeviationReport(n, end, measure, float(l1), float(l2), found=measure <= l2,
                                 exact=exact, searched_up_to=n)
        if report.found:
            logger.info(f"pointwise stable n = {n}, exceptional measure {measure}")
            return report
        if best is None or measure < best.exceptional_measure:
            best = report
    best.searched_up_to = horizon
    logger.info(f"no pointwise-stable n up to {horizon}; best n = {best.n} with measure {best.exceptional_measure}")
    return best


def _sum_window_measure(T: Operator, h: Element, n: int, k: int, threshold: float) -> Fraction:
    """mu{x : max_{n<=m<=k} (|A_m h(x)| + |A_n h(x)|) > threshold}."""
    cache = AveragesCache(T, h)
    anchor = np.abs(np.array(cache.average(n)))
    worst = np.zeros(h.dim)
    for _, rows in cache.window(n, k):
        np.maximum(worst, np.max(np.abs(rows), axis=0), out=worst)
    return _measure(h.space, worst + anchor > threshold)


def first_last_terms_measure(T: Operator, g_diff: Element, n: int, k: int, lambda1) -> Fraction:
    """Exceptional measure for g_j - g_i at level lambda1 / 2."""
    require_koopman(T)
    return _sum_window_measure(T, g_diff, n, k, float(_positive("lambda1", lambda1)) / 2)


def other_terms_measure(T: Operator, u: Element, n: int, k: int, lambda1) -> Fraction:
    """Exceptional measure for the coboundary g = u - Tu at level lambda1 / 4."""
    require_koopman(T)
    g = u - apply(T, u)
    return _sum_window_measure(T, g, n, k, float(_positive("lambda1", lambda1)) / 4)


def u_bound_pet(trace: ProjectionTrace, T: Operator, f: Element, k: int, lambda1, lambda2) -> Dict[str, Any]:
    """
    Either mu{x : max_{1<=m<=k} |A_m f(x) - f(x)| > lambda1} <= lambda2, or
    ||u_i||_2 <= (i+1) ||f||_2^2 k^{3/2} / (lambda1 sqrt(lambda2)) for every computed i.
    """
    l1 = _positive("lambda1", lambda1)
    l2 = _positive("lambda2", lambda2)
    measure, _ = WindowDeviation(T, f).measure(1, k, l1)
    if measure <= l2:
        return {"branch": "window_stable", "holds": True, "measure": fraction_to_json(measure)}
    f2 = float(norm_sq_exact(f))
    scale = f2 * k ** 1.5 / (float(l1) * math.sqrt(float(l2)))
    worst = max(trace.u_norm_at(i) - (i + 1) * scale for i in range(trace.last_computed + 1))
    return {"branch": "u_bounded", "holds": bool(worst <= 1e-8), "worst_excess": worst}


@dataclass
class PointwiseScheduleStep:
    k: int
    i_k: int
    n_k: int
    window_end: int
    measure: Fraction
    witness: bool
    # i_{k+1} - i_k, set on steps that did not produce a witness
    increment: Optional[int] = None


def pointwise_schedule(T: Operator, f: Element, lambda1, lambda2, K: GrowthFunction, cap: int,
                       max_steps: Optional[int] = None, window_cap: int = DEFAULT_WINDOW_CAP) -> Dict[str, Any]:
    """
    i_0 = 0, n_k = max(1, ceil(2^12 K(1)^3 i_k^2 ||f||_2^4 / (lambda1^4 lambda2^2))),
    i_{k+1} = i_k + 2^34 K(n_k)^7 rho^6.

    The n_k >= 1 clamp is applied at every step (the formula gives 0 at i_0 = 0).
    Stops at the first n_k whose exceptional measure is <= lambda2, after e
    steps, or once i_k passes the cap.
    """
    params = pointwise_params(f, lambda1, lambda2)
    n2 = norm_sq_exact(f)
    k1_cubed = K(1) ** 3
    coeff = 2 ** 12 * k1_cubed * n2 * n2 / (params.lambda1 ** 4 * params.lambda2 ** 2)
    windows = WindowDeviation(T, f)
    steps: List[PointwiseScheduleStep] = []
    i_k = 0
    clamped = False

    def result(witness_n: Optional[int], capped: bool) -> Dict[str, Any]:
        return {"steps": [_step_doc(s) for s in steps], "witness_n": witness_n, "capped": capped,
                "e": params.e, "n0_clamped": clamped}

    limit = params.e if max_steps is None else min(params.e, max_steps)
    for k in range(limit):
        if i_k > cap:
            return result(None, True)
        raw = ceil_fraction(coeff * i_k * i_k)
        clamped = clamped or raw < 1
        n_k = max(1, raw)
        try:
            end = K.evaluate(n_k, DEFAULT_DIGIT_BUDGET)
        except BudgetExceededError:
            end = None
        if end is None or end - n_k > window_cap:
            logger.warning(f"schedule stopped at k = {k}: window at n_k with {decimal_digits(n_k)} digits is too long")
            return result(None, True)
        measure, _ = windows.measure(n_k, end, params.lambda1)
        ok = measure <= params.lambda2
        step = PointwiseScheduleStep(k, i_k, n_k, end, measure, ok)
        steps.append(step)
        if ok:
            logger.info(f"pointwise schedule witness at k = {k}: n_k = {n_k}")
            return result(n_k, False)
        step.increment = second_term_increment(K(n_k), params.rho)
        i_k = i_k + step.increment
    return result(None, False)


def _step_doc(step: PointwiseScheduleStep) -> Dict[str, Any]:
    doc = asdict(step)
    doc["measure"] = fraction_to_json(step.measure)
    if step.increment is not None:
        doc["increment"] = str(step.increment)
    return doc


# ---------------------------------------------------------------------------
# L1 reduction
# ---------------------------------------------------------------------------

def find_pointwise_stable_n_l1(T: Operator, f: Element, approximants: Sequence[Element],
                               l1_rate: Union[Sequence, Callable[[int], Any]],
                               lambda1, lambda2, K: GrowthFunction, horizon: int) -> Dict[str, Any]:
    """
    Pointwise witness for f through L2 approximants f_i with ||f - f_i||_1 <= l1_rate(i).

    Picks the first i with l1_rate(i) <= lambda1 lambda2 / 8, searches f_i at
    (lambda1 / 2, lambda2 / 2), and re-measures the exceptional set of f itself
    at the n found.
    """
    l1 = _positive("lambda1", lambda1)
    l2 = _positive("lambda2", lambda2)
    rate = l1_rate if callable(l1_rate) else (lambda i: l1_rate[i])
    target = l1 * l2 / 8
    chosen = None
    for i in range(len(approximants)):
        if as_rational(rate(i)) <= target:
            chosen = i
            break
    if chosen is None:
        raise ValidationError(f"no approximant reaches L1 distance {float(target):.6g}")
    approx = approximants[chosen]
    actual = norm_l1_exact(f - approx)
    if actual > as_rational(rate(chosen)):
        logger.warning(f"approximant {chosen} is at L1 distance {float(actual):.6g}, above its stated rate")
    inner = find_pointwise_stable_n(T, approx, l1 / 2, l2 / 2, K, horizon)
    result = {"approximant": chosen, "approximant_report": inner.to_document(), "found": inner.found}
    if inner.found:
        measure, exact = WindowDeviation(T, f).measure(inner.n, inner.window_end, l1)
        result.update({"n": inner.n, "direct_measure": fraction_to_json(measure),
                       "direct_holds": measure <= l2, "exact": exact})
    return result
