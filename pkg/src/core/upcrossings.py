"""
Crossings and fluctuations.

Counts upcrossings / downcrossings of [alpha, beta] by the trajectories
n -> A_n f(x), checks the Bishop and Ivanov inequalities on them, counts
eps-fluctuations of the norm-valued sequence (A_n f), and sets the resulting
bounds next to the projection-based ones.
"""

import csv
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ValidationError
from src.core.exact import as_rational, ceil_fraction, ceil_sqrt, fraction_to_json
from src.core.growth import GrowthFunction
from src.core.hilbert_core import (AveragesCache, Element, Operator, norm_sup_exact,
                                   require_koopman, weighted_norms)
from src.core.mean_bounds import (DEFAULT_DIGIT_BUDGET, BoundReport, iterate_bound, kbar_nonexpansive,
                                  khat_isometry, mean_params)
from src.core.pointwise import EXACT_CELLS, OrbitSums, pointwise_khat, pointwise_params

# Configure logging
logger = logging.getLogger("ergodic_workbench.upcrossings")


def _interval(alpha, beta) -> Tuple[Fraction, Fraction]:
    a, b = as_rational(alpha), as_rational(beta)
    if not a < b:
        raise ValidationError(f"crossing intervals need alpha < beta, got [{alpha}, {beta}]")
    return a, b


def count_upcrossings(series: Sequence, alpha, beta) -> int:
    """Greedy scan: wait for a value < alpha, then for a value > beta; count and repeat."""
    a, b = _interval(alpha, beta)
    below = False
    count = 0
    for value in series:
        if not below:
            if value < a:
                below = True
        elif value > b:
            count += 1
            below = False
    return count


def count_downcrossings(series: Sequence, alpha, beta) -> int:
    """Mirror of count_upcrossings: from a value > beta to a value < alpha."""
    a, b = _interval(alpha, beta)
    above = False
    count = 0
    for value in series:
        if not above:
            if value > b:
                above = True
        elif value < a:
            count += 1
            above = False
    return count


def _crossing_counts(states: np.ndarray, below: np.ndarray, above: np.ndarray,
                     up: np.ndarray, down: np.ndarray) -> None:
    """Advance per-atom greedy scanners by one time step (in place)."""
    # up scanner: state bit 1 = seen a value below alpha
    hit_up = (states[0] == 1) & above
    up += hit_up
    states[0] = np.where(hit_up, 0, np.where(below, 1, states[0]))
    hit_down = (states[1] == 1) & below
    down += hit_down
    states[1] = np.where(hit_down, 0, np.where(above, 1, states[1]))


@dataclass
class CrossingProfile:
    alpha: Fraction
    beta: Fraction
    horizon: int
    up: List[int]
    down: List[int]
    exact: bool

    def to_document(self) -> Dict[str, Any]:
        return {"alpha": fraction_to_json(self.alpha), "beta": fraction_to_json(self.beta),
                "horizon": self.horizon, "up": self.up, "down": self.down, "exact": self.exact}

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["atom", "up", "down"])
            for x, (u, d) in enumerate(zip(self.up, self.down)):
                writer.writerow([x, u, d])


def _below_above(T: Operator, f: Element, a: Fraction, b: Fraction, start: int, end: int,
                 sums: Optional[OrbitSums] = None, cache: Optional[AveragesCache] = None):
    """Yield (m, below alpha, above beta) masks for m = start..end."""
    if sums is not None:
        for m in range(start, end + 1):
            row = sums.row(m)
            # A_m = row / (m D); compare without division
            lhs_a = row * a.denominator
            lhs_b = row * b.denominator
            below = (lhs_a < a.numerator * m * sums.scale).astype(bool)
            above = (lhs_b > b.numerator * m * sums.scale).astype(bool)
            yield m, below, above
        return
    fa, fb = float(a), float(b)
    for first, rows in cache.window(start, end):
        for r in range(rows.shape[0]):
            yield first + r, rows[r] < fa, rows[r] > fb


def _trajectory_source(T: Operator, f: Element, horizon: int):
    if f.dim * (horizon + 1) <= EXACT_CELLS:
        return OrbitSums(T, f), None
    return None, AveragesCache(T, f)


def crossing_profile(T: Operator, f: Element, alpha, beta, N: int) -> CrossingProfile:
    """Per-atom up/down crossing counts of A_1 f(x), ..., A_N f(x)."""
    require_koopman(T)
    a, b = _interval(alpha, beta)
    if N < 1:
        raise ValidationError(f"horizon must be >= 1, got {N}")
    sums, cache = _trajectory_source(T, f, N)
    dim = f.dim
    states = np.zeros((2, dim), dtype=np.int8)
    up = np.zeros(dim, dtype=np.int64)
    down = np.zeros(dim, dtype=np.int64)
    for _, below, above in _below_above(T, f, a, b, 1, N, sums, cache):
        _crossing_counts(states, below, above, up, down)
    return CrossingProfile(a, b, N, up.tolist(), down.tolist(), exact=sums is not None)


@dataclass
class InequalityCheck:
    lhs: Fraction
    rhs: Fraction
    horizon: int
    name: str

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + Fraction(1, 10 ** 12)

    def to_document(self) -> Dict[str, Any]:
        return {"inequality": self.name, "lhs": fraction_to_json(self.lhs), "rhs": fraction_to_json(self.rhs),
                "lhs_float": float(self.lhs), "rhs_float": float(self.rhs),
                "horizon": self.horizon, "holds": self.holds}


def bishop_check(T: Operator, f: Element, alpha, beta, N: int) -> InequalityCheck:
    """integral of the upcrossing count <= (1 / (beta - alpha)) integral of (f - alpha)^+."""
    profile = crossing_profile(T, f, alpha, beta, N)
    a, b = profile.alpha, profile.beta
    weights = f.space.weights
    lhs = sum((w * c for w, c in zip(weights, profile.up)), Fraction(0))
    positive = sum((w * max(v - a, Fraction(0)) for w, v in zip(weights, f.exact_coords())), Fraction(0))
    check = InequalityCheck(lhs, positive / (b - a), N, "bishop")
    if not check.holds:
        logger.error(f"Bishop inequality violated: {check.lhs} > {check.rhs}")
    return check


def ivanov_check(T: Operator, f: Element, alpha, beta, k: int, N: int) -> InequalityCheck:
    """mu{x : at least k downcrossings by time N} <= (alpha / beta)^k, for f >= 0."""
    a, b = _interval(alpha, beta)
    if a <= 0:
        raise ValidationError(f"Ivanov's inequality needs 0 < alpha, got {alpha}")
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    if np.any(f.coords < 0):
        raise ValidationError("Ivanov's inequality needs a nonnegative f")
    profile = crossing_profile(T, f, a, b, N)
    measure = f.space.measure([d >= k for d in profile.down])
    check = InequalityCheck(measure, (a / b) ** k, N, "ivanov")
    if not check.holds:
        logger.error(f"Ivanov inequality violated: {check.lhs} > {check.rhs}")
    return check


def bishop_pet_bound(f: Element, lambda1, lambda2, K: GrowthFunction,
                     budget: int = DEFAULT_DIGIT_BUDGET) -> BoundReport:
    """K^e(1) with e = ceil(16 ||f||_inf^2 / (lambda1^2 lambda2))."""
    l1, l2 = as_rational(lambda1), as_rational(lambda2)
    if l1 <= 0 or l2 <= 0:
        raise ValidationError("lambda1 and lambda2 must be positive")
    sup = norm_sup_exact(f) if isinstance(f, Element) else as_rational(f)
    # rho = ceil(||f||_inf / (lambda1 sqrt(lambda2))), so e <= 16 rho^2
    ratio = sup * sup / (l1 * l1 * l2)
    e = ceil_fraction(16 * ratio)
    return iterate_bound(K, e, budget, "K^e(1), e = ceil(16 ||f||_inf^2 / (lambda1^2 lambda2))",
                         rho=max(1, ceil_sqrt(ratio)))


# ---------------------------------------------------------------------------
# Fluctuations
# ---------------------------------------------------------------------------

@dataclass
class FluctuationProfile:
    eps: float
    count: int
    pairs: List[Tuple[int, int]]
    horizon: int

    def to_document(self) -> Dict[str, Any]:
        return {"eps": self.eps, "count": self.count, "pairs": [list(p) for p in self.pairs],
                "horizon": self.horizon}


def count_series_fluctuations(values: np.ndarray, eps: float, weights: Optional[np.ndarray] = None) -> List[Tuple[int, int]]:
    """
    Greedy disjoint eps-fluctuations of a vector sequence (rows of values, indexed from 1).

    Repeatedly takes the pair (m, n), m < n, with the earliest right endpoint n
    such that ||x_m - x_n|| >= eps and m is not before the previous right
    endpoint. Earliest-deadline choice maximizes the number of pairs.
    """
    pairs: List[Tuple[int, int]] = []
    rows = np.asarray(values, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if weights is None:
        weights = np.ones(rows.shape[1])
    total = rows.shape[0]
    start = 0
    n = start + 1
    while n < total:
        diffs = weighted_norms(rows[start:n] - rows[n], weights)
        hits = np.nonzero(diffs >= eps)[0]
        if hits.size:
            pairs.append((start + int(hits[0]) + 1, n + 1))
            start = n
        n += 1
    return pairs


def count_fluctuations(T: Operator, f: Element, eps: float, N: int) -> FluctuationProfile:
    """eps-fluctuations of A_1 f, ..., A_N f in the weighted L2 norm."""
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    if N < 1:
        raise ValidationError(f"horizon must be >= 1, got {N}")
    cache = AveragesCache(T, f)
    cache.extend(N)
    averages = np.vstack([rows for _, rows in cache.window(1, N)])
    pairs = count_series_fluctuations(averages, float(eps), f.space.array)
    return FluctuationProfile(float(eps), len(pairs), pairs, N)


def kachurovskii_bound(sup_norm, eps, C: float = 1.0) -> float:
    """C r^4 (1 + ln r) with r = ||f||_inf / eps; C when r < 1."""
    if C <= 0:
        raise ValidationError(f"C must be positive, got {C}")
    eps = float(eps)
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    r = float(sup_norm) / eps
    if r < 1:
        return float(C)
    return float(C) * r ** 4 * (1 + math.log(r))


def kachurovskii_met_bound(f: Element, eps, K: GrowthFunction, C: float = 1.0,
                           budget: int = DEFAULT_DIGIT_BUDGET) -> BoundReport:
    """K^ceil(k)(1) with k the fluctuation bound above."""
    sup = norm_sup_exact(f)
    k = kachurovskii_bound(float(sup), eps, C)
    e = math.ceil(k)
    rho = max(1, ceil_fraction(sup / as_rational(eps)))
    report = iterate_bound(K, e, budget, "K^k(1), k = C (||f||_inf/eps)^4 (1 + ln(||f||_inf/eps))", rho=rho)
    report.extra["fluctuation_bound"] = k
    report.extra["constant_C"] = C
    report.extra["disclaimer"] = "C is unspecified in the fluctuation theorem; the value used is a caller choice"
    return report


# ---------------------------------------------------------------------------
# Windowed crossings
# ---------------------------------------------------------------------------

def windowed_crossings(T: Operator, f: Element, lambda1, K: GrowthFunction, e: int, N: int) -> Dict[str, Any]:
    """
    The window / interval partition behind the crossing-based pointwise bound.

    [-||f||_inf, ||f||_inf] is cut into intervals of width lambda1 / 2 and the
    time axis into windows [K^i(1), K^{i+1}(1)] (i < e, windows inside the
    horizon N). For each interval j, sum_i mu(atoms crossing j inside window i)
    must not exceed the Bishop bound for j (up and down separately). A crossing
    counts only for the window that contains both of its endpoints.
    """
    require_koopman(T)
    l1 = as_rational(lambda1)
    if l1 <= 0:
        raise ValidationError("lambda1 must be positive")
    sup = norm_sup_exact(f)
    width = l1 / 2
    count = max(1, ceil_fraction(2 * sup / width))
    intervals = [(-sup + j * width, -sup + (j + 1) * width) for j in range(count)]

    windows = []
    left = 1
    for _ in range(e):
        right = K(left)
        if right > N or right == left:
            break
        windows.append((left, right))
        left = right
    sums, cache = _trajectory_source(T, f, N)
    weights = f.space.weights
    exact = f.exact_coords()
    rows = []
    for j, (a, b) in enumerate(intervals):
        up_total = Fraction(0)
        down_total = Fraction(0)
        for (lo, hi) in windows:
            states = np.zeros((2, f.dim), dtype=np.int8)
            up = np.zeros(f.dim, dtype=np.int64)
            down = np.zeros(f.dim, dtype=np.int64)
            for _, below, above in _below_above(T, f, a, b, lo, hi, sums, cache):
                _crossing_counts(states, below, above, up, down)
            up_total += f.space.measure(up > 0)
            down_total += f.space.measure(down > 0)
        up_bound = sum((w * max(v - a, Fraction(0)) for w, v in zip(weights, exact)), Fraction(0)) / (b - a)
        down_bound = sum((w * max(b - v, Fraction(0)) for w, v in zip(weights, exact)), Fraction(0)) / (b - a)
        rows.append({"interval": j, "alpha": float(a), "beta": float(b),
                     "up_measure_sum": fraction_to_json(up_total), "up_bound": fraction_to_json(up_bound),
                     "down_measure_sum": fraction_to_json(down_total), "down_bound": fraction_to_json(down_bound),
                     "holds": up_total <= up_bound and down_total <= down_bound})
    return {"windows": [list(w) for w in windows], "intervals": rows,
            "holds": all(r["holds"] for r in rows), "range_bound": float(4 * sup / l1),
            "counting": "within-window"}


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

def compare_bounds(f: Element, K: GrowthFunction, eps=None, lambda1=None, lambda2=None,
                   C: float = 1.0, budget: int = DEFAULT_DIGIT_BUDGET) -> List[Dict[str, Any]]:
    """
    Iteration counts and bound sizes of the projection method against the
    crossing / fluctuation method, for the mean case (eps) and the pointwise
    case (lambda1, lambda2).
    """
    rows = []

    def add(method: str, case: str, e: int, iterated: str, report: Optional[BoundReport]):
        row = {"method": method, "case": case, "e": e, "iterated_function": iterated}
        if report is not None:
            row["budget_exceeded"] = report.budget_exceeded
            row["bound_digits"] = None if report.bound is None else report.digits
            if report.bound is not None and report.digits <= 20:
                row["bound"] = str(report.bound)
        rows.append(row)

    if eps is not None:
        params = mean_params(f, eps, "isometry")
        iso = iterate_bound(khat_isometry(K, params.rho), params.e, budget, "met isometry", params.rho)
        add("projection (isometry)", "mean", params.e, iso.iterated, iso)
        non = iterate_bound(kbar_nonexpansive(K, params.rho), params.e, budget, "met nonexpansive", params.rho)
        add("projection (nonexpansive)", "mean", params.e, non.iterated, non)
        fluct = kachurovskii_met_bound(f, eps, K, C, budget)
        add("fluctuations (Kachurovskii)", "mean", fluct.e, K.name, fluct)
    if lambda1 is not None and lambda2 is not None:
        pw = pointwise_params(f, lambda1, lambda2)
        proj = iterate_bound(pointwise_khat(K, pw.rho), pw.e, budget, "pet", pw.rho)
        add("projection", "pointwise", pw.e, proj.iterated, proj)
        bishop = bishop_pet_bound(f, lambda1, lambda2, K, budget)
        add("upcrossings (Bishop)", "pointwise", bishop.e, K.name, bishop)
    if not rows:
        raise ValidationError("compare_bounds needs eps or (lambda1, lambda2)")
    return rows
