"""
Mean ergodic bounds.

Quantitative bounds for local stability of ergodic averages in norm: the
d-functions, the growth functions K-hat (isometries) and K-bar (nonexpansive
maps), the iterated bound K^e(1) with e = 2^9 rho^2, the least-witness search,
and the i_k / n_k schedule driven by the projection trace.

Every bound is evaluated in exact rational / big-integer arithmetic under a
digit budget. Floats only appear in the witness searches.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.core import growth
from src.core.errors import BudgetExceededError, ValidationError
from src.core.exact import (as_rational, big_int_summary, ceil_fraction, ceil_sqrt,
                            decimal_digits, log2_int)
from src.core.growth import GrowthFunction
from src.core.hilbert_core import (AveragesCache, Element, Operator, _check_operator,
                                   norm, norm_sq_exact, weighted_norms)
from src.core.projection import ProjectionTrace, compute_trace

# Configure logging
logger = logging.getLogger("ergodic_workbench.mean_bounds")

DEFAULT_DIGIT_BUDGET = 1_000_000
DEFAULT_WINDOW_CAP = 100_000_000
MODES = ("isometry", "nonexpansive")


def _positive(name: str, value) -> Fraction:
    q = as_rational(value)
    if q <= 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return q


def _norm_sq(f) -> Fraction:
    """Accept an Element or a precomputed ||f||^2."""
    if isinstance(f, Element):
        n2 = norm_sq_exact(f)
    else:
        n2 = as_rational(f)
    if n2 <= 0:
        raise ValidationError("the bound needs f != 0")
    return n2


@dataclass(frozen=True)
class MeanBoundParams:
    eps: Fraction
    rho: int
    e: int
    mode: str


def mean_params(f, eps, mode: str = "isometry") -> MeanBoundParams:
    """rho = ceil(||f|| / eps) and e = 2^9 rho^2, exactly. f may be an Element or ||f||^2."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode}")
    eps = _positive("eps", eps)
    n2 = _norm_sq(f)
    rho = max(1, ceil_sqrt(n2 / (eps * eps)))
    return MeanBoundParams(eps=eps, rho=rho, e=2 ** 9 * rho * rho, mode=mode)


def norm_sq_from_norm(norm_f) -> Fraction:
    """||f||^2 from a given ||f|| (CLI --norm-f)."""
    q = _positive("norm_f", norm_f)
    return q * q


@dataclass(frozen=True)
class DFunctions:
    """
    The window-length functions of the mean ergodic bound proof.

        d       = ceil(32 ||f||^4 / eps^4)
        d1(n)   = ceil(2 n^4 ||f||^4 / eps^4)
        d2(m)   = ceil(32 m^4 ||f||^4 / eps^4)
        d3(m)   = ceil(2^9 m^4 ||f||^4 / eps^4)
        e_hat   = ceil(2^7 ||f||^2 / eps^2)
        dhat(m) = d3(m) * e_hat
    """
    norm_sq: Fraction
    eps: Fraction

    @property
    def _ratio(self) -> Fraction:
        return self.norm_sq ** 2 / self.eps ** 4

    @property
    def d(self) -> int:
        return ceil_fraction(32 * self._ratio)

    def d1(self, n: int) -> int:
        return ceil_fraction(2 * n ** 4 * self._ratio)

    def d2(self, m: int) -> int:
        return ceil_fraction(32 * m ** 4 * self._ratio)

    def d3(self, m: int) -> int:
        return ceil_fraction(2 ** 9 * m ** 4 * self._ratio)

    @property
    def e_hat(self) -> int:
        return ceil_fraction(2 ** 7 * self.norm_sq / self.eps ** 2)

    def dhat(self, m: int) -> int:
        return self.d3(m) * self.e_hat

    def summary(self, m: int = 1, n: int = 1) -> Dict[str, int]:
        return {"d": self.d, "d_prime": self.d1(n), "d_double_prime": self.d2(m),
                "d_triple_prime": self.d3(m), "e_hat": self.e_hat, "d_hat": self.dhat(m)}


def d_fns(f, eps) -> DFunctions:
    return DFunctions(norm_sq=_norm_sq(f), eps=_positive("eps", eps))


def khat_isometry(K: GrowthFunction, rho: int) -> GrowthFunction:
    """i -> i + 2^13 rho^4 K((i+1) K(1) rho^2)."""
    if rho < 1:
        raise ValidationError(f"rho must be >= 1, got {rho}")
    k1 = K(1)
    scale = 2 ** 13 * rho ** 4

    def step(i: int, budget: Optional[int]) -> int:
        return i + scale * K.evaluate((i + 1) * k1 * rho * rho, budget)

    return GrowthFunction("custom", {}, name=f"Khat[{K.name}, rho={rho}]", fn=step)


def kbar_nonexpansive(K: GrowthFunction, rho: int) -> GrowthFunction:
    """i -> i + 2^13 rho^4 K((i+1) K(2 i rho) rho^2)."""
    if rho < 1:
        raise ValidationError(f"rho must be >= 1, got {rho}")
    scale = 2 ** 13 * rho ** 4

    def step(i: int, budget: Optional[int]) -> int:
        inner = K.evaluate(2 * i * rho, budget)
        return i + scale * K.evaluate((i + 1) * inner * rho * rho, budget)

    return GrowthFunction("custom", {}, name=f"Kbar[{K.name}, rho={rho}]", fn=step)


@dataclass
class BoundReport:
    """Result of iterating a growth function; bound is None when the budget ran out."""
    formula: str
    rho: int
    e: int
    iterated: str
    bound: Optional[int] = None
    budget_exceeded: bool = False
    iterations_completed: int = 0
    digits: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_document(self, full: bool = False) -> Dict[str, Any]:
        doc = {
            "formula": self.formula,
            "rho": self.rho,
            "e": self.e,
            "iterated": self.iterated,
            "budget_exceeded": self.budget_exceeded,
            "iterations_completed": self.iterations_completed,
        }
        if self.bound is not None:
            doc["bound"] = big_int_summary(self.bound, full)
        else:
            doc["bound_digits_reached"] = self.digits
        doc.update(self.extra)
        return doc


def iterate_bound(K: GrowthFunction, e: int, budget: int, formula: str, rho: int) -> BoundReport:
    """K^e(1) under the budget, as a report."""
    report = BoundReport(formula=formula, rho=rho, e=e, iterated=K.name)
    try:
        report.bound = growth.iterate(K, e, start=1, budget=budget)
        report.iterations_completed = e
        report.digits = decimal_digits(report.bound)
    except BudgetExceededError as exc:
        report.budget_exceeded = True
        report.iterations_completed = exc.iterations_completed
        report.digits = exc.partial.get("last_value_digits", exc.digits)
        logger.warning(f"{formula}: digit budget {budget} exceeded after "
                       f"{exc.iterations_completed} of {e} iterations")
    return report


def met_bound(f, eps, K: GrowthFunction, mode: str = "nonexpansive",
              budget: int = DEFAULT_DIGIT_BUDGET) -> BoundReport:
    """
    Upper bound on the least eps-stable n: Khat^e(1) for isometries, Kbar^e(1)
    for nonexpansive maps, with e = 2^9 rho^2.
    """
    params = mean_params(f, eps, mode)
    if mode == "isometry":
        fn = khat_isometry(K, params.rho)
        formula = "Khat^e(1), Khat(i) = i + 2^13 rho^4 K((i+1) K(1) rho^2), e = 2^9 rho^2"
    else:
        fn = kbar_nonexpansive(K, params.rho)
        formula = "Kbar^e(1), Kbar(i) = i + 2^13 rho^4 K((i+1) K(2 i rho) rho^2), e = 2^9 rho^2"
    report = iterate_bound(fn, params.e, budget, formula, params.rho)
    report.extra["mode"] = mode
    logger.info(f"met_bound mode={mode} rho={params.rho} e={params.e} "
                f"{'budget exceeded' if report.budget_exceeded else f'{report.digits} digits'}")
    return report


# ---------------------------------------------------------------------------
# Witness search
# ---------------------------------------------------------------------------

@dataclass
class StabilityWitness:
    """
    n with its window end K(n) and the largest ||A_m f - A_n f|| over the
    window. When found is False, n is the best candidate seen.
    """
    n: int
    interval_end: int
    max_deviation: float
    argmax_m: int
    eps: float
    found: bool = True
    searched_up_to: int = 0
    window_capped: bool = False
    theoretical_bound: Optional[int] = None

    @property
    def valid(self) -> bool:
        return self.max_deviation <= self.eps

    def to_document(self) -> Dict[str, Any]:
        doc = asdict(self)
        if self.theoretical_bound is not None:
            doc["theoretical_bound"] = big_int_summary(self.theoretical_bound)
        return doc


def find_stable_n(T: Operator, f: Element, eps: float, K: GrowthFunction, horizon: int,
                  cache: Optional[AveragesCache] = None,
                  window_cap: int = DEFAULT_WINDOW_CAP,
                  cache_limit: int = 262_144) -> StabilityWitness:
    """
    Least n <= horizon with max_{m in [n, K(n)]} ||A_m f - A_n f|| <= eps.

    When no such n exists up to the horizon, returns found=False with the n of
    smallest max deviation. A window longer than window_cap stops the search.
    """
    _check_operator(T, f)
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    eps = float(eps)
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    cache = cache or AveragesCache(T, f, cache_limit)
    best: Optional[StabilityWitness] = None
    for n in range(1, horizon + 1):
        end = K(n)
        if end - n > window_cap:
            logger.warning(f"window [{n}, {end}] exceeds the cap {window_cap}; search stopped")
            result = best or StabilityWitness(n, end, math.inf, n, eps, found=False)
            result.found = False
            result.window_capped = True
            result.searched_up_to = n - 1
            return result
        deviation, argmax = cache.deviations(n, end)
        if deviation <= eps:
            logger.info(f"stable n = {n} (window end {end}, max deviation {deviation:.6g})")
            return StabilityWitness(n, end, deviation, argmax, eps, found=True, searched_up_to=n)
        if best is None or deviation < best.max_deviation:
            best = StabilityWitness(n, end, deviation, argmax, eps, found=False)
        if n % 1000 == 0:
            logger.debug(f"stability search at n = {n}, best deviation {best.max_deviation:.6g}")
    best.searched_up_to = horizon
    logger.info(f"no eps-stable n up to {horizon}; best n = {best.n} with deviation {best.max_deviation:.6g}")
    return best


def verify_witness(T: Operator, f: Element, eps: float, K: GrowthFunction, n: int) -> StabilityWitness:
    """Recompute the window deviation at n from a fresh cache."""
    end = K(n)
    cache = AveragesCache(T, f)
    deviation, argmax = cache.deviations(n, end)
    return StabilityWitness(n, end, deviation, argmax, float(eps), found=deviation <= float(eps), searched_up_to=n)


def local_stability_bound_check(witness: StabilityWitness, report: BoundReport) -> Optional[bool]:
    """witness.n <= bound, or None when the bound was not computable."""
    if report.bound is None or not witness.found:
        return None
    return witness.n <= report.bound


# ---------------------------------------------------------------------------
# i_k / n_k schedule
# ---------------------------------------------------------------------------

@dataclass
class ScheduleStep:
    k: int
    i_k: int
    n_k: int
    u_norm: float
    witness: bool
    max_deviation: float


@dataclass
class ScheduleReport:
    steps: List[ScheduleStep]
    witness_k: Optional[int]
    witness_n: Optional[int]
    capped: bool
    e: int

    def to_document(self) -> Dict[str, Any]:
        return {
            "steps": [asdict(s) for s in self.steps],
            "witness_k": self.witness_k,
            "witness_n": self.witness_n,
            "capped": self.capped,
            "e": self.e,
        }


def iterate_schedule(T: Operator, f: Element, eps, M: GrowthFunction, cap: int,
                            trace: Optional[ProjectionTrace] = None,
                            trace_cap: int = 4096, window_cap: int = DEFAULT_WINDOW_CAP) -> ScheduleReport:
    """
    i_0 = 1, n_k = max(ceil(2 ||u_{i_k}|| / eps), 1),
    i_{k+1} = i_k + ceil(2^13 M(n_k)^4 ||f||^4 / eps^4).

    Stops at the first n_k that is an eps-stable witness for M, after e - 1
    steps, or when i_k passes the cap (capped = True).
    """
    eps_q = _positive("eps", eps)
    n2 = norm_sq_exact(f)
    params = mean_params(n2, eps_q)
    trace = trace or compute_trace(T, f, min(cap, trace_cap))
    cache = AveragesCache(T, f)
    eps_f = float(eps_q)
    ratio = n2 * n2 / eps_q ** 4

    steps: List[ScheduleStep] = []
    i_k = 1
    for k in range(params.e):
        if i_k > cap or not trace.covers(i_k):
            logger.warning(f"schedule stopped: i_{k} = {i_k} beyond the cap or the computed trace")
            return ScheduleReport(steps, None, None, True, params.e)
        u_norm = trace.u_norm_at(i_k)
        n_k = max(ceil_fraction(2 * as_rational(u_norm) / eps_q), 1)
        end = M(n_k)
        if end - n_k > window_cap:
            return ScheduleReport(steps, None, None, True, params.e)
        deviation, _ = cache.deviations(n_k, end)
        ok = deviation <= eps_f
        steps.append(ScheduleStep(k, i_k, n_k, u_norm, ok, deviation))
        if ok:
            logger.info(f"schedule witness at k = {k}: n_k = {n_k}")
            return ScheduleReport(steps, k, n_k, False, params.e)
        i_k = i_k + ceil_fraction(2 ** 13 * M(n_k) ** 4 * ratio)
    return ScheduleReport(steps, None, None, False, params.e)


# ---------------------------------------------------------------------------
# Asymptotic regimes
# ---------------------------------------------------------------------------

DEFAULT_REGIMES = ("n+1", "n+4", "n+16", "2n", "3n+1", "n^2", "2^n")


def asymptotic_table(regimes: Sequence = DEFAULT_REGIMES, rho_range: Sequence[int] = (1, 2, 3),
                     mode: str = "isometry", budget: int = DEFAULT_DIGIT_BUDGET) -> List[Dict[str, Any]]:
    """
    log2 (and log2 log2) of the mean bound for growth families across rho.

    Rows whose bound exceeds the digit budget are marked, with the number of
    iterations that fit.
    """
    rows = []
    for regime in regimes:
        K = growth.parse(regime)
        for rho in rho_range:
            if rho < 1:
                raise ValidationError(f"rho must be >= 1, got {rho}")
            e = 2 ** 9 * rho * rho
            fn = khat_isometry(K, rho) if mode == "isometry" else kbar_nonexpansive(K, rho)
            report = iterate_bound(fn, e, budget, f"{mode} bound", rho)
            row = {"K": K.name, "rho": rho, "e": e, "budget_exceeded": report.budget_exceeded,
                   "iterations_completed": report.iterations_completed}
            if report.bound is not None:
                log2 = log2_int(report.bound)
                row["log2_bound"] = round(log2, 6)
                row["log2_log2_bound"] = round(math.log2(log2), 6) if log2 > 1 else 0.0
                row["digits"] = report.digits
            rows.append(row)
    return rows


def linear_in_c(rows: List[Dict[str, Any]]) -> bool:
    """For affine n+c rows at a fixed rho: log2 bound at 2c is at most twice that at c."""
    by_rho: Dict[int, Dict[int, float]] = {}
    for row in rows:
        if "log2_bound" not in row or not row["K"].startswith("n+"):
            continue
        c = int(row["K"][2:])
        by_rho.setdefault(row["rho"], {})[c] = row["log2_bound"]
    for values in by_rho.values():
        for c, v in values.items():
            if 2 * c in values and values[2 * c] > 2 * v:
                return False
    return True


# ---------------------------------------------------------------------------
# Lemma-level diagnostics
# ---------------------------------------------------------------------------

def fact3gen_holds(T: Operator, f: Element, eps: float, k: int, n: int, m: int) -> Optional[bool]:
    """
    For n >= 2k||f||/eps and m >= n: if ||T^k f - T^{k+1} f|| <= eps/(2m) then
    ||A_m f - A_n f|| <= eps. Returns None when the premise fails.
    """
    f_norm = norm(f)
    if n < 2 * k * f_norm / eps or m < n:
        return None
    x = f.coords
    for _ in range(k):
        x = T.apply_array(x)
    diff = x - T.apply_array(x)
    w = f.space.array
    if float(np.sqrt(np.dot(w * diff, diff))) > eps / (2 * m):
        return None
    cache = AveragesCache(T, f)
    gap = weighted_norms((cache.average(m) - cache.average(n))[None, :], w)[0]
    return bool(gap <= eps + 1e-8)


def u_bound_isometry(trace: ProjectionTrace, T: Operator, f: Element, m: int, eps: float) -> Dict[str, Any]:
    """
    Either ||A_m f - f|| <= eps, or ||u_i|| <= (i+1) m ||f||^2 / (2 eps) for
    every computed i.
    """
    cache = AveragesCache(T, f)
    w = f.space.array
    close = float(weighted_norms((cache.average(m) - f.coords)[None, :], w)[0])
    if close <= eps + 1e-8:
        return {"branch": "average_close", "holds": True, "distance": close}
    f2 = norm(f) ** 2
    worst = max((trace.u_norm_at(i) - (i + 1) * m * f2 / (2 * eps)) for i in range(trace.last_computed + 1))
    return {"branch": "u_bounded", "holds": bool(worst <= 1e-8), "worst_excess": worst}


def u_bound_nonexpansive(trace: ProjectionTrace, T: Operator, f: Element, M: GrowthFunction,
                         eps: float) -> List[Dict[str, Any]]:
    """
    Per computed i: either some n <= 2 i ceil(||f||/eps) has
    ||A_M(n) f - A_n f|| <= eps, or
    ||u_i|| <= (||f||^2 / (2 eps)) sum_{j<=i} M(2 j ceil(||f||/eps)).
    """
    f_norm = norm(f)
    step = math.ceil(f_norm / eps)
    cache = AveragesCache(T, f)
    w = f.space.array
    first_stable = None
    scanned = 0
    running = 0
    rows = []
    for i in range(trace.last_computed + 1):
        running += M(2 * i * step)
        limit = 2 * i * step
        if first_stable is None:
            for n in range(scanned + 1, limit + 1):
                gap = weighted_norms((cache.average(M(n)) - cache.average(n))[None, :], w)[0]
                if gap <= eps:
                    first_stable = n
                    break
            scanned = max(scanned, limit)
        if first_stable is not None and first_stable <= limit:
            rows.append({"i": i, "branch": "stable_n", "n": first_stable, "holds": True})
            continue
        excess = trace.u_norm_at(i) - f_norm ** 2 / (2 * eps) * running
        rows.append({"i": i, "branch": "u_bounded", "holds": bool(excess <= 1e-8), "excess": excess})
    return rows
