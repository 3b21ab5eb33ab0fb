"""
Rates from the limit norm, and the block-rotation halting encoding.

Given ||f*||, a rate of convergence for (A_n f) is computable: a = ||f - f*||
is known, so the projection trace can be run until a_i is close enough to a,
and u_i then bounds every later average of g_i. Without ||f*|| no such rate
exists in general: a system of block rotations, one per machine index, stores
halting information in ||f*||_2. Both sides are built here at finite size.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Mapping, Optional, Union

import numpy as np

from src.core.errors import CapExceededError, OraclePrecisionError, ValidationError
from src.core.exact import as_rational, fraction_to_json
from src.core.hilbert_core import (AveragesCache, Block, BlockRotation, Element, MeasureSpace,
                                   Operator, _check_operator, integral_exact, norm, require_koopman)
from src.core.pointwise import WindowDeviation
from src.core.projection import DEFAULT_DELTA_MIN, compute_trace

# Configure logging
logger = logging.getLogger("ergodic_workbench.computable_rates")

DEFAULT_TRACE_CAP = 4096
DEFAULT_PROBE_HORIZON = 10_000
CERTIFICATE_SLACK = 1e-8
# blocks of a Specker system are cycles of 2^(j+1) atoms; keep the space small
MAX_SPECKER_ATOMS = 1 << 20


# ---------------------------------------------------------------------------
# Rates from ||f*||
# ---------------------------------------------------------------------------

@dataclass
class RateCertificate:
    """
    eps -> m with ||A_m f - A_n f|| <= eps for n >= m, plus its provenance.

    i_used is None when f is already a fixed point (m = 1). The max deviation
    is measured over n in [m, verified_up_to].
    """
    eps: float
    m: int
    i_used: Optional[int]
    a: float
    a_i: float
    u_norm: float
    max_deviation: float
    verified_up_to: int
    fixed_point: bool = False

    @property
    def verified(self) -> bool:
        return self.max_deviation <= self.eps + CERTIFICATE_SLACK

    def to_document(self) -> Dict[str, Any]:
        return {"eps": self.eps, "m": self.m, "i_used": self.i_used, "fixed_point": self.fixed_point,
                "provenance": {"a": self.a, "a_i": self.a_i, "u_norm": self.u_norm},
                "max_deviation": self.max_deviation, "verified_up_to": self.verified_up_to,
                "verified": self.verified}


def _limit_gap(f: Element, norm_fstar) -> float:
    norm_f = norm(f)
    value = float(norm_fstar)
    if value < 0:
        raise ValidationError(f"norm_fstar must be >= 0, got {value}")
    if value > norm_f * (1 + 1e-12) + 1e-15:
        raise ValidationError(f"norm_fstar = {value} exceeds ||f|| = {norm_f}")
    return math.sqrt(max(norm_f * norm_f - value * value, 0.0))


def _is_fixed(T: Operator, f: Element, tol: float = 1e-12) -> bool:
    size = norm(f)
    return size == 0.0 or norm(f.with_coords(f.coords - T.apply_array(f.coords))) <= tol * size


def _close_the_gap(T: Operator, f: Element, a: float, gap: float, trace_cap: int, delta_min: float):
    """Least trace index i with a - a_i < gap, as (i, trace)."""
    trace = compute_trace(T, f, trace_cap, delta_min)
    for i in range(trace.last_computed + 1):
        if a - trace.a_at(i) < gap:
            return i, trace
    final = trace.a_at(trace.last_computed)
    raise CapExceededError(
        f"trace {'saturated' if trace.saturated else 'cap reached'} with a - a_i = {a - final:.3g}, "
        f"needed < {gap:.3g}; norm_fstar may be inconsistent with the system",
        partial={"a": a, "last_a_i": final, "last_index": trace.last_computed, "saturated": trace.saturated})


def rate_from_limit_norm(T: Operator, f: Element, norm_fstar, eps,
                         trace_cap: int = DEFAULT_TRACE_CAP,
                         probe_horizon: int = DEFAULT_PROBE_HORIZON,
                         delta_min: float = DEFAULT_DELTA_MIN) -> RateCertificate:
    """
    Rate certificate for (A_n f) computed from f, T and ||f*||.

    a = sqrt(||f||^2 - ||f*||^2); the trace runs until 2 sqrt(2 (a - a_i) ||f||) < eps/2,
    and m = ceil(8 ||u_i|| / eps) makes ||A_m g_i|| + ||A_n g_i|| <= eps/2 for n >= m.
    The certificate is then checked over n in [m, min(10 m, probe_horizon)].

    Raises:
        ValidationError: eps <= 0 or norm_fstar outside [0, ||f||]
        CapExceededError: the trace cannot close the gap
    """
    _check_operator(T, f)
    eps = float(eps)
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    a = _limit_gap(f, norm_fstar)
    if _is_fixed(T, f):
        logger.info("f is a fixed point; certificate m = 1")
        return RateCertificate(eps, 1, None, a, a, 0.0, 0.0, 1, fixed_point=True)

    norm_f = norm(f)
    gap = eps * eps / (32 * norm_f)
    i, trace = _close_the_gap(T, f, a, gap, trace_cap, delta_min)
    u_norm = trace.u_norm_at(i)
    m = max(1, math.ceil(8 * u_norm / eps))

    end = max(m, min(10 * m, probe_horizon))
    deviation, _ = AveragesCache(T, f).deviations(m, end)
    certificate = RateCertificate(eps, m, i, a, trace.a_at(i), u_norm, deviation, end)
    if not certificate.verified:
        logger.warning(f"rate certificate m={m} fails its probe: deviation {deviation:.6g} > eps {eps}")
    logger.info(f"rate from ||f*||: i={i}, ||u_i||={u_norm:.6g}, m={m}, probe deviation {deviation:.6g}")
    return certificate


@dataclass
class PointwiseRateCertificate:
    lambda1: float
    lambda2: float
    n: int
    i_used: Optional[int]
    u_norm: float
    exceptional_measure: Fraction
    verified_up_to: int
    exact: bool

    @property
    def verified(self) -> bool:
        return self.exceptional_measure <= as_rational(self.lambda2)

    def to_document(self) -> Dict[str, Any]:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "n": self.n, "i_used": self.i_used,
                "u_norm": self.u_norm, "exceptional_measure": fraction_to_json(self.exceptional_measure),
                "verified_up_to": self.verified_up_to, "exact": self.exact, "verified": self.verified}


def pointwise_rate_from_limit_norm(T: Operator, f: Element, norm_fstar, lambda1, lambda2,
                                   trace_cap: int = DEFAULT_TRACE_CAP,
                                   probe_horizon: int = DEFAULT_PROBE_HORIZON,
                                   delta_min: float = DEFAULT_DELTA_MIN) -> PointwiseRateCertificate:
    """
    Pointwise counterpart for Koopman systems.

    Picks i with 2 (a - a_i) ||f|| <= (lambda1 lambda2 / 8)^2, so ||g - g_i||_2 is at
    most lambda1 lambda2 / 8, then n = max(1, ceil(2^12 ||u_i||^2 / (lambda1^2 lambda2))).
    The exceptional set over [n, min(10 n, probe_horizon)] is measured for the record.
    """
    T = require_koopman(T)
    _check_operator(T, f)
    l1, l2 = float(lambda1), float(lambda2)
    if l1 <= 0 or l2 <= 0:
        raise ValidationError("lambda1 and lambda2 must be positive")
    a = _limit_gap(f, norm_fstar)
    if _is_fixed(T, f):
        return PointwiseRateCertificate(l1, l2, 1, None, 0.0, Fraction(0), 1, True)
    target = l1 * l2 / 8
    i, trace = _close_the_gap(T, f, a, target * target / (2 * norm(f)), trace_cap, delta_min)
    u_norm = trace.u_norm_at(i)
    n = max(1, math.ceil(2 ** 12 * u_norm * u_norm / (l1 * l1 * l2)))
    end = max(n, min(10 * n, probe_horizon))
    measure, exact = WindowDeviation(T, f).measure(n, end, as_rational(lambda1))
    logger.info(f"pointwise rate from ||f*||: i={i}, n={n}, exceptional measure {float(measure):.6g}")
    return PointwiseRateCertificate(l1, l2, n, i, u_norm, measure, end, exact)


def limit_norm_ergodic(f: Element, operator: Optional[Operator] = None, check: bool = False) -> Fraction:
    """
    ||f*||_2 = |integral of f| for an ergodic system.

    Ergodicity is the caller's claim. With check=True and a Koopman operator the
    orbit graph is inspected and a warning is logged when it is not connected.
    """
    if check and operator is not None and operator.is_koopman:
        components = operator.orbit_components()
        if components > 1:
            logger.warning(f"system has {components} orbit components; |integral f| need not be ||f*||")
    return abs(integral_exact(f))


def limit_function_exact(T: Operator, f: Element) -> List[Fraction]:
    """
    f* for a finite Koopman system, atom by atom, as exact rationals.

    Every orbit ends in a cycle; f*(x) is the mean of f over the cycle that the
    orbit of x enters.
    """
    T = require_koopman(T)
    _check_operator(T, f)
    values = f.exact_coords()
    tau = T.atom_map
    cycle_mean: Dict[int, Fraction] = {}
    out: List[Fraction] = []
    for x in range(T.dim):
        y = x
        for _ in range(T.dim):
            y = int(tau[y])
        if y not in cycle_mean:
            members = [y]
            z = int(tau[y])
            while z != y:
                members.append(z)
                z = int(tau[z])
            mean = sum((values[c] for c in members), Fraction(0)) / len(members)
            for c in members:
                cycle_mean[c] = mean
        out.append(cycle_mean[y])
    return out


# ---------------------------------------------------------------------------
# Halting tables
# ---------------------------------------------------------------------------

class HaltingTable:
    """
    Finite table of machine indices and the step at which each halts.

    Indices not in the table never halt. Each index halts at most once, and
    steps start at 1.
    """

    def __init__(self, entries: Optional[Mapping[Any, Optional[int]]] = None):
        self.entries: Dict[int, int] = {}
        for key, step in (entries or {}).items():
            i = int(key)
            if i < 0:
                raise ValidationError(f"machine indices start at 0, got {i}")
            if step is None:
                continue
            step = int(step)
            if step < 1:
                raise ValidationError(f"halting steps start at 1, got {step} for machine {i}")
            self.entries[i] = step

    def halts_at(self, i: int) -> Optional[int]:
        return self.entries.get(i)

    def halted_by(self, i: int, n: int) -> bool:
        step = self.entries.get(i)
        return step is not None and step <= n

    def bits(self, N: int) -> List[int]:
        return [int(i in self.entries) for i in range(N)]

    def max_step(self, N: int) -> int:
        return max((j for i, j in self.entries.items() if i < N), default=0)

    def to_json(self) -> str:
        return json.dumps({str(i): j for i, j in sorted(self.entries.items())})

    @classmethod
    def from_json(cls, text: Union[str, Mapping[str, Any]]) -> "HaltingTable":
        try:
            doc = json.loads(text) if isinstance(text, str) else text
        except json.JSONDecodeError as e:
            raise ValidationError(f"halting table is not valid JSON: {e}") from e
        if not isinstance(doc, Mapping):
            raise ValidationError("a halting table is a JSON object {index: step}")
        return cls(doc)

    def __eq__(self, other) -> bool:
        return isinstance(other, HaltingTable) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"HaltingTable({self.entries})"


@dataclass
class SpeckerSystem:
    table: HaltingTable
    N: int
    space: MeasureSpace
    operator: BlockRotation
    f: Element
    blocks: List[Block] = field(default_factory=list)

    @property
    def tail(self) -> Block:
        return self.blocks[-1]


def build_specker_system(table: HaltingTable, N: int) -> SpeckerSystem:
    """
    Blocks 0..N-1 of weight 2^-(i+1) and a tail of weight 2^-N.

    A machine halting at step j rotates its block by 2^-j of the block length:
    2^(j+1) atoms shifted by 2. Other blocks, and the tail, have two atoms and
    do not move. f is 1 on the left half of every block.
    """
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    layout = []
    for i in range(N):
        step = table.halts_at(i)
        order = 2 ** (step + 1) if step is not None else 2
        layout.append((i, order, 2 if step is not None else 0, Fraction(1, 2 ** (i + 1)), step))
    layout.append((N, 2, 0, Fraction(1, 2 ** N), None))
    total = sum(order for _, order, _, _, _ in layout)
    if total > MAX_SPECKER_ATOMS:
        raise ValidationError(f"Specker system would need {total} atoms (limit {MAX_SPECKER_ATOMS}); "
                              f"largest halting step is {table.max_step(N)}")

    weights: List[Fraction] = []
    coords: List[float] = []
    blocks: List[Block] = []
    for index, order, shift, weight, step in layout:
        blocks.append(Block(index=index, start=len(weights), order=order, shift=shift,
                            weight=weight, halts_at=step))
        weights.extend([weight / order] * order)
        coords.extend([1.0] * (order // 2) + [0.0] * (order // 2))
    space = MeasureSpace(weights)
    operator = BlockRotation(blocks, space)
    f = Element(np.array(coords), space)
    logger.info(f"Specker system: N={N}, {len(weights)} atoms, halting bits {table.bits(N)}")
    return SpeckerSystem(table, N, space, operator, f, blocks)


def specker_norm(system: SpeckerSystem) -> Fraction:
    """||f*||_2^2 by the block formula: 1/4 of halting mass, 1/2 of the rest (tail included)."""
    total = Fraction(0)
    for block in system.blocks:
        total += block.weight * (Fraction(1, 4) if block.halts_at is not None else Fraction(1, 2))
    return total


def specker_norm_direct(system: SpeckerSystem) -> Fraction:
    """||f*||_2^2 from the per-orbit averages of the finite system."""
    limit = limit_function_exact(system.operator, system.f)
    return sum((w * v * v for w, v in zip(system.space.weights, limit)), Fraction(0))


def r_value(table: HaltingTable, N: int) -> Fraction:
    """r = sum over halting i < N of 2^-(i+3), which equals 1/2 - ||f*||_2^2."""
    return r_stage(table, N, None)


def r_stage(table: HaltingTable, N: int, n: Optional[int]) -> Fraction:
    """r_n: the same sum over machines that halted by step n (all of them when n is None)."""
    return sum((Fraction(1, 2 ** (i + 3)) for i in range(N)
                if (table.halts_at(i) is not None if n is None else table.halted_by(i, n))),
               Fraction(0))


# ---------------------------------------------------------------------------
# Oracles and decoding
# ---------------------------------------------------------------------------

RealOracle = Callable[[int], Fraction]


def exact_oracle(r) -> RealOracle:
    """Oracle answering every precision request with r itself."""
    value = as_rational(r)
    return lambda bits: value


def dyadic_oracle(r, max_bits: int = 64) -> RealOracle:
    """Oracle returning floor(r 2^bits) / 2^bits; refuses requests beyond max_bits."""
    value = as_rational(r)

    def oracle(bits: int) -> Fraction:
        if bits > max_bits:
            raise OraclePrecisionError(f"oracle precision is {max_bits} bits, {bits} requested")
        scale = 1 << bits
        return Fraction(math.floor(value * scale), scale)

    return oracle


def recover_halting_bits(r_oracle: RealOracle, table: HaltingTable, N: int,
                         max_stage: Optional[int] = None) -> List[int]:
    """
    Halting bits of machines 0..N-1 from approximations of r.

    Searches for a stage n with r - r_n < 2^-(N+2), using an approximation q of r
    within 2^-(N+4); at that stage no machine i < N can still halt, because a
    late halt would add at least 2^-(i+3) to r. The bits are then read off the
    stage-n truncation.
    """
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    bits_needed = N + 4
    q = r_oracle(bits_needed)
    delta = Fraction(1, 2 ** bits_needed)
    threshold = Fraction(1, 2 ** (N + 2)) - delta
    last = max_stage if max_stage is not None else table.max_step(N) + 1
    for n in range(0, last + 1):
        if q - r_stage(table, N, n) < threshold:
            logger.debug(f"halting bits settled at stage {n}")
            return [int(table.halted_by(i, n)) for i in range(N)]
    raise CapExceededError(f"no stage up to {last} matches the oracle value {q}",
                           partial={"oracle_value": fraction_to_json(q), "stages_checked": last + 1})
