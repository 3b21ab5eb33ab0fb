"""
Projection traces.

For f and T, v_k = T^k f - T^{k+1} f. The trace records, for each index i,
the orthogonal projection g_i of f onto span{v_0, ..., v_i}, an element u_i
with g_i = u_i - T u_i, and a_i = ||g_i||.

The projection is built by modified Gram-Schmidt with one reorthogonalization
pass in the weighted inner product. Each orthonormal direction q_j is carried
together with a preimage p_j (a combination of iterates T^k f) such that
q_j = p_j - T p_j; then u_i = sum_j <f, q_j> p_j.

Once the cyclic space is exhausted (the rank reaches the dimension, or `dim`
directions in a row are dependent) the trace is saturated: later indices add
nothing, and accessors beyond the last computed index return the final values.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Set

import numpy as np

from src.core.errors import ValidationError
from src.core.hilbert_core import Element, Operator, _check_operator, iterates

# Configure logging
logger = logging.getLogger("ergodic_workbench.projection")

DEFAULT_DELTA_MIN = 1e-10


def difference_vector(T: Operator, f: Element, k: int) -> Element:
    """v_k = T^k f - T^{k+1} f."""
    if k < 0:
        raise ValidationError(f"difference vectors are indexed from 0, got {k}")
    rows = iterates(T, f, k + 2)
    return f.with_coords(rows[k] - rows[k + 1])


@dataclass
class ProjectionTrace:
    """
    g_i, u_i, a_i for i = 0..max_index.

    Arrays are stored for computed indices only (up to last_computed); a
    saturated trace answers every later index with its final values.
    """
    element: Element
    max_index: int
    delta_min: float
    g: List[np.ndarray] = field(default_factory=list)
    u: List[np.ndarray] = field(default_factory=list)
    a: List[float] = field(default_factory=list)
    u_norms: List[float] = field(default_factory=list)
    skipped: Set[int] = field(default_factory=set)
    saturated_at: Optional[int] = None
    # coefficients of each orthonormal direction in terms of v_0..v_k
    basis_coefficients: List[np.ndarray] = field(default_factory=list, repr=False)
    basis_index: List[int] = field(default_factory=list, repr=False)
    projections: List[float] = field(default_factory=list, repr=False)

    @property
    def last_computed(self) -> int:
        return len(self.a) - 1

    @property
    def saturated(self) -> bool:
        return self.saturated_at is not None

    def _clamp(self, i: int) -> int:
        if i < 0:
            raise ValidationError(f"trace indices start at 0, got {i}")
        if i > self.last_computed and not self.saturated and i <= self.max_index:
            raise ValidationError(f"index {i} beyond the computed trace ({self.last_computed})")
        if i > self.max_index and not self.saturated:
            raise ValidationError(f"index {i} beyond the trace cap {self.max_index}")
        return min(i, self.last_computed)

    def covers(self, i: int) -> bool:
        return self.saturated or i <= self.last_computed

    def a_at(self, i: int) -> float:
        return self.a[self._clamp(i)]

    def g_at(self, i: int) -> Element:
        return self.element.with_coords(self.g[self._clamp(i)])

    def u_at(self, i: int) -> Element:
        return self.element.with_coords(self.u[self._clamp(i)])

    def u_norm_at(self, i: int) -> float:
        return self.u_norms[self._clamp(i)]

    def is_skipped(self, i: int) -> bool:
        return i in self.skipped or (self.saturated and i > self.last_computed)

    def coefficients(self, i: int) -> np.ndarray:
        """c_0..c_i with g_i = sum_k c_k v_k."""
        j = self._clamp(i)
        out = np.zeros(j + 1)
        for coeffs, index, proj in zip(self.basis_coefficients, self.basis_index, self.projections):
            if index > j:
                break
            out[:coeffs.size] += proj * coeffs
        return out

    def rank(self, i: int) -> int:
        j = self._clamp(i)
        return sum(1 for index in self.basis_index if index <= j)


def compute_trace(T: Operator, f: Element, imax: int, delta_min: float = DEFAULT_DELTA_MIN) -> ProjectionTrace:
    """
    Build the projection trace of f up to index imax.

    Raises:
        ValidationError: f = 0, imax < 0 or delta_min <= 0
    """
    _check_operator(T, f)
    if imax < 0:
        raise ValidationError(f"imax must be >= 0, got {imax}")
    if delta_min <= 0:
        raise ValidationError(f"delta_min must be positive, got {delta_min}")
    w = f.space.array
    f_norm = float(np.sqrt(np.dot(w * f.coords, f.coords)))
    if f_norm == 0.0:
        raise ValidationError("projection traces need f != 0")

    trace = ProjectionTrace(element=f, max_index=imax, delta_min=delta_min)
    dim = f.dim
    threshold = delta_min * f_norm

    q_basis: List[np.ndarray] = []
    p_basis: List[np.ndarray] = []
    g = np.zeros(dim)
    u = np.zeros(dim)
    current = np.array(f.coords)
    following = T.apply_array(current)
    run_of_skips = 0

    for k in range(imax + 1):
        v = current - following
        p = current.copy()
        coeffs = np.zeros(k + 1)
        coeffs[k] = 1.0
        for _ in range(2):
            for j, (q, pj) in enumerate(zip(q_basis, p_basis)):
                h = float(np.dot(w * q, v))
                v = v - h * q
                p = p - h * pj
                c = trace.basis_coefficients[j]
                coeffs[:c.size] -= h * c
        size = float(np.sqrt(max(np.dot(w * v, v), 0.0)))

        if size <= threshold:
            trace.skipped.add(k)
            run_of_skips += 1
        else:
            run_of_skips = 0
            q = v / size
            pj = p / size
            proj = float(np.dot(w * q, f.coords))
            q_basis.append(q)
            p_basis.append(pj)
            trace.basis_coefficients.append(coeffs / size)
            trace.basis_index.append(k)
            trace.projections.append(proj)
            g = g + proj * q
            u = u + proj * pj

        trace.g.append(g)
        trace.u.append(u)
        trace.a.append(float(np.sqrt(max(np.dot(w * g, g), 0.0))))
        trace.u_norms.append(float(np.sqrt(max(np.dot(w * u, u), 0.0))))

        if len(q_basis) >= dim or run_of_skips >= dim:
            trace.saturated_at = k
            logger.debug(f"trace saturated at index {k} with rank {len(q_basis)}")
            break
        current, following = following, T.apply_array(following)

    logger.info(f"Projection trace: {len(trace.a)} indices computed, rank {len(q_basis)}, "
                f"{len(trace.skipped)} skipped, final a = {trace.a[-1]:.6g}")
    return trace


def projection_oracle(T: Operator, f: Element, i: int, ridge: float = 1e-12):
    """
    Projection of f onto span{v_0..v_i} from the Gram normal equations.

    Solves (G + ridge*||f||^2 I) c = b with G_kl = <v_k, v_l>, b_k = <f, v_k>.

    Returns:
        (projection, singular): singular is True when the Gram matrix is
        numerically singular; the ridge solution is still returned.
    """
    _check_operator(T, f)
    if i < 0:
        raise ValidationError(f"i must be >= 0, got {i}")
    if i > 200:
        raise ValidationError(f"projection_oracle is a dense solve; i must be <= 200, got {i}")
    w = f.space.array
    rows = iterates(T, f, i + 2)
    V = rows[:-1] - rows[1:]
    gram = (V * w) @ V.T
    rhs = (V * w) @ f.coords
    scale = max(float(np.dot(w * f.coords, f.coords)), 1e-300)
    eigenvalues = np.linalg.eigvalsh(gram)
    top = float(eigenvalues[-1]) if eigenvalues.size else 0.0
    singular = top == 0.0 or float(eigenvalues[0]) <= 1e-12 * max(top, scale)
    if singular:
        logger.warning(f"Gram matrix of v_0..v_{i} is numerically singular")
    coeffs = np.linalg.solve(gram + ridge * scale * np.eye(i + 1), rhs)
    return f.with_coords(coeffs @ V), singular


def trace_to_csv(trace: ProjectionTrace, path: str, upto: Optional[int] = None) -> int:
    """Write columns i, a_i, ||u_i||, skipped. Returns the number of rows."""
    last = trace.last_computed if upto is None else upto
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["i", "a_i", "u_norm", "skipped"])
        for i in range(last + 1):
            writer.writerow([i, repr(trace.a_at(i)), repr(trace.u_norm_at(i)), int(trace.is_skipped(i))])
    return last + 1


def trace_rows(trace: ProjectionTrace, upto: Optional[int] = None) -> List[dict]:
    last = trace.last_computed if upto is None else upto
    return [{"i": i, "a_i": trace.a_at(i), "u_norm": trace.u_norm_at(i), "skipped": trace.is_skipped(i)}
            for i in range(last + 1)]
