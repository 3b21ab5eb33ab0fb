"""
Hilbert Core

Finite-dimensional weighted inner-product spaces, the operators acting on them
and ergodic averaging.

A MeasureSpace is a finite set of atoms with positive weights; an Element is a
real function on the atoms. The inner product is <f, g> = sum_i w_i f_i g_i, so
plain vector spaces are the uniform-weight case. Operators are dense matrices
(validated nonexpansive in the weighted norm), Koopman maps Tf = f o tau for a
weight-preserving atom map tau, or block rotations (Koopman maps that remember
their block structure).
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import (DimensionMismatchError, NotIsometryError, NotKoopmanError,
                             NotNonexpansiveError, ValidationError)
from src.core.exact import as_rational

# Configure logging
logger = logging.getLogger("ergodic_workbench.hilbert_core")

NORM_TOLERANCE = 1e-9
WEIGHT_TOLERANCE = 1e-12


class MeasureSpace:
    """
    Finite measure space of weighted atoms.

    Weights are stored exactly (Fractions) and as a float array for numerics.
    When every weight is rational the total must be exactly 1.
    """

    def __init__(self, weights: Sequence):
        if len(weights) == 0:
            raise ValidationError("a measure space needs at least one atom")
        exact = [as_rational(w) for w in weights]
        if any(w <= 0 for w in exact):
            raise ValidationError("all atom weights must be positive")
        total = sum(exact, Fraction(0))
        self.exact = all(not isinstance(w, float) for w in weights)
        if self.exact and total != 1:
            raise ValidationError(f"atom weights sum to {total}, not 1")
        if not self.exact and abs(float(total) - 1.0) > WEIGHT_TOLERANCE:
            raise ValidationError(f"atom weights sum to {float(total)}, not 1 within {WEIGHT_TOLERANCE}")
        self.weights: Tuple[Fraction, ...] = tuple(exact)
        self.array = np.array([float(w) for w in exact], dtype=float)
        self.array.setflags(write=False)

    @classmethod
    def uniform(cls, atom_count: int) -> "MeasureSpace":
        if atom_count < 1:
            raise ValidationError(f"atom_count must be positive, got {atom_count}")
        return cls([Fraction(1, atom_count)] * atom_count)

    @property
    def atom_count(self) -> int:
        return len(self.weights)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.weights)) == 1

    def measure(self, mask: Sequence[bool]) -> Fraction:
        """Exact measure of the atoms selected by a boolean mask."""
        return sum((w for w, keep in zip(self.weights, mask) if keep), Fraction(0))

    def __eq__(self, other) -> bool:
        return isinstance(other, MeasureSpace) and self.weights == other.weights

    def __hash__(self) -> int:
        return hash(self.weights)

    def __repr__(self) -> str:
        return f"MeasureSpace(atoms={self.atom_count})"


@dataclass(frozen=True, eq=False)
class Element:
    """A real function on the atoms of a MeasureSpace."""
    coords: np.ndarray
    space: MeasureSpace

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 1 or coords.shape[0] != self.space.atom_count:
            raise DimensionMismatchError(
                f"element has {coords.size} coordinates, space has {self.space.atom_count} atoms")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("element coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of(cls, values: Sequence[float], space: Optional[MeasureSpace] = None) -> "Element":
        space = space or MeasureSpace.uniform(len(values))
        return cls(np.asarray(values, dtype=float), space)

    @property
    def dim(self) -> int:
        return self.space.atom_count

    def with_coords(self, coords: np.ndarray) -> "Element":
        return Element(coords, self.space)

    def __add__(self, other: "Element") -> "Element":
        _check_same_space(self, other)
        return self.with_coords(self.coords + other.coords)

    def __sub__(self, other: "Element") -> "Element":
        _check_same_space(self, other)
        return self.with_coords(self.coords - other.coords)

    def __mul__(self, scalar: float) -> "Element":
        return self.with_coords(self.coords * float(scalar))

    __rmul__ = __mul__

    def exact_coords(self) -> List[Fraction]:
        return [as_rational(float(x)) for x in self.coords]


def _check_same_space(f: Element, g: Element) -> None:
    if f.space.atom_count != g.space.atom_count:
        raise DimensionMismatchError(f"elements on {f.dim} and {g.dim} atoms")
    if f.space is not g.space and f.space != g.space:
        raise DimensionMismatchError("elements live on spaces with different weights")


def inner(f: Element, g: Element) -> float:
    """Weighted inner product <f, g>."""
    _check_same_space(f, g)
    return float(np.dot(f.space.array * f.coords, g.coords))


def weighted_norms(rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """L2 norms of each row of a (k, dim) array."""
    return np.sqrt(np.maximum((rows * rows) @ weights, 0.0))


def norm(f: Element) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def norm_l1(f: Element) -> float:
    return float(np.dot(f.space.array, np.abs(f.coords)))


def norm_sup(f: Element) -> float:
    return float(np.max(np.abs(f.coords)))


def integral(f: Element) -> float:
    return float(np.dot(f.space.array, f.coords))


def norm_sq_exact(f: Element) -> Fraction:
    """||f||_2^2 as an exact rational."""
    return sum((w * x * x for w, x in zip(f.space.weights, f.exact_coords())), Fraction(0))


def norm_l1_exact(f: Element) -> Fraction:
    return sum((w * abs(x) for w, x in zip(f.space.weights, f.exact_coords())), Fraction(0))


def norm_sup_exact(f: Element) -> Fraction:
    return max(abs(x) for x in f.exact_coords())


def integral_exact(f: Element) -> Fraction:
    return sum((w * x for w, x in zip(f.space.weights, f.exact_coords())), Fraction(0))


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

class Operator:
    """Base class for nonexpansive linear operators on a MeasureSpace."""

    kind = "operator"

    def __init__(self, space: MeasureSpace, claimed_class: str = "nonexpansive"):
        if claimed_class not in ("nonexpansive", "isometry"):
            raise ValidationError(f"claimed_class must be nonexpansive or isometry, got {claimed_class}")
        self.space = space
        self.claimed_class = claimed_class

    @property
    def dim(self) -> int:
        return self.space.atom_count

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matrix(self) -> np.ndarray:
        """Dense matrix M with (Tf) = M @ f."""
        raise NotImplementedError

    @property
    def is_koopman(self) -> bool:
        return False


class DenseMatrix(Operator):
    """
    Operator given by a dense real matrix.

    The weighted operator norm ||W^1/2 M W^-1/2||_2 must not exceed 1 + 1e-9;
    construction fails otherwise. A claimed isometry is checked with is_isometry.
    """

    kind = "dense"

    def __init__(self, entries, space: Optional[MeasureSpace] = None,
                 claimed_class: str = "nonexpansive", tolerance: float = NORM_TOLERANCE):
        matrix = np.array(entries, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError(f"operator matrix must be square, got shape {matrix.shape}")
        space = space or MeasureSpace.uniform(matrix.shape[0])
        if matrix.shape[0] != space.atom_count:
            raise DimensionMismatchError(
                f"matrix of size {matrix.shape[0]} on a space with {space.atom_count} atoms")
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("operator matrix entries must be finite")
        super().__init__(space, claimed_class)
        matrix.setflags(write=False)
        self.entries = matrix
        spectral = float(np.linalg.norm(self.symmetrized(), 2))
        if spectral > 1.0 + tolerance:
            raise NotNonexpansiveError(f"operator norm {spectral:.12g} exceeds 1 + {tolerance}")
        self.norm_bound = spectral
        if claimed_class == "isometry" and not is_isometry(self, tol=tolerance):
            raise NotIsometryError("matrix operator is claimed to be an isometry but does not preserve norms")

    def symmetrized(self) -> np.ndarray:
        """W^1/2 M W^-1/2, whose Euclidean norm is the weighted operator norm."""
        root = np.sqrt(self.space.array)
        return (root[:, None] * self.entries) / root[None, :]

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return self.entries @ x

    def matrix(self) -> np.ndarray:
        return np.array(self.entries)


class KoopmanMap(Operator):
    """
    Composition operator Tf = f o tau for an atom map tau.

    tau must preserve weights exactly: the weight of every atom equals the total
    weight of its preimage. Such maps are isometries.
    """

    kind = "koopman"

    def __init__(self, atom_map: Sequence[int], space: MeasureSpace):
        mapping = np.array(atom_map, dtype=np.int64)
        if mapping.ndim != 1 or mapping.shape[0] != space.atom_count:
            raise DimensionMismatchError(
                f"atom map of length {mapping.size} on a space with {space.atom_count} atoms")
        if mapping.size and (mapping.min() < 0 or mapping.max() >= space.atom_count):
            raise ValidationError("atom map points outside the space")
        preimage_mass = [Fraction(0)] * space.atom_count
        for x, y in enumerate(mapping):
            preimage_mass[int(y)] += space.weights[x]
        if any(m != w for m, w in zip(preimage_mass, space.weights)):
            raise ValidationError("atom map does not preserve the weights")
        super().__init__(space, "isometry")
        mapping.setflags(write=False)
        self.atom_map = mapping

    @property
    def is_koopman(self) -> bool:
        return True

    @property
    def is_permutation(self) -> bool:
        return len(np.unique(self.atom_map)) == self.dim

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return x[..., self.atom_map] if x.ndim > 1 else x[self.atom_map]

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        m[np.arange(self.dim), self.atom_map] = 1.0
        return m

    def orbit_components(self) -> int:
        """Number of connected components of the functional graph x -> tau(x)."""
        parent = list(range(self.dim))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for x, y in enumerate(self.atom_map):
            ra, rb = find(x), find(int(y))
            if ra != rb:
                parent[ra] = rb
        return len({find(x) for x in range(self.dim)})


@dataclass(frozen=True)
class Block:
    """One block of a block rotation: a cyclic group of atoms shifted by `shift`."""
    index: int
    start: int
    order: int
    shift: int
    weight: Fraction
    halts_at: Optional[int] = None

    @property
    def atoms(self) -> range:
        return range(self.start, self.start + self.order)


class BlockRotation(KoopmanMap):
    """Koopman map of independent cyclic shifts on consecutive blocks of atoms."""

    kind = "block_rotation"

    def __init__(self, blocks: Sequence[Block], space: MeasureSpace):
        atom_map = []
        for block in blocks:
            for offset in range(block.order):
                atom_map.append(block.start + (offset + block.shift) % block.order)
        super().__init__(atom_map, space)
        self.blocks: Tuple[Block, ...] = tuple(blocks)


def require_koopman(T: Operator) -> KoopmanMap:
    if not T.is_koopman:
        raise NotKoopmanError(f"a {T.kind} operator has no pointwise meaning; use a Koopman system")
    return T


def identity_operator(space: MeasureSpace) -> KoopmanMap:
    return KoopmanMap(list(range(space.atom_count)), space)


# ---------------------------------------------------------------------------
# Application and averaging
# ---------------------------------------------------------------------------

def _check_operator(T: Operator, f: Element) -> None:
    if T.dim != f.dim:
        raise DimensionMismatchError(f"operator on {T.dim} atoms applied to an element on {f.dim}")
    if T.space is not f.space and T.space != f.space:
        raise DimensionMismatchError("operator and element live on spaces with different weights")


def apply(T: Operator, f: Element) -> Element:
    """Tf."""
    _check_operator(T, f)
    return f.with_coords(T.apply_array(f.coords))


def iterates(T: Operator, f: Element, count: int) -> np.ndarray:
    """Array whose row k is T^k f, for k < count."""
    _check_operator(T, f)
    out = np.empty((count, f.dim))
    x = f.coords
    for k in range(count):
        out[k] = x
        x = T.apply_array(x)
    return out


class _Accumulator:
    """Neumaier-compensated running sum of T^k f."""

    __slots__ = ("operator", "current", "total", "compensation", "count")

    def __init__(self, operator: Operator, start: np.ndarray):
        self.operator = operator
        self.current = np.array(start, dtype=float)
        self.total = np.zeros_like(self.current)
        self.compensation = np.zeros_like(self.current)
        self.count = 0

    def step(self) -> np.ndarray:
        """Add the next iterate and return the new average A_count f."""
        x = self.current
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self.compensation += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t
        self.count += 1
        self.current = self.operator.apply_array(x)
        return (self.total + self.compensation) / self.count

    def copy(self) -> "_Accumulator":
        clone = _Accumulator.__new__(_Accumulator)
        clone.operator = self.operator
        clone.current = self.current.copy()
        clone.total = self.total.copy()
        clone.compensation = self.compensation.copy()
        clone.count = self.count
        return clone


def ergodic_average(T: Operator, f: Element, n: int) -> Element:
    """A_n f = (1/n) sum_{i<n} T^i f, in one accumulation pass."""
    if n < 1:
        raise ValidationError(f"ergodic averages need n >= 1, got {n}")
    _check_operator(T, f)
    acc = _Accumulator(T, f.coords)
    average = f.coords
    for _ in range(n):
        average = acc.step()
    return f.with_coords(average)


def averages_prefix(T: Operator, f: Element, N: int) -> List[Element]:
    """[A_1 f, ..., A_N f] from a single incremental pass."""
    if N < 1:
        raise ValidationError(f"averages_prefix needs N >= 1, got {N}")
    cache = AveragesCache(T, f)
    cache.extend(N)
    return [f.with_coords(cache.average(m)) for m in range(1, N + 1)]


class AveragesCache:
    """
    Incremental store of A_1 f, A_2 f, ...

    Averages up to `limit` are kept in memory and extended on demand. Beyond the
    limit windows are streamed from a saved accumulator state instead of stored:
    one state at the storage boundary and one at the latest window start, so a
    search whose window starts move forward does not replay from the boundary.
    """

    def __init__(self, T: Operator, f: Element, limit: int = 262_144):
        _check_operator(T, f)
        self.operator = T
        self.element = f
        self.weights = f.space.array
        # memory cap: about 2**24 stored floats
        self.limit = max(16, min(int(limit), (1 << 24) // max(1, f.dim)))
        self._store = np.empty((min(self.limit, 1024), f.dim))
        self._acc = _Accumulator(T, f.coords)
        self._stream_state: Optional[_Accumulator] = None

    @property
    def size(self) -> int:
        return self._acc.count

    def extend(self, n: int) -> None:
        """Make A_1..A_min(n, limit) available."""
        n = min(n, self.limit)
        if n <= self._acc.count:
            return
        if n > self._store.shape[0]:
            capacity = min(self.limit, max(n, 2 * self._store.shape[0]))
            grown = np.empty((capacity, self._store.shape[1]))
            grown[:self._acc.count] = self._store[:self._acc.count]
            self._store = grown
        while self._acc.count < n:
            # step() advances count, so take the row index first
            row = self._acc.count
            self._store[row] = self._acc.step()

    def average(self, m: int) -> np.ndarray:
        """A_m f as a coordinate array."""
        if m < 1:
            raise ValidationError(f"averages are indexed from 1, got {m}")
        if m <= self.limit:
            self.extend(m)
            return self._store[m - 1]
        for _, value in self.window(m, m):
            return value
        raise AssertionError("unreachable")

    def block(self, start: int, end: int) -> np.ndarray:
        """Stored averages A_start..A_end (end <= limit) as a (k, dim) view."""
        self.extend(end)
        return self._store[start - 1:end]

    def window(self, start: int, end: int, chunk: int = 4096) -> Iterator[Tuple[int, np.ndarray]]:
        """
        Yield (first_index, rows) chunks covering A_start..A_end in order.

        Rows inside the storage limit are views into the store; rows beyond it
        are computed from the saved accumulator state.
        """
        if start < 1 or end < start:
            return
        position = start
        if position <= self.limit:
            stored_end = min(end, self.limit)
            self.extend(stored_end)
            while position <= stored_end:
                stop = min(stored_end, position + chunk - 1)
                yield position, self._store[position - 1:stop]
                position = stop + 1
        if position > end:
            return
        self.extend(self.limit)
        state = self._resume_state(position)
        while position <= end:
            stop = min(end, position + chunk - 1)
            rows = np.empty((stop - position + 1, self.element.dim))
            for r in range(rows.shape[0]):
                rows[r] = state.step()
            yield position, rows
            position = stop + 1

    def _resume_state(self, position: int) -> _Accumulator:
        """Accumulator whose next step produces A_position."""
        if self._stream_state is not None and self._stream_state.count <= position - 1:
            base = self._stream_state
        else:
            base = self._acc
        state = base.copy()
        while state.count < position - 1:
            state.step()
        self._stream_state = state.copy()
        return state

    def deviations(self, n: int, end: int) -> Tuple[float, int]:
        """max over m in [n, end] of ||A_m f - A_n f||, with the maximizing m."""
        anchor = np.array(self.average(n))
        best, best_m = 0.0, n
        for first, rows in self.window(n, end):
            norms = weighted_norms(rows - anchor, self.weights)
            k = int(np.argmax(norms))
            if norms[k] > best:
                best, best_m = float(norms[k]), first + k
        return best, best_m


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int


def operator_norm_estimate(T: Operator, iterations: int = 200, tol: float = 1e-10) -> NormEstimate:
    """
    Estimate sup ||Tf|| / ||f|| in the weighted norm.

    Koopman maps are isometries (exactly 1). Matrices use power iteration on
    B^T B with B = W^1/2 M W^-1/2; `converged` is False when the last two
    estimates differ by more than tol.
    """
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")
    if T.is_koopman:
        return NormEstimate(1.0, True, 0)
    B = T.symmetrized() if isinstance(T, DenseMatrix) else T.matrix()
    gram = B.T @ B
    x = np.ones(T.dim) + np.linspace(0.0, 0.5, T.dim)
    x /= np.linalg.norm(x)
    estimate, previous = 0.0, -1.0
    for k in range(1, iterations + 1):
        y = gram @ x
        size = float(np.linalg.norm(y))
        if size == 0.0:
            return NormEstimate(0.0, True, k)
        previous, estimate = estimate, float(np.sqrt(size))
        x = y / size
        if abs(estimate - previous) <= tol:
            return NormEstimate(estimate, True, k)
    logger.warning(f"operator norm power iteration did not converge in {iterations} steps")
    return NormEstimate(estimate, abs(estimate - previous) <= tol, iterations)


def is_isometry(T: Operator, probes: int = 16, seed: int = 0, tol: float = NORM_TOLERANCE) -> bool:
    """Check ||Tf|| = ||f|| on a seeded probe set."""
    if T.is_koopman:
        return True
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(probes):
        f = Element(rng.standard_normal(T.dim), T.space)
        if abs(norm(apply(T, f)) - norm(f)) > tol * max(1.0, norm(f)):
            return False
    return True


def fixed_space_projection(T: Operator, f: Element, tol: float = 1e-9) -> Element:
    """
    Orthogonal projection of f onto the fixed space {g : Tg = g}.

    Computed from the SVD null space of I - T in weighted coordinates; used as
    the independent source of ||f*|| when testing rate certificates.
    """
    _check_operator(T, f)
    root = np.sqrt(f.space.array)
    M = T.matrix()
    B = (root[:, None] * (np.eye(T.dim) - M)) / root[None, :]
    _, singular, vt = np.linalg.svd(B)
    scale = max(1.0, float(singular[0]) if singular.size else 1.0)
    null = vt[singular <= tol * scale]
    y = root * f.coords
    projected = null.T @ (null @ y) if null.size else np.zeros_like(y)
    return f.with_coords(projected / root)
