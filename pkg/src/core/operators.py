"""
System recipes.

Builds the concrete (MeasureSpace, Operator) pairs used by experiments and tests.
Rotations and the doubling map are modelled exactly as permutations of finite
cyclic atom groups; the random recipes draw from numpy's PCG64 generator so a
(kind, parameters, seed) triple always produces the same system.
"""

import logging
import math
import os
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.errors import ValidationError
from src.core.hilbert_core import (DenseMatrix, KoopmanMap, MeasureSpace, Operator,
                                   identity_operator)
from src.core.settings import CONFIG_DIR

# Configure logging
logger = logging.getLogger("ergodic_workbench.operators")

RECIPE_KINDS = (
    "identity",
    "cyclic_permutation",
    "discretized_rotation",
    "random_orthogonal",
    "random_contraction",
    "doubling_map",
    "random_koopman",
    "random_permutation",
)


class SystemRecipe(BaseModel):
    """A named family plus its parameters; unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str
    dim: Optional[int] = Field(None, ge=1)
    period: Optional[int] = Field(None, ge=1)
    numerator: Optional[int] = None
    denominator: Optional[int] = Field(None, ge=1)
    atoms: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = None

    @field_validator("kind")
    @classmethod
    def known_kind(cls, value: str) -> str:
        if value not in RECIPE_KINDS:
            raise ValueError(f"unknown system kind {value!r}; expected one of {', '.join(RECIPE_KINDS)}")
        return value


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _require(recipe: SystemRecipe, *names: str) -> Tuple[Any, ...]:
    values = tuple(getattr(recipe, name) for name in names)
    missing = [name for name, value in zip(names, values) if value is None]
    if missing:
        raise ValidationError(f"{recipe.kind} needs {', '.join(missing)}")
    return values


def build(recipe: Union[SystemRecipe, Mapping[str, Any]]) -> Tuple[MeasureSpace, Operator]:
    """
    Build the system a recipe describes.

    Raises:
        ValidationError: missing or inconsistent parameters
    """
    if not isinstance(recipe, SystemRecipe):
        try:
            recipe = SystemRecipe(**recipe)
        except ValueError as e:
            raise ValidationError(f"invalid system recipe: {e}") from e
    kind = recipe.kind
    logger.debug(f"Building system {recipe.model_dump(exclude_none=True)}")

    if kind == "identity":
        (dim,) = _require(recipe, "dim")
        space = MeasureSpace.uniform(dim)
        return space, identity_operator(space)

    if kind == "cyclic_permutation":
        (period,) = _require(recipe, "period")
        return cyclic_permutation(period)

    if kind == "discretized_rotation":
        numerator, denominator, atoms = _require(recipe, "numerator", "denominator", "atoms")
        return discretized_rotation(numerator, denominator, atoms)

    if kind == "random_orthogonal":
        dim, seed = _require(recipe, "dim", "seed")
        op = random_orthogonal(dim, seed)
        return op.space, op

    if kind == "random_contraction":
        dim, seed = _require(recipe, "dim", "seed")
        op = random_contraction(dim, seed)
        return op.space, op

    if kind == "doubling_map":
        (atoms,) = _require(recipe, "atoms")
        return doubling_map(atoms)

    if kind == "random_koopman":
        atoms, seed = _require(recipe, "atoms", "seed")
        return random_koopman(atoms, seed)

    atoms, seed = _require(recipe, "atoms", "seed")
    return random_permutation(atoms, seed)


def cyclic_permutation(period: int) -> Tuple[MeasureSpace, KoopmanMap]:
    """tau(x) = x + 1 mod period on uniform atoms."""
    space = MeasureSpace.uniform(period)
    return space, KoopmanMap([(x + 1) % period for x in range(period)], space)


def discretized_rotation(numerator: int, denominator: int, atoms: int) -> Tuple[MeasureSpace, KoopmanMap]:
    """
    Rotation x -> x + p/q mod 1 on m*q uniform atoms: the shift by m*p atoms.
    """
    if denominator <= 0:
        raise ValidationError(f"rotation denominator must be positive, got {denominator}")
    if atoms % denominator:
        raise ValidationError(f"atoms ({atoms}) must be divisible by the denominator ({denominator})")
    shift = (atoms // denominator) * numerator
    space = MeasureSpace.uniform(atoms)
    return space, KoopmanMap([(x + shift) % atoms for x in range(atoms)], space)


def doubling_map(atoms: int) -> Tuple[MeasureSpace, KoopmanMap]:
    """
    Doubling map on 2**b uniform atoms, x -> 2x mod 1 on binary expansions.

    Atom x stands for the point x / 2**b with a b-bit expansion repeated
    forever, so doubling is the cyclic left rotation of those b bits; this is a
    weight-preserving permutation.
    """
    if atoms < 2 or atoms & (atoms - 1):
        raise ValidationError(f"doubling_map needs a power-of-two atom count, got {atoms}")
    top = atoms >> 1
    mapping = [((x << 1) & (atoms - 1)) | (1 if x & top else 0) for x in range(atoms)]
    space = MeasureSpace.uniform(atoms)
    return space, KoopmanMap(mapping, space)


def random_orthogonal(dim: int, seed: int) -> DenseMatrix:
    """Q factor of a seeded Gaussian matrix, sign-normalized; an isometry."""
    if dim < 1:
        raise ValidationError(f"dim must be positive, got {dim}")
    rng = _generator(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)[None, :]
    return DenseMatrix(q, MeasureSpace.uniform(dim), claimed_class="isometry")


def random_contraction(dim: int, seed: int) -> DenseMatrix:
    """diag(s) @ Q with Q orthogonal and row factors s drawn from (0, 1]."""
    if dim < 1:
        raise ValidationError(f"dim must be positive, got {dim}")
    rng = _generator(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)[None, :]
    scales = 1.0 - rng.random(dim)  # in (0, 1]
    return DenseMatrix(scales[:, None] * q, MeasureSpace.uniform(dim))


def random_permutation(atoms: int, seed: int) -> Tuple[MeasureSpace, KoopmanMap]:
    rng = _generator(seed)
    space = MeasureSpace.uniform(atoms)
    return space, KoopmanMap(rng.permutation(atoms).tolist(), space)


def random_koopman(atoms: int, seed: int) -> Tuple[MeasureSpace, KoopmanMap]:
    """
    Seeded random permutation with rational weights constant on each cycle.

    Each cycle gets an integer mass drawn from 1..8 shared by its atoms, and
    the masses are normalized exactly, so the map preserves the weights.
    """
    rng = _generator(seed)
    perm = rng.permutation(atoms).tolist()
    masses = [0] * atoms
    seen = [False] * atoms
    for start in range(atoms):
        if seen[start]:
            continue
        mass = int(rng.integers(1, 9))
        x = start
        while not seen[x]:
            seen[x] = True
            masses[x] = mass
            x = perm[x]
    total = sum(masses)
    space = MeasureSpace([Fraction(m, total) for m in masses])
    return space, KoopmanMap(perm, space)


def rotation_order(numerator: int, denominator: int) -> int:
    """Number of applications of the rotation by p/q that give the identity."""
    return denominator // math.gcd(numerator, denominator)


@lru_cache(maxsize=1)
def _named_systems() -> Dict[str, Dict[str, Any]]:
    path = os.path.join(CONFIG_DIR, "systems.yaml")
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        logger.warning(f"Named systems file {path} not found")
        return {}
    except yaml.YAMLError as e:
        logger.error(f"Error parsing {path}: {e}")
        return {}
    return data.get("systems", {})


def named_system(name: str) -> SystemRecipe:
    """Resolve a name from config/systems.yaml to a recipe."""
    systems = _named_systems()
    if name not in systems:
        raise ValidationError(f"unknown named system {name!r}; known: {', '.join(sorted(systems))}")
    return SystemRecipe(**systems[name])
