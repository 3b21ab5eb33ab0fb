"""
JSON documents for systems and elements.

A system document looks like

    {"space": {"weights": ["1/2", "1/2"]},
     "operator": {"kind": "koopman", "atom_map": [1, 0]},
     "f": [1, -1]}

Weights may be numbers, "p/q" strings or {"num": p, "den": q}. Operators are
"dense" (a "matrix" and optional "claimed_class"), "koopman" (an "atom_map") or
"block_rotation" (a list of "blocks" with start, order and shift). Elements may
also be given by name (see element_from_pattern).
"""

import logging
from fractions import Fraction
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ValidationError
from src.core.exact import as_rational
from src.core.hilbert_core import (Block, BlockRotation, DenseMatrix, Element, KoopmanMap,
                                   MeasureSpace, Operator)

# Configure logging
logger = logging.getLogger("ergodic_workbench.documents")

PATTERNS = ("half_indicator", "centered_half_indicator", "first_atom", "alternating", "ramp", "ones", "random")


def load_space(doc: Mapping[str, Any]) -> MeasureSpace:
    if "weights" in doc:
        return MeasureSpace(list(doc["weights"]))
    if "atoms" in doc:
        return MeasureSpace.uniform(int(doc["atoms"]))
    raise ValidationError("a space document needs 'weights' or 'atoms'")


def load_operator(doc: Mapping[str, Any], space: MeasureSpace) -> Operator:
    kind = doc.get("kind")
    if kind == "dense":
        return DenseMatrix(doc["matrix"], space, claimed_class=doc.get("claimed_class", "nonexpansive"))
    if kind == "koopman":
        return KoopmanMap(doc["atom_map"], space)
    if kind == "block_rotation":
        blocks = []
        for i, b in enumerate(doc["blocks"]):
            members = space.weights[b["start"]:b["start"] + b["order"]]
            blocks.append(Block(index=i, start=int(b["start"]), order=int(b["order"]),
                                shift=int(b["shift"]), weight=sum(members, Fraction(0)),
                                halts_at=b.get("halts_at")))
        return BlockRotation(blocks, space)
    raise ValidationError(f"unknown operator kind {kind!r}")


def load_document(doc: Mapping[str, Any]) -> Tuple[MeasureSpace, Operator, Optional[Element]]:
    """Parse a system document; f is None when the document carries none."""
    try:
        space = load_space(doc["space"])
        operator = load_operator(doc["operator"], space)
    except KeyError as e:
        raise ValidationError(f"system document is missing {e}") from e
    f = None
    if "f" in doc:
        f = element_from_spec(doc["f"], space)
    return space, operator, f


def dump_space(space: MeasureSpace) -> Dict[str, Any]:
    return {"weights": [f"{w.numerator}/{w.denominator}" for w in space.weights]}


def dump_operator(operator: Operator) -> Dict[str, Any]:
    if isinstance(operator, BlockRotation):
        return {"kind": "block_rotation",
                "blocks": [{"start": b.start, "order": b.order, "shift": b.shift, "halts_at": b.halts_at}
                           for b in operator.blocks]}
    if isinstance(operator, KoopmanMap):
        return {"kind": "koopman", "atom_map": [int(y) for y in operator.atom_map]}
    if isinstance(operator, DenseMatrix):
        return {"kind": "dense", "matrix": operator.entries.tolist(), "claimed_class": operator.claimed_class}
    raise ValidationError(f"cannot serialize a {operator.kind} operator")


def dump_document(space: MeasureSpace, operator: Operator, f: Optional[Element] = None) -> Dict[str, Any]:
    doc = {"space": dump_space(space), "operator": dump_operator(operator)}
    if f is not None:
        doc["f"] = [float(x) for x in f.coords]
    return doc


def element_from_pattern(name: str, space: MeasureSpace, seed: int = 0) -> Element:
    """
    Named elements:
        half_indicator           1 on the first half of the atoms
        centered_half_indicator  half_indicator minus its integral
        first_atom               1 on atom 0
        alternating              1, -1, 1, -1, ...
        ramp                     0, 1, ..., n-1 scaled to [0, 1]
        ones                     constant 1
        random                   seeded standard normal
    """
    n = space.atom_count
    if name == "half_indicator":
        values = np.zeros(n)
        values[: max(1, n // 2)] = 1.0
    elif name == "centered_half_indicator":
        values = np.zeros(n)
        values[: max(1, n // 2)] = 1.0
        values -= float(np.dot(space.array, values))
    elif name == "first_atom":
        values = np.zeros(n)
        values[0] = 1.0
    elif name == "alternating":
        values = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(n)])
    elif name == "ramp":
        values = np.arange(n, dtype=float) / max(1, n - 1)
    elif name == "ones":
        values = np.ones(n)
    elif name == "random":
        values = np.random.Generator(np.random.PCG64(seed)).standard_normal(n)
    else:
        raise ValidationError(f"unknown element pattern {name!r}; expected one of {', '.join(PATTERNS)}")
    return Element(values, space)


def element_from_spec(spec: Union[str, Sequence[Any]], space: MeasureSpace, seed: int = 0) -> Element:
    if isinstance(spec, str):
        return element_from_pattern(spec, space, seed)
    values = [float(as_rational(v)) if isinstance(v, (str, dict)) else float(v) for v in spec]
    if len(values) != space.atom_count:
        raise ValidationError(f"f has {len(values)} coordinates, the system has {space.atom_count} atoms")
    return Element(np.array(values), space)
