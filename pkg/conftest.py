import os

import hypothesis
import numpy as np
import pytest

from src.core import operators
from src.core.hilbert_core import Element

np.seterr(all="warn")

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None, derandomize=True)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def two_cycle():
    """The swap of two atoms of weight 1/2."""
    space, T = operators.cyclic_permutation(2)
    return space, T


@pytest.fixture
def alternating(two_cycle):
    space, _ = two_cycle
    return Element.of([1.0, -1.0], space)


@pytest.fixture
def four_cycle():
    return operators.cyclic_permutation(4)

