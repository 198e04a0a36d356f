import logging
from fractions import Fraction

import numpy as np
import pytest

from free_group import Automorphism, FreeGroup
from outer_space import MarkedGraph

logging.basicConfig(level=logging.INFO)


@pytest.fixture
def f3():
    return FreeGroup(3)


@pytest.fixture
def phi():
    """a -> b, b -> c, c -> ab (infinite order, abelianization x^3 - x - 1)."""
    return Automorphism.from_strings(["b", "c", "ab"], ["cA", "a", "b"])


@pytest.fixture
def sigma():
    """The basis 3-cycle a -> b -> c -> a."""
    return Automorphism.from_strings(["b", "c", "a"], ["c", "a", "b"])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_rose():
    third = Fraction(1, 3)
    return MarkedGraph.rose([third, third, third])


@pytest.fixture
def lopsided_rose():
    return MarkedGraph.rose([Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)])
