import math

import pytest

from mcp_server_geometry import (
    cyclic_reduce,
    fiber_distance,
    is_primitive,
    is_simple,
    lipschitz_distance,
    mcp,
    reduce,
    stallings_index,
)
from models import (
    AutomorphismSpec,
    FiberDistanceInput,
    RankedWordInput,
    RoseDistanceInput,
    StallingsInput,
    WordInput,
)

PHI = AutomorphismSpec(images=["b", "c", "ab"], inverse=["cA", "a", "b"])


@pytest.mark.asyncio
async def test_tools_are_registered():
    tools = await mcp.list_tools()
    assert {tool.name for tool in tools} == {
        "reduce", "cyclic_reduce", "is_primitive", "is_simple",
        "stallings_index", "lipschitz_distance", "fiber_distance",
    }
    for tool in tools:
        assert "Usage:" in tool.description


def test_word_tools():
    assert reduce(WordInput(word="abBA")).word == "1"
    assert reduce(WordInput(word="aBc", rank=3)).length == 3
    assert reduce(WordInput(word="a?")).error
    split = cyclic_reduce(WordInput(word="bcB"))
    assert (split.core, split.conjugator) == ("c", "b")


def test_decision_tools():
    assert is_primitive(RankedWordInput(word="abA", rank=3)).result is True
    assert is_primitive(RankedWordInput(word="aa", rank=3)).result is False
    assert is_primitive(RankedWordInput(word="1", rank=3)).error
    assert is_simple(RankedWordInput(word="abAB", rank=3)).result is True
    assert is_primitive(RankedWordInput(word="d", rank=3)).error


def test_stallings_index():
    out = stallings_index(StallingsInput(generators=["aa", "b", "aba"], rank=2))
    assert (out.index, out.vertices, out.subgroup_rank) == (2, 2, 3)
    assert stallings_index(StallingsInput(generators=["a"], rank=2)).index is None


def test_lipschitz_distance_between_roses():
    out = lipschitz_distance(RoseDistanceInput(source=[1, 1, 1], target=[1, 1, 1], twist=PHI))
    assert out.distance == pytest.approx(math.log(2))
    assert out.witness == "a"
    assert lipschitz_distance(RoseDistanceInput(source=[1, 2, 1], target=["1/4", "1/2", "1/4"])).distance == pytest.approx(0)
    assert lipschitz_distance(RoseDistanceInput(source=[1, 1], target=[1, 1, 1])).error


def test_fiber_distance():
    identity = AutomorphismSpec(images=["a", "b"], inverse=["a", "b"])
    inner = AutomorphismSpec(images=["a", "abA"], inverse=["a", "Aba"])
    assert fiber_distance(FiberDistanceInput(rank=2, source=identity, target=inner)).distance == 1
    swap = AutomorphismSpec(images=["b", "a"], inverse=["b", "a"])
    assert fiber_distance(FiberDistanceInput(rank=2, source=identity, target=swap)).error
    broken = AutomorphismSpec(images=["b", "a"], inverse=["a", "b"])
    assert "inverse" in fiber_distance(FiberDistanceInput(rank=2, source=identity, target=broken)).error
