import logging
import sys

from mcp.server.fastmcp import FastMCP

import bundle
import free_group
import outer_space
from errors import GeometryError
from models import (
    CyclicReduceOutput,
    DecisionOutput,
    FiberDistanceInput,
    FiberDistanceOutput,
    RankedWordInput,
    ReduceOutput,
    RoseDistanceInput,
    RoseDistanceOutput,
    StallingsInput,
    StallingsOutput,
    WordInput,
)

# stdout carries the protocol
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)
logger = logging.getLogger("mcp_server_geometry")

mcp = FastMCP("FreeGroupGeometry")


@mcp.tool()
def reduce(input: WordInput) -> ReduceOutput:
    """Freely reduce a word ('A' is a^-1, '1' is the empty word). Usage: reduce|input={"word": "abBA"}"""
    logger.info("CALLED: reduce(WordInput) -> ReduceOutput")
    try:
        word = free_group.parse_word(input.word, input.rank)
        return ReduceOutput(word=str(word), length=len(word))
    except GeometryError as e:
        return ReduceOutput(error=str(e))


@mcp.tool()
def cyclic_reduce(input: WordInput) -> CyclicReduceOutput:
    """Split a word as conjugator * core * conjugator^-1. Usage: cyclic_reduce|input={"word": "bcB"}"""
    logger.info("CALLED: cyclic_reduce(WordInput) -> CyclicReduceOutput")
    try:
        core, conjugator = free_group.cyclic_reduce(free_group.parse_word(input.word, input.rank))
        return CyclicReduceOutput(core=str(core), conjugator=str(conjugator))
    except GeometryError as e:
        return CyclicReduceOutput(error=str(e))


@mcp.tool()
def is_primitive(input: RankedWordInput) -> DecisionOutput:
    """Whether a word belongs to some free basis (Whitehead algorithm). Usage: is_primitive|input={"word": "abA", "rank": 3}"""
    logger.info("CALLED: is_primitive(RankedWordInput) -> DecisionOutput")
    try:
        return DecisionOutput(result=free_group.is_primitive(free_group.parse_word(input.word, input.rank), input.rank))
    except GeometryError as e:
        return DecisionOutput(error=str(e))


@mcp.tool()
def is_simple(input: RankedWordInput) -> DecisionOutput:
    """Whether a word lies in a proper free factor. Usage: is_simple|input={"word": "abAB", "rank": 3}"""
    logger.info("CALLED: is_simple(RankedWordInput) -> DecisionOutput")
    try:
        return DecisionOutput(result=free_group.is_simple(free_group.parse_word(input.word, input.rank), input.rank))
    except GeometryError as e:
        return DecisionOutput(error=str(e))


@mcp.tool()
def stallings_index(input: StallingsInput) -> StallingsOutput:
    """Index and rank of the subgroup generated by words. Usage: stallings_index|input={"generators": ["aa", "b", "aba"], "rank": 2}"""
    logger.info("CALLED: stallings_index(StallingsInput) -> StallingsOutput")
    try:
        gens = [free_group.parse_word(w, input.rank) for w in input.generators]
        graph = free_group.stallings_graph(gens, input.rank)
        return StallingsOutput(index=graph.index, vertices=graph.num_vertices, subgroup_rank=graph.subgroup_rank)
    except GeometryError as e:
        return StallingsOutput(error=str(e))


@mcp.tool()
def lipschitz_distance(input: RoseDistanceInput) -> RoseDistanceOutput:
    """Lipschitz distance between two volume-normalized roses, the target optionally acted on by an automorphism.
    Usage: lipschitz_distance|input={"source": [1, 1, 1], "target": [1, 1, 1], "twist": {"images": ["b", "c", "ab"], "inverse": ["cA", "a", "b"]}}"""
    logger.info("CALLED: lipschitz_distance(RoseDistanceInput) -> RoseDistanceOutput")
    try:
        source = outer_space.MarkedGraph.rose(input.source).normalized()
        target = outer_space.MarkedGraph.rose(input.target).normalized()
        if input.twist is not None:
            twist = free_group.Automorphism.from_strings(input.twist.images, input.twist.inverse, target.rank)
            target = outer_space.act(twist, target)
        ratio = outer_space.lipschitz_ratio(source, target)
        return RoseDistanceOutput(distance=float(outer_space.lipschitz_distance(source, target)),
                                  witness=str(ratio.witness))
    except (GeometryError, ValueError, ZeroDivisionError) as e:
        return RoseDistanceOutput(error=str(e))


@mcp.tool()
def fiber_distance(input: FiberDistanceInput) -> FiberDistanceOutput:
    """Fiber distance |w| between automorphisms u, v with u^-1 v = i_w.
    Usage: fiber_distance|input={"rank": 2, "source": {"images": ["a", "b"], "inverse": ["a", "b"]}, "target": {"images": ["a", "abA"], "inverse": ["a", "Aba"]}}"""
    logger.info("CALLED: fiber_distance(FiberDistanceInput) -> FiberDistanceOutput")
    try:
        u, v = (bundle.BundleElement(free_group.Automorphism.from_strings(spec.images, spec.inverse, input.rank))
                for spec in (input.source, input.target))
        return FiberDistanceOutput(distance=bundle.fiber_distance(u, v))
    except GeometryError as e:
        return FiberDistanceOutput(error=str(e))


if __name__ == "__main__":
    logger.info("🚀 mcp_server_geometry starting")
    if len(sys.argv) > 1 and sys.argv[1] == "dev":
        mcp.run()  # Run without transport for dev server
    else:
        mcp.run(transport="stdio")
        logger.info("👋 Shutting down")
