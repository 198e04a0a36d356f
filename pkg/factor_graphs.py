"""
Finite balls of the primitive loop graph and upper bounds for co-surface distances.

Two primitive classes are joined when they are jointly part of a free basis,
decided by Whitehead minimization of the pair. The co-surface graph has at
least these edges, so path lengths in a ball are upper bounds for its metric.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx

from errors import BudgetExceededError, InvalidInputError
from free_group import (
    MAX_MINIMIZE_MOVES,
    Automorphism,
    ConjugacyClass,
    FreeGroup,
    apply,
    as_class,
    is_primitive,
    nielsen_ball,
    power,
    whitehead_minimize,
)

logger = logging.getLogger("factor_graphs")

ClassLike = Union[ConjugacyClass, str]


def primitive_classes(rank: int, max_length: int) -> List[ConjugacyClass]:
    """Primitive conjugacy classes of length <= max_length, in enumeration order."""
    return [c for c in FreeGroup(rank).conjugacy_classes(max_length) if is_primitive(c.word, rank)]


def pl_adjacent(alpha: ClassLike, beta: ClassLike, rank: int,
                max_moves: int = MAX_MINIMIZE_MOVES) -> Optional[bool]:
    """Whether alpha and beta are jointly part of a free basis; None when the search ran out of budget."""
    alpha, beta = as_class(alpha), as_class(beta)
    for c in (alpha, beta):
        if not is_primitive(c.word, rank):
            raise InvalidInputError(f"{c} is not primitive")
    if alpha == beta:
        return False
    try:
        result = whitehead_minimize([alpha, beta], rank, max_moves=max_moves)
    except BudgetExceededError as exc:
        logger.warning("⚠️ adjacency of %s and %s undecided: %s", alpha, beta, exc)
        return None
    if result.length != 2:
        return False
    first, second = result.classes
    return abs(first.word.letters[0]) != abs(second.word.letters[0])


def _adjacency_row(args) -> List[Tuple[int, Optional[bool]]]:
    i, vertices, rank = args
    return [(j, pl_adjacent(vertices[i], vertices[j], rank)) for j in range(i + 1, len(vertices))]


@dataclass
class PLBall:
    length_bound: int
    rank: int
    vertices: List[ConjugacyClass]
    graph: nx.Graph = field(repr=False)
    undecided: List[Tuple[ConjugacyClass, ConjugacyClass]] = field(default_factory=list)

    def __contains__(self, alpha: ClassLike) -> bool:
        return as_class(alpha) in self.graph

    def neighbours(self, alpha: ClassLike) -> List[ConjugacyClass]:
        return sorted(self.graph.neighbors(as_class(alpha)))

    def to_adjacency_text(self) -> str:
        """One line per vertex: `class: neighbour neighbour ...` in vertex order."""
        lines = [f"# primitive loop graph, rank {self.rank}, classes of length <= {self.length_bound}"]
        for v in self.vertices:
            lines.append(f"{v}: " + " ".join(str(u) for u in self.neighbours(v)))
        return "\n".join(lines) + "\n"


def build_pl_ball(max_length: int, rank: int, workers: int = 1) -> PLBall:
    """All primitive classes of length <= max_length, joined when jointly part of a basis."""
    vertices = primitive_classes(rank, max_length)
    graph = nx.Graph()
    graph.add_nodes_from(vertices)
    jobs = [(i, vertices, rank) for i in range(len(vertices))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_adjacency_row, jobs))
    else:
        rows = [_adjacency_row(job) for job in jobs]
    undecided = []
    for i, row in enumerate(rows):
        for j, adjacent in row:
            if adjacent is None:
                undecided.append((vertices[i], vertices[j]))
            elif adjacent:
                graph.add_edge(vertices[i], vertices[j])
    logger.info("PL ball of radius %d: %d vertices, %d edges", max_length, len(vertices), graph.number_of_edges())
    return PLBall(max_length, rank, vertices, graph, undecided)


def cs_distance_upper(alpha: ClassLike, beta: ClassLike, ball: PLBall) -> Optional[int]:
    """Upper bound for d_CS(alpha, beta) from the ball; None when they are not connected inside it."""
    alpha, beta = as_class(alpha), as_class(beta)
    for c in (alpha, beta):
        if c not in ball:
            raise InvalidInputError(f"{c} is not a vertex of the ball (primitive, length <= {ball.length_bound})")
    try:
        return nx.shortest_path_length(ball.graph, alpha, beta)
    except nx.NetworkXNoPath:
        return None


def pl_distance_profile(ball: PLBall, alpha: ClassLike) -> List[Tuple[ConjugacyClass, int]]:
    lengths = nx.single_source_shortest_path_length(ball.graph, as_class(alpha))
    return sorted(((c, d) for c, d in lengths.items()), key=lambda item: (item[1], item[0]))


class LoxodromicRow(NamedTuple):
    power: int
    image: ConjugacyClass
    length: int
    distance: Optional[int]


def loxodromic_table(phi: Automorphism, alpha: ClassLike, powers: Sequence[int], ball: PLBall) -> List[LoxodromicRow]:
    """cs_distance_upper(phi^n(alpha), alpha) for each n; rows leaving the ball carry distance None."""
    alpha = as_class(alpha)
    rows = []
    for n in powers:
        image = as_class(apply(power(phi, n), alpha.word))
        distance = cs_distance_upper(image, alpha, ball) if image in ball else None
        rows.append(LoxodromicRow(n, image, len(image), distance))
    return rows


def nielsen_oracle_pairs(rank: int, depth: int) -> set:
    """Unordered pairs of classes of phi(x_1), phi(x_2) for phi in the Nielsen ball of given depth."""
    pairs = set()
    for phi in nielsen_ball(rank, depth):
        first, second = ConjugacyClass(phi.images[0]), ConjugacyClass(phi.images[1])
        pairs.add(frozenset((first, second)))
    return pairs
