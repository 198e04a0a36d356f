"""
Change-of-marking maps, gate structures, legal length and folding paths.

A folding path is produced from a local homothety G -> H with at least two
gates at every vertex. Each step folds every illegal gate by the same amount
and rescales to volume one; the target is subdivided as it goes so that every
edge of the current graph maps onto exactly one edge of the current target.
Step times are exact logs of the stretch ratio, so they telescope.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from bundle import almost_contained
from errors import BudgetExceededError, FoldingError, InvalidInputError, MarkedGraphError, RankMismatchError
from free_group import EMPTY, ConjugacyClass, Word, cyclic_reduce, inner_conjugator, substitute
from outer_space import (
    TOLERANCE,
    Edge,
    MarkedGraph,
    contract_forest,
    is_marked_isometric,
    length_of_class,
    lipschitz_distance,
    random_marked_graph,
)

logger = logging.getLogger("folding")

DEFAULT_DT = 1 / 64
LEGAL_THRESHOLD = 3
MAX_TENSION_ITERATIONS = 10_000
MAX_FOLD_STEPS = 100_000
DEFAULT_BBT_PATHS = 200_000
SNAP = 1e-12
OPTIMAL_RTOL = 1e-8
MOVE_SNAP = 1e-9

ClassLike = Union[ConjugacyClass, Word, str]


# ---------------------------------------------------------------------------
# Change of marking
# ---------------------------------------------------------------------------

class ChangeOfMarking:
    """A map G -> H sending vertices to vertices and each edge to a tight edge path."""

    def __init__(self, source: MarkedGraph, target: MarkedGraph, edge_images: Sequence[Word]):
        if source.rank != target.rank:
            raise RankMismatchError(f"change of marking from rank {source.rank} to rank {target.rank}")
        if len(edge_images) != len(source.edges):
            raise MarkedGraphError(f"{len(edge_images)} edge images for {len(source.edges)} edges")
        self.source = source
        self.target = target
        self.edge_images = tuple(Word(w) for w in edge_images)

    def __repr__(self) -> str:
        return f"ChangeOfMarking({self.source!r} -> {self.target!r}, lipschitz={float(self.lipschitz):.6g})"

    def image(self, letter: int) -> Word:
        img = self.edge_images[abs(letter) - 1]
        return img if letter > 0 else ~img

    def path_image(self, path: Word) -> Word:
        """Tightened image of an edge path."""
        return substitute(path, self.edge_images)

    @property
    def stretch(self) -> Tuple:
        return tuple(self.target.path_length(img) / edge.length
                     for img, edge in zip(self.edge_images, self.source.edges))

    @property
    def lipschitz(self):
        return max(self.stretch)

    def image_length(self, alpha: ClassLike):
        """Length of the tightened image of the loop representing alpha."""
        image = cyclic_reduce(self.path_image(self.source.loop(alpha))).core
        return self.target.path_length(image)

    def marking_conjugator(self) -> Optional[Word]:
        """g with h_target(f(m_source(x_i))) == g x_i g^-1 for every i, or None."""
        images = [self.target.to_free(self.path_image(p)) for p in self.source.marking]
        return inner_conjugator(images)

    def respects_marking(self) -> bool:
        return self.marking_conjugator() is not None

    def vertex_image(self, v: int) -> Optional[int]:
        for x in self.source.letters_at(v):
            img = self.image(x)
            if img:
                return self.target.origin(img.letters[0])
        return None

    def then(self, other: "ChangeOfMarking") -> "ChangeOfMarking":
        """self followed by other, with tightened edge images."""
        return ChangeOfMarking(self.source, other.target, [other.path_image(w) for w in self.edge_images])


def _check_ranks(g: MarkedGraph, h: MarkedGraph) -> None:
    if g.rank != h.rank:
        raise RankMismatchError(f"marked graphs of rank {g.rank} and {h.rank}")


def straight_map(source: MarkedGraph, target: MarkedGraph) -> ChangeOfMarking:
    """Vertices to the target basepoint, each edge to the tight loop its homotopy class dictates."""
    _check_ranks(source, target)
    paths = source.tree_paths()
    images = []
    for e, edge in enumerate(source.edges):
        loop = paths[edge.tail] * Word([e + 1]) * ~paths[edge.head]
        images.append(target.translate(source.to_free(loop)))
    return ChangeOfMarking(source, target, images)


class VertexMap:
    """Edge images of a map G -> H with the target vertex under every source vertex.

    Moving a vertex along a target direction is a homotopy, so the marking is
    never disturbed. Vertex images inside target edges are reached by
    subdividing the target first.
    """

    def __init__(self, source: MarkedGraph, target: MarkedGraph, images: Sequence[Word], positions: Sequence[int]):
        self.source = source
        self.target = target
        self.images = [Word(w) for w in images]
        self.positions = list(positions)

    @classmethod
    def from_map(cls, phi: ChangeOfMarking) -> "VertexMap":
        positions = [phi.vertex_image(v) for v in range(phi.source.num_vertices)]
        changed = True
        while changed and None in positions:
            changed = False
            for img, edge in zip(phi.edge_images, phi.source.edges):
                if img:
                    continue
                tail, head = positions[edge.tail], positions[edge.head]
                if tail is None and head is not None:
                    positions[edge.tail], changed = head, True
                elif head is None and tail is not None:
                    positions[edge.head], changed = tail, True
        if None in positions:
            raise FoldingError("cannot place the vertex images of the map")
        return cls(phi.source, phi.target, phi.edge_images, positions)

    def to_change_of_marking(self) -> ChangeOfMarking:
        return ChangeOfMarking(self.source, self.target, self.images)

    def stretch(self) -> List[float]:
        return [float(self.target.path_length(w)) / float(edge.length)
                for w, edge in zip(self.images, self.source.edges)]

    @property
    def lipschitz(self) -> float:
        return max(self.stretch())

    def image(self, letter: int) -> Word:
        img = self.images[abs(letter) - 1]
        return img if letter > 0 else ~img

    def moved(self, v: int, x: int) -> "VertexMap":
        """Slide the image of v across the target edge x leaving it."""
        step = Word([x])
        images = []
        for w, edge in zip(self.images, self.source.edges):
            if edge.tail == v:
                w = ~step * w
            if edge.head == v:
                w = w * step
            images.append(w)
        positions = list(self.positions)
        positions[v] = self.target.terminus(x)
        return VertexMap(self.source, self.target, images, positions)

    def subdivided(self, cuts: Dict[int, List[float]]) -> Tuple["VertexMap", List[Word]]:
        target, chains = _subdivide_target(self.target, cuts)
        words = [Word(c) for c in chains]
        if target is self.target:
            return self, words
        return VertexMap(self.source, target, [substitute(w, words) for w in self.images], self.positions), words

    def contracted(self) -> "VertexMap":
        """Collapse the edges whose image is a point."""
        collapsed = [e for e, w in enumerate(self.images) if not w]
        if not collapsed:
            return self
        graph, vertex_map = contract_forest(self.source, collapsed)
        positions = [0] * graph.num_vertices
        for v, w in enumerate(vertex_map):
            positions[w] = self.positions[v]
        logger.info("collapsed %d edges of the optimal map", len(collapsed))
        return VertexMap(graph, self.target, [w for w in self.images if w], positions)


def _tension_key(state: VertexMap):
    stretch = state.stretch()
    top = max(stretch)
    at_top = sum(1 for s in stretch if abs(s - top) <= TOLERANCE)
    total = sum(float(state.target.path_length(w)) for w in state.images)
    return (top, at_top, total)


def _descend(state: VertexMap, max_iterations: int) -> VertexMap:
    """Move vertex images one target edge at a time while the stretch profile drops."""
    key = _tension_key(state)
    for _ in range(max_iterations):
        best = None
        for v in range(state.source.num_vertices):
            for x in state.target.letters_at(state.positions[v]):
                trial = state.moved(v, x)
                trial_key = _tension_key(trial)
                if trial_key < key and (best is None or trial_key < best[0]):
                    best = (trial_key, trial)
        if best is None:
            return state
        key, state = best
    raise FoldingError(f"tension descent did not settle in {max_iterations} iterations")


def _star_move(state: VertexMap) -> Dict[int, Tuple[int, float]]:
    """Best simultaneous move of all vertex images inside the stars of their positions.

    One variable per vertex and direction. An edge image shrinks by the moves
    along its first and last letters and grows by every other move; this is
    exact when each vertex uses one direction and an upper bound otherwise, so
    the single-direction projection below never does worse than the program.
    """
    source, target = state.source, state.target
    columns: Dict[Tuple[int, int], int] = {}
    bounds: List[Tuple[float, Optional[float]]] = []
    for v in range(source.num_vertices):
        for x in target.letters_at(state.positions[v]):
            columns[v, x] = len(bounds)
            bounds.append((0.0, float(target.edge_length(x))))
    mu = len(bounds)
    bounds.append((0.0, None))
    rows, limits = [], []
    for w, edge in zip(state.images, source.edges):
        span = float(target.path_length(w))
        row = np.zeros(mu + 1)
        for v in (edge.tail, edge.head):
            for x in target.letters_at(state.positions[v]):
                row[columns[v, x]] += 1
        if w:
            first = columns[edge.tail, w.letters[0]]
            last = columns[edge.head, -w.letters[-1]]
            row[first] -= 2
            row[last] -= 2
            # the two ends may not pass each other
            meet = np.zeros(mu + 1)
            meet[first] += 1
            meet[last] += 1
            rows.append(meet)
            limits.append(span)
        row[mu] = -float(edge.length)
        rows.append(row)
        limits.append(-span)
    objective = np.zeros(mu + 1)
    objective[mu] = 1.0
    result = linprog(objective, A_ub=np.array(rows), b_ub=np.array(limits), bounds=bounds, method="highs")
    if not result.success:
        logger.debug("star program failed: %s", result.message)
        return {}
    moves: Dict[int, Tuple[int, float]] = {}
    for v in range(source.num_vertices):
        amounts = [(x, float(result.x[columns[v, x]])) for x in target.letters_at(state.positions[v])]
        x, top = max(amounts, key=lambda item: item[1])
        amount = 2 * top - sum(a for _, a in amounts)
        if amount > MOVE_SNAP * float(target.edge_length(x)):
            moves[v] = (x, min(amount, float(target.edge_length(x))))
    return moves


def _apply_moves(state: VertexMap, moves: Dict[int, Tuple[int, float]]) -> VertexMap:
    cuts: Dict[int, List[float]] = {}
    for x, amount in moves.values():
        length = float(state.target.edge_length(x))
        if amount < length * (1 - MOVE_SNAP):
            cuts.setdefault(abs(x) - 1, []).append(amount if x > 0 else length - amount)
    state, words = state.subdivided(cuts)
    for v, (x, amount) in sorted(moves.items()):
        pieces = substitute(Word([x]), words).letters
        walked, steps, error = 0.0, 0, amount
        for k, y in enumerate(pieces, start=1):
            walked += float(state.target.edge_length(y))
            if abs(walked - amount) < error:
                steps, error = k, abs(walked - amount)
        for y in pieces[:steps]:
            state = state.moved(v, y)
    return state


def _spread_gates(state: VertexMap) -> VertexMap:
    """Slide every vertex whose directions all leave through one target direction along it."""
    while True:
        for v in range(state.source.num_vertices):
            germs = set()
            for x in state.source.letters_at(v):
                img = state.image(x)
                germs.add(img.letters[0] if img else None)
            if len(germs) == 1 and None not in germs:
                state = state.moved(v, germs.pop())
                break
        else:
            return state


def optimal_map(source: MarkedGraph, target: MarkedGraph,
                max_iterations: int = MAX_TENSION_ITERATIONS) -> ChangeOfMarking:
    """A map G -> H with Lipschitz constant exp d(G, H) and at least two gates at every uncollapsed vertex.

    Vertex images start at target vertices and descend one edge at a time; the
    remaining tension is removed by a linear program over the stars of the
    current images, which may send vertices into the interior of target edges.
    The returned map then lands in a subdivision of H, marked-isometric to H.
    """
    _check_ranks(source, target)
    distance = lipschitz_distance(source, target)
    goal = math.exp(distance) * (1 + OPTIMAL_RTOL)
    state = _descend(VertexMap.from_map(straight_map(source, target)), max_iterations)
    rounds = 0
    while state.lipschitz > goal:
        if rounds >= max_iterations:
            raise FoldingError(f"tension program did not settle in {max_iterations} rounds")
        moves = _star_move(state)
        trial = _apply_moves(state, moves) if moves else state
        if trial.lipschitz >= state.lipschitz * (1 - SNAP):
            raise FoldingError(
                f"tensioned map has log-Lipschitz {math.log(state.lipschitz):.9g} but d = {distance:.9g}")
        state = trial
        rounds += 1
    state = _spread_gates(state)
    logger.debug("optimal map after %d program rounds, %d target edges", rounds, len(state.target.edges))
    return state.to_change_of_marking()


def foldable_map(phi: ChangeOfMarking) -> ChangeOfMarking:
    """Collapse the edges phi sends to points and spread single gates until neither is left."""
    state = VertexMap.from_map(phi)
    while True:
        state = _spread_gates(state)
        contracted = state.contracted()
        if contracted is state:
            return state.to_change_of_marking()
        state = contracted


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateStructure:
    """Partition of the directions at each vertex; a turn inside one gate is illegal."""

    vertex_gates: Tuple[Tuple[Tuple[int, ...], ...], ...]
    _index: Dict[int, int] = field(default_factory=dict, init=False, compare=False, repr=False, hash=False)

    def __post_init__(self):
        counter = 0
        for gates in self.vertex_gates:
            for gate in gates:
                for d in gate:
                    self._index[d] = counter
                counter += 1

    @classmethod
    def from_groups(cls, num_vertices: int, groups: Dict[int, Sequence[Sequence[int]]]) -> "GateStructure":
        normal = []
        for v in range(num_vertices):
            gates = sorted(tuple(sorted(g)) for g in groups.get(v, ()))
            normal.append(tuple(gates))
        return cls(tuple(normal))

    def same_gate(self, d1: int, d2: int) -> bool:
        return self._index[d1] == self._index[d2]

    def is_illegal_turn(self, d1: int, d2: int) -> bool:
        return d1 != d2 and self.same_gate(d1, d2)

    def num_gates(self, v: int) -> int:
        return len(self.vertex_gates[v])

    def min_gates(self) -> int:
        return min(len(g) for g in self.vertex_gates)

    def illegal_turns(self) -> List[Tuple[int, int]]:
        return [pair for gates in self.vertex_gates for gate in gates for pair in _pairs(gate)]

    def illegal_gates(self) -> List[Tuple[int, Tuple[int, ...]]]:
        return [(v, gate) for v, gates in enumerate(self.vertex_gates) for gate in gates if len(gate) > 1]

    def covers(self, graph: MarkedGraph) -> bool:
        """True iff the gates partition the directions of graph exactly once."""
        if len(self.vertex_gates) != graph.num_vertices:
            return False
        return all(sorted(d for gate in gates for d in gate) == sorted(graph.letters_at(v))
                   for v, gates in enumerate(self.vertex_gates))


def _pairs(gate: Sequence[int]) -> List[Tuple[int, int]]:
    return [(gate[i], gate[j]) for i in range(len(gate)) for j in range(i + 1, len(gate))]


def induced_gates(phi: ChangeOfMarking) -> GateStructure:
    """Directions at a vertex share a gate iff their images leave along the same target direction."""
    groups: Dict[int, Dict[int, List[int]]] = {}
    for v in range(phi.source.num_vertices):
        by_germ: Dict[int, List[int]] = {}
        for x in phi.source.letters_at(v):
            img = phi.image(x)
            if not img:
                raise FoldingError(f"edge {abs(x) - 1} collapses to a point; the map is not a local homothety")
            by_germ.setdefault(img.letters[0], []).append(x)
        groups[v] = list(by_germ.values())
    return GateStructure.from_groups(phi.source.num_vertices, groups)


def trivial_gates(graph: MarkedGraph) -> GateStructure:
    return GateStructure.from_groups(graph.num_vertices,
                                     {v: [[x] for x in graph.letters_at(v)] for v in range(graph.num_vertices)})


# ---------------------------------------------------------------------------
# Legal length
# ---------------------------------------------------------------------------

def legal_segments(loop: Word, graph: MarkedGraph, gates: GateStructure) -> Optional[List]:
    """Lengths of the maximal legal segments of a cyclic loop, or None when no turn is illegal."""
    letters = loop.letters
    n = len(letters)
    cuts = [i for i in range(n)
            if gates.is_illegal_turn(-letters[i], letters[(i + 1) % n])]
    if not cuts:
        return None
    segments = []
    for a, b in zip(cuts, cuts[1:] + [cuts[0] + n]):
        segments.append(sum(graph.edge_length(letters[j % n]) for j in range(a + 1, b + 1)))
    return segments


def legal_length(alpha: ClassLike, graph: MarkedGraph, gates: GateStructure,
                 threshold: float = LEGAL_THRESHOLD):
    """Total length of the maximal legal segments of length >= threshold in the loop of alpha."""
    loop = graph.loop(alpha)
    segments = legal_segments(loop, graph, gates)
    if segments is None:
        return graph.path_length(loop)
    return sum((s for s in segments if s >= threshold), 0)


def has_legal_segment(alpha: ClassLike, graph: MarkedGraph, gates: GateStructure,
                      threshold: float = LEGAL_THRESHOLD) -> bool:
    segments = legal_segments(graph.loop(alpha), graph, gates)
    return segments is None or any(s >= threshold for s in segments)


def illegal_extent(alpha: ClassLike, graph: MarkedGraph, gates: GateStructure,
                   threshold: float = LEGAL_THRESHOLD) -> float:
    """Supremum of the lengths of subpaths of the axis of alpha without a legal segment of length >= threshold."""
    segments = legal_segments(graph.loop(alpha), graph, gates)
    if segments is None:
        return float(threshold)
    long = [i for i, s in enumerate(segments) if s >= threshold]
    if not long:
        return math.inf
    n = len(segments)
    best = 0.0
    for i, j in zip(long, long[1:] + [long[0] + n]):
        gap = sum(float(segments[k % n]) for k in range(i + 1, j))
        best = max(best, gap + 2 * threshold)
    return best


def illegality_constant(rank: int, m_breve: Optional[int] = None) -> int:
    """(2r-1)(18 m (3r-3) + 6), with m the illegal-turn bound (default r(2r-1))."""
    if rank < 2:
        raise InvalidInputError("illegality constant needs rank >= 2")
    if m_breve is None:
        m_breve = rank * (2 * rank - 1)
    if m_breve < 1:
        raise InvalidInputError("the illegal-turn bound must be positive")
    return (2 * rank - 1) * (18 * m_breve * (3 * rank - 3) + 6)


# ---------------------------------------------------------------------------
# Folding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldingState:
    """G_t with its map onto a subdivision of the endpoint: graph edge e covers target edge edge_map[e]."""

    graph: MarkedGraph
    target: MarkedGraph
    edge_map: Tuple[int, ...]

    @property
    def to_target(self) -> ChangeOfMarking:
        return ChangeOfMarking(self.graph, self.target, [Word([p + 1]) for p in self.edge_map])

    @property
    def stretch(self) -> float:
        return float(sum(self.target.edges[p].length for p in self.edge_map)) / float(self.graph.volume)

    @property
    def gates(self) -> GateStructure:
        return induced_gates(self.to_target)

    def germs(self) -> Dict[int, Dict[Tuple[int, int], List[int]]]:
        out: Dict[int, Dict[Tuple[int, int], List[int]]] = {}
        for v in range(self.graph.num_vertices):
            by_germ: Dict[Tuple[int, int], List[int]] = {}
            for x in self.graph.letters_at(v):
                germ = (self.edge_map[abs(x) - 1], 1 if x > 0 else -1)
                by_germ.setdefault(germ, []).append(x)
            out[v] = by_germ
        return out


def _subdivide_target(target: MarkedGraph, cuts: Dict[int, List[float]]):
    """Split target edges at the given offsets from their tails; return the new graph and edge chains."""
    n = target.num_vertices
    edges: List[Edge] = []
    chains: List[List[int]] = []
    inverse: List[Word] = []
    for p, edge in enumerate(target.edges):
        length = float(edge.length)
        points = sorted(cuts.get(p, []))
        kept: List[float] = []
        for c in points:
            if c <= SNAP * length or c >= length * (1 - SNAP):
                continue
            if kept and c - kept[-1] <= SNAP * length:
                continue
            kept.append(c)
        if not kept:
            chains.append([len(edges) + 1])
            edges.append(edge)
            inverse.append(target.inverse_marking[p])
            continue
        bounds = [0.0] + kept + [length]
        vertices = [edge.tail] + list(range(n, n + len(kept))) + [edge.head]
        n += len(kept)
        chain = []
        for k in range(len(bounds) - 1):
            chain.append(len(edges) + 1)
            edges.append(Edge(vertices[k], vertices[k + 1], bounds[k + 1] - bounds[k]))
            inverse.append(target.inverse_marking[p] if k == 0 else EMPTY)
        chains.append(chain)
    if n == target.num_vertices:
        return target, chains
    chain_words = [Word(c) for c in chains]
    marking = [substitute(m, chain_words) for m in target.marking]
    return MarkedGraph(n, edges, marking, inverse, target.basepoint), chains


def _with_inverse_from_target(num_vertices: int, edges: List[Edge], marking: List[Word],
                              target: MarkedGraph, edge_map: Sequence[int], basepoint: int) -> MarkedGraph:
    h_images = [target.inverse_marking[p] for p in edge_map]
    images = [substitute(m, h_images) for m in marking]
    g = inner_conjugator(images)
    if g is None:
        raise FoldingError("folded graph is no longer compatible with the target marking")
    inverse = [~g * w * g for w in h_images]
    try:
        return MarkedGraph(num_vertices, edges, marking, inverse, basepoint)
    except MarkedGraphError as exc:
        raise FoldingError(f"fold produced an invalid marked graph: {exc}") from exc


def start_state(phi: ChangeOfMarking) -> FoldingState:
    """Subdivide the source of a local homothety so each edge covers one target edge, rescaled to volume 1."""
    source, target = phi.source, phi.target
    stretch = phi.stretch
    if any(s <= 0 for s in stretch):
        raise FoldingError("an edge collapses to a point; the map is not a local homothety")
    if max(stretch) - min(stretch) > 1e-9 * max(stretch):
        raise FoldingError("the map is not a local homothety (edge stretches differ)")
    n = source.num_vertices
    edges: List[Edge] = []
    edge_map: List[int] = []
    chains: List[List[int]] = []
    for e, edge in enumerate(source.edges):
        image = phi.edge_images[e].letters
        chain = []
        cur = edge.tail
        for pos, x in enumerate(image):
            if pos == len(image) - 1:
                nxt = edge.head
            else:
                nxt, n = n, n + 1
            p = abs(x) - 1
            index = len(edges) + 1
            if x > 0:
                edges.append(Edge(cur, nxt, float(target.edges[p].length)))
                chain.append(index)
            else:
                edges.append(Edge(nxt, cur, float(target.edges[p].length)))
                chain.append(-index)
            edge_map.append(p)
            cur = nxt
        chains.append(chain)
    total = sum(e.length for e in edges)
    edges = [Edge(e.tail, e.head, e.length / total) for e in edges]
    chain_words = [Word(c) for c in chains]
    marking = [substitute(m, chain_words) for m in source.marking]
    graph = _with_inverse_from_target(n, edges, marking, target, edge_map, source.basepoint)
    return FoldingState(graph, target, tuple(edge_map))


class FoldStep(NamedTuple):
    state: FoldingState
    step_map: ChangeOfMarking
    elapsed: float


def fold_step(state: FoldingState, dt: float = DEFAULT_DT) -> FoldStep:
    """Fold every illegal gate by a common amount, at most dt of arc length, then rescale to volume 1.

    The amount is cut short when a folded target edge is used up (or met from its
    other end) so the step never crosses a vertex.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    graph, target, edge_map = state.graph, state.target, state.edge_map
    germs = state.germs()
    illegal = [(v, germ, dirs) for v, by_germ in germs.items() for germ, dirs in by_germ.items() if len(dirs) > 1]
    identity = ChangeOfMarking(graph, graph, [Word([e + 1]) for e in range(len(graph.edges))])
    if not illegal:
        return FoldStep(state, identity, 0.0)

    stretch = state.stretch
    volume = float(graph.volume)
    excess = sum(len(dirs) - 1 for _, _, dirs in illegal)
    amount = volume * (1 - math.exp(-dt)) / excess
    folded = {germ for _, germ, _ in illegal}
    for p, sign in folded:
        length = float(target.edges[p].length) / stretch
        amount = min(amount, length / 2 if (p, -sign) in folded else length)
    reach = amount * stretch

    cuts: Dict[int, List[float]] = {}
    for p, sign in folded:
        length = float(target.edges[p].length)
        cuts.setdefault(p, []).append(reach if sign > 0 else length - reach)
    new_target, target_chains = _subdivide_target(target, cuts)

    # split graph edges along the target subdivision
    n = graph.num_vertices
    split_edges: List[Tuple[int, int, int]] = []
    graph_chains: List[List[int]] = []
    for e, edge in enumerate(graph.edges):
        pieces = target_chains[edge_map[e]]
        chain = []
        cur = edge.tail
        for pos, piece in enumerate(pieces):
            if pos == len(pieces) - 1:
                nxt = edge.head
            else:
                nxt, n = n, n + 1
            split_edges.append((cur, nxt, piece - 1))
            chain.append(len(split_edges) - 1)
            cur = nxt
        graph_chains.append(chain)

    edge_parent = list(range(len(split_edges)))
    vertex_parent = list(range(n))

    def find(parent: List[int], x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(parent: List[int], a: int, b: int) -> None:
        ra, rb = find(parent, a), find(parent, b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for _, _, dirs in illegal:
        firsts, far = [], []
        for x in dirs:
            chain = graph_chains[abs(x) - 1]
            if x > 0:
                first = chain[0]
                far.append(split_edges[first][1])
            else:
                first = chain[-1]
                far.append(split_edges[first][0])
            firsts.append(first)
        for a in firsts[1:]:
            union(edge_parent, firsts[0], a)
        for w in far[1:]:
            union(vertex_parent, far[0], w)

    vertex_roots = sorted({find(vertex_parent, v) for v in range(n)})
    vertex_index = {r: i for i, r in enumerate(vertex_roots)}
    edge_roots = sorted({find(edge_parent, e) for e in range(len(split_edges))})
    edge_index = {r: i for i, r in enumerate(edge_roots)}
    new_edge_map = [split_edges[r][2] for r in edge_roots]
    image_total = sum(float(new_target.edges[p].length) for p in new_edge_map)
    new_edges = [Edge(vertex_index[find(vertex_parent, split_edges[r][0])],
                      vertex_index[find(vertex_parent, split_edges[r][1])],
                      float(new_target.edges[split_edges[r][2]].length) / image_total)
                 for r in edge_roots]
    step_images = [Word([edge_index[find(edge_parent, s)] + 1 for s in chain]) for chain in graph_chains]
    marking = [substitute(m, step_images) for m in graph.marking]
    basepoint = vertex_index[find(vertex_parent, graph.basepoint)]
    new_graph = _with_inverse_from_target(len(vertex_roots), new_edges, marking, new_target,
                                          new_edge_map, basepoint)
    new_state = FoldingState(new_graph, new_target, tuple(new_edge_map))
    elapsed = math.log(stretch / new_state.stretch)
    logger.debug("folded %d gates by %.3g, elapsed %.6g", len(illegal), amount, elapsed)
    return FoldStep(new_state, ChangeOfMarking(graph, new_graph, step_images), elapsed)


@dataclass
class FoldingPath:
    """Discretized folding path G_{t_0}, ..., G_{t_m} with its step maps and gate structures."""

    times: List[float]
    states: List[FoldingState]
    step_maps: List[ChangeOfMarking]
    dt: float
    prefix_start: Optional[MarkedGraph] = None
    prefix_length: float = 0.0

    @property
    def graphs(self) -> List[MarkedGraph]:
        return [s.graph for s in self.states]

    @property
    def gates(self) -> List[GateStructure]:
        return [s.gates for s in self.states]

    @property
    def length(self) -> float:
        return self.times[-1] - self.times[0]

    def __len__(self) -> int:
        return len(self.states)

    def composite_map(self, j: int, k: int) -> ChangeOfMarking:
        """The map G_{t_j} -> G_{t_k}, j <= k."""
        graph = self.states[j].graph
        phi = ChangeOfMarking(graph, graph, [Word([e + 1]) for e in range(len(graph.edges))])
        for step in self.step_maps[j:k]:
            phi = phi.then(step)
        return phi

    def step_table(self) -> List[dict]:
        rows = []
        for k, (t, state) in enumerate(zip(self.times, self.states)):
            rows.append({
                "step": k,
                "t": t,
                "vertices": state.graph.num_vertices,
                "edges": len(state.graph.edges),
                "illegal_turns": len(state.gates.illegal_turns()),
                "stretch_to_end": state.stretch,
            })
        return rows

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "prefix_length": self.prefix_length,
            "steps": self.step_table(),
            "graphs": [s.graph.to_dict() for s in self.states],
        }


def fold_along(phi: ChangeOfMarking, dt: float = DEFAULT_DT, max_steps: int = MAX_FOLD_STEPS,
               prefix_start: Optional[MarkedGraph] = None, prefix_length: float = 0.0) -> FoldingPath:
    """Fold a local homothety with at least two gates per vertex until no illegal turn is left."""
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    state = start_state(phi)
    if state.gates.min_gates() < 2:
        raise FoldingError("some vertex has a single gate; the map cannot be folded")
    times, states, maps = [0.0], [state], []
    while True:
        step = fold_step(state, dt)
        if not step.elapsed and step.state is state:
            break
        state = step.state
        times.append(times[-1] + step.elapsed)
        states.append(state)
        maps.append(step.step_map)
        if len(maps) > max_steps:
            raise BudgetExceededError("folding path did not terminate", max_steps, len(maps))
    if abs(state.stretch - 1) > 1e-6:
        logger.warning("⚠️ folding ended with stretch %.9g instead of 1", state.stretch)
    logger.info("folding path with %d steps, length %.9g", len(maps), times[-1])
    return FoldingPath(times, states, maps, dt, prefix_start, prefix_length)


def folding_path(source: MarkedGraph, target: MarkedGraph, dt: float = DEFAULT_DT,
                 phi: Optional[ChangeOfMarking] = None) -> FoldingPath:
    """Geodesic from source to target: an optional rescaling prefix, then a folding path.

    Without phi the optimal map comes from optimal_map. Collapsed edges are
    contracted and single-gate vertices slid off first; the prefix start G' is
    what remains of source with edge e of length len(f(e)) / sum of those lengths.
    """
    _check_ranks(source, target)
    for name, graph in (("source", source), ("target", target)):
        if abs(float(graph.volume) - 1) > TOLERANCE:
            raise InvalidInputError(f"{name} graph must have volume 1")
    if phi is None:
        if is_marked_isometric(source, target):
            state = FoldingState(source, source, tuple(range(len(source.edges))))
            return FoldingPath([0.0], [state], [], dt)
        phi = optimal_map(source, target)
    phi = foldable_map(phi)
    images = [phi.target.path_length(w) for w in phi.edge_images]
    total = sum(images)
    start = phi.source.with_lengths([length / total for length in images])
    prefix = 0.0
    if len(start.edges) != len(source.edges) or any(
            abs(float(a.length - b.length)) > TOLERANCE for a, b in zip(start.edges, source.edges)):
        prefix = lipschitz_distance(source, start)
        logger.info("rescaling prefix of length %.9g before folding", prefix)
    homothety = ChangeOfMarking(start, phi.target, phi.edge_images)
    return fold_along(homothety, dt, prefix_start=start if prefix else None, prefix_length=prefix)


def rose_homothety(target: MarkedGraph) -> ChangeOfMarking:
    """Rose whose petal i maps onto the marking loop of x_i, scaled so the map is a local homothety."""
    images = list(target.marking)
    lengths = [target.path_length(w) for w in images]
    total = sum(lengths)
    return ChangeOfMarking(MarkedGraph.rose([length / total for length in lengths]), target, images)


def random_folding_path(rng, dt: float = DEFAULT_DT, topology: str = "rose", depth: int = 4,
                        target_topology: Optional[str] = None, attempts: int = 100) -> FoldingPath:
    """Geodesic folding path between two random marked graphs; pairs at distance zero are redrawn."""
    for _ in range(attempts):
        source = random_marked_graph(rng, topology, depth)
        target = random_marked_graph(rng, target_topology or topology, depth)
        if not is_marked_isometric(source, target):
            return folding_path(source, target, dt)
    raise FoldingError(f"no distinct pair of marked graphs found in {attempts} attempts")


# ---------------------------------------------------------------------------
# Projections and flaring
# ---------------------------------------------------------------------------

class Projection(NamedTuple):
    left: float
    right: float


def left_right_projection(path: FoldingPath, alpha: ClassLike, illegality: float,
                          threshold: float = LEGAL_THRESHOLD) -> Projection:
    """Left: first grid time with a legal segment of length >= threshold (+inf if none).
    Right: last grid time with an illegal segment of length >= illegality (t_0 if none).
    """
    if not path.states:
        raise InvalidInputError("empty folding path")
    left = math.inf
    right = path.times[0]
    for t, state in zip(path.times, path.states):
        gates = state.gates
        if left == math.inf and has_legal_segment(alpha, state.graph, gates, threshold):
            left = t
        if illegal_extent(alpha, state.graph, gates, threshold) >= illegality:
            right = t
    return Projection(left, right)


class FlareRow(NamedTuple):
    t_a: float
    t_b: float
    cls: str
    lhs: float
    rhs: float
    margin: float


@dataclass
class FlareReport:
    rows: List[FlareRow] = field(default_factory=list)
    violations: List[FlareRow] = field(default_factory=list)
    applicable: bool = True
    reason: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations


def check_legal_flare(path: FoldingPath, alpha: ClassLike, threshold: float = LEGAL_THRESHOLD) -> FlareReport:
    """leg(alpha|G_b) >= leg(alpha|G_a) e^(b-a) / 3 on every grid pair a < b, with e^(2 dt) slack."""
    cls = str(alpha)
    legs = [float(legal_length(alpha, s.graph, s.gates, threshold)) for s in path.states]
    slack = math.exp(2 * path.dt)
    report = FlareReport()
    for i in range(len(legs)):
        for j in range(i + 1, len(legs)):
            lhs = legs[j]
            rhs = legs[i] * math.exp(path.times[j] - path.times[i]) / 3
            row = FlareRow(path.times[i], path.times[j], cls, lhs, rhs, lhs * slack - rhs)
            report.rows.append(row)
            if row.margin < -TOLERANCE:
                report.violations.append(row)
    if report.violations:
        logger.warning("⚠️ %d legal-flare violations for %s", len(report.violations), cls)
    return report


def legal_flare_margins(path: FoldingPath, classes: Sequence[ClassLike],
                        threshold: float = LEGAL_THRESHOLD) -> Dict[str, float]:
    """Worst legal-flare margin per class over all grid pairs a < b.

    Same inequality as check_legal_flare without the row list: for each b only
    the largest leg(alpha|G_a) e^(-a) so far matters.
    """
    times = np.array(path.times, dtype=float)
    slack = math.exp(2 * path.dt)
    margins = {}
    for alpha in classes:
        legs = np.array([float(legal_length(alpha, s.graph, s.gates, threshold)) for s in path.states])
        if len(legs) < 2:
            margins[str(alpha)] = math.inf
            continue
        worst = np.maximum.accumulate(legs * np.exp(-times))[:-1]
        margins[str(alpha)] = float(np.min(legs[1:] * slack - worst * np.exp(times[1:]) / 3))
    bad = [cls for cls, margin in margins.items() if margin < -TOLERANCE]
    if bad:
        logger.warning("⚠️ legal flare fails for %d of %d classes", len(bad), len(margins))
    return margins


def check_containment_flare(path: FoldingPath, alpha: ClassLike, beta: ClassLike, k: float, s_index: int,
                            illegality: float, threshold: float = LEGAL_THRESHOLD) -> FlareReport:
    """Containment flare from grid index s_index on.

    Checks leg(beta|G_t) >= (2/m) len(beta|G_t) wherever beta is k-almost contained
    in alpha, and len(beta|G_t) >= (2/3m) len(beta|G_s) e^(t-s) for t >= s.
    """
    m = illegality
    s_time = path.times[s_index]
    s_graph = path.states[s_index].graph
    right = left_right_projection(path, alpha, m, threshold).right
    len_s = float(length_of_class(s_graph, beta))
    if s_time < right:
        return FlareReport(applicable=False, reason="not applicable: s precedes the right projection")
    if not almost_contained(beta, alpha, s_graph, k):
        return FlareReport(applicable=False, reason="not applicable: beta is not k-almost contained at G_s")
    if len_s < 3 * k + 3 * m:
        return FlareReport(applicable=False, reason="not applicable: beta is too short at G_s")
    slack = math.exp(2 * path.dt)
    report = FlareReport()
    cls = str(beta)
    for t, state in zip(path.times[s_index:], path.states[s_index:]):
        length = float(length_of_class(state.graph, beta))
        if almost_contained(beta, alpha, state.graph, k):
            leg = float(legal_length(beta, state.graph, state.gates, threshold))
            row = FlareRow(t, t, cls, leg, 2 * length / m, leg * slack - 2 * length / m)
            report.rows.append(row)
            if row.margin < -TOLERANCE:
                report.violations.append(row)
        rhs = 2 / (3 * m) * len_s * math.exp(t - s_time)
        row = FlareRow(s_time, t, cls, length, rhs, length * slack - rhs)
        report.rows.append(row)
        if row.margin < -TOLERANCE:
            report.violations.append(row)
    return report


class IllegalWindow(NamedTuple):
    t_a: float
    t_b: float
    length_a: float
    length_b: float
    halved: bool


def check_illegal_flare(path: FoldingPath, alpha: ClassLike, window: float,
                        threshold: float = LEGAL_THRESHOLD) -> List[IllegalWindow]:
    """Windows of length >= window where alpha never has a long legal segment.

    Each row records whether the length halved across the window; windows where it
    did not are logged for the factor-distance alternative, which is not computed.
    """
    illegal = [not has_legal_segment(alpha, s.graph, s.gates, threshold) for s in path.states]
    lengths = [float(length_of_class(s.graph, alpha)) for s in path.states]
    rows = []
    for i in range(len(path.states)):
        if not illegal[i]:
            continue
        for j in range(i + 1, len(path.states)):
            if not illegal[j]:
                break
            if path.times[j] - path.times[i] >= window:
                rows.append(IllegalWindow(path.times[i], path.times[j], lengths[i], lengths[j],
                                          lengths[i] > 2 * lengths[j]))
    unresolved = sum(1 for row in rows if not row.halved)
    if unresolved:
        logger.info("%d illegal windows for %s without halving (factor-distance branch)", unresolved, alpha)
    return rows


# ---------------------------------------------------------------------------
# Bounded backtracking
# ---------------------------------------------------------------------------

def _tight_paths(graph: MarkedGraph, max_length: float, budget: int):
    count = 0
    for v in range(graph.num_vertices):
        stack = [((), 0)]
        while stack:
            letters, length = stack.pop()
            if letters:
                count += 1
                if count > budget:
                    raise BudgetExceededError("too many paths for backtracking estimate", budget, count)
                yield Word._trusted(letters)
            end = graph.terminus(letters[-1]) if letters else v
            for x in graph.letters_at(end):
                if letters and x == -letters[-1]:
                    continue
                grown = length + graph.edge_length(x)
                if grown <= max_length + TOLERANCE:
                    stack.append((letters + (x,), grown))


def _excursion(phi: ChangeOfMarking, path: Word) -> float:
    target = phi.target
    geodesic = phi.path_image(path).letters
    prefix: List[int] = []
    best = 0.0
    for x in path.letters:
        for y in phi.image(x).letters:
            if prefix and prefix[-1] == -y:
                prefix.pop()
            else:
                prefix.append(y)
            common = 0
            while common < len(prefix) and common < len(geodesic) and prefix[common] == geodesic[common]:
                common += 1
            off = sum(float(target.edge_length(z)) for z in prefix[common:])
            best = max(best, off)
    return best


def bbt_estimate(phi: ChangeOfMarking, max_length: float, budget: int = DEFAULT_BBT_PATHS) -> float:
    """Largest distance of the image of a tight path of length <= max_length from its tightened image.

    Measured in the universal cover of the target over all tight edge paths
    starting at vertices; a lower estimate of the bounded-backtracking constant.
    """
    best = 0.0
    for path in _tight_paths(phi.source, max_length, budget):
        best = max(best, _excursion(phi, path))
    return best


class BacktrackingComposite(NamedTuple):
    composite: float
    bound: float
    holds: bool


def bbt_composite_report(first: ChangeOfMarking, second: ChangeOfMarking, max_length: float) -> BacktrackingComposite:
    """BBT(g f, L) <= Lip(g) BBT(f, L) + BBT(g, Lip(f) L)."""
    composite = bbt_estimate(first.then(second), max_length)
    bound = (float(second.lipschitz) * bbt_estimate(first, max_length)
             + bbt_estimate(second, float(first.lipschitz) * max_length))
    return BacktrackingComposite(composite, bound, composite <= bound + 1e-9)

