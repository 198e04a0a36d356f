"""
Points of Outer space as marked metric graphs, with length functions, the
Lipschitz metric, the thick part, factor projection, the Out(F)-action and
finite covers.

A marked graph stores its marking as r closed edge paths at the basepoint
and a homotopy inverse sending every edge to a word of F. Edge paths are
words over the letters +(e+1) (edge e traversed tail to head) and -(e+1).
"""

import logging
import math
from collections import deque
from fractions import Fraction
from itertools import combinations
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InvalidInputError, MarkedGraphError, RankMismatchError, TrivialClassError
from free_group import (
    Automorphism,
    ConjugacyClass,
    SubgroupGraph,
    Word,
    apply,
    as_word,
    compose,
    cyclic_reduce,
    elementary_nielsen_moves,
    stallings_graph,
    substitute,
)

logger = logging.getLogger("outer_space")

TOLERANCE = 1e-9

Length = Union[Fraction, float]
ClassLike = Union[ConjugacyClass, Word, str]


class Edge(NamedTuple):
    tail: int
    head: int
    length: Length


def as_length(value) -> Length:
    if isinstance(value, (Fraction, float)):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))


class MarkedGraph:
    """A marked metric graph G with pi_1(G) identified with F."""

    def __init__(self, num_vertices: int, edges: Sequence[Edge], marking: Sequence[Word],
                 inverse_marking: Sequence[Word], basepoint: int = 0, *, check: bool = True):
        self.num_vertices = num_vertices
        self.edges = tuple(Edge(int(t), int(h), as_length(l)) for t, h, l in edges)
        self.marking = tuple(marking)
        self.inverse_marking = tuple(inverse_marking)
        self.basepoint = basepoint
        self._letters_at: Dict[int, List[int]] = {v: [] for v in range(num_vertices)}
        for e, edge in enumerate(self.edges):
            self._letters_at[edge.tail].append(e + 1)
            self._letters_at[edge.head].append(-(e + 1))
        if check:
            self.validate()

    # -- construction -----------------------------------------------------

    @classmethod
    def rose(cls, lengths: Sequence) -> "MarkedGraph":
        """Rose with one petal per generator and the identity marking."""
        edges = [Edge(0, 0, as_length(l)) for l in lengths]
        basis = [Word([i]) for i in range(1, len(edges) + 1)]
        return cls(1, edges, basis, basis)

    @classmethod
    def from_edges(cls, num_vertices: int, edges: Sequence, basepoint: int = 0) -> "MarkedGraph":
        """Marking read off a breadth-first spanning tree: one generator per non-tree edge."""
        edges = [Edge(int(t), int(h), as_length(l)) for t, h, l in edges]
        tree_path: Dict[int, Tuple[int, ...]] = {basepoint: ()}
        tree_edges = set()
        queue = deque([basepoint])
        while queue:
            v = queue.popleft()
            for e, edge in enumerate(edges):
                for start, end, letter in ((edge.tail, edge.head, e + 1), (edge.head, edge.tail, -(e + 1))):
                    if start == v and end not in tree_path:
                        tree_path[end] = tree_path[v] + (letter,)
                        tree_edges.add(e)
                        queue.append(end)
        if len(tree_path) != num_vertices:
            raise MarkedGraphError("graph is not connected")
        marking, inverse = [], [Word() for _ in edges]
        for e, edge in enumerate(edges):
            if e in tree_edges:
                continue
            j = len(marking) + 1
            path = Word(tree_path[edge.tail] + (e + 1,)) * ~Word(tree_path[edge.head])
            marking.append(path)
            inverse[e] = Word([j])
        return cls(num_vertices, edges, marking, inverse, basepoint)

    # -- basic data ---------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.marking)

    @property
    def volume(self) -> Length:
        return sum((edge.length for edge in self.edges), Fraction(0))

    def valence(self, v: int) -> int:
        return len(self._letters_at[v])

    def letters_at(self, v: int) -> Tuple[int, ...]:
        """Oriented edge letters leaving v (its directions)."""
        return tuple(self._letters_at[v])

    def tree_paths(self) -> Dict[int, Word]:
        """Breadth-first spanning-tree path from the basepoint to every vertex."""
        paths: Dict[int, Tuple[int, ...]] = {self.basepoint: ()}
        queue = deque([self.basepoint])
        while queue:
            v = queue.popleft()
            for x in self._letters_at[v]:
                w = self.terminus(x)
                if w not in paths:
                    paths[w] = paths[v] + (x,)
                    queue.append(w)
        return {v: Word(p) for v, p in paths.items()}

    def origin(self, letter: int) -> int:
        edge = self.edges[abs(letter) - 1]
        return edge.tail if letter > 0 else edge.head

    def terminus(self, letter: int) -> int:
        edge = self.edges[abs(letter) - 1]
        return edge.head if letter > 0 else edge.tail

    def edge_length(self, letter: int) -> Length:
        return self.edges[abs(letter) - 1].length

    def path_length(self, path: Word) -> Length:
        return sum((self.edges[abs(x) - 1].length for x in path.letters), Fraction(0))

    def validate(self) -> None:
        n = self.num_vertices
        for e, edge in enumerate(self.edges):
            if not (0 <= edge.tail < n and 0 <= edge.head < n):
                raise MarkedGraphError(f"edge {e} has an endpoint outside 0..{n - 1}")
            if edge.length <= 0:
                raise MarkedGraphError(f"edge {e} has nonpositive length {edge.length}")
        for v in range(n):
            if self.valence(v) < 2:
                raise MarkedGraphError(f"vertex {v} has valence {self.valence(v)}; core graphs have none below 2")
        if len(self.edges) - n + 1 != self.rank:
            raise MarkedGraphError(
                f"first Betti number {len(self.edges) - n + 1} differs from marking rank {self.rank}")
        if len(self.inverse_marking) != len(self.edges):
            raise MarkedGraphError("homotopy inverse must assign a word to every edge")
        for i, path in enumerate(self.marking, start=1):
            if not self._is_closed_path(path, self.basepoint):
                raise MarkedGraphError(f"marking path {i} is not a closed edge path at the basepoint")
            if substitute(path, self.inverse_marking) != Word([i]):
                raise MarkedGraphError(f"marking path {i} does not map back to generator {i}")

    def _is_closed_path(self, path: Word, v: int) -> bool:
        cur = v
        for x in path.letters:
            if abs(x) > len(self.edges) or self.origin(x) != cur:
                return False
            cur = self.terminus(x)
        return cur == v

    def __repr__(self) -> str:
        lengths = ", ".join(str(e.length) for e in self.edges)
        return f"MarkedGraph(vertices={self.num_vertices}, edges=[{lengths}], rank={self.rank})"

    # -- metric changes -----------------------------------------------------

    def with_lengths(self, lengths: Sequence[Length]) -> "MarkedGraph":
        edges = [Edge(e.tail, e.head, as_length(l)) for e, l in zip(self.edges, lengths)]
        return MarkedGraph(self.num_vertices, edges, self.marking, self.inverse_marking, self.basepoint, check=False)

    def scaled(self, factor: Length) -> "MarkedGraph":
        return self.with_lengths([e.length * factor for e in self.edges])

    def normalized(self) -> "MarkedGraph":
        volume = self.volume
        if isinstance(volume, Fraction):
            return self.scaled(1 / volume)
        return self.scaled(1.0 / volume)

    # -- words and loops ----------------------------------------------------

    def translate(self, w: Union[Word, str]) -> Word:
        """Closed edge path at the basepoint representing w."""
        return substitute(as_word(w, self.rank), self.marking)

    def loop(self, alpha: ClassLike) -> Word:
        """Cyclically tightened edge loop representing a conjugacy class."""
        word = alpha.word if isinstance(alpha, ConjugacyClass) else as_word(alpha, self.rank)
        loop = cyclic_reduce(self.translate(word)).core
        if not loop:
            raise TrivialClassError("length of the trivial class is undefined")
        return loop

    def to_free(self, path: Word) -> Word:
        """Element of F carried by an edge path (a loop up to conjugacy)."""
        return substitute(path, self.inverse_marking)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": self.num_vertices,
            "basepoint": self.basepoint,
            "edges": [[e.tail, e.head, str(e.length)] for e in self.edges],
            "marking": [list(p.letters) for p in self.marking],
            "inverse_marking": [str(w) for w in self.inverse_marking],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarkedGraph":
        rank = len(data["marking"])
        return cls(
            int(data["vertices"]),
            [Edge(t, h, as_length(l)) for t, h, l in data["edges"]],
            [Word(p) for p in data["marking"]],
            [as_word(w, rank) for w in data["inverse_marking"]],
            int(data.get("basepoint", 0)),
        )

    def same_point(self, other: "MarkedGraph") -> bool:
        """Identical graph, lengths, marking and homotopy inverse."""
        return self.to_dict() == other.to_dict()


# ---------------------------------------------------------------------------
# Topology helpers
# ---------------------------------------------------------------------------

class SuperEdge(NamedTuple):
    tail: int
    head: int
    path: Word


def smoothed_topology(graph: MarkedGraph) -> Tuple[List[int], List[SuperEdge]]:
    """Branch vertices (valence != 2, plus the basepoint) and the edge chains between them."""
    branch = [v for v in range(graph.num_vertices) if graph.valence(v) != 2 or v == graph.basepoint]
    branch_set = set(branch)
    used = set()
    chains: List[SuperEdge] = []
    for v in branch:
        for x in graph.letters_at(v):
            if abs(x) in used:
                continue
            letters = [x]
            used.add(abs(x))
            end = graph.terminus(x)
            while end not in branch_set:
                nxt = [y for y in graph.letters_at(end) if y != -letters[-1]][0]
                letters.append(nxt)
                used.add(abs(nxt))
                end = graph.terminus(nxt)
            chains.append(SuperEdge(v, end, Word(letters)))
    return branch, chains


def _chain_letters(chains: Sequence[SuperEdge]) -> Dict[int, List[Tuple[int, int]]]:
    out: Dict[int, List[Tuple[int, int]]] = {}
    for k, chain in enumerate(chains, start=1):
        out.setdefault(chain.tail, []).append((k, chain.head))
        out.setdefault(chain.head, []).append((-k, chain.tail))
    return out


def _expand(letters: Sequence[int], chains: Sequence[SuperEdge]) -> Word:
    out: List[int] = []
    for k in letters:
        path = chains[abs(k) - 1].path
        out.extend(path.letters if k > 0 else (~path).letters)
    return Word(out)


class _Cycle(NamedTuple):
    letters: Tuple[int, ...]
    vertices: Tuple[int, ...]


def _simple_cycles(chains: Sequence[SuperEdge]) -> List[_Cycle]:
    adjacency = _chain_letters(chains)
    seen = set()
    cycles: List[_Cycle] = []
    for start in sorted(adjacency):
        stack = [(start, (), (start,))]
        while stack:
            v, path, verts = stack.pop()
            for k, w in reversed(adjacency[v]):
                if abs(k) in {abs(x) for x in path}:
                    continue
                if w == start:
                    key = frozenset(abs(x) for x in path + (k,))
                    if key not in seen:
                        seen.add(key)
                        cycles.append(_Cycle(path + (k,), verts))
                elif w > start and w not in verts:
                    stack.append((w, path + (k,), verts + (w,)))
    cycles.sort(key=lambda c: (len(c.letters), sorted(abs(x) for x in c.letters)))
    return cycles


def _rotate_to(cycle: _Cycle, v: int) -> Tuple[int, ...]:
    i = cycle.vertices.index(v)
    return cycle.letters[i:] + cycle.letters[:i]


def _invert(letters: Sequence[int]) -> Tuple[int, ...]:
    return tuple(-x for x in reversed(letters))


def _arcs_between(adjacency, start: int, blocked: set, targets: set) -> Iterator[Tuple[Tuple[int, ...], int]]:
    """Simple chain paths from start whose interior avoids blocked and which end in targets."""
    stack = [(start, (), {start})]
    while stack:
        v, path, visited = stack.pop()
        for k, w in adjacency.get(v, []):
            if w in targets:
                yield path + (k,), w
            elif w not in blocked and w not in visited:
                stack.append((w, path + (k,), visited | {w}))


def embedded_circles(graph: MarkedGraph) -> List[Word]:
    _, chains = smoothed_topology(graph)
    return [_expand(c.letters, chains) for c in _simple_cycles(chains)]


def candidate_paths(graph: MarkedGraph) -> List[Word]:
    """Embedded circles, figure-eights and barbells as closed edge paths."""
    _, chains = smoothed_topology(graph)
    cycles = _simple_cycles(chains)
    adjacency = _chain_letters(chains)
    loops: List[Tuple[int, ...]] = [c.letters for c in cycles]
    for c1, c2 in combinations(cycles, 2):
        shared = set(c1.vertices) & set(c2.vertices)
        edges1 = {abs(x) for x in c1.letters}
        edges2 = {abs(x) for x in c2.letters}
        if edges1 & edges2:
            continue
        if len(shared) == 1:
            v = next(iter(shared))
            a, b = _rotate_to(c1, v), _rotate_to(c2, v)
            loops.append(a + b)
            loops.append(a + _invert(b))
        elif not shared:
            blocked = set(c1.vertices) | set(c2.vertices)
            for u in c1.vertices:
                for arc, w in _arcs_between(adjacency, u, blocked, set(c2.vertices)):
                    if {abs(x) for x in arc} & (edges1 | edges2):
                        continue
                    a, b = _rotate_to(c1, u), _rotate_to(c2, w)
                    loops.append(a + arc + b + _invert(arc))
                    loops.append(a + arc + _invert(b) + _invert(arc))
    return [_expand(letters, chains) for letters in loops]


def candidate_loops(graph: MarkedGraph) -> List[ConjugacyClass]:
    """Classes of the embedded circles, figure-eights and barbells of G, deduplicated in order."""
    out: List[ConjugacyClass] = []
    seen = set()
    for path in candidate_paths(graph):
        cls = ConjugacyClass(graph.to_free(path))
        if cls.is_trivial or cls in seen:
            continue
        seen.add(cls)
        out.append(cls)
    return out


def contract_forest(graph: MarkedGraph, forest: Sequence[int]) -> Tuple[MarkedGraph, List[int]]:
    """Collapse a forest of edges to points.

    Kept edges stay in their old order. The homotopy inverse is rewritten by
    vertex potentials so the forest carries the trivial word, which keeps every
    marking loop mapping back to its generator. Returns the quotient and the
    new index of each old vertex.
    """
    forest = set(forest)
    n = graph.num_vertices
    parent = list(range(n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    adjacency: Dict[int, List[Tuple[int, int]]] = {v: [] for v in range(n)}
    for e in sorted(forest):
        edge = graph.edges[e]
        a, b = find(edge.tail), find(edge.head)
        if a == b:
            raise MarkedGraphError(f"edge {e} closes a cycle; only forests can be collapsed")
        parent[max(a, b)] = min(a, b)
        adjacency[edge.tail].append((e + 1, edge.head))
        adjacency[edge.head].append((-(e + 1), edge.tail))

    potential: Dict[int, Word] = {}
    for root in [graph.basepoint] + list(range(n)):
        if root in potential:
            continue
        potential[root] = Word()
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for x, w in adjacency[v]:
                if w not in potential:
                    h = graph.inverse_marking[abs(x) - 1]
                    potential[w] = potential[v] * (h if x > 0 else ~h)
                    queue.append(w)

    roots = sorted({find(v) for v in range(n)})
    index = {r: i for i, r in enumerate(roots)}
    vertex_map = [index[find(v)] for v in range(n)]
    kept = [e for e in range(len(graph.edges)) if e not in forest]
    letters = {e: k + 1 for k, e in enumerate(kept)}
    images = [Word([letters[e]]) if e in letters else Word() for e in range(len(graph.edges))]
    edges = [Edge(vertex_map[graph.edges[e].tail], vertex_map[graph.edges[e].head], graph.edges[e].length)
             for e in kept]
    marking = [substitute(m, images) for m in graph.marking]
    inverse = [potential[graph.edges[e].tail] * graph.inverse_marking[e] * ~potential[graph.edges[e].head]
               for e in kept]
    return MarkedGraph(len(roots), edges, marking, inverse, vertex_map[graph.basepoint]), vertex_map


# ---------------------------------------------------------------------------
# Length functions and the Lipschitz metric
# ---------------------------------------------------------------------------

def length_of_class(graph: MarkedGraph, alpha: ClassLike) -> Length:
    """Length of the immersed loop representing alpha in G."""
    return graph.path_length(graph.loop(alpha))


class LipschitzRatio(NamedTuple):
    ratio: Length
    witness: ConjugacyClass


def _check_ranks(g: MarkedGraph, h: MarkedGraph) -> None:
    if g.rank != h.rank:
        raise RankMismatchError(f"marked graphs of rank {g.rank} and {h.rank}")


def lipschitz_ratio(g: MarkedGraph, h: MarkedGraph) -> LipschitzRatio:
    """Maximal ratio len(alpha|H)/len(alpha|G) over the candidates of G, with a witness."""
    _check_ranks(g, h)
    best = None
    for alpha in candidate_loops(g):
        ratio = length_of_class(h, alpha) / length_of_class(g, alpha)
        if best is None or ratio > best.ratio:
            best = LipschitzRatio(ratio, alpha)
    return best


def lipschitz_distance(g: MarkedGraph, h: MarkedGraph) -> float:
    """d(G, H) = log max over candidates of G of len(alpha|H)/len(alpha|G)."""
    return math.log(lipschitz_ratio(g, h).ratio)


def symmetrized_distance(g: MarkedGraph, h: MarkedGraph) -> float:
    return lipschitz_distance(g, h) + lipschitz_distance(h, g)


def is_marked_isometric(g: MarkedGraph, h: MarkedGraph) -> bool:
    if abs(float(g.volume) - float(h.volume)) > TOLERANCE:
        return False
    return lipschitz_distance(g, h) <= TOLERANCE and lipschitz_distance(h, g) <= TOLERANCE


def asymmetry_ratio(g: MarkedGraph, h: MarkedGraph) -> Optional[float]:
    """dsym(G,H) / d(G,H), or None when d(G,H) vanishes."""
    d = lipschitz_distance(g, h)
    if d <= TOLERANCE:
        return None
    return (d + lipschitz_distance(h, g)) / d


class ThickCheck(NamedTuple):
    is_thick: bool
    systole: Length
    witness: ConjugacyClass


def thick_check(graph: MarkedGraph, epsilon: float) -> ThickCheck:
    """Whether every class has length >= epsilon; the systole is attained on an embedded circle."""
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    best_len, best_cls = None, None
    for path in embedded_circles(graph):
        length = graph.path_length(path)
        if best_len is None or length < best_len:
            best_len, best_cls = length, ConjugacyClass(graph.to_free(path))
    return ThickCheck(best_len >= epsilon - TOLERANCE, best_len, best_cls)


# ---------------------------------------------------------------------------
# Factor projection
# ---------------------------------------------------------------------------

def factor_projection(graph: MarkedGraph) -> List[SubgroupGraph]:
    """Free factors carried by the proper connected noncontractible core subgraphs of G."""
    _, chains = smoothed_topology(graph)
    factors: List[SubgroupGraph] = []
    k = len(chains)
    for size in range(1, k):
        for subset in combinations(range(k), size):
            basis = _subgraph_basis(chains, subset)
            if basis is None or not (1 <= len(basis) < graph.rank):
                continue
            words = [graph.to_free(_expand(loop, chains)) for loop in basis]
            factors.append(stallings_graph(words, graph.rank))
    factors.sort(key=lambda f: (f.subgroup_rank, [w.shortlex_key() for w in f.generators]))
    return factors


def _subgraph_basis(chains: Sequence[SuperEdge], subset: Sequence[int]) -> Optional[List[Tuple[int, ...]]]:
    """Spanning-tree loops of a connected core subgraph, or None if it is not one."""
    valence: Dict[int, int] = {}
    for i in subset:
        valence[chains[i].tail] = valence.get(chains[i].tail, 0) + 1
        valence[chains[i].head] = valence.get(chains[i].head, 0) + 1
    if any(d < 2 for d in valence.values()):
        return None
    root = min(valence)
    tree_path: Dict[int, Tuple[int, ...]] = {root: ()}
    tree = set()
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for i in subset:
            chain = chains[i]
            for start, end, letter in ((chain.tail, chain.head, i + 1), (chain.head, chain.tail, -(i + 1))):
                if start == v and end not in tree_path:
                    tree_path[end] = tree_path[v] + (letter,)
                    tree.add(i)
                    queue.append(end)
    if len(tree_path) != len(valence):
        return None
    loops = []
    for i in subset:
        if i in tree:
            continue
        chain = chains[i]
        loops.append(tree_path[chain.tail] + (i + 1,) + _invert(tree_path[chain.head]))
    return loops


# ---------------------------------------------------------------------------
# The action of Aut(F) and finite covers
# ---------------------------------------------------------------------------

def act(phi: Automorphism, graph: MarkedGraph) -> MarkedGraph:
    """phi . G, with length_of_class(act(phi, G), alpha) == length_of_class(G, phi^-1(alpha))."""
    if phi.rank != graph.rank:
        raise RankMismatchError(f"automorphism of rank {phi.rank} acting on a rank {graph.rank} graph")
    marking = [substitute(w, graph.marking) for w in phi.inverse_images]
    inverse = [apply(phi, w) for w in graph.inverse_marking]
    return MarkedGraph(graph.num_vertices, graph.edges, marking, inverse, graph.basepoint)


def cover(graph: MarkedGraph, subgroup: SubgroupGraph, normalize: bool = False) -> MarkedGraph:
    """The cover of G corresponding to a finite-index H, marked in the spanning-tree basis of H.

    Vertex (v, j) is v * n + j and the lift of edge e starting on sheet j is e * n + j.
    """
    n = subgroup.index
    if n is None:
        raise InvalidInputError("cover needs a finite-index subgroup")
    if subgroup.rank != graph.rank:
        raise RankMismatchError("subgroup and graph ranks differ")
    edges: List[Edge] = []
    inverse: List[Word] = []
    for e, edge in enumerate(graph.edges):
        word = graph.inverse_marking[e]
        for j in range(n):
            end, h_word = subgroup.read_in_basis(j, word)
            edges.append(Edge(edge.tail * n + j, edge.head * n + end, edge.length))
            inverse.append(h_word)
    marking: List[Word] = []
    for h in subgroup.basis():
        sheet = 0
        letters: List[int] = []
        for x in graph.translate(h).letters:
            e = abs(x) - 1
            if x > 0:
                letters.append(e * n + sheet + 1)
                sheet = subgroup.read(sheet, graph.inverse_marking[e])
            else:
                sheet = subgroup.read(sheet, ~graph.inverse_marking[e])
                letters.append(-(e * n + sheet + 1))
        marking.append(Word(letters))
    lifted = MarkedGraph(graph.num_vertices * n, edges, marking, inverse, graph.basepoint * n)
    return lifted.normalized() if normalize else lifted


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

RANK_THREE_TOPOLOGIES = {
    "rose": (1, [(0, 0), (0, 0), (0, 0)]),
    "theta": (2, [(0, 1), (0, 1), (0, 1), (0, 1)]),
    "barbell": (2, [(0, 0), (0, 1), (0, 1), (1, 1)]),
    "tetrahedron": (4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
}


def random_automorphism(rng: np.random.Generator, rank: int, depth: int) -> Automorphism:
    moves = elementary_nielsen_moves(rank)
    phi = Automorphism.identity(rank)
    for _ in range(depth):
        phi = compose(moves[int(rng.integers(len(moves)))], phi)
    return phi


def random_marked_graph(rng: np.random.Generator, topology: str = "rose", depth: int = 3,
                        max_weight: int = 9) -> MarkedGraph:
    """Volume-one rank-3 graph with integer-ratio lengths and a scrambled marking."""
    if topology not in RANK_THREE_TOPOLOGIES:
        raise InvalidInputError(f"unknown topology {topology!r}")
    n, pairs = RANK_THREE_TOPOLOGIES[topology]
    edges = [(t, h, Fraction(int(rng.integers(1, max_weight + 1)))) for t, h in pairs]
    graph = MarkedGraph.from_edges(n, edges).normalized()
    return act(random_automorphism(rng, graph.rank, depth), graph)
