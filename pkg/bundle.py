"""
The Cayley-graph bundle of an extension E = <i_x1, ..., i_xr, t_1, ..., t_n> <= Aut(F).

Gamma is the quotient of E by the inner automorphisms. Base words are words
in its generators s_1..s_n and use the free-group alphabet (a = s_1, b = s_2,
...). A base word b = s_i1 ... s_ik lifts to lift(b) = t_i1 ... t_ik, so lift
is a homomorphism from the free group on the s_i. The fiber over b is the tree
of elements lift(b) * i_w, w in F, and the fiberwise distance is |w|.

Cayley graph edges join u and u * w for w in W = {i_x, t_i} and their inverses.
Breadth-first searches expand W in a fixed order, so the geodesics they return
are the lexicographically least ones.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy import stats
from tqdm import tqdm

from errors import InvalidInputError, NotAFiberPairError, RankMismatchError, SubgroupNotPreservedError, TrivialClassError
from free_group import (
    EMPTY,
    Automorphism,
    ConjugacyClass,
    FreeGroup,
    SubgroupGraph,
    Word,
    apply,
    as_class,
    as_word,
    compose,
    cyclic_reduce,
    induced_automorphism,
    is_inner,
    power,
    unparse_letter,
)
from outer_space import TOLERANCE, Length, MarkedGraph, act, cover, length_of_class, lipschitz_distance

logger = logging.getLogger("bundle")

DEFAULT_BFS_CAP = 5_000_000
DEFAULT_MAX_POWER = 12

ClassLike = Union[ConjugacyClass, Word, str]
BaseLike = Union[Word, str]


class Move(NamedTuple):
    label: str
    automorphism: Automorphism
    base_letter: int  # 0 for fiber edges


class ExtensionPresentation:
    """Lifts t_1..t_n of the generators of Gamma; each carries its inverse."""

    def __init__(self, rank: int, generators: Sequence[Automorphism] = (), names: Sequence[str] = ()):
        for i, t in enumerate(generators, start=1):
            if t.rank != rank:
                raise RankMismatchError(f"t{i} has rank {t.rank}, expected {rank}")
        self.rank = rank
        self.generators = tuple(generators)
        self.names = tuple(names) if names else tuple(f"t{i}" for i in range(1, len(self.generators) + 1))

    @classmethod
    def from_strings(cls, rank: int, generators: Sequence[Tuple[Sequence[str], Sequence[str]]],
                     names: Sequence[str] = ()) -> "ExtensionPresentation":
        return cls(rank, [Automorphism.from_strings(images, inverse, rank) for images, inverse in generators], names)

    def __repr__(self) -> str:
        gens = "; ".join(f"{name}: {t}" for name, t in zip(self.names, self.generators))
        return f"ExtensionPresentation(rank={self.rank}, [{gens}])"

    @property
    def num_generators(self) -> int:
        return len(self.generators)

    @property
    def mu_bl(self) -> int:
        """Largest |t_i(x)| or |t_i^-1(x)| over generators and basis elements."""
        return max((len(w) for t in self.generators for w in t.images + t.inverse_images), default=1)

    def base_word(self, base: BaseLike) -> Word:
        return as_word(base, self.num_generators)

    def move(self, x: int) -> Automorphism:
        t = self.generators[abs(x) - 1]
        return t if x > 0 else t.inverse

    def lift(self, base: BaseLike) -> Automorphism:
        result = Automorphism.identity(self.rank)
        for x in self.base_word(base).letters:
            result = compose(result, self.move(x))
        return result

    @cached_property
    def cayley_generators(self) -> Tuple[Move, ...]:
        """W and its inverses in search order: i_a, i_A, i_b, ..., t1, t1^-1, t2, ..."""
        moves = []
        for i in range(1, self.rank + 1):
            for x in (i, -i):
                moves.append(Move(f"i_{unparse_letter(x)}", Automorphism.inner(Word([x]), self.rank), 0))
        for i, (name, t) in enumerate(zip(self.names, self.generators), start=1):
            moves.append(Move(name, t, i))
            moves.append(Move(f"{name}^-1", t.inverse, -i))
        return tuple(moves)

    @cached_property
    def _probes(self) -> Tuple[Word, ...]:
        basis = [Word([i]) for i in range(1, self.rank + 1)]
        pairs = [Word([i, s * j]) for i in range(1, self.rank + 1) for j in range(i + 1, self.rank + 1) for s in (1, -1)]
        return tuple(basis + pairs)

    def outer_key(self, phi: Automorphism) -> Tuple[ConjugacyClass, ...]:
        """Conjugacy classes of images of fixed probe words; equal for phi and i_w * phi."""
        return tuple(ConjugacyClass(apply(phi, w)) for w in self._probes)

    # -- elements -----------------------------------------------------------

    def identity(self) -> "BundleElement":
        return BundleElement(Automorphism.identity(self.rank))

    def inner(self, a: Union[Word, str]) -> "BundleElement":
        a = as_word(a, self.rank)
        return BundleElement(Automorphism.inner(a, self.rank), tuple(f"i_{unparse_letter(x)}" for x in a.letters))

    def t(self, i: int) -> "BundleElement":
        return BundleElement(self.generators[i - 1], (self.names[i - 1],))

    def element(self, point: "FiberPoint") -> "BundleElement":
        """lift(base) * i_element."""
        base = self.base_word(point.base)
        witness = tuple(self.names[abs(x) - 1] + ("" if x > 0 else "^-1") for x in base.letters)
        return BundleElement(self.lift(base), witness) * self.inner(point.element)


@dataclass(frozen=True, eq=False)
class BundleElement:
    """An element of E; equal when the automorphisms are."""

    automorphism: Automorphism
    witness: Tuple[str, ...] = ()

    def __eq__(self, other) -> bool:
        return isinstance(other, BundleElement) and self.automorphism == other.automorphism

    def __hash__(self) -> int:
        return hash(self.automorphism)

    def __mul__(self, other: "BundleElement") -> "BundleElement":
        return BundleElement(compose(self.automorphism, other.automorphism), self.witness + other.witness)

    @property
    def inverse(self) -> "BundleElement":
        return BundleElement(self.automorphism.inverse, tuple(_invert_label(x) for x in reversed(self.witness)))


def _invert_label(label: str) -> str:
    if label.startswith("i_"):
        return "i_" + label[2:].swapcase()
    return label[:-3] if label.endswith("^-1") else label + "^-1"


class FiberPoint(NamedTuple):
    """The vertex lift(base) * i_element of the fiber tree over base."""

    base: Word
    element: Word


class AxisDescription(NamedTuple):
    """Axis of i_a in the fiber over base: the line through conjugator reading core periodically."""

    base: Word
    conjugator: Word
    core: Word

    @property
    def translation_length(self) -> int:
        return len(self.core)


# ---------------------------------------------------------------------------
# The quotient Gamma
# ---------------------------------------------------------------------------

def gamma_equal(presentation: ExtensionPresentation, g: BaseLike, h: BaseLike) -> bool:
    """g == h in Gamma: lift(g)^-1 lift(h) is inner."""
    return is_inner(compose(presentation.lift(g).inverse, presentation.lift(h))) is not None


@dataclass
class GammaBall:
    presentation: ExtensionPresentation
    radius: int
    elements: List[Word] = field(default_factory=list)
    lifts: List[Automorphism] = field(default_factory=list, repr=False)
    _buckets: Dict[tuple, List[int]] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.elements)

    def find(self, phi: Automorphism) -> Optional[int]:
        """Index of the element whose lift agrees with phi up to an inner automorphism."""
        for i in self._buckets.get(self.presentation.outer_key(phi), ()):
            if is_inner(compose(self.lifts[i].inverse, phi)) is not None:
                return i
        return None

    def length(self, g: BaseLike) -> Optional[int]:
        """Word length of g in Gamma, or None when g lies outside the ball."""
        i = self.find(self.presentation.lift(g))
        return None if i is None else len(self.elements[i])

    def _add(self, word: Word, lift: Automorphism) -> int:
        self.elements.append(word)
        self.lifts.append(lift)
        self._buckets.setdefault(self.presentation.outer_key(lift), []).append(len(self.elements) - 1)
        return len(self.elements) - 1


def gamma_ball(presentation: ExtensionPresentation, radius: int) -> GammaBall:
    """Ball of given radius in Gamma, each element with its lexicographically least geodesic word."""
    ball = GammaBall(presentation, radius)
    ball._add(EMPTY, Automorphism.identity(presentation.rank))
    letters = [x for i in range(1, presentation.num_generators + 1) for x in (i, -i)]
    frontier = [0]
    for _ in range(radius):
        nxt = []
        for index in frontier:
            word, lift = ball.elements[index], ball.lifts[index]
            for x in letters:
                if word.letters and word.letters[-1] == -x:
                    continue
                grown = compose(lift, presentation.move(x))
                if ball.find(grown) is None:
                    nxt.append(ball._add(word * Word([x]), grown))
        frontier = nxt
    logger.debug("Gamma ball of radius %d has %d elements", radius, len(ball))
    return ball


def gamma_distance(presentation: ExtensionPresentation, g: BaseLike, h: BaseLike,
                   ball: Optional[GammaBall] = None) -> Optional[int]:
    """d_Gamma(g, h); None when a supplied ball is too small to contain g^-1 h."""
    offset = ~presentation.base_word(g) * presentation.base_word(h)
    if ball is None:
        ball = gamma_ball(presentation, len(offset))
    return ball.length(offset)


# ---------------------------------------------------------------------------
# Fibers and the bundle metric
# ---------------------------------------------------------------------------

def fiber_distance(u: BundleElement, v: BundleElement) -> int:
    """|w| where u^-1 v = i_w."""
    w = is_inner(compose(u.automorphism.inverse, v.automorphism))
    if w is None:
        raise NotAFiberPairError(f"{u.witness} and {v.witness} lie in different fibers")
    return len(w)


class _Search(NamedTuple):
    distance: Dict[Automorphism, int]
    parent: Dict[Automorphism, Tuple[Optional[Automorphism], int]]
    found: Optional[Automorphism]
    exceeded: bool


def _breadth_first(presentation: ExtensionPresentation, sources: Sequence[Automorphism], cap: int,
                   radius: Optional[int] = None, goal: Optional[Callable[[Automorphism], bool]] = None,
                   progress: bool = False) -> _Search:
    distance = {s: 0 for s in sources}
    parent: Dict[Automorphism, Tuple[Optional[Automorphism], int]] = {s: (None, -1) for s in sources}
    if goal is not None:
        for s in sources:
            if goal(s):
                return _Search(distance, parent, s, False)
    moves = presentation.cayley_generators
    queue = deque(distance)
    with tqdm(total=cap, disable=not progress, desc="bundle search", unit="node") as bar:
        while queue:
            node = queue.popleft()
            d = distance[node]
            if radius is not None and d >= radius:
                continue
            for k, move in enumerate(moves):
                nxt = compose(node, move.automorphism)
                if nxt in distance:
                    continue
                distance[nxt] = d + 1
                parent[nxt] = (node, k)
                bar.update(1)
                if goal is not None and goal(nxt):
                    return _Search(distance, parent, nxt, False)
                if len(distance) >= cap:
                    logger.warning("⚠️ bundle search stopped at its cap of %d nodes", cap)
                    return _Search(distance, parent, None, True)
                queue.append(nxt)
    return _Search(distance, parent, None, False)


class Geodesic(NamedTuple):
    length: Optional[int]
    labels: Tuple[str, ...]
    vertices: Tuple[BundleElement, ...]
    base_letters: Tuple[int, ...]
    explored: int

    @property
    def exceeded(self) -> bool:
        return self.length is None


def bundle_geodesic(presentation: ExtensionPresentation, u: BundleElement, v: BundleElement,
                    cap: int = DEFAULT_BFS_CAP, progress: bool = False) -> Geodesic:
    """Lexicographically least geodesic from u to v; length None when the cap was hit first."""
    target = compose(u.automorphism.inverse, v.automorphism)
    search = _breadth_first(presentation, [Automorphism.identity(presentation.rank)], cap,
                            goal=lambda node: node == target, progress=progress)
    if search.found is None:
        return Geodesic(None, (), (), (), len(search.distance))
    steps = []
    node = search.found
    while search.parent[node][0] is not None:
        node, k = search.parent[node]
        steps.append(k)
    steps.reverse()
    moves = presentation.cayley_generators
    vertices = [u]
    for k in steps:
        vertices.append(vertices[-1] * BundleElement(moves[k].automorphism, (moves[k].label,)))
    return Geodesic(len(steps), tuple(moves[k].label for k in steps), tuple(vertices),
                    tuple(moves[k].base_letter for k in steps), len(search.distance))


def bundle_distance(presentation: ExtensionPresentation, u: BundleElement, v: BundleElement,
                    cap: int = DEFAULT_BFS_CAP) -> Optional[int]:
    return bundle_geodesic(presentation, u, v, cap).length


def bundle_ball(presentation: ExtensionPresentation, radius: int,
                cap: int = DEFAULT_BFS_CAP) -> Tuple[nx.Graph, bool]:
    """Ball about the identity in the Cayley graph of E, and whether the cap cut it short."""
    search = _breadth_first(presentation, [Automorphism.identity(presentation.rank)], cap, radius=radius)
    graph = nx.Graph()
    graph.add_nodes_from(search.distance)
    for node in search.distance:
        for move in presentation.cayley_generators:
            nxt = compose(node, move.automorphism)
            if nxt != node and nxt in search.distance:
                graph.add_edge(node, nxt)
    return graph, search.exceeded


# ---------------------------------------------------------------------------
# Axes and fiber projection
# ---------------------------------------------------------------------------

def axis_in_fiber(presentation: ExtensionPresentation, a: Union[Word, str], base: BaseLike = EMPTY) -> AxisDescription:
    """Axis of i_a acting on the fiber over base, where it translates by lift(base)^-1(a)."""
    a = as_word(a, presentation.rank)
    if not cyclic_reduce(a).core:
        raise TrivialClassError("the trivial element has no axis")
    base = presentation.base_word(base)
    core, conjugator = cyclic_reduce(apply(presentation.lift(base).inverse, a))
    return AxisDescription(base, conjugator, core)


def fiber_projection(point: FiberPoint, axis: AxisDescription) -> FiberPoint:
    """Closest point of the axis to point in the fiber tree."""
    if as_word(point.base) != axis.base:
        raise NotAFiberPairError("point and axis lie in different fibers")
    offset = (~axis.conjugator * as_word(point.element)).letters
    best: Tuple[int, ...] = ()
    for ray in (axis.core.letters, (~axis.core).letters):
        k = 0
        while k < len(offset) and offset[k] == ray[k % len(ray)]:
            k += 1
        if k > len(best):
            best = offset[:k]
    return FiberPoint(axis.base, axis.conjugator * Word(best))


class SectionPoint(NamedTuple):
    point: FiberPoint
    jump: int


def section_through_axis(presentation: ExtensionPresentation, a: Union[Word, str],
                         base_path: BaseLike) -> List[SectionPoint]:
    """Carry a point of the axis of i_a along base_path: cross each t-edge, then project back to the axis.

    jump is the fiber distance covered by the projection after each crossing.
    """
    axis = axis_in_fiber(presentation, a)
    point = fiber_projection(FiberPoint(EMPTY, EMPTY), axis)
    rows = [SectionPoint(point, 0)]
    base = EMPTY
    for x in presentation.base_word(base_path).letters:
        # lift(b) i_e t = lift(b t) i_{t^-1(e)}
        base = base * Word([x])
        crossed = FiberPoint(base, apply(presentation.move(x).inverse, point.element))
        point = fiber_projection(crossed, axis_in_fiber(presentation, a, base))
        rows.append(SectionPoint(point, len(~crossed.element * point.element)))
    return rows


# ---------------------------------------------------------------------------
# Orbit lengths, containment and flaring
# ---------------------------------------------------------------------------

class MinSet(NamedTuple):
    min_length: Length
    members: List[Word]
    table: List[Tuple[Word, Length]]


def min_set(presentation: ExtensionPresentation, alpha: ClassLike, graph: MarkedGraph, ball: GammaBall) -> MinSet:
    """Minimal len(alpha | g.R) over the ball and the elements within twice of it."""
    alpha = as_class(alpha)
    table = [(g, length_of_class(act(lift, graph), alpha)) for g, lift in zip(ball.elements, ball.lifts)]
    smallest = min(length for _, length in table)
    members = [g for g, length in table if length <= 2 * smallest]
    return MinSet(smallest, members, table)


def axis_overlap(beta: ClassLike, alpha: ClassLike, graph: MarkedGraph) -> Length:
    """Longest common segment of axes of beta and alpha in the universal cover of G."""
    p = graph.loop(beta).letters
    q = graph.loop(alpha).letters
    limit = len(p) + len(q)
    best: Length = 0
    for seq in (q, (~Word(q)).letters):
        for i in range(len(p)):
            for j in range(len(seq)):
                k, total = 0, 0
                while k < limit and p[(i + k) % len(p)] == seq[(j + k) % len(seq)]:
                    total += graph.edge_length(p[(i + k) % len(p)])
                    k += 1
                if k == limit:
                    return math.inf
                best = max(best, total)
    return best


def almost_contained(beta: ClassLike, alpha: ClassLike, graph: MarkedGraph, k: float) -> bool:
    """beta is k-almost contained in alpha at G.

    A fundamental domain of beta's axis minus alpha's axis is a connected
    segment of length <= k exactly when the axes share a segment of length
    >= len(beta) - k.
    """
    length = float(length_of_class(graph, beta))
    return float(axis_overlap(beta, alpha, graph)) >= length - k - TOLERANCE


class FlareRow(NamedTuple):
    element: Word
    distance: int
    length: float
    contained: bool


class FlareFit(NamedTuple):
    rows: List[FlareRow]
    growth: Optional[float]
    constant: Optional[float]
    r_squared: Optional[float] = None

    @property
    def exponential(self) -> bool:
        return self.growth is not None and self.growth > 1 + TOLERANCE


def flare_measure(presentation: ExtensionPresentation, alpha: ClassLike, beta: ClassLike, g0: BaseLike,
                  graph: MarkedGraph, radius: int, k: float = 0.0) -> FlareFit:
    """len(beta | h.R) for h = g0 w, |w| <= radius, with a fit of the worst log-length per distance.

    growth and constant fit len(beta | h.R) >= C growth^d len(beta | g0.R); both are
    None when fewer than two distances are available. g0 must lie in the min set
    of alpha over the same ball.
    """
    g0 = presentation.base_word(g0)
    start = presentation.lift(g0)
    rows = []
    ball = gamma_ball(presentation, radius)
    index = ball.find(start)
    if index is None or ball.elements[index] not in min_set(presentation, alpha, graph, ball).members:
        raise InvalidInputError(f"base point {g0} is not in the min set of {as_class(alpha)} within radius {radius}")
    for w, lift in zip(ball.elements, ball.lifts):
        target = act(compose(start, lift), graph)
        rows.append(FlareRow(g0 * w, len(w), float(length_of_class(target, beta)),
                             almost_contained(beta, alpha, target, k)))
    worst: Dict[int, float] = {}
    for row in rows:
        worst[row.distance] = min(worst.get(row.distance, math.inf), row.length)
    if len(worst) < 2:
        return FlareFit(rows, None, None)
    distances = np.array(sorted(worst), dtype=float)
    fit = stats.linregress(distances, np.log([worst[int(d)] for d in distances]))
    base_length = worst[0]
    logger.info("flare fit for %s: growth %.6g per step", as_class(beta), math.exp(fit.slope))
    return FlareFit(rows, math.exp(fit.slope), math.exp(fit.intercept) / base_length, fit.rvalue ** 2)


# ---------------------------------------------------------------------------
# Width and quasiconvexity experiments
# ---------------------------------------------------------------------------

class WidthRow(NamedTuple):
    power: int
    geodesic_length: Optional[int]
    diameter: Optional[int]


def _gamma_diameter(presentation: ExtensionPresentation, base_letters: Sequence[int]) -> int:
    letters = [x for x in base_letters if x]
    if not letters:
        return 0
    ball = gamma_ball(presentation, len(letters))
    prefixes = [Word(letters[:i]) for i in range(len(letters) + 1)]
    best = 0
    for i in range(len(prefixes)):
        for j in range(i + 1, len(prefixes)):
            best = max(best, ball.length(~prefixes[i] * prefixes[j]))
    return best


def width_estimate(presentation: ExtensionPresentation, a: Union[Word, str], powers: Sequence[int],
                   cap: int = DEFAULT_BFS_CAP, progress: bool = False) -> List[WidthRow]:
    """diam_Gamma of the projection of a geodesic from i_{a^-N} to i_{a^N}, for each N.

    Stops at the first N whose search hits the cap; that row has None entries.
    """
    a = as_word(a, presentation.rank)
    if not cyclic_reduce(a).core:
        raise TrivialClassError("width of the trivial element is undefined")
    rows = []
    for n in powers:
        path = bundle_geodesic(presentation, presentation.inner(a ** -n), presentation.inner(a ** n), cap, progress)
        if path.exceeded:
            rows.append(WidthRow(n, None, None))
            break
        rows.append(WidthRow(n, path.length, _gamma_diameter(presentation, path.base_letters)))
        logger.debug("width of %s at N=%d: %s", a, n, rows[-1])
    return rows


class QuasiconvexityRow(NamedTuple):
    max_length: int
    pairs: int
    max_offset: Optional[int]


def _distance_to_orbit(presentation: ExtensionPresentation, node: Automorphism,
                       subgroup: SubgroupGraph, cap: int) -> Optional[int]:
    def in_orbit(phi: Automorphism) -> bool:
        w = is_inner(phi)
        return w is not None and subgroup.contains(w)

    search = _breadth_first(presentation, [node], cap, goal=in_orbit)
    return None if search.found is None else search.distance[search.found]


def quasiconvexity_probe(presentation: ExtensionPresentation, subgroup: SubgroupGraph, lengths: Sequence[int],
                         cap: int = DEFAULT_BFS_CAP, max_pairs: Optional[int] = None,
                         rng: Optional[np.random.Generator] = None) -> List[QuasiconvexityRow]:
    """Largest distance from a bundle geodesic between points i_h, i_h' (h, h' in H) to the orbit {i_h : h in H}."""
    if subgroup.rank != presentation.rank:
        raise RankMismatchError("subgroup and presentation ranks differ")
    rows = []
    for n in lengths:
        orbit = [presentation.inner(h) for h in subgroup.closed_words(n)]
        pairs = [(i, j) for i in range(len(orbit)) for j in range(i + 1, len(orbit))]
        if max_pairs is not None and len(pairs) > max_pairs:
            rng = rng if rng is not None else np.random.default_rng(0)
            pairs = [pairs[int(i)] for i in sorted(rng.choice(len(pairs), size=max_pairs, replace=False))]
        offset: Optional[int] = 0
        for i, j in pairs:
            path = bundle_geodesic(presentation, orbit[i], orbit[j], cap)
            if path.exceeded:
                offset = None
                break
            for vertex in path.vertices:
                d = _distance_to_orbit(presentation, vertex.automorphism, subgroup, cap)
                if d is None:
                    offset = None
                    break
                offset = max(offset, d)
            if offset is None:
                break
        rows.append(QuasiconvexityRow(n, len(pairs), offset))
        if offset is None:
            logger.warning("⚠️ quasiconvexity probe stopped at length %d: search cap reached", n)
            break
    return rows


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def periodic_classes(phi: Automorphism, max_length: int, max_power: int = DEFAULT_MAX_POWER) -> List[Tuple[ConjugacyClass, int]]:
    """Classes of length <= max_length with phi^k(alpha) = alpha^+-1 for some 1 <= k <= max_power.

    An empty result is evidence for atoroidality, not a proof.
    """
    found = []
    for cls in FreeGroup(phi.rank).conjugacy_classes(max_length):
        image = cls.word
        for k in range(1, max_power + 1):
            image = cyclic_reduce(apply(phi, image)).core
            if ConjugacyClass(image) == cls:
                found.append((cls, k))
                break
    if not found:
        logger.info("no periodic classes up to length %d and power %d (heuristic)", max_length, max_power)
    return found


class BilipschitzReport(NamedTuple):
    checked: int
    worst_ratio: float
    violations: List[Tuple[str, Word]]


def bilipschitz_check(presentation: ExtensionPresentation, max_length: int, progress: bool = False) -> BilipschitzReport:
    """Check mu_bl^-1 d_b(u, v) <= d_bs(u t, v t) <= mu_bl d_b(u, v) over fiber pairs with |u^-1 v| <= max_length."""
    mu = presentation.mu_bl
    checked, worst, violations = 0, 1.0, []
    words = [w for w in FreeGroup(presentation.rank).words(max_length) if w]
    moves = [m for m in presentation.cayley_generators if m.base_letter]
    for w in tqdm(words, disable=not progress, desc="bilipschitz"):
        v = presentation.inner(w)
        for move in moves:
            t = BundleElement(move.automorphism, (move.label,))
            ratio = fiber_distance(t, v * t) / len(w)
            checked += 1
            worst = max(worst, ratio, 1 / ratio)
            if ratio > mu or ratio < 1 / mu:
                violations.append((move.label, w))
    return BilipschitzReport(checked, worst, violations)


class ProperRow(NamedTuple):
    bundle_distance: int
    min_fiber_distance: int
    max_fiber_distance: int
    pairs: int


class ProperProfile(NamedTuple):
    rows: List[ProperRow]
    exceeded: bool

    def properness(self, bundle_distance: int) -> int:
        """Largest fiber distance among fiber pairs at bundle distance <= the argument."""
        return max((r.max_fiber_distance for r in self.rows if r.bundle_distance <= bundle_distance), default=0)


def properness_pairs(presentation: ExtensionPresentation, radius: int, cap: int = DEFAULT_BFS_CAP) -> ProperProfile:
    """Fiber distance against bundle distance for the pairs (1, i_w) inside a bundle ball."""
    search = _breadth_first(presentation, [Automorphism.identity(presentation.rank)], cap, radius=radius)
    by_distance: Dict[int, List[int]] = {}
    for node, d in search.distance.items():
        w = is_inner(node)
        if w is not None:
            by_distance.setdefault(d, []).append(len(w))
    rows = [ProperRow(d, min(v), max(v), len(v)) for d, v in sorted(by_distance.items())]
    return ProperProfile(rows, search.exceeded)


# ---------------------------------------------------------------------------
# Finite-index lifts
# ---------------------------------------------------------------------------

class LiftRow(NamedTuple):
    generator: str
    power: int
    induced: Automorphism


def lift_presentation(presentation: ExtensionPresentation, subgroup: SubgroupGraph,
                      max_power: int = DEFAULT_MAX_POWER) -> Tuple[ExtensionPresentation, List[LiftRow]]:
    """Restrict the smallest power of each t_i that preserves H to H, in the spanning-tree basis of H."""
    rows = []
    for name, t in zip(presentation.names, presentation.generators):
        for k in range(1, max_power + 1):
            try:
                induced = induced_automorphism(power(t, k), subgroup)
            except SubgroupNotPreservedError:
                continue
            rows.append(LiftRow(name, k, induced))
            break
        else:
            raise SubgroupNotPreservedError(f"no power of {name} up to {max_power} preserves the subgroup")
    names = [row.generator if row.power == 1 else f"{row.generator}^{row.power}" for row in rows]
    lifted = ExtensionPresentation(subgroup.subgroup_rank, [row.induced for row in rows], names)
    return lifted, rows


class CoverRow(NamedTuple):
    source: Word
    target: Word
    distance: float
    lifted_distance: float


def cover_isometry_rows(presentation: ExtensionPresentation, subgroup: SubgroupGraph, graph: MarkedGraph,
                        ball: GammaBall) -> List[CoverRow]:
    """d(g.R, h.R) against d of their covers for H, over ordered pairs of the ball."""
    points = [act(lift, graph) for lift in ball.lifts]
    covers = [cover(p, subgroup) for p in points]
    rows = []
    for i, g in enumerate(ball.elements):
        for j, h in enumerate(ball.elements):
            if i != j:
                rows.append(CoverRow(g, h, lipschitz_distance(points[i], points[j]),
                                     lipschitz_distance(covers[i], covers[j])))
    return rows
