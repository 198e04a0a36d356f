"""
Finite-scale coarse geometry on weighted graphs.

Everything here is a supremum over finitely many points: the four-point
hyperbolicity constant, alignment constants of maps, properness profiles and
quasi-isometry constants. Scans are exhaustive up to a vertex budget and
sampled with a seeded generator beyond it; sampled values are lower estimates.
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, Hashable, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from errors import ConfigError, InvalidInputError

logger = logging.getLogger("coarse")

TOLERANCE = 1e-9
EXHAUSTIVE_TRIPLE_LIMIT = 300
EXHAUSTIVE_QUADRUPLE_LIMIT = 64
DEFAULT_SAMPLES = 200_000


class Estimate(NamedTuple):
    """A supremum over a finite scan; exhaustive=False marks a lower estimate."""

    value: float
    exhaustive: bool
    checked: int


class FiniteMetricGraph:
    """Connected graph with positive edge weights and its all-pairs distance table."""

    def __init__(self, num_vertices: int, edges: Sequence[Tuple[int, int, float]],
                 labels: Optional[Sequence[Hashable]] = None):
        if num_vertices < 1:
            raise InvalidInputError("a metric graph needs at least one vertex")
        weights: Dict[Tuple[int, int], float] = {}
        for u, v, w in edges:
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise InvalidInputError(f"edge ({u}, {v}) leaves the vertex range 0..{num_vertices - 1}")
            if w <= 0:
                raise InvalidInputError(f"edge ({u}, {v}) has nonpositive weight {w}")
            if u == v:
                continue
            key = (min(u, v), max(u, v))
            weights[key] = min(w, weights.get(key, math.inf))
        self.num_vertices = num_vertices
        self.edges: Tuple[Tuple[int, int, float], ...] = tuple((u, v, w) for (u, v), w in sorted(weights.items()))
        self.labels: Tuple[Hashable, ...] = tuple(labels) if labels is not None else tuple(range(num_vertices))
        if len(self.labels) != num_vertices:
            raise InvalidInputError("one label per vertex is required")
        self._index = {label: i for i, label in enumerate(self.labels)}
        rows = [u for u, _, _ in self.edges]
        cols = [v for _, v, _ in self.edges]
        data = [w for _, _, w in self.edges]
        matrix = coo_matrix((data, (rows, cols)), shape=(num_vertices, num_vertices)).tocsr()
        components, _ = connected_components(matrix, directed=False)
        if components != 1:
            raise InvalidInputError(f"metric graph is not connected ({components} components)")
        self.distances = shortest_path(matrix, directed=False)
        self.distances.setflags(write=False)

    def __len__(self) -> int:
        return self.num_vertices

    def __repr__(self) -> str:
        return f"FiniteMetricGraph(vertices={self.num_vertices}, edges={len(self.edges)})"

    @classmethod
    def from_networkx(cls, graph: nx.Graph, weight: str = "weight") -> "FiniteMetricGraph":
        labels = list(graph.nodes)
        index = {label: i for i, label in enumerate(labels)}
        edges = [(index[u], index[v], data.get(weight, 1.0)) for u, v, data in graph.edges(data=True)]
        return cls(len(labels), edges, labels)

    @classmethod
    def from_edge_list(cls, text: str) -> "FiniteMetricGraph":
        """Parse lines `u v [weight]`; `#` starts a comment. Vertices are named by token."""
        labels: List[str] = []
        index: Dict[str, int] = {}
        edges = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0]
            tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]
            if not tokens:
                continue
            if len(tokens) not in (2, 3):
                raise ConfigError("expected `u v [weight]`", lineno, tokens[0][1])
            ends = []
            for name, _ in tokens[:2]:
                if name not in index:
                    index[name] = len(labels)
                    labels.append(name)
                ends.append(index[name])
            weight = 1.0
            if len(tokens) == 3:
                try:
                    weight = float(tokens[2][0])
                except ValueError:
                    raise ConfigError(f"bad weight {tokens[2][0]!r}", lineno, tokens[2][1]) from None
            edges.append((ends[0], ends[1], weight))
        if not labels:
            raise ConfigError("edge list is empty", 1, 1)
        return cls(len(labels), edges, labels)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.labels)
        graph.add_weighted_edges_from((self.labels[u], self.labels[v], w) for u, v, w in self.edges)
        return graph

    def index(self, label: Hashable) -> int:
        return self._index[label]

    def distance(self, x: int, y: int) -> float:
        return float(self.distances[x, y])

    @property
    def diameter(self) -> float:
        return float(self.distances.max())

    def interval(self, x: int, y: int) -> np.ndarray:
        """Vertices on some geodesic from x to y."""
        d = self.distances
        return np.flatnonzero(np.abs(d[x] + d[:, y] - d[x, y]) <= TOLERANCE)


def gromov_product(graph: FiniteMetricGraph, x: int, y: int, base: int) -> float:
    """(x|y)_base = (d(x,base) + d(y,base) - d(x,y)) / 2."""
    d = graph.distances
    return float(d[x, base] + d[y, base] - d[x, y]) / 2


def _four_point_slice(d: np.ndarray, i: int) -> float:
    # quadruples (i, j, k, l) for fixed i
    s1 = d[i][:, None, None] + d[None, :, :]
    s2 = d[i][None, :, None] + d[:, None, :]
    s3 = d[i][None, None, :] + d[:, :, None]
    stacked = np.sort(np.stack([s1, s2, s3]), axis=0)
    return float((stacked[2] - stacked[1]).max()) / 2


def delta_fourpoint(graph: FiniteMetricGraph, rng: Optional[np.random.Generator] = None,
                    samples: int = DEFAULT_SAMPLES,
                    exhaustive_limit: int = EXHAUSTIVE_QUADRUPLE_LIMIT) -> Estimate:
    """Four-point hyperbolicity: half the gap between the two largest pairings of a quadruple."""
    d = np.asarray(graph.distances)
    n = graph.num_vertices
    if n < 4:
        return Estimate(0.0, True, 0)
    if n <= exhaustive_limit:
        best = max(_four_point_slice(d, i) for i in range(n))
        return Estimate(best, True, n ** 4)
    rng = rng if rng is not None else np.random.default_rng(0)
    quads = rng.integers(n, size=(samples, 4))
    i, j, k, l = quads.T
    sums = np.sort(np.stack([d[i, j] + d[k, l], d[i, k] + d[j, l], d[i, l] + d[j, k]]), axis=0)
    best = float((sums[2] - sums[1]).max()) / 2
    logger.info("four-point delta sampled over %d quadruples (lower estimate %.6g)", samples, best)
    return Estimate(best, False, samples)


def aligned(graph: FiniteMetricGraph, a: int, b: int, c: int, k: float) -> bool:
    """d(a,b) + d(b,c) <= d(a,c) + k."""
    d = graph.distances
    return bool(d[a, b] + d[b, c] <= d[a, c] + k + TOLERANCE)


def barycenter(graph: FiniteMetricGraph, a: int, b: int, c: int) -> Tuple[int, float]:
    """Vertex minimizing its largest distance to the three geodesic sides, with that distance."""
    d = graph.distances
    sides = [graph.interval(a, b), graph.interval(b, c), graph.interval(c, a)]
    reach = np.max(np.stack([d[:, side].min(axis=1) for side in sides]), axis=0)
    v = int(np.argmin(reach))
    return v, float(reach[v])


# ---------------------------------------------------------------------------
# Maps between metric graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoarseMap:
    """Vertex assignment from one metric graph to another."""

    source: FiniteMetricGraph
    target: FiniteMetricGraph
    assignment: Tuple[int, ...]

    def __post_init__(self):
        if len(self.assignment) != self.source.num_vertices:
            raise InvalidInputError("a coarse map assigns an image to every source vertex")
        if any(not 0 <= v < self.target.num_vertices for v in self.assignment):
            raise InvalidInputError("image vertex outside the target")

    @classmethod
    def identity(cls, graph: FiniteMetricGraph) -> "CoarseMap":
        return cls(graph, graph, tuple(range(graph.num_vertices)))

    @classmethod
    def constant(cls, source: FiniteMetricGraph, target: FiniteMetricGraph, vertex: int = 0) -> "CoarseMap":
        return cls(source, target, (vertex,) * source.num_vertices)

    def __call__(self, v: int) -> int:
        return self.assignment[v]

    def after(self, inner: "CoarseMap") -> "CoarseMap":
        """self o inner."""
        if inner.target is not self.source:
            raise InvalidInputError("maps are not composable")
        return CoarseMap(inner.source, self.target, tuple(self.assignment[v] for v in inner.assignment))

    def pulled_back(self) -> np.ndarray:
        """d_target(p(x), p(y)) as a source-indexed table."""
        idx = np.asarray(self.assignment)
        return self.target.distances[np.ix_(idx, idx)]

    @property
    def lipschitz(self) -> float:
        """Largest edge stretch, which bounds d'(px, py) / d(x, y) on a geodesic graph."""
        image = self.pulled_back()
        return max((image[u, v] / w for u, v, w in self.source.edges), default=0.0)


def collapse_map(graph: FiniteMetricGraph, collapsed: Sequence[Tuple[int, int]]) -> CoarseMap:
    """Quotient by a set of edges: each collapsed edge's endpoints become one vertex."""
    n = graph.num_vertices
    rows = [u for u, _ in collapsed]
    cols = [v for _, v in collapsed]
    glue = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, component = connected_components(glue, directed=False)
    relabel: Dict[int, int] = {}
    for c in component:
        relabel.setdefault(int(c), len(relabel))
    image = tuple(relabel[int(c)] for c in component)
    edges = [(image[u], image[v], w) for u, v, w in graph.edges if image[u] != image[v]]
    quotient = FiniteMetricGraph(len(relabel), edges)
    return CoarseMap(graph, quotient, image)


def alignment_constant(p: CoarseMap, k_in: float = 0.0, rng: Optional[np.random.Generator] = None,
                       samples: int = DEFAULT_SAMPLES,
                       exhaustive_limit: int = EXHAUSTIVE_TRIPLE_LIMIT) -> Estimate:
    """Largest image defect d'(pa,pb) + d'(pb,pc) - d'(pa,pc) over k_in-aligned source triples."""
    d = np.asarray(p.source.distances)
    image = p.pulled_back()
    n = p.source.num_vertices
    if n <= exhaustive_limit:
        best = 0.0
        for b in range(n):
            source_defect = d[:, b][:, None] + d[b, :][None, :] - d
            mask = source_defect <= k_in + TOLERANCE
            image_defect = image[:, b][:, None] + image[b, :][None, :] - image
            best = max(best, float(image_defect[mask].max()))
        return Estimate(best, True, n ** 3)
    rng = rng if rng is not None else np.random.default_rng(0)
    a, b, c = rng.integers(n, size=(samples, 3)).T
    mask = d[a, b] + d[b, c] - d[a, c] <= k_in + TOLERANCE
    defect = image[a, b] + image[b, c] - image[a, c]
    best = max(0.0, float(defect[mask].max())) if mask.any() else 0.0
    logger.info("alignment constant sampled over %d triples (lower estimate %.6g)", samples, best)
    return Estimate(best, False, samples)


class ProperRow(NamedTuple):
    source_distance: float
    min_image_distance: float
    pairs: int


def properness_profile(p: CoarseMap) -> List[ProperRow]:
    """For each source distance D, the least image distance over pairs at source distance >= D.

    Read backwards this is the properness function: pairs at distance >= D
    land at least min_image_distance apart.
    """
    d = np.asarray(p.source.distances)
    image = p.pulled_back()
    iu = np.triu_indices(p.source.num_vertices, k=1)
    src = np.round(d[iu], 12)
    img = image[iu]
    rows: List[ProperRow] = []
    for D in np.unique(src):
        beyond = src >= D
        rows.append(ProperRow(float(D), float(img[beyond].min()), int(np.count_nonzero(src == D))))
    return rows


class QIFit(NamedTuple):
    k: float
    multiplicative: float
    worst_pair: Tuple[int, int]


def qi_constants_fit(p: CoarseMap) -> QIFit:
    """Least K >= 1 with d/K - K <= d' <= K d + K on every pair, and the least purely multiplicative one.

    Per pair the additive-multiplicative constraint is closed form:
    K >= d'/(d+1) and K >= (sqrt(d'^2 + 4d) - d')/2.
    """
    d = np.asarray(p.source.distances)
    image = p.pulled_back()
    iu = np.triu_indices(p.source.num_vertices, k=1)
    src, img = d[iu], image[iu]
    if not len(src):
        return QIFit(1.0, 1.0, (0, 0))
    need = np.maximum(img / (src + 1), (np.sqrt(img ** 2 + 4 * src) - img) / 2)
    worst = int(np.argmax(need))
    k = max(1.0, float(need[worst]))
    with np.errstate(divide="ignore"):
        ratios = np.maximum(img / src, src / img)
    multiplicative = max(1.0, float(ratios.max()))
    return QIFit(k, multiplicative, (int(iu[0][worst]), int(iu[1][worst])))


@dataclass
class CompositionAlignment:
    inner_constant: float
    outer_constant: float
    delta: float
    outer_lipschitz: float
    bound: float
    measured: float

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound + TOLERANCE


def composition_alignment_report(outer: CoarseMap, inner: CoarseMap,
                                 rng: Optional[np.random.Generator] = None) -> CompositionAlignment:
    """Alignment of outer o inner against K_outer + 2 (6 delta + K_inner) Lip(outer).

    inner sends aligned triples to K_inner-aligned ones in a delta-hyperbolic
    middle space; a barycenter near the middle point then carries K_outer over.
    """
    k_inner = alignment_constant(inner, 0.0, rng).value
    k_outer = alignment_constant(outer, 0.0, rng).value
    delta = delta_fourpoint(outer.source, rng).value
    lip = outer.lipschitz
    measured = alignment_constant(outer.after(inner), 0.0, rng).value
    report = CompositionAlignment(k_inner, k_outer, delta, lip, k_outer + 2 * (6 * delta + k_inner) * lip, measured)
    if not report.holds:
        logger.warning("⚠️ composition alignment %.6g exceeds the bound %.6g", measured, report.bound)
    return report
