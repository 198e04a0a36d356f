import math

import networkx as nx
import numpy as np
import pytest

from errors import ConfigError, InvalidInputError
from coarse import (
    CoarseMap,
    FiniteMetricGraph,
    aligned,
    alignment_constant,
    barycenter,
    collapse_map,
    composition_alignment_report,
    delta_fourpoint,
    gromov_product,
    properness_profile,
    qi_constants_fit,
)


def random_tree(rng, n):
    edges = [(i, int(rng.integers(i)), 1.0) for i in range(1, n)]
    return FiniteMetricGraph(n, edges)


def cycle(n):
    return FiniteMetricGraph.from_networkx(nx.cycle_graph(n))


def grid(m):
    return FiniteMetricGraph.from_networkx(nx.grid_2d_graph(m, m))


def brute_alignment(p, k_in):
    d, image = p.source.distances, p.pulled_back()
    n = p.source.num_vertices
    best = 0.0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if d[a, b] + d[b, c] <= d[a, c] + k_in + 1e-9:
                    best = max(best, image[a, b] + image[b, c] - image[a, c])
    return best


def test_distances_and_parallel_edges():
    graph = FiniteMetricGraph(3, [(0, 1, 2.0), (0, 1, 1.0), (1, 2, 1.5), (2, 2, 4.0)])
    assert graph.distance(0, 2) == 2.5
    assert graph.diameter == 2.5
    assert len(graph.edges) == 2
    with pytest.raises(InvalidInputError):
        FiniteMetricGraph(3, [(0, 1, 1.0)])
    with pytest.raises(InvalidInputError):
        FiniteMetricGraph(2, [(0, 1, 0.0)])


def test_edge_list_loading():
    graph = FiniteMetricGraph.from_edge_list("# a path\nx y\ny z 2.5  # weighted\n\n")
    assert graph.labels == ("x", "y", "z")
    assert graph.distance(graph.index("x"), graph.index("z")) == 3.5
    with pytest.raises(ConfigError) as info:
        FiniteMetricGraph.from_edge_list("x y\ny z heavy\n")
    assert (info.value.line, info.value.column) == (2, 5)
    with pytest.raises(ConfigError):
        FiniteMetricGraph.from_edge_list("x y z w\n")


def test_networkx_roundtrip():
    graph = grid(3)
    again = FiniteMetricGraph.from_networkx(graph.to_networkx())
    assert np.array_equal(graph.distances, again.distances)


def test_gromov_product_basics():
    path = FiniteMetricGraph.from_networkx(nx.path_graph(5))
    for x in range(5):
        assert gromov_product(path, x, x, 2) == path.distance(x, 2)
    assert gromov_product(path, 0, 4, 1) == 0


def test_gromov_product_in_trees_is_distance_to_center(rng):
    tree = random_tree(rng, 40)
    for _ in range(50):
        x, y, b = (int(v) for v in rng.integers(40, size=3))
        center, reach = barycenter(tree, x, y, b)
        assert reach == 0
        assert gromov_product(tree, x, y, b) == tree.distance(b, center)


def test_trees_are_zero_hyperbolic(rng):
    for _ in range(10):
        estimate = delta_fourpoint(random_tree(rng, int(rng.integers(5, 50))))
        assert estimate.exhaustive
        assert estimate.value == 0.0


def test_cycles_grow_more_hyperbolic():
    values = [delta_fourpoint(cycle(n)).value for n in (8, 16, 32)]
    assert values[0] >= 2
    assert values[0] < values[1] < values[2]


def test_sampled_delta_is_a_lower_estimate(rng):
    exact = delta_fourpoint(grid(5))
    sampled = delta_fourpoint(grid(5), rng, samples=500, exhaustive_limit=0)
    assert not sampled.exhaustive
    assert sampled.value <= exact.value


def test_aligned_triples():
    path = FiniteMetricGraph.from_networkx(nx.path_graph(6))
    assert aligned(path, 0, 2, 5, 0)
    assert not aligned(path, 0, 5, 2, 0)
    ring = cycle(10)
    for k in range(0, 12):
        if aligned(ring, 0, 3, 1, k):
            assert aligned(ring, 0, 3, 1, k + 1)
    assert aligned(ring, 0, 5, 1, 2 * ring.diameter)


def test_identity_and_constant_maps():
    graph = grid(4)
    identity = CoarseMap.identity(graph)
    constant = CoarseMap.constant(graph, graph, 3)
    assert alignment_constant(identity, 0).value == 0
    assert alignment_constant(constant, 2).value == 0
    rows = properness_profile(identity)
    assert all(row.min_image_distance == row.source_distance for row in rows)
    assert all(row.min_image_distance == 0 for row in properness_profile(constant))


def test_collapse_maps_match_exhaustive_scan(rng):
    graph = grid(4)
    for _ in range(4):
        chosen = [graph.edges[int(i)][:2] for i in rng.choice(len(graph.edges), size=5, replace=False)]
        p = collapse_map(graph, chosen)
        assert p.target.num_vertices <= graph.num_vertices - 1
        assert p.lipschitz <= 1
        for k_in in (0.0, 2.0):
            assert alignment_constant(p, k_in).value == pytest.approx(brute_alignment(p, k_in))


def test_collapsing_everything_gives_a_point():
    graph = cycle(5)
    p = collapse_map(graph, [(u, v) for u, v, _ in graph.edges])
    assert p.target.num_vertices == 1
    assert qi_constants_fit(p).multiplicative == math.inf


def test_properness_profile_is_nondecreasing(rng):
    graph = grid(4)
    chosen = [graph.edges[int(i)][:2] for i in rng.choice(len(graph.edges), size=6, replace=False)]
    rows = properness_profile(collapse_map(graph, chosen))
    mins = [row.min_image_distance for row in rows]
    assert mins == sorted(mins)
    assert sum(row.pairs for row in rows) == 16 * 15 // 2


def test_qi_constants():
    graph = grid(3)
    fit = qi_constants_fit(CoarseMap.identity(graph))
    assert fit.k == 1 and fit.multiplicative == 1
    doubled = FiniteMetricGraph(graph.num_vertices, [(u, v, 2 * w) for u, v, w in graph.edges])
    fit = qi_constants_fit(CoarseMap(graph, doubled, tuple(range(graph.num_vertices))))
    assert fit.multiplicative == 2
    assert 1 <= fit.k <= 2


def test_qi_constant_is_least(rng):
    source, target = grid(3), cycle(7)
    for _ in range(5):
        p = CoarseMap(source, target, tuple(int(v) for v in rng.integers(7, size=9)))
        k = qi_constants_fit(p).k
        d, image = source.distances, p.pulled_back()
        pairs = [(x, y) for x in range(9) for y in range(x + 1, 9)]

        def ok(K):
            return all(d[x, y] / K - K <= image[x, y] + 1e-9 and image[x, y] <= K * d[x, y] + K + 1e-9
                       for x, y in pairs)

        assert ok(k)
        if k > 1:
            assert not ok(k - 1e-6)


def test_composition_bound_on_trees(rng):
    tree = random_tree(rng, 30)
    inner = collapse_map(tree, [tree.edges[i][:2] for i in (0, 3, 7)])
    middle = inner.target
    outer = collapse_map(middle, [middle.edges[i][:2] for i in (1, 2)])
    report = composition_alignment_report(outer, inner)
    assert report.delta == 0
    assert report.holds
    assert report.measured == pytest.approx(brute_alignment(outer.after(inner), 0))
