import math
from fractions import Fraction

import numpy as np
import pytest

from errors import InvalidInputError
from free_group import FreeGroup, Word
from folding import (
    ChangeOfMarking,
    bbt_composite_report,
    bbt_estimate,
    check_illegal_flare,
    check_legal_flare,
    fold_along,
    fold_step,
    foldable_map,
    folding_path,
    has_legal_segment,
    illegal_extent,
    illegality_constant,
    induced_gates,
    left_right_projection,
    legal_flare_margins,
    legal_length,
    optimal_map,
    random_folding_path,
    rose_homothety,
    start_state,
    straight_map,
    trivial_gates,
)
from outer_space import (
    RANK_THREE_TOPOLOGIES,
    MarkedGraph,
    act,
    is_marked_isometric,
    length_of_class,
    lipschitz_distance,
    random_marked_graph,
)

LOG_FOUR_THIRDS = math.log(4 / 3)
TOPOLOGIES = sorted(RANK_THREE_TOPOLOGIES)


@pytest.fixture
def endpoint(phi, unit_rose):
    return act(phi, unit_rose)


@pytest.fixture
def homothety(endpoint):
    return rose_homothety(endpoint)


@pytest.fixture
def worked_path(homothety):
    return fold_along(homothety)


def identity_map(graph):
    return ChangeOfMarking(graph, graph, [Word([e + 1]) for e in range(len(graph.edges))])


def test_rose_homothety_source(homothety, lopsided_rose):
    assert homothety.source.same_point(lopsided_rose)
    assert homothety.stretch == (Fraction(4, 3),) * 3
    assert homothety.respects_marking()


def test_worked_example_gates(homothety):
    gates = induced_gates(homothety)
    assert gates.illegal_turns() == [(-1, 2)]
    assert gates.min_gates() == 5
    assert gates.covers(homothety.source)


def test_worked_example_folds_to_endpoint(worked_path, endpoint):
    assert len(worked_path) > 1
    assert worked_path.times[0] == 0.0
    assert worked_path.length == pytest.approx(LOG_FOUR_THIRDS, abs=1e-9)
    final = worked_path.states[-1]
    assert final.gates.illegal_turns() == []
    assert final.stretch == pytest.approx(1.0, abs=1e-9)
    assert is_marked_isometric(final.graph, endpoint)


def test_worked_example_volumes_and_times(worked_path):
    for graph in worked_path.graphs:
        assert float(graph.volume) == pytest.approx(1.0, abs=1e-12)
    states, times = worked_path.states, worked_path.times
    for k in range(len(states) - 1):
        step = times[k + 1] - times[k]
        assert step > 0
        assert step == pytest.approx(math.log(states[k].stretch / states[k + 1].stretch), abs=1e-12)
        assert step <= worked_path.dt + 1e-12


def test_worked_example_is_a_geodesic(lopsided_rose, endpoint, unit_rose):
    assert lipschitz_distance(lopsided_rose, endpoint) == pytest.approx(LOG_FOUR_THIRDS, abs=1e-12)
    path = folding_path(unit_rose, endpoint)
    assert path.prefix_length == pytest.approx(math.log(3 / 2), abs=1e-12)
    assert path.prefix_start.same_point(lopsided_rose)
    assert path.prefix_length + path.length == pytest.approx(lipschitz_distance(unit_rose, endpoint), abs=1e-9)


def test_gates_are_consistent_along_the_path(worked_path):
    last = len(worked_path) - 1
    for j in (0, last // 2):
        for k in (j + 1, last):
            pulled = induced_gates(worked_path.composite_map(j, k))
            own = worked_path.states[j].gates
            for turn in pulled.illegal_turns():
                assert own.same_gate(*turn)


def test_composite_maps_respect_marking(worked_path):
    last = len(worked_path) - 1
    assert worked_path.composite_map(0, last).respects_marking()
    for state in worked_path.states[::5]:
        assert state.to_target.respects_marking()


def test_optimal_map_on_worked_pair(lopsided_rose, endpoint):
    tight = optimal_map(lopsided_rose, endpoint)
    assert tight.lipschitz == Fraction(4, 3)
    assert straight_map(lopsided_rose, endpoint).edge_images == tight.edge_images


def test_folding_path_from_a_point_to_itself(lopsided_rose):
    path = folding_path(lopsided_rose, lopsided_rose)
    assert len(path) == 1
    assert path.length == 0.0
    assert path.prefix_length == 0.0


def test_folding_an_isometry_is_empty(unit_rose):
    path = fold_along(rose_homothety(unit_rose))
    assert len(path) == 1
    assert path.step_maps == []


def test_folding_path_needs_volume_one(lopsided_rose, endpoint):
    with pytest.raises(InvalidInputError):
        folding_path(lopsided_rose.scaled(2), endpoint)


def test_fold_step_rejects_nonpositive_dt(homothety):
    state = start_state(homothety)
    with pytest.raises(InvalidInputError):
        fold_step(state, 0)
    with pytest.raises(InvalidInputError):
        fold_along(homothety, dt=-0.5)


def test_illegality_constant():
    assert illegality_constant(3, 15) == 8130
    assert illegality_constant(3) == 8130
    assert illegality_constant(2, 1) == 180
    with pytest.raises(InvalidInputError):
        illegality_constant(1)


def test_legal_length_of_legal_loop(lopsided_rose):
    gates = trivial_gates(lopsided_rose)
    for cls in ["a", "ab", "aCb"]:
        assert legal_length(cls, lopsided_rose, gates) == length_of_class(lopsided_rose, cls)
        assert illegal_extent(cls, lopsided_rose, gates, threshold=1) == 1


def test_legal_length_with_illegal_turn(homothety):
    graph, gates = homothety.source, induced_gates(homothety)
    assert legal_length("ab", graph, gates, threshold=0.5) == Fraction(3, 4)
    assert legal_length("ab", graph, gates, threshold=1) == 0
    assert not has_legal_segment("ab", graph, gates, threshold=1)
    assert illegal_extent("ab", graph, gates, threshold=1) == math.inf
    assert illegal_extent("ab", graph, gates, threshold=0.5) == pytest.approx(1.0)
    # aB never turns from A into b
    assert legal_length("aB", graph, gates) == Fraction(3, 4)


def test_projection_conventions(worked_path):
    legal_from_start = left_right_projection(worked_path, "a", illegality=100, threshold=10)
    assert legal_from_start.left == worked_path.times[0]
    assert legal_from_start.right == worked_path.times[0]
    folded = left_right_projection(worked_path, "ab", illegality=100, threshold=10)
    assert folded.right < folded.left <= worked_path.times[-1]


def test_illegal_flare_windows(worked_path):
    rows = check_illegal_flare(worked_path, "ab", window=0.05, threshold=10)
    assert rows
    for row in rows:
        assert row.t_b - row.t_a >= 0.05
        assert row.halved == (row.length_a > 2 * row.length_b)


def test_legal_flare_on_worked_path(worked_path):
    for cls in ["a", "ab", "aC", "abc"]:
        report = check_legal_flare(worked_path, cls, threshold=0.2)
        assert report.ok, report.violations[:3]


@pytest.fixture(scope="module")
def random_pairs():
    rng = np.random.default_rng(5)
    return [(random_marked_graph(rng, TOPOLOGIES[i % 4], depth=2),
             random_marked_graph(rng, TOPOLOGIES[(i + i // 4) % 4], depth=2))
            for i in range(20)]


def test_optimal_map_attains_the_distance(random_pairs):
    for source, target in random_pairs:
        f = optimal_map(source, target)
        assert math.log(float(f.lipschitz)) == pytest.approx(lipschitz_distance(source, target), abs=1e-7)
        assert f.respects_marking()
        assert is_marked_isometric(f.target, target)
        assert induced_gates(foldable_map(f)).min_gates() >= 2


def test_random_pairs_fold_to_the_target(random_pairs):
    dt = 1 / 16
    for source, target in random_pairs:
        path = folding_path(source, target, dt)
        distance = lipschitz_distance(source, target)
        assert abs(path.prefix_length + path.length - distance) <= 2 * dt
        assert is_marked_isometric(path.states[-1].graph, target)
        assert path.states[-1].gates.illegal_turns() == []


def test_collapsed_edges_become_the_prefix(unit_rose):
    quarter = Fraction(1, 4)
    theta = MarkedGraph.from_edges(2, [(0, 1, quarter)] * 4)
    collapse = ChangeOfMarking(theta, unit_rose, [Word(), Word([1]), Word([2]), Word([3])])
    assert collapse.respects_marking()
    folded = foldable_map(collapse)
    assert folded.source.num_vertices == 1
    assert len(folded.source.edges) == 3
    assert folded.respects_marking()
    path = folding_path(theta, unit_rose, phi=collapse)
    assert path.step_maps == []
    assert path.prefix_length == pytest.approx(LOG_FOUR_THIRDS)
    assert path.prefix_length == pytest.approx(lipschitz_distance(theta, unit_rose))
    assert is_marked_isometric(path.states[-1].graph, unit_rose)


def sample_pairs(n):
    pairs = {(0, n - 1), (0, n // 2), (n // 3, n - 1), (n // 2, min(n // 2 + 1, n - 1))}
    return sorted((j, k) for j, k in pairs if j < k)


@pytest.mark.parametrize("topology", TOPOLOGIES)
def test_random_paths_have_unit_speed_and_flare(topology):
    rng = np.random.default_rng(11)
    dt = 1 / 16
    target_topology = TOPOLOGIES[(TOPOLOGIES.index(topology) + 1) % 4]
    path = random_folding_path(rng, dt=dt, topology=topology, depth=2, target_topology=target_topology)
    assert path.states[-1].gates.illegal_turns() == []
    assert path.states[-1].stretch == pytest.approx(1.0, abs=1e-6)
    assert all(b > a for a, b in zip(path.times, path.times[1:]))
    for j, k in sample_pairs(len(path)):
        d = lipschitz_distance(path.graphs[j], path.graphs[k])
        assert abs(d - (path.times[k] - path.times[j])) <= 2 * dt
    margins = legal_flare_margins(path, FreeGroup(3).conjugacy_classes(3))
    assert min(margins.values()) >= -1e-9


def test_flare_margins_match_the_pairwise_check(worked_path):
    classes = ["a", "ab", "aC", "abc"]
    margins = legal_flare_margins(worked_path, classes, threshold=0.2)
    for cls in classes:
        rows = check_legal_flare(worked_path, cls, threshold=0.2).rows
        assert margins[cls] == pytest.approx(min(row.margin for row in rows), abs=1e-12)


@pytest.mark.slow
def test_legal_flare_on_many_random_paths():
    rng = np.random.default_rng(2024)
    classes = FreeGroup(3).conjugacy_classes(6)
    for i in range(20):
        path = random_folding_path(rng, dt=1 / 64, topology=TOPOLOGIES[i % 4], depth=3,
                                   target_topology=TOPOLOGIES[(i // 4) % 4])
        failing = {cls: m for cls, m in legal_flare_margins(path, classes).items() if m < -1e-9}
        assert not failing, (i, sorted(failing.items(), key=lambda item: item[1])[:5])


def test_step_table_and_serialization(worked_path):
    table = worked_path.step_table()
    assert [row["step"] for row in table] == list(range(len(worked_path)))
    assert table[0]["illegal_turns"] == 1
    assert table[-1]["illegal_turns"] == 0
    data = worked_path.to_dict()
    assert len(data["graphs"]) == len(worked_path)


def test_backtracking_of_identity_vanishes(lopsided_rose):
    assert bbt_estimate(identity_map(lopsided_rose), 1.0) == 0.0


def test_backtracking_grows_with_length(worked_path):
    f = worked_path.composite_map(0, len(worked_path) - 1)
    short, long = bbt_estimate(f, 0.5), bbt_estimate(f, 1.0)
    assert 0.0 <= short <= long


def test_backtracking_of_composites(worked_path):
    middle = len(worked_path) // 2
    first = worked_path.composite_map(0, middle)
    second = worked_path.composite_map(middle, len(worked_path) - 1)
    report = bbt_composite_report(first, second, 0.5)
    assert report.holds, report
