import pytest

from errors import InvalidInputError
from free_group import ConjugacyClass, FreeGroup, is_primitive
from factor_graphs import (
    build_pl_ball,
    cs_distance_upper,
    loxodromic_table,
    nielsen_oracle_pairs,
    pl_adjacent,
    pl_distance_profile,
    primitive_classes,
)


@pytest.fixture(scope="module")
def ball3():
    return build_pl_ball(3, 3)


def test_basis_pairs_are_adjacent():
    assert pl_adjacent("a", "b", 3) is True
    assert pl_adjacent("a", "ab", 3) is True
    assert pl_adjacent("a", "abA", 3) is True
    assert pl_adjacent("c", "aCbc", 3) is True


def test_non_basis_pairs():
    assert pl_adjacent("a", "a", 3) is False
    # abelianizations (1, 1) and (1, -1) span an index-two lattice
    assert pl_adjacent("ab", "aB", 3) is False


def test_adjacency_needs_primitive_classes():
    with pytest.raises(InvalidInputError):
        pl_adjacent("a", "bb", 3)
    with pytest.raises(InvalidInputError):
        pl_adjacent("abAB", "c", 3)


def test_budget_gives_undecided():
    assert pl_adjacent("ab", "c", 3, max_moves=0) is None


def test_ball_of_radius_one_is_complete():
    ball = build_pl_ball(1, 3)
    assert set(ball.vertices) == {ConjugacyClass("a"), ConjugacyClass("b"), ConjugacyClass("c")}
    assert ball.graph.number_of_edges() == 3
    assert not ball.undecided


def test_vertex_count_nondecreasing():
    counts = [len(primitive_classes(3, n)) for n in range(1, 5)]
    assert counts == sorted(counts)
    assert counts[0] == 3


def test_vertices_are_the_primitive_classes(ball3):
    expected = [c for c in FreeGroup(3).conjugacy_classes(3) if is_primitive(c.word, 3)]
    assert ball3.vertices == expected
    assert ConjugacyClass("ab") in ball3
    assert "abc" in ball3
    assert ConjugacyClass("aab") in ball3
    assert "aa" not in ball3


def test_adjacency_symmetric_and_irreflexive(ball3):
    for u, v in ball3.graph.edges:
        assert u != v
        assert pl_adjacent(v, u, 3) is True
    assert not ball3.undecided


def test_nielsen_images_are_adjacent(ball3):
    for pair in nielsen_oracle_pairs(3, 2):
        first, second = tuple(pair)
        if len(first) <= 3 and len(second) <= 3:
            assert ball3.graph.has_edge(first, second), (first, second)


def test_cs_distances(ball3):
    assert cs_distance_upper("a", "a", ball3) == 0
    assert cs_distance_upper("a", "b", ball3) == 1
    assert cs_distance_upper("ab", "aB", ball3) == 2
    with pytest.raises(InvalidInputError):
        cs_distance_upper("a", "abcab", ball3)


def test_cs_triangle_inequality(ball3, rng):
    vertices = ball3.vertices
    for _ in range(60):
        x, y, z = (vertices[int(i)] for i in rng.integers(len(vertices), size=3))
        d = lambda p, q: cs_distance_upper(p, q, ball3)
        assert d(x, z) <= d(x, y) + d(y, z)


def test_distance_profile_starts_at_zero(ball3):
    profile = pl_distance_profile(ball3, "a")
    assert profile[0] == (ConjugacyClass("a"), 0)
    assert [d for _, d in profile] == sorted(d for _, d in profile)
    assert len(profile) == len(ball3.vertices)


def test_adjacency_text(ball3):
    text = ball3.to_adjacency_text()
    lines = text.splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == len(ball3.vertices) + 1
    assert lines[1].startswith("a: ")
    assert "b" in lines[1].split(": ")[1].split()


def test_loxodromic_table(phi, ball3):
    rows = loxodromic_table(phi, "a", range(6), ball3)
    assert [str(row.image) for row in rows[:3]] == ["a", "b", "c"]
    assert rows[0].distance == 0
    for row in rows[1:]:
        if row.length <= 3:
            assert row.distance == 1
        else:
            assert row.distance is None


def test_parallel_ball_matches_serial():
    serial = build_pl_ball(2, 3)
    parallel = build_pl_ball(2, 3, workers=2)
    assert serial.vertices == parallel.vertices
    assert set(map(frozenset, serial.graph.edges)) == set(map(frozenset, parallel.graph.edges))
