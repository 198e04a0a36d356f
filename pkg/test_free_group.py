import pytest
from hypothesis import given, settings, strategies as st

from errors import InvalidAutomorphismError, RankMismatchError, SubgroupNotPreservedError, TrivialClassError
from free_group import (
    Automorphism,
    ConjugacyClass,
    FreeGroup,
    SubgroupGraph,
    Word,
    apply,
    compose,
    cyclic_reduce,
    elementary_nielsen_moves,
    index_two_subgroups,
    induced_automorphism,
    is_inner,
    is_primitive,
    is_simple,
    nielsen_ball,
    parse_word,
    stallings_graph,
    substitute,
    whitehead_graph,
    whitehead_minimize,
)

letters3 = st.sampled_from([1, -1, 2, -2, 3, -3])
words3 = st.lists(letters3, max_size=64).map(Word)
short_words3 = st.lists(letters3, max_size=12).map(Word)
nielsen_moves3 = st.lists(st.sampled_from(elementary_nielsen_moves(3)), min_size=1, max_size=6)


def product_of(moves):
    result = Automorphism.identity(3)
    for move in moves:
        result = compose(move, result)
    return result


def test_reduce_cancels():
    assert Word([1, 2, -2, 3]) == parse_word("ac")
    assert Word([1, -1]).is_trivial
    assert str(Word()) == "1"


def test_parse_roundtrip_and_errors():
    assert str(parse_word("abCA")) == "abCA"
    assert parse_word("a b A") == parse_word("abA")
    assert parse_word("ab Ba") == parse_word("aa")
    with pytest.raises(RankMismatchError):
        parse_word("d", rank=3)
    with pytest.raises(ValueError):
        parse_word("a1b")


@given(words3)
def test_word_times_inverse_is_trivial(w):
    assert (w * ~w).is_trivial
    assert Word(w.letters) == w


def test_cyclic_reduce_examples():
    split = cyclic_reduce("abA")
    assert split.core == parse_word("b")
    assert split.conjugator == parse_word("a")
    split = cyclic_reduce("ab")
    assert split.core == parse_word("ab")
    assert split.conjugator.is_trivial


@given(short_words3, short_words3)
def test_cyclic_reduce_recovers_word(u, c):
    c = cyclic_reduce(c).core
    w = c.conjugate(u)
    split = cyclic_reduce(w)
    assert split.conjugator * split.core * ~split.conjugator == w
    assert len(split.core) <= len(w)
    assert ConjugacyClass(split.core) == ConjugacyClass(c)


def test_conjugacy_class_is_unoriented():
    assert ConjugacyClass("ab") == ConjugacyClass("BA")
    assert ConjugacyClass("ab") == ConjugacyClass("ba")
    assert ConjugacyClass("ab") != ConjugacyClass("aB")
    assert str(ConjugacyClass("Ba")) == "aB"


def test_apply_substitutes(phi):
    assert apply(phi, "ac") == parse_word("bab")
    assert apply(Automorphism.identity(3), "abC") == parse_word("abC")


@given(words3)
@settings(max_examples=60)
def test_apply_inverse_roundtrip(w):
    phi = Automorphism.from_strings(["b", "c", "ab"], ["cA", "a", "b"])
    assert apply(phi, apply(phi.inverse, w)) == w


@given(short_words3, short_words3)
@settings(max_examples=60)
def test_apply_is_homomorphism(u, v):
    phi = Automorphism.from_strings(["b", "c", "ab"], ["cA", "a", "b"])
    assert apply(phi, u * v) == apply(phi, u) * apply(phi, v)


def test_compose_group_law(phi, sigma):
    identity = Automorphism.identity(3)
    assert compose(phi, phi.inverse) == identity
    assert compose(identity, phi) == phi
    chi = Automorphism.inner("ab", 3)
    assert compose(compose(phi, sigma), chi) == compose(phi, compose(sigma, chi))


@given(short_words3)
@settings(max_examples=60)
def test_compose_agrees_with_apply(w):
    phi = Automorphism.from_strings(["b", "c", "ab"], ["cA", "a", "b"])
    sigma = Automorphism.from_strings(["b", "c", "a"], ["c", "a", "b"])
    assert apply(compose(phi, sigma), w) == apply(phi, apply(sigma, w))


def test_wrong_inverse_names_generator():
    with pytest.raises(InvalidAutomorphismError) as info:
        Automorphism.from_strings(["b", "c", "ab"], ["ca", "a", "b"])
    assert info.value.generator == "a"


def test_is_inner_examples(phi):
    assert is_inner(Automorphism.inner("a", 3)) == parse_word("a")
    assert is_inner(phi) is None


@given(words3)
@settings(max_examples=80)
def test_is_inner_recovers_conjugator(w):
    assert is_inner(Automorphism.inner(w, 3)) == w


@given(short_words3)
@settings(max_examples=40)
def test_conjugating_an_inner_automorphism(w):
    phi = Automorphism.from_strings(["b", "c", "ab"], ["cA", "a", "b"])
    conjugated = compose(compose(phi, Automorphism.inner(w, 3)), phi.inverse)
    assert is_inner(conjugated) == apply(phi, w)


def test_whitehead_minimize_examples():
    result = whitehead_minimize(["a"], 3)
    assert result.length == 1
    assert result.classes == (ConjugacyClass("a"),)
    assert whitehead_minimize(["abA"], 3).classes == (ConjugacyClass("b"),)


@given(nielsen_moves3)
@settings(max_examples=40, deadline=None)
def test_images_of_basis_minimize_to_length_one(moves):
    image = apply(product_of(moves), "a")
    assert whitehead_minimize([image], 3).length == 1


@given(short_words3.filter(lambda w: not cyclic_reduce(w).core.is_trivial))
@settings(max_examples=40, deadline=None)
def test_whitehead_minimize_is_stable(w):
    first = whitehead_minimize([w], 3)
    assert first.length <= len(cyclic_reduce(w).core)
    again = whitehead_minimize(list(first.classes), 3)
    assert again.length == first.length
    assert not again.moves


def test_is_primitive_examples():
    assert is_primitive("a", 3)
    assert not is_primitive("aa", 3)
    assert is_primitive("ab", 3)
    assert is_primitive("aab", 3)
    assert not is_primitive("abAB", 3)
    assert not is_primitive("abab", 3)
    with pytest.raises(TrivialClassError):
        is_primitive("aA", 3)


def test_nielsen_ball_images_are_primitive():
    ball = nielsen_ball(3, 2)
    for phi in sorted(ball, key=str)[:150]:
        assert is_primitive(apply(phi, "a"), 3)


def test_primitive_invariances(sigma):
    w = parse_word("aab")
    assert is_primitive(~w, 3)
    assert is_primitive(w.conjugate(parse_word("cb")), 3)
    assert is_primitive(apply(sigma, w), 3)


def test_is_simple_examples():
    assert is_simple("abAB", 3)
    assert not is_simple("abAB", 2)
    assert not is_simple("aabb", 2)
    assert is_simple("a", 3)
    assert is_simple("aa", 2)
    with pytest.raises(TrivialClassError):
        is_simple("", 3)


def test_primitive_implies_simple(f3):
    for cls in f3.conjugacy_classes(3):
        if is_primitive(cls.word, 3):
            assert is_simple(cls.word, 3)


def test_whitehead_graph_of_commutator_is_a_square():
    graph = whitehead_graph(parse_word("abAB"), 2)
    assert graph.number_of_edges() == 4
    assert all(degree == 2 for _, degree in graph.degree())


def test_stallings_proper_factor():
    graph = stallings_graph(["a", "b"], 3)
    assert graph.num_vertices == 1
    assert len(graph.edges) == 2
    assert graph.index is None
    assert graph.contains("abAAb")
    assert not graph.contains("c")


def test_stallings_index_two():
    graph = stallings_graph(["aa", "b", "abA", "c", "acA"], 3)
    assert graph.num_vertices == 2
    assert graph.is_full_cover()
    assert graph.index == 2
    assert graph.contains("aa")
    assert not graph.contains("a")
    assert graph.subgroup_rank == 5


def test_stallings_whole_group_is_rose():
    graph = stallings_graph(["a", "b", "c"], 3)
    assert graph.num_vertices == 1
    assert graph.index == 1


def test_stallings_membership_matches_coset_action():
    # a acts as a 3-cycle, b as a transposition on four cosets
    perms = [[1, 2, 0, 3], [0, 3, 2, 1]]
    schreier = SubgroupGraph.from_permutations(2, perms)
    assert schreier.index == 4
    rebuilt = stallings_graph(schreier.basis(), 2)
    assert rebuilt.index == 4

    def coset(w):
        v = 0
        for x in w.letters:
            perm = perms[abs(x) - 1]
            v = perm[v] if x > 0 else perm.index(v)
        return v

    for w in FreeGroup(2).words(6):
        assert rebuilt.contains(w) == (coset(w) == 0)


def test_basis_reads_back():
    graph = stallings_graph(["aa", "bA", "ab", "cA", "ac"], 3)
    for j, h in enumerate(graph.basis(), start=1):
        assert graph.express(h) == Word([j])


def test_induced_identity_and_inner():
    subgroup = index_two_subgroups(3)[-1]
    identity = induced_automorphism(Automorphism.identity(3), subgroup)
    assert identity == Automorphism.identity(5)
    h = subgroup.basis()[1]
    induced = induced_automorphism(Automorphism.inner(h, 3), subgroup)
    assert is_inner(induced) is not None


def test_induced_commutes_with_inclusion(sigma):
    subgroup = index_two_subgroups(3)[-1]
    basis = subgroup.basis()
    induced = induced_automorphism(sigma, subgroup)
    assert induced.rank == 5
    for image, h in zip(induced.images, basis):
        assert substitute(image, basis) == apply(sigma, h)


def test_induced_rejects_moved_subgroup(phi):
    # phi has no invariant index-2 subgroup
    for subgroup in index_two_subgroups(3):
        with pytest.raises(SubgroupNotPreservedError):
            induced_automorphism(phi, subgroup)
