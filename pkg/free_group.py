"""
Exact computation in a free group F of rank r.

Words are tuples of signed generator indices: i in 1..r is the i-th basis
element and -i its inverse. The text form uses a..z in rank order with
uppercase for inverses (A = a^-1); "1" is the empty word.

Everything here is an immutable value and every operation is pure.
"""

import logging
from collections import deque
from functools import lru_cache
from itertools import permutations, product
from math import gcd
from typing import Callable, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import networkx as nx
import numpy as np

from errors import (
    BudgetExceededError,
    InvalidAutomorphismError,
    RankMismatchError,
    SubgroupNotPreservedError,
    TrivialClassError,
    WordParseError,
)

logger = logging.getLogger("free_group")

DEFAULT_ORBIT_BUDGET = 200_000
MAX_MINIMIZE_MOVES = 100_000


# ---------------------------------------------------------------------------
# Words
# ---------------------------------------------------------------------------

def _free_reduce(letters: Iterable[int]) -> Tuple[int, ...]:
    stack: List[int] = []
    for x in letters:
        if x == 0:
            raise WordParseError("0 is not a generator index")
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return tuple(stack)


def _letter_key(x: int) -> Tuple[int, bool]:
    # a < A < b < B < ...
    return (abs(x), x < 0)


def _invert_letters(letters: Sequence[int]) -> Tuple[int, ...]:
    return tuple(-x for x in reversed(letters))


def unparse_letter(x: int) -> str:
    i = abs(x)
    if i <= 26:
        ch = chr(ord("a") + i - 1)
        return ch.upper() if x < 0 else ch
    return f"X{i}" if x < 0 else f"x{i}"


class Word:
    """A freely reduced word; construction always reduces."""

    __slots__ = ("letters", "_hash")

    def __init__(self, letters: Iterable[int] = ()):
        self.letters = _free_reduce(letters)
        self._hash = hash(self.letters)

    @classmethod
    def _trusted(cls, letters: Tuple[int, ...]) -> "Word":
        word = cls.__new__(cls)
        word.letters = letters
        word._hash = hash(letters)
        return word

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters)

    def __bool__(self) -> bool:
        return bool(self.letters)

    def __eq__(self, other) -> bool:
        return isinstance(other, Word) and self.letters == other.letters

    def __hash__(self) -> int:
        return self._hash

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __invert__(self) -> "Word":
        return Word._trusted(_invert_letters(self.letters))

    def __pow__(self, k: int) -> "Word":
        base = self if k >= 0 else ~self
        return Word(base.letters * abs(k))

    def __str__(self) -> str:
        return "".join(unparse_letter(x) for x in self.letters) or "1"

    def __repr__(self) -> str:
        return f"Word('{self}')"

    @property
    def is_trivial(self) -> bool:
        return not self.letters

    @property
    def max_index(self) -> int:
        return max((abs(x) for x in self.letters), default=0)

    def conjugate(self, by: "Word") -> "Word":
        """by * self * by^-1"""
        return by * self * ~by

    def commutator(self, other: "Word") -> "Word":
        return self * other * ~self * ~other

    def abelianization(self, rank: int) -> np.ndarray:
        vec = np.zeros(rank, dtype=np.int64)
        for x in self.letters:
            vec[abs(x) - 1] += 1 if x > 0 else -1
        return vec

    def shortlex_key(self) -> Tuple:
        return (len(self.letters), tuple(_letter_key(x) for x in self.letters))


EMPTY = Word()


def reduce(letters: Iterable[int]) -> Word:
    return Word(letters)


def parse_word(text: str, rank: Optional[int] = None) -> Word:
    """Parse the ASCII form ('abA' is a b a^-1); whitespace is ignored."""
    stripped = "".join(text.split())
    if stripped in ("", "1"):
        return EMPTY
    letters = []
    for pos, ch in enumerate(stripped):
        if not ("a" <= ch.lower() <= "z"):
            raise WordParseError(f"unexpected character {ch!r} at position {pos} in {text!r}")
        index = ord(ch.lower()) - ord("a") + 1
        if rank is not None and index > rank:
            raise RankMismatchError(f"generator {ch!r} at position {pos} is outside rank {rank}")
        letters.append(-index if ch.isupper() else index)
    return Word(letters)


def as_word(w: Union[Word, str, Sequence[int]], rank: Optional[int] = None) -> Word:
    if isinstance(w, Word):
        word = w
    elif isinstance(w, str):
        return parse_word(w, rank)
    else:
        word = Word(w)
    if rank is not None and word.max_index > rank:
        raise RankMismatchError(f"{word} uses a generator outside rank {rank}")
    return word


class FreeGroup:
    """A free group of fixed rank, for parsing and sampling words."""

    def __init__(self, rank: int):
        if rank < 1:
            raise RankMismatchError(f"rank must be positive, got {rank}")
        self.rank = rank

    def __repr__(self) -> str:
        return f"FreeGroup(rank={self.rank})"

    def parse(self, text: str) -> Word:
        return parse_word(text, self.rank)

    def basis(self) -> Tuple[Word, ...]:
        return tuple(Word._trusted((i,)) for i in range(1, self.rank + 1))

    def letters(self) -> Tuple[int, ...]:
        return tuple(x for i in range(1, self.rank + 1) for x in (i, -i))

    def random_word(self, rng: np.random.Generator, length: int) -> Word:
        """Uniform reduced word of exactly the given length."""
        letters: List[int] = []
        alphabet = self.letters()
        for _ in range(length):
            choices = [x for x in alphabet if not letters or x != -letters[-1]]
            letters.append(choices[int(rng.integers(len(choices)))])
        return Word._trusted(tuple(letters))

    def words(self, max_length: int) -> Iterator[Word]:
        """All reduced words up to max_length in shortlex order."""
        alphabet = sorted(self.letters(), key=_letter_key)
        frontier: List[Tuple[int, ...]] = [()]
        yield EMPTY
        for _ in range(max_length):
            nxt = []
            for letters in frontier:
                for x in alphabet:
                    if letters and letters[-1] == -x:
                        continue
                    grown = letters + (x,)
                    nxt.append(grown)
                    yield Word._trusted(grown)
            frontier = nxt

    def conjugacy_classes(self, max_length: int) -> List["ConjugacyClass"]:
        """Nontrivial unoriented conjugacy classes up to max_length, deterministic order."""
        found = []
        for w in self.words(max_length):
            if not w or w.letters[0] == -w.letters[-1]:
                continue
            cls = ConjugacyClass(w)
            if cls.word == w:
                found.append(cls)
        return found


# ---------------------------------------------------------------------------
# Conjugacy
# ---------------------------------------------------------------------------

class CyclicReduction(NamedTuple):
    core: Word
    conjugator: Word

    @property
    def conjugacy_class(self) -> "ConjugacyClass":
        return ConjugacyClass(self.core)


def cyclic_reduce(w: Union[Word, str]) -> CyclicReduction:
    """Split w = conjugator * core * conjugator^-1 with core cyclically reduced."""
    letters = as_word(w).letters
    n = len(letters)
    i = 0
    while i < n - 1 - i and letters[i] == -letters[n - 1 - i]:
        i += 1
    return CyclicReduction(Word._trusted(letters[i:n - i]), Word._trusted(letters[:i]))


def _canonical_rotation(core: Tuple[int, ...]) -> Tuple[int, ...]:
    if not core:
        return core
    n = len(core)
    inverse = _invert_letters(core)
    best = None
    best_key = None
    for seq in (core, inverse):
        for k in range(n):
            rot = seq[k:] + seq[:k]
            key = tuple(_letter_key(x) for x in rot)
            if best_key is None or key < best_key:
                best, best_key = rot, key
    return best


class ConjugacyClass:
    """Unoriented conjugacy class, stored as its canonical rotation.

    A class and its inverse compare equal.
    """

    __slots__ = ("word", "_hash")

    def __init__(self, w: Union[Word, str, Sequence[int]] = ()):
        core = cyclic_reduce(as_word(w)).core
        self.word = Word._trusted(_canonical_rotation(core.letters))
        self._hash = hash(("class", self.word.letters))

    def __eq__(self, other) -> bool:
        return isinstance(other, ConjugacyClass) and self.word == other.word

    def __hash__(self) -> int:
        return self._hash

    def __len__(self) -> int:
        return len(self.word)

    def __lt__(self, other: "ConjugacyClass") -> bool:
        return self.word.shortlex_key() < other.word.shortlex_key()

    def __str__(self) -> str:
        return str(self.word)

    def __repr__(self) -> str:
        return f"ConjugacyClass('{self.word}')"

    @property
    def is_trivial(self) -> bool:
        return not self.word


def as_class(c: Union["ConjugacyClass", Word, str]) -> ConjugacyClass:
    return c if isinstance(c, ConjugacyClass) else ConjugacyClass(as_word(c))


# ---------------------------------------------------------------------------
# Automorphisms
# ---------------------------------------------------------------------------

class Automorphism:
    """An automorphism of F given by basis images, carrying its inverse.

    Equality and hashing use the images only.
    """

    __slots__ = ("images", "inverse_images", "_image_letters", "_inverse_letters", "_hash")

    def __init__(self, images: Sequence[Word], inverse_images: Sequence[Word], *, check: bool = True):
        self.images = tuple(as_word(w) for w in images)
        self.inverse_images = tuple(as_word(w) for w in inverse_images)
        self._image_letters = tuple(w.letters for w in self.images)
        self._inverse_letters = tuple(_invert_letters(w.letters) for w in self.images)
        self._hash = hash(self._image_letters)
        if check:
            self._validate()

    def _validate(self) -> None:
        r = self.rank
        if len(self.inverse_images) != r:
            raise InvalidAutomorphismError(f"{r} images but {len(self.inverse_images)} inverse images")
        for i, (img, inv) in enumerate(zip(self.images, self.inverse_images), start=1):
            name = unparse_letter(i)
            if img.max_index > r or inv.max_index > r:
                raise RankMismatchError(f"image of {name} leaves rank {r}")
            if not img:
                raise InvalidAutomorphismError(f"image of {name} is trivial", generator=name)
        basis = [Word._trusted((i,)) for i in range(1, r + 1)]
        inverse = Automorphism(self.inverse_images, self.images, check=False)
        for i, x in enumerate(basis):
            name = unparse_letter(i + 1)
            if apply(self, inverse.images[i]) != x:
                raise InvalidAutomorphismError(
                    f"inverse image of {name} does not map back to {name}", generator=name)
            if apply(inverse, self.images[i]) != x:
                raise InvalidAutomorphismError(
                    f"image of {name} is not undone by the supplied inverse", generator=name)

    @classmethod
    def from_strings(cls, images: Sequence[str], inverse_images: Sequence[str], rank: Optional[int] = None) -> "Automorphism":
        rank = rank if rank is not None else len(images)
        if len(images) != rank:
            raise RankMismatchError(f"expected {rank} images, got {len(images)}")
        return cls([parse_word(s, rank) for s in images], [parse_word(s, rank) for s in inverse_images])

    @classmethod
    def identity(cls, rank: int) -> "Automorphism":
        basis = [Word._trusted((i,)) for i in range(1, rank + 1)]
        return cls(basis, basis, check=False)

    @classmethod
    def inner(cls, w: Union[Word, str], rank: int) -> "Automorphism":
        """i_w: x -> w x w^-1."""
        w = as_word(w, rank)
        basis = [Word._trusted((i,)) for i in range(1, rank + 1)]
        return cls([x.conjugate(w) for x in basis], [x.conjugate(~w) for x in basis], check=False)

    @property
    def rank(self) -> int:
        return len(self.images)

    @property
    def inverse(self) -> "Automorphism":
        return Automorphism(self.inverse_images, self.images, check=False)

    def __call__(self, w: Union[Word, str]) -> Word:
        return apply(self, w)

    def __mul__(self, other: "Automorphism") -> "Automorphism":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        return isinstance(other, Automorphism) and self._image_letters == other._image_letters

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return ", ".join(f"{unparse_letter(i)}->{w}" for i, w in enumerate(self.images, start=1))

    def __repr__(self) -> str:
        return f"Automorphism({self})"

    def max_image_length(self) -> int:
        return max(len(w) for w in self.images + self.inverse_images)


def apply(phi: Automorphism, w: Union[Word, str]) -> Word:
    """Substitute basis images into w and reduce."""
    w = as_word(w)
    if w.max_index > phi.rank:
        raise RankMismatchError(f"{w} uses a generator outside rank {phi.rank}")
    out: List[int] = []
    for x in w.letters:
        out.extend(phi._image_letters[x - 1] if x > 0 else phi._inverse_letters[-x - 1])
    return Word(out)


def compose(phi: Automorphism, psi: Automorphism) -> Automorphism:
    """phi after psi: apply(compose(phi, psi), w) == apply(phi, apply(psi, w))."""
    if phi.rank != psi.rank:
        raise RankMismatchError(f"cannot compose rank {phi.rank} with rank {psi.rank}")
    inv_phi = phi.inverse
    images = [apply(phi, w) for w in psi.images]
    inverse_images = [apply(psi.inverse, w) for w in inv_phi.images]
    return Automorphism(images, inverse_images, check=False)


def power(phi: Automorphism, k: int) -> Automorphism:
    result = Automorphism.identity(phi.rank)
    step = phi if k >= 0 else phi.inverse
    for _ in range(abs(k)):
        result = compose(step, result)
    return result


def inner_conjugator(images: Sequence[Word]) -> Optional[Word]:
    """Return w with images[i] == w x_i w^-1 for every i, or None.

    Exact for rank >= 2: the first image pins w up to a power of x_1 and the
    second image pins the power.
    """
    r = len(images)
    if r == 0:
        return EMPTY
    first = cyclic_reduce(images[0])
    if first.core.letters != (1,):
        return None
    u = first.conjugator
    k = 0
    if r >= 2:
        v = (~u * images[1] * u).letters
        if v and v[0] in (1, -1):
            lead = v[0]
            run = 0
            while run < len(v) and v[run] == lead:
                run += 1
            k = run * lead
    w = u * Word((1,) * k if k >= 0 else (-1,) * (-k))
    for i, img in enumerate(images, start=1):
        if Word((i,)).conjugate(w) != img:
            return None
    return w


def is_inner(phi: Automorphism) -> Optional[Word]:
    """Some w with phi == i_w, or None when phi is not inner."""
    return inner_conjugator(phi.images)


def abelianization_matrix(phi: Automorphism) -> np.ndarray:
    """Integer matrix whose columns are the abelianized basis images."""
    return np.stack([w.abelianization(phi.rank) for w in phi.images], axis=1)


# ---------------------------------------------------------------------------
# Whitehead automorphisms and peak reduction
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def whitehead_automorphisms(rank: int) -> Tuple[Automorphism, ...]:
    """Type-2 Whitehead automorphisms (x -> x, xm, m^-1 x, m^-1 x m), identity excluded."""
    autos = []
    for index in range(1, rank + 1):
        for m in (index, -index):
            others = [i for i in range(1, rank + 1) if i != index]
            for choices in product(range(4), repeat=len(others)):
                if not any(choices):
                    continue
                images = [None] * rank
                inverse = [None] * rank
                images[index - 1] = inverse[index - 1] = Word._trusted((index,))
                for x, c in zip(others, choices):
                    images[x - 1] = _whitehead_image(x, m, c)
                    inverse[x - 1] = _whitehead_image(x, -m, c)
                autos.append(Automorphism(images, inverse, check=False))
    return tuple(autos)


def _whitehead_image(x: int, m: int, choice: int) -> Word:
    if choice == 0:
        return Word._trusted((x,))
    if choice == 1:
        return Word((x, m))
    if choice == 2:
        return Word((-m, x))
    return Word((-m, x, m))


@lru_cache(maxsize=None)
def signed_permutations(rank: int) -> Tuple[Automorphism, ...]:
    """Type-1 Whitehead automorphisms, identity excluded."""
    autos = []
    for perm in permutations(range(1, rank + 1)):
        for signs in product((1, -1), repeat=rank):
            letters = [s * p for s, p in zip(signs, perm)]
            if letters == list(range(1, rank + 1)):
                continue
            images = [Word._trusted((x,)) for x in letters]
            inverse = [None] * rank
            for i, x in enumerate(letters, start=1):
                inverse[abs(x) - 1] = Word._trusted((i if x > 0 else -i,))
            autos.append(Automorphism(images, inverse, check=False))
    return tuple(autos)


@lru_cache(maxsize=None)
def elementary_nielsen_moves(rank: int) -> Tuple[Automorphism, ...]:
    """Transvections x_i -> x_i x_j^e, x_i -> x_j^e x_i and inversions x_i -> x_i^-1."""
    moves = []
    basis = [Word._trusted((i,)) for i in range(1, rank + 1)]
    for i in range(1, rank + 1):
        for j in range(1, rank + 1):
            if i == j:
                continue
            for e in (1, -1):
                for left in (False, True):
                    images = list(basis)
                    inverse = list(basis)
                    if left:
                        images[i - 1] = Word((j * e, i))
                        inverse[i - 1] = Word((-j * e, i))
                    else:
                        images[i - 1] = Word((i, j * e))
                        inverse[i - 1] = Word((i, -j * e))
                    moves.append(Automorphism(images, inverse, check=False))
        images = list(basis)
        images[i - 1] = Word._trusted((-i,))
        moves.append(Automorphism(images, list(images), check=False))
    return tuple(moves)


def nielsen_ball(rank: int, depth: int) -> Set[Automorphism]:
    """Products of at most depth elementary Nielsen moves."""
    ball = {Automorphism.identity(rank)}
    frontier = list(ball)
    for _ in range(depth):
        nxt = []
        for phi in frontier:
            for move in elementary_nielsen_moves(rank):
                psi = compose(move, phi)
                if psi not in ball:
                    ball.add(psi)
                    nxt.append(psi)
        frontier = nxt
    return ball


class WhiteheadResult(NamedTuple):
    classes: Tuple[ConjugacyClass, ...]
    length: int
    moves: Tuple[Automorphism, ...]
    automorphism: Automorphism


def _cyclic_cores(words: Sequence[Word]) -> Tuple[Word, ...]:
    return tuple(cyclic_reduce(w).core for w in words)


def whitehead_minimize(classes: Sequence[Union[ConjugacyClass, Word, str]], rank: int,
                       max_moves: int = MAX_MINIMIZE_MOVES) -> WhiteheadResult:
    """Greedy peak reduction: apply the best strictly shortening Whitehead move until none exists.

    The result has minimal total length in the Aut(F)-orbit of the tuple.
    """
    if not classes:
        raise TrivialClassError("whitehead_minimize needs at least one class")
    words = _cyclic_cores([as_class(c).word if not isinstance(c, Word) else c for c in classes])
    for w in words:
        if not w:
            raise TrivialClassError("trivial class in Whitehead minimization")
        if w.max_index > rank:
            raise RankMismatchError(f"{w} uses a generator outside rank {rank}")
    total = sum(len(w) for w in words)
    moves: List[Automorphism] = []
    composite = Automorphism.identity(rank)
    while True:
        best = None
        best_total = total
        for phi in whitehead_automorphisms(rank):
            images = _cyclic_cores([apply(phi, w) for w in words])
            new_total = sum(len(w) for w in images)
            if new_total < best_total:
                best, best_total, best_images = phi, new_total, images
        if best is None:
            break
        words, total = best_images, best_total
        moves.append(best)
        composite = compose(best, composite)
        if len(moves) > max_moves:
            raise BudgetExceededError("Whitehead minimization did not settle", max_moves, len(moves))
    logger.debug("minimized to length %d after %d moves", total, len(moves))
    return WhiteheadResult(tuple(ConjugacyClass(w) for w in words), total, tuple(moves), composite)


def find_in_orbit(classes: Sequence[ConjugacyClass], rank: int,
                  predicate: Callable[[Tuple[ConjugacyClass, ...]], bool],
                  budget: int = DEFAULT_ORBIT_BUDGET) -> Optional[Tuple[ConjugacyClass, ...]]:
    """Breadth-first search of the minimal level of a (minimized) tuple.

    Visits tuples reachable by length-preserving Whitehead moves, deduplicated
    on canonical forms; returns the first tuple satisfying predicate.
    """
    start = tuple(as_class(c) for c in classes)
    total = sum(len(c) for c in start)
    seen = {start}
    queue = deque([start])
    moves = signed_permutations(rank) + whitehead_automorphisms(rank)
    while queue:
        state = queue.popleft()
        if predicate(state):
            return state
        for phi in moves:
            images = tuple(ConjugacyClass(apply(phi, c.word)) for c in state)
            if sum(len(c) for c in images) != total or images in seen:
                continue
            seen.add(images)
            if len(seen) > budget:
                raise BudgetExceededError("Whitehead orbit search exceeded its budget", budget, len(seen))
            queue.append(images)
    return None


def whitehead_orbit(classes: Sequence[ConjugacyClass], rank: int,
                    budget: int = DEFAULT_ORBIT_BUDGET) -> Set[Tuple[ConjugacyClass, ...]]:
    """All tuples on the minimal level of the orbit of a minimized tuple."""
    visited: Set[Tuple[ConjugacyClass, ...]] = set()

    def collect(state):
        visited.add(state)
        return False

    find_in_orbit(classes, rank, collect, budget)
    return visited


def _require_nontrivial(w: Word) -> Word:
    if not cyclic_reduce(w).core:
        raise TrivialClassError("operation undefined on the trivial word")
    return w


def is_primitive(w: Union[Word, str], rank: int) -> bool:
    """True iff w belongs to some free basis of F."""
    w = _require_nontrivial(as_word(w, rank))
    vector = w.abelianization(rank)
    if gcd(*[int(abs(v)) for v in vector]) != 1:
        return False
    return whitehead_minimize([w], rank).length == 1


def whitehead_graph(w: Union[Word, ConjugacyClass], rank: int) -> nx.Graph:
    """Whitehead graph of a cyclic word: one vertex per letter, an edge x -- y^-1 per cyclic subword xy."""
    core = (w.word if isinstance(w, ConjugacyClass) else cyclic_reduce(w).core).letters
    graph = nx.Graph()
    graph.add_nodes_from(x for i in range(1, rank + 1) for x in (i, -i))
    n = len(core)
    for i in range(n):
        x, y = core[i], core[(i + 1) % n]
        graph.add_edge(x, -y)
    return graph


def is_simple(w: Union[Word, str], rank: int, budget: int = DEFAULT_ORBIT_BUDGET) -> bool:
    """True iff w lies in a proper free factor of F."""
    w = _require_nontrivial(as_word(w, rank))
    result = whitehead_minimize([w], rank)
    graph = whitehead_graph(result.classes[0], rank)
    if not nx.is_connected(graph):
        return True
    if not list(nx.articulation_points(graph)):
        return False
    logger.info("cut vertex at minimal length for %s; searching the minimal level", w)
    found = find_in_orbit(result.classes, rank,
                          lambda state: not nx.is_connected(whitehead_graph(state[0], rank)), budget)
    return found is not None


# ---------------------------------------------------------------------------
# Stallings graphs
# ---------------------------------------------------------------------------

class SubgroupGraph:
    """Folded core graph of a finitely generated subgroup H of F.

    Edges are (tail, label, head) with label in 1..rank; vertex 0 is the
    basepoint. Vertices are numbered in breadth-first order from it.
    """

    def __init__(self, rank: int, num_vertices: int, edges: Sequence[Tuple[int, int, int]],
                 generators: Sequence[Word] = ()):
        self.rank = rank
        self.num_vertices = num_vertices
        self.edges = tuple(sorted(edges))
        self.basepoint = 0
        self._moves: Dict[Tuple[int, int], int] = {}
        for u, label, v in self.edges:
            self._moves[(u, label)] = v
            self._moves[(v, -label)] = u
        self._tree_path: Dict[int, Tuple[int, ...]] = {0: ()}
        self._tree_edges: Set[Tuple[int, int, int]] = set()
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for x in sorted(self._letters(), key=_letter_key):
                w = self._moves.get((v, x))
                if w is None or w in self._tree_path:
                    continue
                self._tree_path[w] = self._tree_path[v] + (x,)
                self._tree_edges.add((v, x, w) if x > 0 else (w, -x, v))
                queue.append(w)
        self._generator_index: Dict[Tuple[int, int, int], int] = {}
        for e in self.edges:
            if e not in self._tree_edges:
                self._generator_index[e] = len(self._generator_index) + 1
        self.generators = tuple(generators) if generators else self.basis()

    def _letters(self) -> Tuple[int, ...]:
        return tuple(x for i in range(1, self.rank + 1) for x in (i, -i))

    def __repr__(self) -> str:
        return f"SubgroupGraph(vertices={self.num_vertices}, edges={len(self.edges)}, rank={self.subgroup_rank})"

    @classmethod
    def from_permutations(cls, rank: int, perms: Sequence[Sequence[int]]) -> "SubgroupGraph":
        """Schreier graph of a transitive action; perms[i][v] is v acted on by generator i+1."""
        n = len(perms[0]) if perms else 1
        edges = [(v, i + 1, perm[v]) for i, perm in enumerate(perms) for v in range(n)]
        return _normalize(rank, n, edges, ())

    @property
    def subgroup_rank(self) -> int:
        return len(self.edges) - self.num_vertices + 1

    def move(self, vertex: int, letter: int) -> Optional[int]:
        return self._moves.get((vertex, letter))

    def read(self, start: int, w: Union[Word, str]) -> Optional[int]:
        v = start
        for x in as_word(w).letters:
            v = self._moves.get((v, x))
            if v is None:
                return None
        return v

    def contains(self, w: Union[Word, str]) -> bool:
        return self.read(self.basepoint, w) == self.basepoint

    def is_full_cover(self) -> bool:
        return all((v, x) in self._moves for v in range(self.num_vertices) for x in self._letters())

    @property
    def index(self) -> Optional[int]:
        """Index of H in F, or None when infinite."""
        return self.num_vertices if self.is_full_cover() else None

    def tree_path(self, vertex: int) -> Word:
        return Word._trusted(self._tree_path[vertex])

    def basis(self) -> Tuple[Word, ...]:
        """Spanning-tree basis of H, one element per non-tree edge."""
        out = []
        for (u, label, v), _ in sorted(self._generator_index.items(), key=lambda kv: kv[1]):
            out.append(Word(self._tree_path[u] + (label,) + _invert_letters(self._tree_path[v])))
        return tuple(out)

    def read_in_basis(self, start: int, w: Union[Word, str]) -> Optional[Tuple[int, Word]]:
        """Read w from start, recording crossed non-tree edges as H-basis letters."""
        v = start
        out: List[int] = []
        for x in as_word(w).letters:
            nxt = self._moves.get((v, x))
            if nxt is None:
                return None
            edge = (v, x, nxt) if x > 0 else (nxt, -x, v)
            j = self._generator_index.get(edge)
            if j is not None:
                out.append(j if x > 0 else -j)
            v = nxt
        return v, Word(out)

    def express(self, h: Union[Word, str]) -> Word:
        """h in the spanning-tree basis; raises if h is not in H."""
        found = self.read_in_basis(self.basepoint, h)
        if found is None or found[0] != self.basepoint:
            raise SubgroupNotPreservedError(f"{h} is not in the subgroup")
        return found[1]

    def closed_words(self, max_length: int) -> List[Word]:
        """Elements of H of word length at most max_length, shortlex order."""
        found = []
        frontier: List[Tuple[Tuple[int, ...], int]] = [((), self.basepoint)]
        found.append(EMPTY)
        letters = sorted(self._letters(), key=_letter_key)
        for _ in range(max_length):
            nxt = []
            for word, v in frontier:
                for x in letters:
                    if word and word[-1] == -x:
                        continue
                    w = self._moves.get((v, x))
                    if w is None:
                        continue
                    grown = word + (x,)
                    nxt.append((grown, w))
                    if w == self.basepoint:
                        found.append(Word._trusted(grown))
            frontier = nxt
        return found


def _normalize(rank: int, n: int, edges: Iterable[Tuple[int, int, int]], generators: Sequence[Word]) -> SubgroupGraph:
    """Prune to the core at vertex 0 and renumber breadth-first."""
    edges = set(edges)
    while True:
        degree = [0] * n
        for u, _, v in edges:
            degree[u] += 1
            degree[v] += 1
        leaves = {v for v in range(n) if v != 0 and degree[v] == 1}
        if not leaves:
            break
        edges = {e for e in edges if e[0] not in leaves and e[2] not in leaves}
    moves: Dict[int, List[Tuple[int, int]]] = {}
    for u, label, v in edges:
        moves.setdefault(u, []).append((label, v))
        moves.setdefault(v, []).append((-label, u))
    order = {0: 0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for x, w in sorted(moves.get(v, []), key=lambda item: (_letter_key(item[0]), item[1])):
            if w not in order:
                order[w] = len(order)
                queue.append(w)
    renamed = [(order[u], label, order[v]) for u, label, v in edges]
    return SubgroupGraph(rank, len(order), renamed, generators)


def stallings_graph(gens: Sequence[Union[Word, str]], rank: int) -> SubgroupGraph:
    """Folded core graph of the subgroup generated by gens."""
    words = [as_word(g, rank) for g in gens]
    edges: List[Tuple[int, int, int]] = []
    n = 1
    for w in words:
        if not w:
            continue
        cur = 0
        for pos, x in enumerate(w.letters):
            nxt = 0 if pos == len(w) - 1 else n
            if nxt:
                n += 1
            edges.append((cur, x, nxt) if x > 0 else (nxt, -x, cur))
            cur = nxt

    parent = list(range(n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    changed = True
    while changed:
        changed = False
        seen: Dict[Tuple[int, int], int] = {}
        distinct = set()
        for u, label, v in edges:
            u, v = find(u), find(v)
            if (u, label, v) in distinct:
                continue
            distinct.add((u, label, v))
            for key, target in (((u, label), v), ((v, -label), u)):
                other = seen.get(key)
                if other is None:
                    seen[key] = target
                elif find(other) != find(target):
                    parent[find(other)] = find(target)
                    changed = True
        edges = [(find(u), label, find(v)) for u, label, v in distinct]
    edges = list({(find(u), label, find(v)) for u, label, v in edges})
    roots = sorted({find(v) for v in range(n)})
    relabel = {r: i for i, r in enumerate(roots)}
    base = relabel[find(0)]
    mapped = []
    for u, label, v in edges:
        mapped.append((_swap_base(relabel[u], base), label, _swap_base(relabel[v], base)))
    return _normalize(rank, len(roots), mapped, tuple(words))


def _swap_base(v: int, base: int) -> int:
    if v == base:
        return 0
    if v == 0:
        return base
    return v


def index_two_subgroups(rank: int) -> List[SubgroupGraph]:
    """The 2^rank - 1 index-2 subgroups, as kernels of nonzero maps F -> Z/2."""
    subgroups = []
    for vector in product((0, 1), repeat=rank):
        if not any(vector):
            continue
        perms = [[1, 0] if bit else [0, 1] for bit in vector]
        subgroups.append(SubgroupGraph.from_permutations(rank, perms))
    return subgroups


def induced_automorphism(phi: Automorphism, subgroup: SubgroupGraph) -> Automorphism:
    """Restriction of phi to H, written in the spanning-tree basis of H."""
    if phi.rank != subgroup.rank:
        raise RankMismatchError("automorphism and subgroup ranks differ")
    basis = subgroup.basis()
    images, inverse_images = [], []
    for h in basis:
        try:
            images.append(subgroup.express(apply(phi, h)))
            inverse_images.append(subgroup.express(apply(phi.inverse, h)))
        except SubgroupNotPreservedError:
            raise SubgroupNotPreservedError() from None
    return Automorphism(images, inverse_images)


def substitute(w: Word, images: Sequence[Word]) -> Word:
    """Homomorphic substitution x_i -> images[i-1] without automorphism checks."""
    out: List[int] = []
    for x in w.letters:
        img = images[abs(x) - 1].letters
        out.extend(img if x > 0 else _invert_letters(img))
    return Word(out)
