"""Biased permutations of k particle classes: chains, level decompositions and partition tails.

Classes are labelled 1..k and elements 1..n, with the elements of class 1 first, then class 2,
and so on. A *word* is a tuple of class labels; 0 marks a free slot in prefixes and level words.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .bounds import BoundCertificate, epsilon_exact, epsilon_r_bound, theorem3_bound
from .chain import ReversibleChain, StateSpace, check_size, new_chain, spectrum, trivial_chain
from .decomposition import DecompositionBundle, Partition, decompose
from .errors import InconsistentPrefix, NotCertifiable, ProbabilityOverflow

C1 = math.exp(math.pi * math.sqrt(2.0 / 3.0))
PARTITION_CAP = 1000


@dataclass(frozen=True, eq=False)
class KClassParams:
    """Class sizes and the class-level bias matrix.

    ``class_p[a, b]`` is the probability that a class-(a+1) element is put ahead of a
    class-(b+1) element; the diagonal is 1/2.
    """

    class_sizes: tuple[int, ...]
    class_p: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(c) for c in self.class_sizes)
        object.__setattr__(self, "class_sizes", sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError("class sizes must be positive")
        p = np.array(self.class_p, dtype=float)
        k = len(sizes)
        if p.shape != (k, k):
            raise ValueError(f"bias matrix must be {k}x{k}")
        if not np.allclose(np.diag(p), 0.5, atol=1e-15):
            raise ValueError("same-class pairs must have probability 1/2")
        if not np.allclose(p + p.T, 1.0, atol=1e-12):
            raise ValueError("p(a,b) + p(b,a) must equal 1")
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("biases must lie strictly between 0 and 1")
        p.setflags(write=False)
        object.__setattr__(self, "class_p", p)

    @classmethod
    def constant(cls, class_sizes: Sequence[int], p: float) -> "KClassParams":
        k = len(class_sizes)
        m = np.full((k, k), 0.5)
        iu = np.triu_indices(k, 1)
        m[iu] = p
        m[(iu[1], iu[0])] = 1.0 - p
        return cls(tuple(class_sizes), m)

    @classmethod
    def from_dict(cls, d: dict) -> "KClassParams":
        sizes = d["class_sizes"]
        if "p_constant" in d:
            return cls.constant(sizes, float(d["p_constant"]))
        return cls(tuple(sizes), np.array(d["p"], dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "KClassParams":
        return cls.from_dict(json.loads(text))

    @property
    def k(self) -> int:
        return len(self.class_sizes)

    @property
    def n(self) -> int:
        return sum(self.class_sizes)

    @property
    def class_of(self) -> tuple[int, ...]:
        """Class label of each element 1..n (index 0 holds element 1)."""
        return tuple(c + 1 for c, size in enumerate(self.class_sizes) for _ in range(size))

    @property
    def p(self) -> np.ndarray:
        """Element-level n x n bias matrix."""
        idx = np.array(self.class_of) - 1
        return self.class_p[np.ix_(idx, idx)]

    @property
    def class_q(self) -> np.ndarray:
        """(k+1) x (k+1) table with q[a, b] = p(a,b)/p(b,a); row and column 0 are unused."""
        q = np.ones((self.k + 1, self.k + 1))
        q[1:, 1:] = self.class_p / self.class_p.T
        return q

    @property
    def q_bound(self) -> float:
        """Largest q(b, a) over classes a < b; below 1 means the instance is bounded."""
        if self.k == 1:
            return 1.0
        q = self.class_q[1:, 1:]
        return float(np.max(q[np.tril_indices(self.k, -1)]))

    @property
    def q_star(self) -> float:
        """Largest ratio p(i,j)/p(j,i) over element pairs i < j."""
        if self.k == 1:
            return 1.0
        q = self.class_q[1:, 1:]
        return float(max(1.0, np.max(q[np.triu_indices(self.k, 1)])))

    def is_positively_biased(self) -> bool:
        p = self.p
        return bool(np.all(p[np.triu_indices(self.n, 1)] >= 0.5))

    def is_weakly_monotone(self) -> bool:
        p = self.p
        n = self.n
        if not self.is_positively_biased():
            return False
        return all(p[i, j + 1] >= p[i, j] for i in range(n) for j in range(i + 1, n - 1))

    def is_bounded(self) -> bool:
        return self.q_bound < 1.0

    def to_dict(self) -> dict:
        return {"class_sizes": list(self.class_sizes), "p": self.class_p.tolist()}


# ---------------------------------------------------------------- words and weights


def word_label(word: Sequence[int]) -> str:
    if all(0 <= c < 10 for c in word):
        return "".join("_" if c == 0 else str(c) for c in word)
    return ",".join("_" if c == 0 else str(c) for c in word)


def parse_word(text: str) -> tuple[int, ...]:
    parts = text.split(",") if "," in text else list(text)
    return tuple(0 if s in ("_", "0") else int(s) for s in parts)


def multiset_count(counts: Sequence[int]) -> int:
    total = math.factorial(sum(counts))
    for c in counts:
        total //= math.factorial(c)
    return total


def multiset_words(symbols: Sequence[int], counts: Sequence[int]) -> list[tuple[int, ...]]:
    """All arrangements of a multiset, in lexicographic order of ``symbols``."""
    order = sorted(range(len(symbols)), key=lambda i: symbols[i])
    syms = [symbols[i] for i in order]
    left = [counts[i] for i in order]
    n = sum(left)
    out = []
    cur = []

    def rec():
        if len(cur) == n:
            out.append(tuple(cur))
            return
        for t, s in enumerate(syms):
            if left[t]:
                left[t] -= 1
                cur.append(s)
                rec()
                cur.pop()
                left[t] += 1

    rec()
    return out


def class_words(params: KClassParams) -> list[tuple[int, ...]]:
    return multiset_words(list(range(1, params.k + 1)), params.class_sizes)


def classes_of_perm(params: KClassParams, perm: Sequence[int]) -> tuple[int, ...]:
    cls = params.class_of
    return tuple(cls[e - 1] for e in perm)


def stationary_weight(params: KClassParams, word: Sequence[int], perm: bool = False) -> float:
    """Unnormalized stationary weight: product of q(larger, smaller) over inversions.

    ``word`` holds class labels, or element labels when ``perm`` is true.
    """
    w = classes_of_perm(params, word) if perm else tuple(word)
    q = params.class_q
    out = 1.0
    for i in range(len(w)):
        for j in range(i + 1, len(w)):
            if w[i] > w[j]:
                out *= q[w[i], w[j]]
    return out


def inversions(word: Sequence[int]) -> int:
    return sum(1 for i in range(len(word)) for j in range(i + 1, len(word)) if word[i] > word[j])


# ---------------------------------------------------------------- chains


def _normalized_pi(weights: Iterable[float]) -> np.ndarray:
    w = np.fromiter(weights, dtype=float)
    return w / w.sum()


def unbiased_adjacent_chain(m: int, elements: Sequence[int] | None = None, cap: int | None = None) -> ReversibleChain:
    """Pick one of m-1 adjacent pairs uniformly and swap it with probability 1/2."""
    elements = list(elements) if elements is not None else list(range(1, m + 1))
    if m == 1:
        return trivial_chain(str(elements[0]))
    check_size(math.factorial(m), cap)
    states = list(itertools.permutations(elements))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s, st in enumerate(states):
        for i in range(1, m):
            t = list(st)
            t[i - 1], t[i] = t[i], t[i - 1]
            P[s, index[tuple(t)]] += 0.5 / (m - 1)
        P[s, s] += 1.0 - P[s].sum()
    return new_chain(StateSpace(tuple(word_label(s) for s in states)), P, np.full(len(states), 1 / len(states)))


def build_Mnn(params: KClassParams, on_words: bool = False, cap: int | None = None) -> ReversibleChain:
    """Nearest-neighbour chain: pick 1 < i <= n, put sigma(i) ahead of sigma(i-1) w.p. p/2."""
    n = params.n
    if n == 1:
        return trivial_chain("1")
    if on_words:
        check_size(multiset_count(params.class_sizes), cap)
        states = class_words(params)
        cls = lambda s: s
    else:
        check_size(math.factorial(n), cap)
        states = list(itertools.permutations(range(1, n + 1)))
        cls = lambda s: classes_of_perm(params, s)
    index = {s: i for i, s in enumerate(states)}
    cp = params.class_p
    P = np.zeros((len(states), len(states)))
    for s, st in enumerate(states):
        c = cls(st)
        for i in range(1, n):
            prob = cp[c[i] - 1, c[i - 1] - 1] / 2.0 / (n - 1)
            t = list(st)
            t[i - 1], t[i] = t[i], t[i - 1]
            P[s, index[tuple(t)]] += prob
        P[s, s] += 1.0 - P[s].sum()
    pi = _normalized_pi(stationary_weight(params, st, perm=not on_words) for st in states)
    return new_chain(StateSpace(tuple(word_label(s) for s in states)), P, pi)


def _class_moves(cls: Sequence[int], q: np.ndarray, with_n: bool):
    """Yield (left position, right position, swap probability) for each L/R(/N) choice that can fire."""
    n = len(cls)
    for i in range(n):
        ci = cls[i]
        j = i - 1
        while j >= 0 and cls[j] < ci:
            j -= 1
        if j >= 0 and cls[j] > ci:
            yield j, i, 0.5
        j = i + 1
        while j < n and cls[j] < ci:
            j += 1
        if j < n and cls[j] > ci:
            cj = cls[j]
            prob = 0.5 * q[cj, ci]
            for m in range(i + 1, j):
                prob *= q[cj, cls[m]] * q[cls[m], ci]
            if prob > 1.0:
                raise ProbabilityOverflow(f"swap probability {prob!r} exceeds 1")
            yield i, j, prob
        if with_n:
            j = i - 1
            while j >= 0 and cls[j] != ci:
                j -= 1
            if j >= 0:
                yield j, i, 0.5


def _move_chain(
    params: KClassParams,
    states: list,
    classes,
    with_n: bool,
    perm: bool,
) -> ReversibleChain:
    n = params.n
    index = {s: i for i, s in enumerate(states)}
    select = 1.0 / ((3 if with_n else 2) * n)
    q = params.class_q
    P = np.zeros((len(states), len(states)))
    for s, st in enumerate(states):
        for left, right, prob in _class_moves(classes(st), q, with_n):
            t = list(st)
            t[left], t[right] = t[right], t[left]
            target = index.get(tuple(t))
            if target is not None:  # moves leaving the declared space are rejected
                P[s, target] += select * prob
        P[s, s] += 1.0 - P[s].sum()
    pi = _normalized_pi(stationary_weight(params, st, perm=perm) for st in states)
    return new_chain(StateSpace(tuple(word_label(s) for s in states)), P, pi)


def build_Mk(params: KClassParams, cap: int | None = None) -> ReversibleChain:
    """k-particle chain on class words; L moves accept w.p. 1/2, R moves carry the q-product."""
    check_size(multiset_count(params.class_sizes), cap)
    return _move_chain(params, class_words(params), lambda s: s, with_n=False, perm=False)


def build_MT(params: KClassParams, cap: int | None = None) -> ReversibleChain:
    """M_k moves on full permutations plus same-class swaps (direction N)."""
    check_size(math.factorial(params.n), cap)
    states = list(itertools.permutations(range(1, params.n + 1)))
    return _move_chain(params, states, lambda s: classes_of_perm(params, s), with_n=True, perm=True)


def mt_components(params: KClassParams, cap: int | None = None):
    """The k+1 independent pieces of M_T plus an idle factor, and their selection probabilities.

    Returns (chains, probs, to_label) where ``to_label`` maps a permutation to the product label.
    """
    n, k = params.n, params.k
    chains, probs = [], []
    start = 1
    for size in params.class_sizes:
        chains.append(unbiased_adjacent_chain(size, range(start, start + size), cap=cap))
        probs.append((size - 1) / (3 * n))
        start += size
    chains.append(build_Mk(params, cap=cap))
    probs.append(2.0 / 3.0)
    chains.append(trivial_chain("idle"))
    probs.append(k / (3 * n))
    cls = params.class_of

    def to_label(perm: Sequence[int]) -> str:
        parts = [word_label([e for e in perm if cls[e - 1] == c]) for c in range(1, k + 1)]
        parts.append(word_label(classes_of_perm(params, perm)))
        parts.append("idle")
        return "|".join(parts)

    return chains, probs, to_label


def build_exclusion(
    biases,
    n1: int,
    n0: int,
    move_prob: float | None = None,
    cap: int | None = None,
) -> ReversibleChain:
    """Generalized exclusion process on words of n1 particles (1) and n0 holes (0).

    ``biases[s, h]`` is the stationary ratio gained when hole h (counted from the left) moves
    left across the particle on its left at slot boundary s. A scalar or a per-boundary vector
    broadcasts. Each exchange fires w.p. ``move_prob``/2 in the unfavoured direction scaled by
    the bias, and ``move_prob``/2 in the favoured one. Default ``move_prob`` is 1/(2(n1+n0)).
    """
    m = n1 + n0
    check_size(math.comb(m, n1), cap)
    if move_prob is None:
        move_prob = 1.0 / (2 * m)
    bias = np.broadcast_to(
        np.asarray(biases, dtype=float).reshape(-1, 1) if np.ndim(biases) == 1 else np.asarray(biases, dtype=float),
        (max(m - 1, 0), n0),
    )
    states = [tuple(1 if s in combo else 0 for s in range(m)) for combo in itertools.combinations(range(m), n1)]
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    weights = np.ones(len(states))
    for s, st in enumerate(states):
        holes = [i for i in range(m) if st[i] == 0]
        for h, pos in enumerate(holes):
            weights[s] *= np.prod(bias[pos:n1 + h, h])
        seen = 0
        for b in range(m - 1):
            seen += st[b] == 0
            if st[b] == st[b + 1]:
                continue
            t = list(st)
            t[b], t[b + 1] = t[b + 1], t[b]
            if st[b] == 1:  # hole moves left
                h = seen
                prob = move_prob * 0.5 * bias[b, h]
            else:
                prob = move_prob * 0.5
            if prob > 1.0:
                raise ProbabilityOverflow(f"exchange probability {prob!r} exceeds 1")
            P[s, index[tuple(t)]] += prob
        P[s, s] += 1.0 - P[s].sum()
    labels = tuple("".join(map(str, s)) for s in states)
    return new_chain(StateSpace(labels), P, weights / weights.sum())


# ---------------------------------------------------------------- level decomposition


def _parse_prefix(params: KClassParams, level: int, sigma_prefix) -> tuple[int, ...]:
    prefix = parse_word(sigma_prefix) if isinstance(sigma_prefix, str) else tuple(int(c) for c in sigma_prefix)
    if not 1 <= level <= params.k - 1:
        raise InconsistentPrefix(f"level must lie in 1..{params.k - 1}")
    if len(prefix) != params.n:
        raise InconsistentPrefix(f"prefix has length {len(prefix)}, expected {params.n}")
    for c in range(1, params.k + 1):
        want = params.class_sizes[c - 1] if c < level else 0
        if prefix.count(c) != want:
            raise InconsistentPrefix(f"prefix holds {prefix.count(c)} elements of class {c}, expected {want}")
    return prefix


def level_prefixes(params: KClassParams, level: int) -> list[tuple[int, ...]]:
    """Every placement of classes 1..level-1, free slots marked 0."""
    free = sum(params.class_sizes[level - 1:])
    symbols = list(range(level))
    counts = [free] + list(params.class_sizes[: level - 1])
    return multiset_words(symbols, counts)


def compose(prefix: Sequence[int], free_slots: Sequence[int], a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    """Fill the free slots: class-i particles where ``a`` has them, the sequence ``b`` elsewhere."""
    out = list(prefix)
    it = iter(b)
    for slot, pos in enumerate(free_slots):
        out[pos] = a[slot] if a[slot] else next(it)
    return tuple(out)


def split_word(word: Sequence[int], free_slots: Sequence[int], level: int) -> tuple[tuple, tuple]:
    a = tuple(level if word[p] == level else 0 for p in free_slots)
    b = tuple(word[p] for p in free_slots if word[p] != level)
    return a, b


@dataclass(frozen=True, eq=False)
class LevelDecomposition:
    params: KClassParams
    level: int
    sigma_prefix: tuple
    free_slots: tuple
    a_space: list
    b_space: list
    chain: ReversibleChain
    pi_ab: np.ndarray  # pi_ab[ia, ib] = pi(a, b)
    n_star: float
    n_star_overridden: bool
    epsilon_1: float
    a_index: dict = field(repr=False, default_factory=dict)
    b_index: dict = field(repr=False, default_factory=dict)

    @property
    def a_star(self):
        return self.a_space[0]

    @property
    def b_star(self):
        return self.b_space[0]

    @property
    def pi_star_pair(self) -> float:
        return float(self.pi_ab[0, 0])

    @property
    def w_a(self) -> np.ndarray:
        return self.pi_ab[:, 0] / self.pi_ab[0, 0]

    @property
    def w_b(self) -> np.ndarray:
        return self.pi_ab[0, :] / self.pi_ab[0, 0]

    @property
    def w_ab(self) -> np.ndarray:
        P = self.pi_ab
        return P * P[0, 0] / np.outer(P[:, 0], P[0, :])

    @property
    def Z_tilde(self) -> float:
        return float(self.w_a.sum())

    @property
    def Z_hat(self) -> float:
        return float(self.w_b.sum())

    @property
    def good_a(self) -> np.ndarray:
        return np.array([a_inversions(a) < self.n_star for a in self.a_space])

    @property
    def good_b(self) -> np.ndarray:
        return np.array([b_inversions(b, self.level) < self.n_star for b in self.b_space])

    def partial_sums(self) -> dict:
        wa, wb = self.w_a, self.w_b
        ga, gb = self.good_a, self.good_b
        return {
            "Z_tilde": float(wa.sum()),
            "Z_tilde_good": float(wa[ga].sum()),
            "Z_tilde_bad": float(wa[~ga].sum()),
            "Z_hat": float(wb.sum()),
            "Z_hat_good": float(wb[gb].sum()),
            "Z_hat_bad": float(wb[~gb].sum()),
        }

    def word(self, a, b) -> tuple:
        return compose(self.sigma_prefix, self.free_slots, a, b)

    def state_index(self, a, b) -> int:
        return self.a_index[tuple(a)] * len(self.b_space) + self.b_index[tuple(b)]


def a_inversions(a: Sequence[int]) -> int:
    """Blank-before-particle pairs: the area under the staircase walk."""
    blanks = 0
    total = 0
    for c in a:
        if c == 0:
            blanks += 1
        else:
            total += blanks
    return total


def b_inversions(b: Sequence[int], level: int) -> int:
    """Pairs where a higher class precedes a class-(level+1) particle."""
    nxt = level + 1
    higher = 0
    total = 0
    for c in b:
        if c == nxt:
            total += higher
        else:
            higher += 1
    return total


def level_chain(params: KClassParams, level: int, sigma_prefix, cap: int | None = None) -> ReversibleChain:
    """M_k with every move of a fixed (class < level) particle rejected."""
    _, ld = level_decompose(params, level, sigma_prefix, cap=cap)
    return ld.chain


def level_decompose(
    params: KClassParams,
    level_i: int,
    sigma_prefix,
    n_star_override: float | None = None,
    cap: int | None = None,
) -> tuple[Partition, LevelDecomposition]:
    """Split the words extending ``sigma_prefix`` by the positions of class ``level_i``.

    Blocks are indexed by the two-particle word a; within a block the arrangement b of the
    higher classes varies. State index = index(a) * |B| + index(b).
    """
    prefix = _parse_prefix(params, level_i, sigma_prefix)
    free = tuple(p for p, c in enumerate(prefix) if c == 0)
    sizes = params.class_sizes
    n_i = sizes[level_i - 1]
    higher = list(range(level_i + 1, params.k + 1))
    n_states = math.comb(len(free), n_i) * multiset_count(sizes[level_i:])
    check_size(n_states, cap)

    a_space = [tuple(level_i if s in combo else 0 for s in range(len(free))) for combo in itertools.combinations(range(len(free)), n_i)]
    b_space = multiset_words(higher, sizes[level_i:])
    states = [compose(prefix, free, a, b) for a in a_space for b in b_space]
    chain = _move_chain(params, states, lambda s: s, with_n=False, perm=False)
    pi_ab = chain.pi.reshape(len(a_space), len(b_space))
    partition = Partition(np.repeat(np.arange(len(a_space)), len(b_space)), len(a_space))

    if n_star_override is not None:
        ns, over = float(n_star_override), True
    else:
        ns, over = n_star(params.q_bound, params.n).value, False
    ld = LevelDecomposition(
        params=params,
        level=level_i,
        sigma_prefix=prefix,
        free_slots=free,
        a_space=a_space,
        b_space=b_space,
        chain=chain,
        pi_ab=pi_ab,
        n_star=ns,
        n_star_overridden=over,
        epsilon_1=1.0 / (6.0 * params.n**2),
        a_index={a: i for i, a in enumerate(a_space)},
        b_index={b: i for i, b in enumerate(b_space)},
    )
    return partition, ld


def weights(ld: LevelDecomposition, a, b) -> tuple[float, float, float]:
    ia, ib = ld.a_index[tuple(a)], ld.b_index[tuple(b)]
    P = ld.pi_ab
    w_a = P[ia, 0] / P[0, 0]
    w_b = P[0, ib] / P[0, 0]
    w_ab = P[ia, ib] * P[0, 0] / (P[ia, 0] * P[0, ib])
    return float(w_a), float(w_b), float(w_ab)


def classify_good(ld: LevelDecomposition, config, n_star_override: float | None = None) -> bool:
    """Good means fewer than N* relevant inversions; ``config`` may be an a-word or a b-word."""
    ns = ld.n_star if n_star_override is None else n_star_override
    config = tuple(parse_word(config) if isinstance(config, str) else config)
    if config in ld.a_index:
        return a_inversions(config) < ns
    if config in ld.b_index:
        return b_inversions(config, ld.level) < ns
    raise ValueError(f"{word_label(config)} is neither an a-word nor a b-word of this level")


def exclusion_biases(ld: LevelDecomposition, b: Sequence[int]) -> np.ndarray:
    """Per (slot boundary, hole) stationary ratios of the complementary piece with fixed ``b``."""
    q = ld.params.class_q
    i = ld.level
    free = ld.free_slots
    pre = ld.sigma_prefix
    out = np.ones((max(len(free) - 1, 0), len(b)))
    for s in range(len(free) - 1):
        between = [pre[p] for p in range(free[s] + 1, free[s + 1])]
        for h, cb in enumerate(b):
            r = q[cb, i]
            for c in between:
                r *= q[cb, c] * q[c, i]
            out[s, h] = r
    return out


def exclusion_for_piece(ld: LevelDecomposition, b: Sequence[int], cap: int | None = None) -> ReversibleChain:
    n1 = ld.params.class_sizes[ld.level - 1]
    return build_exclusion(exclusion_biases(ld, b), n1, len(b), move_prob=1.0 / (2 * ld.params.n), cap=cap)


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    passed: bool
    slack: float  # smallest margin; negative when violated


def _check(name: str, margins: np.ndarray, tol: float = 1e-12) -> InequalityCheck:
    slack = float(np.min(margins)) if np.size(margins) else math.inf
    return InequalityCheck(name, slack >= -tol, slack)


def zbound_report(ld: LevelDecomposition) -> dict:
    """Evaluate the four families of partition-function inequalities exhaustively."""
    P = ld.pi_ab
    ps = P[0, 0]
    wa, wb, wab = ld.w_a, ld.w_b, ld.w_ab
    ga, gb = ld.good_a, ld.good_b
    sums = ld.partial_sums()
    pi_a = P.sum(axis=1)
    pi_b = P.sum(axis=0)
    e1 = ld.epsilon_1
    checks = [
        _check("bad_a_mass", np.array([e1 - sums["Z_tilde_bad"]])),
        _check("bad_b_mass", np.array([e1 * sums["Z_hat"] - sums["Z_hat_bad"]])),
        _check("pi_a_upper", wa * ps * sums["Z_hat"] - pi_a),
        _check("pi_b_upper", wb * ps * sums["Z_tilde"] - pi_b),
        _check("pi_a_lower_good", (pi_a - wa * ps * sums["Z_hat_good"])[ga]),
        _check("pi_b_lower_good", (pi_b - wb * ps * sums["Z_tilde_good"])[gb]),
        _check("pi_b_lower", pi_b - wb * ps * wab[0, :]),
    ]
    sizes = ld.params.class_sizes[ld.level - 1:]
    return {
        "level": ld.level,
        "prefix": word_label(ld.sigma_prefix),
        "n_star": ld.n_star,
        "n_star_overridden": ld.n_star_overridden,
        "hypothesis_holds": all(c >= 2 * ld.n_star for c in sizes),
        "epsilon_1": e1,
        "partial_sums": sums,
        "max_w_ab": float(wab.max()),
        "checks": checks,
    }


def good_pairs_residual(ld: LevelDecomposition) -> float:
    """Largest |w(a,b) - 1| over pairs of good a and good b (0 when there are none)."""
    mask = np.outer(ld.good_a, ld.good_b)
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(ld.w_ab[mask] - 1.0)))


@dataclass(frozen=True)
class Orthogonality:
    epsilon_exact: float
    epsilon_r_bound: float
    epsilon_paper_target: float
    r_sum: float


def level_orthogonality(ld: LevelDecomposition, bundle: DecompositionBundle | None = None) -> Orthogonality:
    if bundle is None:
        bundle = decompose(ld.chain, Partition(np.repeat(np.arange(len(ld.a_space)), len(ld.b_space)), len(ld.a_space)))
    r = epsilon_r_bound(bundle)
    return Orthogonality(epsilon_exact(bundle), r, 1.0 / ld.params.n, r * r)


def iterated_certificate(params: KClassParams, cap: int | None = None, with_exact: bool = True) -> BoundCertificate:
    """Lower bound on Gap(M_k) by running the class-by-class induction on concrete numbers.

    The base level takes exact gaps of the two-class chains. Each lift applies the
    complementary-decomposition bound with the largest exact epsilon over that level's prefixes.
    """
    k = params.k
    check_size(multiset_count(params.class_sizes), cap)
    if k == 1:
        return BoundCertificate("theorem3", 1.0, {"levels": []}, 1.0 if with_exact else None)
    levels = []
    base = min(spectrum(level_chain(params, k - 1, pre, cap=cap)).gap for pre in level_prefixes(params, k - 1))
    bound = base
    levels.append({"level": k - 1, "kind": "base", "gap_min": base, "bound": base})
    for i in range(k - 2, 0, -1):
        eps, gt = 0.0, math.inf
        for pre in level_prefixes(params, i):
            part, ld = level_decompose(params, i, pre, n_star_override=math.inf, cap=cap)
            bundle = decompose(ld.chain, part)
            eps = max(eps, epsilon_exact(bundle))
            gt = min(gt, bundle.gamma_tilde_min)
        cert = theorem3_bound(min(max(bound, 0.0), 1.0), min(max(gt, 0.0), 1.0), min(eps, 1.0))
        bound = cert.value
        levels.append({"level": i, "kind": "lift", "epsilon": eps, "gamma_tilde_min": gt, "bound": bound})
    exact = spectrum(build_Mk(params, cap=cap)).gap if with_exact else None
    return BoundCertificate("theorem3", bound, {"levels": levels}, exact)


# ---------------------------------------------------------------- partition numbers


@lru_cache(maxsize=None)
def _partition_table(N: int) -> tuple[int, ...]:
    p = [1] + [0] * N
    for part in range(1, N + 1):
        for s in range(part, N + 1):
            p[s] += p[s - part]
    return tuple(p)


def partition_count(N: int, cap: int = PARTITION_CAP) -> int:
    """Number of integer partitions of N, exact."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if N > cap:
        raise OverflowError(f"N={N} exceeds the partition cap {cap}")
    return _partition_table(cap if N <= cap else N)[N]


def erdos_bound(N: int) -> float:
    return math.exp(math.pi * math.sqrt(2.0 * N / 3.0))


@dataclass(frozen=True)
class NStar:
    value: float
    tail_branch: float  # nan when its denominator is not positive
    growth_branch: float
    tail_branch_valid: bool


def n_star(q: float, n: int) -> NStar:
    """Good/bad threshold: max of the tail-sum branch and the partition-growth branch (natural logs)."""
    if q >= 1.0:
        return NStar(math.inf, math.nan, math.inf, False)
    if q <= 0.0:
        raise ValueError("q must be positive")
    qi = 1.0 / q
    denom = math.log(1.0 + qi) - 1.0
    growth = math.log(C1) ** 2 / math.log(2.0 / (q * (1.0 + qi)))
    if denom > 0:
        tail = (math.log(6.0 * n * n) + math.log(1.0 + 2.0 / (qi - 1.0))) / denom
        return NStar(max(tail, growth), tail, growth, True)
    return NStar(growth, math.nan, growth, False)


@dataclass(frozen=True)
class TailDetail:
    tail: float
    certified: bool
    partial_sum: float
    remainder: float
    regime_start: int
    target: float


def partition_tail_detail(q: float, N_star: float, n: int, cap: int = PARTITION_CAP) -> TailDetail:
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if N_star < 1:
        raise ValueError("N_star must be at least 1")
    start = math.ceil(N_star)
    ratio = 2.0 / (1.0 + 1.0 / q)
    # p(N) q^N < c1^sqrt(N) q^N <= ratio^N once sqrt(N) >= log(c1) / log(ratio / q)
    regime = max(start, math.ceil((math.log(C1) / math.log(ratio / q)) ** 2))
    if regime > cap:
        raise NotCertifiable(f"geometric regime starts at N={regime}, beyond the cap {cap}")
    partial = math.fsum(partition_count(N, cap) * q**N for N in range(start, regime))
    remainder = ratio**regime / (1.0 - ratio)
    tail = partial + remainder
    target = 1.0 / (6.0 * n * n)
    return TailDetail(tail, tail <= target, partial, remainder, regime, target)


def partition_tail_bound(q: float, N_star: float, n: int, cap: int = PARTITION_CAP) -> tuple[float, bool]:
    """Upper bound on the sum over N >= N* of p(N) q^N, and whether it is at most 1/(6 n^2)."""
    d = partition_tail_detail(q, N_star, n, cap)
    return d.tail, d.certified
