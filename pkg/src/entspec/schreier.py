"""Lazy tree-like Schreier graphs of subgroups of the free group.

Vertices are named by their canonical word: the label of the unique path
from the root that neither backtracks nor traverses a self-loop.  Every
oracle answers ``self_loop(c, g)`` for canonical ``c`` and a positive
letter ``g``; ``step`` is the one-letter transition built on top of it.

Oracles also expose a cursor interface (``root``/``move``/``word``) whose
states may carry extra bookkeeping, so that long Monte-Carlo walks do not
have to memoise every word they visit.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Hashable, Iterable

from .errors import ConfigError, TreeLikenessViolation, UnstableBall
from .words import GENERATORS, alphabet, invert, reduce_word

# ---------------------------------------------------------------------------
# Stallings folding


@dataclass
class FoldedGraph:
    """Deterministic labelled graph produced by folding; edges in both directions."""

    k: int
    root: int
    edges: dict[tuple[int, str], int]

    def read(self, w: str, start: int | None = None) -> tuple[int, str]:
        """Follow ``w`` inside the core; return (last core vertex, unread suffix)."""
        v = self.root if start is None else start
        for i, ch in enumerate(w):
            t = self.edges.get((v, ch))
            if t is None:
                return v, w[i:]
            v = t
        return v, ""


def fold_words(words: Iterable[str], k: int) -> FoldedGraph:
    """Stallings graph of the subgroup generated by ``words``."""
    parent: list[int] = [0]
    adj: list[dict[str, int]] = [{}]

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def new_vertex() -> int:
        parent.append(len(parent))
        adj.append({})
        return len(parent) - 1

    def merge(pending: list[tuple[int, int]]):
        while pending:
            x, y = pending.pop()
            x, y = find(x), find(y)
            if x == y:
                continue
            if len(adj[x]) < len(adj[y]):
                x, y = y, x
            parent[y] = x
            for s, t in adj[y].items():
                t = find(t)
                cur = adj[x].get(s)
                if cur is None:
                    adj[x][s] = t
                else:
                    cur = find(cur)
                    if cur != t:
                        pending.append((cur, t))
            adj[y] = {}

    def add_edge(u: int, s: str, v: int):
        pending = []
        for a, ch, b in ((u, s, v), (v, s.swapcase(), u)):
            a, b = find(a), find(b)
            cur = adj[a].get(ch)
            if cur is None:
                adj[a][ch] = b
            elif find(cur) != b:
                pending.append((find(cur), b))
        merge(pending)

    for w in words:
        w = reduce_word(w)
        if not w:
            continue
        prev = 0
        for i, ch in enumerate(w):
            nxt = 0 if i == len(w) - 1 else new_vertex()
            add_edge(prev, ch, nxt)
            prev = nxt

    root = find(0)
    edges: dict[tuple[int, str], int] = {}
    # relabel reachable vertices in BFS order for deterministic output
    ids = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for s in sorted(adj[v]):
            t = find(adj[v][s])
            if t not in ids:
                ids[t] = len(ids)
                queue.append(t)
            edges[(ids[v], s)] = ids[t]
    return FoldedGraph(k=k, root=0, edges=edges)


# ---------------------------------------------------------------------------
# Balls


@dataclass
class SchreierBall:
    radius: int
    k: int
    vertices: list[str]
    edges: dict[tuple[str, str], str]
    loops: set[tuple[str, str]] = field(default_factory=set)

    def same_as(self, other: "SchreierBall") -> bool:
        return (self.radius == other.radius and set(self.vertices) == set(other.vertices)
                and self.edges == other.edges and self.loops == other.loops)

    def sphere(self, n: int) -> list[str]:
        return [v for v in self.vertices if len(v) == n]

    def to_dot(self) -> str:
        lines = ["graph schreier {", '  node [shape=circle, fontsize=10];']
        for v in self.vertices:
            lines.append(f'  "{v or "e"}";')
        seen = set()
        for (v, s), t in sorted(self.edges.items()):
            if not s.islower():
                continue
            if t == v:
                if (v, s) in seen:
                    continue
                seen.add((v, s))
                lines.append(f'  "{v or "e"}" -- "{v or "e"}" [label="{s}"];')
            else:
                lines.append(f'  "{v or "e"}" -- "{t or "e"}" [label="{s}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_rows(self) -> list[tuple[str, str, str, int]]:
        rows = []
        for v in self.vertices:
            for s in alphabet(self.k):
                t = self.edges.get((v, s))
                if t is not None:
                    rows.append((v, s, t, int(t == v)))
        return rows


def bfs_ball(root: Hashable, move: Callable[[Hashable, str], Hashable], k: int, radius: int) -> SchreierBall:
    """Ball around ``root`` of a deterministic labelled graph given by ``move``.

    Vertices are labelled by their first breadth-first path word (letters in
    the order a, A, b, B, ...); on tree-like graphs this is the canonical word.
    """
    letters = alphabet(k)
    label = {root: ""}
    order = [root]
    queue = deque([root])
    while queue:
        v = queue.popleft()
        lv = label[v]
        if len(lv) == radius:
            continue
        for s in letters:
            t = move(v, s)
            if t not in label:
                label[t] = lv + s
                order.append(t)
                queue.append(t)
    edges: dict[tuple[str, str], str] = {}
    loops: set[tuple[str, str]] = set()
    for v in order:
        for s in letters:
            t = move(v, s)
            if t in label:
                edges[(label[v], s)] = label[t]
                if t == v and s.islower():
                    loops.add((label[v], s))
    return SchreierBall(radius=radius, k=k, vertices=[label[v] for v in order], edges=edges, loops=loops)


def folded_move(graph: FoldedGraph) -> Callable:
    """Transition on the full Schreier graph: folded core plus hanging trees.

    States are ``(core vertex, tail word)``; a non-empty tail lives in a tree
    hanging off the core.
    """

    def move(state, s):
        v, tail = state
        if tail:
            if tail[-1] == s.swapcase():
                return v, tail[:-1]
            return v, tail + s
        t = graph.edges.get((v, s))
        return (t, "") if t is not None else (v, s)

    return move


def folded_ball(graph: FoldedGraph, radius: int) -> SchreierBall:
    return bfs_ball((graph.root, ""), folded_move(graph), graph.k, radius)


def verify_tree_like(ball: SchreierBall) -> bool:
    """True iff the only simple cycles inside the ball are self-loops."""
    verts = set(ball.vertices)
    pairs = set()
    n_edges = 0
    for (v, s), t in ball.edges.items():
        if v not in verts or t not in verts:
            return False
        back = ball.edges.get((t, s.swapcase()))
        if back is not None and back != v:
            return False
        if t != v and s.islower():
            n_edges += 1
            pairs.add(frozenset((v, t)))
    # parallel edges between one pair form a 2-cycle
    if n_edges != len(pairs) or n_edges != len(verts) - 1:
        return False
    nbrs: dict[str, list[str]] = {v: [] for v in verts}
    for pair in pairs:
        a, b = tuple(pair)
        nbrs[a].append(b)
        nbrs[b].append(a)
    root = ball.vertices[0]
    seen = {root}
    stack = [root]
    while stack:
        v = stack.pop()
        for t in nbrs[v]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return len(seen) == len(verts)


# ---------------------------------------------------------------------------
# Oracles


class LoopOracle:
    """Base class: a tree-like Schreier graph described by its self-loops."""

    kind = "abstract"

    def __init__(self, k: int = 2):
        self.k = k

    def self_loop(self, c: str, g: str) -> bool:
        raise NotImplementedError

    def step(self, c: str, s: str) -> str:
        if c and c[-1] == s.swapcase():
            return c[:-1]
        if self.self_loop(c, s.lower()):
            return c
        return c + s

    def apply(self, c: str, w: str) -> str:
        for s in w:
            c = self.step(c, s)
        return c

    def canonicalize(self, w: str) -> str:
        return self.apply("", w)

    # cursor interface; plain oracles use the canonical word as state
    root: Hashable = ""

    def move(self, state, s: str):
        return self.step(state, s)

    def word(self, state) -> str:
        return state

    def describe(self) -> str:
        return self.kind


class TrivialOracle(LoopOracle):
    """Trivial subgroup: the Schreier graph is the 2k-regular tree."""

    kind = "trivial"

    def self_loop(self, c, g):
        return False

    def step(self, c, s):
        if c and c[-1] == s.swapcase():
            return c[:-1]
        return c + s


class NormalClosureOracle(LoopOracle):
    """Normal closure of one generator; every vertex carries its loop."""

    kind = "normal_closure"

    def __init__(self, k: int = 2, generator: str = "a"):
        super().__init__(k)
        if generator not in GENERATORS[:k]:
            raise ConfigError(f"generator {generator!r} not among the first {k}")
        self.generator = generator

    def self_loop(self, c, g):
        return g == self.generator

    def describe(self):
        return f"normal_closure({self.generator})"


def _last_run(c: str) -> int:
    last = c[-1]
    n = 1
    while n < len(c) and c[-1 - n] == last:
        n += 1
    return n


class KlOracle(LoopOracle):
    """Base graph K_l backslash F_2, rooted at the identity coset.

    The graph is the 4-regular tree of <a^l, b^l> with each edge subdivided
    into l segments and a self-loop of the other generator at every
    subdivision vertex.  ``use_folding=True`` answers every query through
    the bounded folding reference instead of this rule.
    """

    kind = "kl_base"

    def __init__(self, ell: int, use_folding: bool = False):
        super().__init__(2)
        if ell < 2:
            raise ConfigError(f"ell must be >= 2, got {ell}")
        self.ell = ell
        self.use_folding = use_folding

    def self_loop(self, c, g):
        if self.use_folding:
            return kl_self_loop(self.ell, c, g)
        if not c or c[-1].lower() == g:
            return False
        return _last_run(c) % self.ell != 0

    def describe(self):
        return f"kl_base({self.ell})"


class RerootedOracle(LoopOracle):
    """The graph of ``base`` seen from the vertex reached by ``root_word``.

    Rooting at a vertex realises the conjugate subgroup stabilising it.
    States carry the base-canonical (absolute) vertex.
    """

    kind = "rerooted"

    def __init__(self, base: LoopOracle, root_word: str):
        super().__init__(base.k)
        self.base = base
        self.root_word = base.canonicalize(root_word)
        self.root = ("", self.root_word)
        self._abs = {"": self.root_word}

    def move(self, state, s):
        c, a = state
        a2 = self.base.step(a, s)
        if a2 == a:
            return state
        if c and c[-1] == s.swapcase():
            return c[:-1], a2
        return c + s, a2

    def word(self, state):
        return state[0]

    def _absolute(self, c: str) -> str:
        a = self._abs.get(c)
        if a is None:
            a = self.base.step(self._absolute(c[:-1]), c[-1])
            self._abs[c] = a
        return a

    def self_loop(self, c, g):
        return self.base.self_loop(self._absolute(c), g)

    def step(self, c, s):
        if c and c[-1] == s.swapcase():
            return c[:-1]
        a = self._absolute(c)
        if self.base.self_loop(a, s.lower()):
            return c
        c2 = c + s
        self._abs.setdefault(c2, self.base.step(a, s))
        return c2

    def describe(self):
        return f"{self.base.describe()}@{self.root_word or 'e'}"


def kl_conjugates(ell: int) -> list[str]:
    """Root words of one vertex per conjugate of K_l (hub plus subdivision points)."""
    return [""] + ["a" * i for i in range(1, ell)] + ["b" * i for i in range(1, ell)]


def kl_invariant_ensemble(ell: int) -> list[tuple[float, LoopOracle]]:
    """Uniform measure on the conjugates of K_l, as rooted oracles."""
    base = KlOracle(ell)
    roots = kl_conjugates(ell)
    return [(1 / len(roots), base if not r else RerootedOracle(base, r)) for r in roots]


# ---------------------------------------------------------------------------
# Bernoulli covers

LoopId = tuple[str, str]  # (base vertex, positive generator)
FiberLetter = tuple[str, str, int]  # (base vertex, generator, sign)


def _coin(seed: int, vertex: str, gen: str) -> float:
    h = hashlib.blake2b(f"{seed}|{vertex}|{gen}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0**64


class BernoulliCoverOracle(LoopOracle):
    """One sample of the random cover of K_l backslash F where each loop opens with probability p.

    The cover subgroup is H = <retained loop generators> inside K_l; a
    vertex is the pair (base vertex, fiber word) with the fiber word a
    reduced word over loop generators with no leading retained letter.
    ``root_word`` chooses which base vertex the cover's root lies over.
    """

    kind = "bernoulli_cover"

    def __init__(self, ell: int, p: float, seed: int, root_word: str = ""):
        super().__init__(2)
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {p}")
        self.ell = ell
        self.p = p
        self.seed = seed
        self.base = KlOracle(ell)
        self.root_word = self.base.canonicalize(root_word)
        self.root = ("", self.root_word, ())
        self._states: dict[str, tuple[str, tuple]] = {"": (self.root_word, ())}
        self._retained: dict[LoopId, bool] = {}

    def retained(self, loop_id: LoopId) -> bool:
        r = self._retained.get(loop_id)
        if r is None:
            r = _coin(self.seed, loop_id[0], loop_id[1]) >= self.p
            self._retained[loop_id] = r
        return r

    def cover_step(self, state: tuple[str, tuple], s: str) -> tuple[str, tuple]:
        v, fiber = state
        g = s.lower()
        if self.base.self_loop(v, g):
            sign = 1 if s == g else -1
            if fiber and fiber[-1] == (v, g, -sign):
                fiber = fiber[:-1]
            else:
                fiber = fiber + ((v, g, sign),)
            i = 0
            while i < len(fiber) and self.retained(fiber[i][:2]):
                i += 1
            return v, fiber[i:]
        return self.base.step(v, s), fiber

    def move(self, state, s):
        c, v, fiber = state
        v2, f2 = self.cover_step((v, fiber), s)
        if v2 == v and f2 == fiber:
            return state
        if c and c[-1] == s.swapcase():
            return c[:-1], v2, f2
        return c + s, v2, f2

    def word(self, state):
        return state[0]

    def state_of(self, c: str) -> tuple[str, tuple]:
        st = self._states.get(c)
        if st is None:
            st = self.cover_step(self.state_of(c[:-1]), c[-1])
            self._states[c] = st
        return st

    def self_loop(self, c, g):
        st = self.state_of(c)
        return self.cover_step(st, g) == st

    def step(self, c, s):
        if c and c[-1] == s.swapcase():
            return c[:-1]
        st = self.state_of(c)
        st2 = self.cover_step(st, s)
        if st2 == st:
            return c
        c2 = c + s
        self._states.setdefault(c2, st2)
        return c2

    def loop_generator(self, loop_id: LoopId) -> str:
        """The loop element as a word, conjugated to the cover's root."""
        v, g = loop_id
        return reduce_word(invert(self.root_word) + v + g + invert(v) + self.root_word)

    def retained_generators(self, max_base_length: int) -> list[str]:
        """Retained loop generators at base vertices of length <= bound."""
        gens = []
        for v in kl_canonical_words(self.ell, max_base_length):
            for g in "ab":
                if self.base.self_loop(v, g) and self.retained((v, g)):
                    gens.append(self.loop_generator((v, g)))
        return gens

    def describe(self):
        return f"bernoulli_cover({self.ell},{self.p},{self.seed})@{self.root_word or 'e'}"


def cover_step(cover: BernoulliCoverOracle, state, s: str):
    return cover.cover_step(state, s)


def retained(cover: BernoulliCoverOracle, loop_id: LoopId) -> bool:
    return cover.retained(loop_id)


def kl_canonical_words(ell: int, max_length: int) -> list[str]:
    ball = bfs_ball("", KlOracle(ell).step, 2, max_length)
    return ball.vertices


def sample_cover(ell: int, p: float, seed: int, index: int) -> LoopOracle:
    """Sample number ``index`` of the invariant random subgroup for (ell, p).

    The root type is drawn uniformly over the conjugates of K_l, and the
    loop coins use an independent per-sample seed.  p = 1 is the trivial
    subgroup whatever the root.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"p must lie in [0, 1], got {p}")
    if p == 1.0:
        return TrivialOracle(2)
    sub_seed = int.from_bytes(hashlib.blake2b(f"{seed}|sample|{index}".encode(), digest_size=8).digest(), "big")
    roots = kl_conjugates(ell)
    root = roots[sub_seed % len(roots)]
    return BernoulliCoverOracle(ell, p, sub_seed >> 8, root_word=root)


def make_oracle(spec: str, k: int = 2, seed: int | None = None) -> LoopOracle:
    """Parse ``trivial``, ``kl:L``, ``normal:a``, ``cover:L:P`` (needs seed)."""
    name, _, rest = spec.partition(":")
    try:
        if name == "trivial":
            return TrivialOracle(k)
        if name in ("kl", "kl_base", "K"):
            return KlOracle(int(rest))
        if name in ("normal", "normal_closure"):
            return NormalClosureOracle(k, rest or "a")
        if name in ("cover", "bernoulli_cover"):
            ell, _, p = rest.partition(":")
            if seed is None:
                raise ConfigError("a cover oracle needs --seed")
            return BernoulliCoverOracle(int(ell), float(p), seed)
    except ValueError as exc:
        raise ConfigError(f"cannot parse oracle {spec!r}: {exc}")
    raise ConfigError(f"unknown oracle {spec!r}")


def materialize_ball(oracle: LoopOracle, radius: int) -> SchreierBall:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    ball = bfs_ball(oracle.root, oracle.move, oracle.k, radius)
    # labels must coincide with the oracle's own canonical words
    for v in ball.vertices:
        if oracle.canonicalize(v) != v:
            raise TreeLikenessViolation(f"vertex {v!r} is not canonical for {oracle.describe()}")
    return ball


# ---------------------------------------------------------------------------
# Folding reference for K_l


def kl_conjugators(ell: int, bound: int) -> list[str]:
    """Elements of <a^l, b^l> of free-group length <= bound."""
    out = [""]
    stack = [""]
    while stack:
        g = stack.pop()
        for x in "aAbB":
            if g and g[-1].lower() == x.lower():
                continue
            m = ell
            while len(g) + m <= bound:
                h = g + x * m
                out.append(h)
                stack.append(h)
                m += ell
    return sorted(out, key=lambda w: (len(w), w))


def kl_generators(ell: int, conj_bound: int) -> list[str]:
    hs = [("a" * i) + "b" + ("A" * i) for i in range(1, ell)] + [("b" * i) + "a" + ("B" * i) for i in range(1, ell)]
    return [reduce_word(g + h + invert(g)) for g in kl_conjugators(ell, conj_bound) for h in hs]


MAX_FOLD_BOUND = 32


def stallings_fold_reference(ell: int, conj_bound: int, radius: int, max_bound: int = MAX_FOLD_BOUND) -> SchreierBall:
    """Radius ball of K_l backslash F from folding generators with bounded conjugators.

    Doubles the conjugator bound until two successive bounds give the same
    ball.
    """
    if ell < 2 or conj_bound < 1 or radius < 0:
        raise ConfigError("stallings_fold_reference needs ell >= 2, conj_bound >= 1, radius >= 0")
    bound = conj_bound
    prev = folded_ball(fold_words(kl_generators(ell, bound), 2), radius)
    while True:
        bound *= 2
        if bound > max_bound:
            raise UnstableBall(f"ball of radius {radius} for ell={ell} did not stabilise up to bound {max_bound}")
        ball = folded_ball(fold_words(kl_generators(ell, bound), 2), radius)
        if ball.same_as(prev):
            return ball
        prev = ball


@lru_cache(maxsize=None)
def _kl_reference_ball(ell: int, radius: int) -> SchreierBall:
    # loops at distance r come from conjugators of length up to r + l - 1
    return stallings_fold_reference(ell, radius + ell, radius, max_bound=max(MAX_FOLD_BOUND, 4 * (radius + ell)))


def kl_self_loop(ell: int, c: str, s: str) -> bool:
    """Loop at (c, s) in K_l backslash F, decided by the folding reference."""
    if not s.islower():
        raise ValueError("s must be a positive letter")
    ball = _kl_reference_ball(ell, len(c) + 1)
    if c not in ball.vertices:
        raise ConfigError(f"{c!r} is not a canonical vertex of K_{ell}")
    return (c, s) in ball.loops
