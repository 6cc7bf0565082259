"""Free-group words, step distributions and seeded randomness.

A word is a plain ``str`` over the alphabet ``a..z`` (generators) and
``A..Z`` (their inverses), so ``"aB"`` is a * b^-1.  Strings hash fast,
which matters because every coset distribution is a dict keyed by words.
"""
from __future__ import annotations

import math
import os
import string
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .errors import BudgetExceeded, ConfigError, InvalidDistribution

GENERATORS = string.ascii_lowercase
_INVERSE = str.maketrans(string.ascii_letters, string.ascii_lowercase.upper() + string.ascii_lowercase)

# rough per-entry cost of a dict[str, float] item, used to turn MB into entries
_BYTES_PER_ENTRY = 200
DEFAULT_BUDGET_MB = 1024


def support_budget() -> int:
    """Maximum number of dictionary entries an exact computation may hold."""
    mb = os.environ.get("ENTSPEC_BUDGET_MB")
    try:
        mb = float(mb) if mb else DEFAULT_BUDGET_MB
    except ValueError:
        raise ConfigError(f"ENTSPEC_BUDGET_MB must be a number, got {mb!r}")
    return max(1, int(mb * 1e6 / _BYTES_PER_ENTRY))


def letter(index: int, sign: int = 1) -> str:
    """Letter for generator ``index`` (1-based) with the given sign."""
    if not 1 <= index <= 26:
        raise ValueError(f"generator index {index} outside 1..26")
    ch = GENERATORS[index - 1]
    return ch if sign > 0 else ch.upper()


def letter_index(ch: str) -> int:
    return ord(ch.lower()) - 96


def letter_sign(ch: str) -> int:
    return 1 if ch.islower() else -1


def inverse_letter(ch: str) -> str:
    return ch.swapcase()


def invert(w: str) -> str:
    return w[::-1].translate(_INVERSE)


def is_reduced(w: str) -> bool:
    return all(w[i] != w[i + 1].swapcase() for i in range(len(w) - 1))


def reduce_word(w: str) -> str:
    out: list[str] = []
    for ch in w:
        if out and out[-1] == ch.swapcase():
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def multiply(w1: str, w2: str) -> str:
    """Freely reduced product of two reduced words."""
    i = 0
    n = min(len(w1), len(w2))
    while i < n and w1[-1 - i] == w2[i].swapcase():
        i += 1
    return w1[: len(w1) - i] + w2[i:]


def parse_word(text: str, k: int | None = None) -> str:
    """Parse ``"aB"``-style syntax; ``"e"``/``"1"``/``""`` is the identity.

    Superscript inverses as in ``"b⁻¹"`` are also accepted.
    """
    text = text.strip().replace("⁻¹", "^-1")
    if text in ("", "e", "1"):
        return ""
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace() or ch in "*·":
            i += 1
            continue
        if ch not in string.ascii_letters:
            raise ConfigError(f"bad character {ch!r} in word {text!r}")
        if text.startswith("^-1", i + 1):
            ch = ch.swapcase()
            i += 3
        out.append(ch)
        i += 1
    w = "".join(out)
    if k is not None and any(letter_index(c) > k for c in w):
        raise ConfigError(f"word {text!r} uses a generator beyond k={k}")
    return reduce_word(w)


def alphabet(k: int) -> str:
    """All 2k letters in the fixed order a, A, b, B, ..."""
    return "".join(g + g.upper() for g in GENERATORS[:k])


@dataclass
class RngStream:
    """Deterministic random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    @cached_property
    def gen(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed & (2**64 - 1), self.stream_id & (2**64 - 1)]))

    def child(self, stream_id: int) -> "RngStream":
        # children are keyed off the parent id so siblings never collide
        return RngStream(self.seed, self.stream_id * 1_000_003 + stream_id + 1)


@dataclass
class StepDistribution:
    """Finitely supported probability measure on the free group F_k."""

    atoms: dict[str, float]
    k: int = 2
    check_nondegenerate: bool = True
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.k < 2 or self.k > 26:
            raise InvalidDistribution(f"k must be in 2..26, got {self.k}")
        merged: dict[str, float] = defaultdict(float)
        for w, p in self.atoms.items():
            w = reduce_word(w)
            if any(letter_index(c) > self.k for c in w):
                raise InvalidDistribution(f"atom {w!r} uses a generator beyond k={self.k}")
            if p < 0:
                raise InvalidDistribution(f"negative probability {p} for atom {w!r}")
            if p > 0:
                merged[w] += p
        total = math.fsum(float(p) for p in merged.values())
        if abs(total - 1.0) > 1e-12:
            raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
        self.atoms = dict(sorted(merged.items(), key=lambda kv: (len(kv[0]), kv[0])))
        if self.check_nondegenerate and not generates_free_group(list(self.atoms), self.k):
            raise InvalidDistribution("support does not generate the free group (degenerate step distribution)")

    @classmethod
    def srw(cls, k: int = 2) -> "StepDistribution":
        letters = alphabet(k)
        return cls({c: 1 / len(letters) for c in letters}, k=k, name=f"srw:{k}")

    @classmethod
    def point_mass(cls, w: str, k: int = 2) -> "StepDistribution":
        return cls({w: 1.0}, k=k, check_nondegenerate=False, name=f"delta:{w or 'e'}")

    @classmethod
    def from_table(cls, rows: Iterable[tuple[str, float]], k: int | None = None) -> "StepDistribution":
        rows = [(parse_word(w), float(p)) for w, p in rows]
        if k is None:
            k = max([2] + [letter_index(c) for w, _ in rows for c in w])
        atoms: dict[str, float] = defaultdict(float)
        for w, p in rows:
            atoms[w] += p
        return cls(dict(atoms), k=k)

    @classmethod
    def parse(cls, spec: str) -> "StepDistribution":
        """``"srw:k"`` or inline ``"a:0.3,A:0.3,b:0.2,B:0.2"``."""
        spec = spec.strip()
        if spec.startswith("srw"):
            _, _, k = spec.partition(":")
            return cls.srw(int(k) if k else 2)
        rows = []
        for part in spec.split(","):
            w, sep, p = part.partition(":")
            if not sep:
                raise ConfigError(f"cannot parse step distribution entry {part!r}")
            rows.append((w, Fraction(p.strip()) if "/" in p else float(p)))
        dist = cls.from_table(rows)
        dist.name = spec
        return dist

    @property
    def words(self) -> list[str]:
        return list(self.atoms)

    @property
    def probs(self) -> np.ndarray:
        return np.array([float(p) for p in self.atoms.values()])

    @cached_property
    def _cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def reflected(self) -> "StepDistribution":
        """The law of the inverse step (mu-check)."""
        return StepDistribution({invert(w): p for w, p in self.atoms.items()}, k=self.k,
                                check_nondegenerate=self.check_nondegenerate, name=f"reflected({self.name})")

    def is_symmetric(self) -> bool:
        return all(math.isclose(float(p), float(self.atoms.get(invert(w), 0.0)), rel_tol=1e-12)
                   for w, p in self.atoms.items())

    def max_length(self) -> int:
        return max(len(w) for w in self.atoms)

    def sample_indices(self, rng: RngStream, size: int) -> np.ndarray:
        return np.searchsorted(self._cdf, rng.gen.random(size), side="right")

    def describe(self) -> str:
        return self.name or ",".join(f"{w or 'e'}:{float(p):.12g}" for w, p in self.atoms.items())


def sample_step(dist: StepDistribution, rng: RngStream) -> str:
    return dist.words[int(dist.sample_indices(rng, 1)[0])]


def generates_free_group(words: list[str], k: int) -> bool:
    """True iff the subgroup generated by ``words`` is all of F_k.

    The Stallings graph of the full group is a single vertex with a loop
    for every generator.
    """
    from .schreier import fold_words  # local import: schreier depends on words

    graph = fold_words([w for w in words if w], k)
    root = graph.root
    return all(graph.edges.get((root, g)) == root for g in GENERATORS[:k])


def exact_convolution(dist: StepDistribution, n: int, budget: int | None = None) -> dict[str, float]:
    """Exact law of the n-th step of the random walk, mu^(n).

    Works with float or ``Fraction`` atoms alike.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    budget = support_budget() if budget is None else budget
    one = Fraction(1) if any(isinstance(p, Fraction) for p in dist.atoms.values()) else 1.0
    law: dict[str, float] = {"": one}
    for _ in range(n):
        nxt: dict[str, float] = defaultdict(lambda: 0 * one)
        for w, pw in law.items():
            for s, ps in dist.atoms.items():
                nxt[multiply(w, s)] += pw * ps
        if len(nxt) > budget:
            raise BudgetExceeded(f"exact convolution support {len(nxt)} exceeds budget {budget}")
        law = dict(nxt)
    return law


def shannon_entropy(p: Mapping | Iterable[float]) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    values = list(p.values()) if isinstance(p, Mapping) else list(p)
    terms = []
    total = []
    for q in values:
        q = float(q)
        if q < 0:
            raise InvalidDistribution(f"negative probability {q}")
        total.append(q)
        if q > 0:
            terms.append(-q * math.log(q))
    s = math.fsum(total)
    if abs(s - 1.0) > 1e-8:
        raise InvalidDistribution(f"probabilities sum to {s!r}, not 1")
    return math.fsum(terms)
