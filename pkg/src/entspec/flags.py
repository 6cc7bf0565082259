"""Parabolic subgroups of SL(d, R) indexed by subsets of simple roots.

A subset I of {1, ..., d-1} is a ``frozenset`` of ints.  Flag entropies
accept floats or ``Fraction`` exponents; with fractions every quantity
here is exact.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigError

RootSubset = frozenset

MERGE_TOL = 1e-12
TIE_TOL = 1e-9


def all_subsets(d: int) -> list[frozenset]:
    roots = range(1, d)
    return [frozenset(c) for r in range(d) for c in itertools.combinations(roots, r)]


def _check(d: int, I: Iterable[int]) -> frozenset:
    I = frozenset(I)
    if d < 2:
        raise ConfigError(f"d must be >= 2, got {d}")
    if not I <= set(range(1, d)):
        raise ConfigError(f"{sorted(I)} is not a subset of the simple roots 1..{d - 1}")
    return I


def runs(I: Iterable[int]) -> list[list[int]]:
    """Maximal runs of consecutive integers, in increasing order."""
    out: list[list[int]] = []
    for i in sorted(I):
        if out and out[-1][-1] == i - 1:
            out[-1].append(i)
        else:
            out.append([i])
    return out


def blocks_of(d: int, I: Iterable[int]) -> tuple[int, ...]:
    """Levi block sizes: cut {1..d} after every root not in I."""
    I = _check(d, I)
    cuts = [i for i in range(1, d) if i not in I] + [d]
    sizes, prev = [], 0
    for c in cuts:
        sizes.append(c - prev)
        prev = c
    return tuple(sizes)


def f_map(d: int, I: Iterable[int]) -> frozenset:
    """Drop every run of length one, i.e. every SL(2) block of the Levi factor."""
    I = _check(d, I)
    return frozenset(i for run in runs(I) if len(run) > 1 for i in run)


def f_map_bruteforce(d: int, I: Iterable[int]) -> frozenset:
    """Union of all subsets of I without singleton runs (definition-level check)."""
    I = _check(d, I)
    good = [frozenset(J) for r in range(len(I) + 1) for J in itertools.combinations(sorted(I), r)
            if all(len(run) >= 2 for run in runs(J))]
    union = frozenset().union(*good)
    assert all(len(run) >= 2 for run in runs(union)), f"union {sorted(union)} has a singleton run"
    return union


def _check_lambda(lam: Sequence, d: int):
    if len(lam) != d:
        raise ConfigError(f"expected {d} Lyapunov exponents, got {len(lam)}")
    if any(lam[i] < lam[i + 1] for i in range(d - 1)):
        raise ConfigError("Lyapunov exponents must be sorted non-increasing")


def flag_entropy(lam: Sequence, d: int, I: Iterable[int]):
    """Entropy of G/P_I with its stationary measure: sum of gaps across blocks."""
    _check_lambda(lam, d)
    sizes = blocks_of(d, I)
    total = 0
    r_prev = 0
    for size in sizes:
        r = r_prev + size
        for i in range(r_prev, r):
            for j in range(r, d):
                total += lam[i] - lam[j]
        r_prev = r
    return total


def poset_edges(d: int) -> list[tuple[frozenset, frozenset, bool]]:
    """Cover relations (smaller, larger) of the root-subset lattice with a bold flag.

    An edge is bold when the added root forms a singleton run in the larger
    subset, so the bigger Levi factor only gains an SL(2) block.
    """
    if not 2 <= d <= 10:
        raise ConfigError("poset_edges supports 2 <= d <= 10")
    edges = []
    for I in all_subsets(d):
        for r in sorted(I):
            J = I - {r}
            edges.append((J, I, r not in f_map(d, I)))
    edges.sort(key=lambda e: (len(e[0]), sorted(e[0]), sorted(e[1])))
    return edges


def fmt_subset(I: Iterable[int]) -> str:
    return "{" + ",".join(str(i) for i in sorted(I)) + "}"


def poset_dot(d: int) -> str:
    def name(I):
        return "G" if len(I) == d - 1 else f"P_{fmt_subset(I)}"

    lines = ["graph parabolics {", "  rankdir=TB;"]
    for I in all_subsets(d):
        lines.append(f'  "{name(I)}";')
    for J, I, bold in poset_edges(d):
        style = " [style=bold, penwidth=3]" if bold else ""
        lines.append(f'  "{name(J)}" -- "{name(I)}"{style};')
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass
class SpectrumReport:
    d: int
    lam: list
    rows: list[dict]
    merged: list[tuple] = field(default_factory=list)
    points: list = field(default_factory=list)

    def contains(self, x, tol: float = MERGE_TOL) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.merged) or any(abs(x - p) <= tol for p in self.points)

    def to_json(self, config: dict | None = None) -> str:
        doc = {
            "d": self.d,
            "lambda": [float(x) for x in self.lam],
            "unit": "nats",
            "rows": [{"I": sorted(r["I"]), "blocks": list(r["blocks"]), "fI": sorted(r["fI"]),
                      "h_lo": float(r["h_lo"]), "h_hi": float(r["h_hi"])} for r in self.rows],
            "merged": [{"lo": float(lo), "hi": float(hi)} for lo, hi in self.merged],
            "points": [float(p) for p in self.points],
        }
        if config is not None:
            doc["config"] = config
        return json.dumps(doc, indent=2) + "\n"


def merge_intervals(intervals: Iterable[tuple], tol: float = MERGE_TOL) -> tuple[list[tuple], list]:
    """Merge closed intervals; degenerate ones not touching any other become points."""
    ivs = sorted(intervals, key=lambda iv: (iv[0], iv[1]))
    proper = [iv for iv in ivs if iv[1] - iv[0] > tol]
    merged: list[list] = []
    for lo, hi in proper:
        if merged and lo <= merged[-1][1] + tol:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    points = []
    for lo, hi in ivs:
        if hi - lo > tol:
            continue
        if any(a - tol <= lo <= b + tol for a, b in merged):
            continue
        if points and abs(points[-1] - lo) <= tol:
            continue
        points.append(lo)
    return [tuple(m) for m in merged], points


def entropy_spectrum(lam: Sequence, d: int, zero_sum_tol: float = 1e-9) -> SpectrumReport:
    _check_lambda(lam, d)
    if abs(sum(lam)) > zero_sum_tol:
        raise ConfigError(f"exponents must sum to zero for SL(d), got {float(sum(lam))}")
    rows = []
    for I in all_subsets(d):
        fI = f_map(d, I)
        rows.append({"I": I, "blocks": blocks_of(d, I), "fI": fI,
                     "h_lo": flag_entropy(lam, d, I), "h_hi": flag_entropy(lam, d, fI)})
    merged, points = merge_intervals([(r["h_lo"], r["h_hi"]) for r in rows])
    return SpectrumReport(d, list(lam), rows, merged, points)


def parse_lambda(text: str) -> list:
    vals = []
    for part in text.split(","):
        part = part.strip()
        try:
            vals.append(Fraction(part) if "/" in part else float(part))
        except ValueError:
            raise ConfigError(f"cannot parse exponent {part!r}")
    return vals
