"""Coset-walk distributions and entropy estimators.

Everything here works for the invariant-base case: the coset chain moves
from ``v`` to the canonical image of ``v * s`` with probability mu(s).

Functions taking ``oracle`` also accept an *ensemble*, a list of
``(weight, oracle)`` pairs standing for an invariant measure on rooted
graphs (for instance the conjugates of K_l); quantities are then averaged
with those weights.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np
from scipy import stats

from .errors import BudgetExceeded, InvalidDistribution
from .schreier import LoopOracle, TrivialOracle, sample_cover
from .words import RngStream, StepDistribution, multiply, reduce_word, shannon_entropy, support_budget

Ensemble = Sequence[tuple[float, LoopOracle]]
OracleLike = Union[LoopOracle, Ensemble]


def as_ensemble(oracle: OracleLike) -> list[tuple[float, LoopOracle]]:
    if isinstance(oracle, LoopOracle):
        return [(1.0, oracle)]
    members = list(oracle)
    total = math.fsum(w for w, _ in members)
    if abs(total - 1.0) > 1e-12:
        raise InvalidDistribution(f"ensemble weights sum to {total}")
    return members


@dataclass
class CosetDistribution:
    time: int
    masses: dict[str, float]

    def total(self) -> float:
        return math.fsum(self.masses.values())

    def entropy(self) -> float:
        return shannon_entropy(self.masses)


@dataclass
class EntropyCurve:
    """Rows of (n, H_n, H_n - H_{n-1}, ci); ci is zero for exact rows."""

    rows: list[tuple[int, float, float, float]]

    @property
    def final_increment(self) -> float:
        return self.rows[-1][2]

    def increments(self) -> list[float]:
        return [r[2] for r in self.rows if r[0] >= 1]

    def entropies(self) -> list[float]:
        return [r[1] for r in self.rows]


@dataclass
class EntropyEstimate:
    value: float
    ci_halfwidth: float
    method: str
    n_used: int
    samples_used: int
    per_sample: list[float] = field(default_factory=list, repr=False)


@dataclass
class ShadowMeasure:
    """Masses of sphere-n shadows; undecided samples are dropped and counted."""

    sphere_radius: int
    masses: dict[str, float]
    provenance: str
    n_decided: int
    undecided_fraction: float
    error_bound: float | None = None

    @property
    def warning(self) -> bool:
        return self.undecided_fraction > 0.5

    def sigma(self, cell: str) -> float:
        p = self.masses.get(cell, 0.0)
        return math.sqrt(p * (1 - p) / max(self.n_decided, 1))


# ---------------------------------------------------------------------------
# exact dynamic programming


def _push(oracle: LoopOracle, law: Mapping[str, float], mu: StepDistribution, budget: int) -> dict[str, float]:
    nxt: dict[str, float] = defaultdict(float)
    atoms = list(mu.atoms.items())
    if isinstance(oracle, TrivialOracle):
        for v, pv in law.items():
            for s, ps in atoms:
                nxt[multiply(v, s)] += pv * ps
    elif all(len(s) == 1 for s, _ in atoms):
        step = oracle.step
        for v, pv in law.items():
            for s, ps in atoms:
                nxt[step(v, s)] += pv * ps
    else:
        apply = oracle.apply
        for v, pv in law.items():
            for s, ps in atoms:
                nxt[apply(v, s)] += pv * ps
    if len(nxt) > budget:
        raise BudgetExceeded(f"coset distribution support {len(nxt)} exceeds budget {budget}")
    return nxt


def coset_distributions(oracle: LoopOracle, mu: StepDistribution, nmax: int, start: str = "",
                        budget: int | None = None) -> Iterator[CosetDistribution]:
    """Yield the exact laws of xi_0, ..., xi_nmax of the chain started at ``start``."""
    budget = support_budget() if budget is None else budget
    law: dict[str, float] = {start: 1.0}
    yield CosetDistribution(0, law)
    for n in range(1, nmax + 1):
        law = _push(oracle, law, mu, budget)
        yield CosetDistribution(n, law)


def exact_coset_distribution(oracle: LoopOracle, mu: StepDistribution, n: int, budget: int | None = None,
                             start: str = "") -> CosetDistribution:
    if n < 0:
        raise ValueError("n must be non-negative")
    for dist in coset_distributions(oracle, mu, n, start=start, budget=budget):
        pass
    return dist


def _entropies(oracle: LoopOracle, mu: StepDistribution, nmax: int, budget: int | None = None) -> list[float]:
    return [d.entropy() for d in coset_distributions(oracle, mu, nmax, budget=budget)]


def entropy_increments(oracle: OracleLike, mu: StepDistribution, nmax: int,
                       budget: int | None = None) -> EntropyCurve:
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    H = np.zeros(nmax + 1)
    for w, member in as_ensemble(oracle):
        H += w * np.array(_entropies(member, mu, nmax, budget))
    rows = [(0, 0.0, 0.0, 0.0)]
    for n in range(1, nmax + 1):
        rows.append((n, float(H[n]), float(H[n] - H[n - 1]), 0.0))
    return EntropyCurve(rows)


def free_group_radial_curve(k: int, nmax: int) -> EntropyCurve:
    """Exact H(mu^n) for simple random walk on F_k by lumping words by length.

    Given its length r, the position is uniform on the 2k(2k-1)^(r-1)
    reduced words of that length, so H_n = H(|xi_n|) + E log #sphere.
    Polynomial in n, which lets the curve run far past the reach of the DP.
    """
    if k < 2 or nmax < 1:
        raise ValueError("need k >= 2 and nmax >= 1")
    q = 2 * k
    radial = np.zeros(nmax + 2)
    radial[0] = 1.0
    log_sphere = np.array([0.0] + [math.log(q) + (r - 1) * math.log(q - 1) for r in range(1, nmax + 2)])
    H = [0.0]
    for n in range(1, nmax + 1):
        nxt = np.zeros_like(radial)
        nxt[1] += radial[0]
        nxt[2:] += radial[1:-1] * (q - 1) / q
        nxt[:-1] += radial[1:] / q
        radial = nxt
        pos = radial[radial > 0]
        H.append(float(-(pos * np.log(pos)).sum() + (radial * log_sphere).sum()))
    rows = [(0, 0.0, 0.0, 0.0)] + [(n, H[n], H[n] - H[n - 1], 0.0) for n in range(1, nmax + 1)]
    return EntropyCurve(rows)


def mutual_information(oracle: OracleLike, mu: StepDistribution, n: int, budget: int | None = None) -> float:
    """I(xi_1, xi_n) from the exact joint law, averaged over an ensemble."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0.0
    for w, member in as_ensemble(oracle):
        first = exact_coset_distribution(member, mu, 1, budget).masses
        joint: dict[tuple[str, str], float] = {}
        marginal: dict[str, float] = defaultdict(float)
        for u, pu in first.items():
            cond = exact_coset_distribution(member, mu, n - 1, budget, start=u).masses
            for v, pv in cond.items():
                joint[(u, v)] = pu * pv
                marginal[v] += pu * pv
        terms = [pj * math.log(pj / (first[u] * marginal[v])) for (u, v), pj in joint.items() if pj > 0]
        total += w * math.fsum(terms)
    return total


def conditional_increment(oracle: LoopOracle, mu: StepDistribution, n: int, budget: int | None = None) -> float:
    """H(xi_n) minus the mean entropy of the (n-1)-step chain re-rooted at xi_1.

    This is the per-graph form of the mutual-information identity; it uses
    the rerooted graphs rather than the joint law.
    """
    from .schreier import RerootedOracle

    h_n = exact_coset_distribution(oracle, mu, n, budget).entropy()
    first = exact_coset_distribution(oracle, mu, 1, budget).masses
    acc = []
    for u, pu in first.items():
        shifted = RerootedOracle(oracle, u) if u else oracle
        acc.append(pu * exact_coset_distribution(shifted, mu, n - 1, budget).entropy())
    return h_n - math.fsum(acc)


# ---------------------------------------------------------------------------
# confidence intervals


def _t_halfwidth(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0 if len(values) == 1 else math.inf
    sd = values.std(ddof=1)
    if sd == 0:
        return 0.0
    return float(stats.t.ppf(0.975, len(values) - 1) * sd / math.sqrt(len(values)))


def batch_means_ci(values: Sequence[float], batches: int = 8) -> tuple[float, float]:
    """Mean and 95% half-width from means over contiguous batches."""
    values = np.asarray(values, dtype=float)
    b = max(1, min(batches, len(values)))
    chunks = np.array_split(values, b)
    means = np.array([c.mean() for c in chunks])
    if np.all(values == values[0]):
        return float(values[0]), 0.0
    return float(values.mean()), _t_halfwidth(means)


# ---------------------------------------------------------------------------
# Monte Carlo estimators


def _walk(oracle: LoopOracle, mu: StepDistribution, steps: int, rng: RngStream, state=None):
    words = mu.words
    move = oracle.move
    st = oracle.root if state is None else state
    for i in mu.sample_indices(rng, steps):
        for s in words[i]:
            st = move(st, s)
    return st


def plugin_entropy_estimate(oracle: LoopOracle, mu: StepDistribution, n: int, samples: int,
                            rng: RngStream) -> EntropyEstimate:
    """Plug-in entropy of xi_n from sampled endpoints, Miller-Madow corrected."""
    counts = Counter(oracle.word(_walk(oracle, mu, n, rng.child(i))) for i in range(samples))
    freqs = np.array(list(counts.values()), dtype=float) / samples
    h = float(-(freqs * np.log(freqs)).sum()) + (len(counts) - 1) / (2 * samples)
    # crude delta-method spread of -log p over the sample
    logs = np.array([-math.log(counts[w] / samples) for w in counts for _ in range(counts[w])])
    return EntropyEstimate(h, float(1.96 * logs.std() / math.sqrt(samples)), "plugin-mc", n, samples)


def _sample_curve(args) -> list[float]:
    """H_0..H_nmax for one sampled cover; exact while the budget allows."""
    ell, p, seed, index, mu, nmax, budget = args
    oracle = sample_cover(ell, p, seed, index)
    H: list[float] = []
    try:
        for dist in coset_distributions(oracle, mu, nmax, budget=budget):
            H.append(dist.entropy())
    except BudgetExceeded:
        rng = RngStream(seed, 10_000_019 + index)
        for n in range(len(H), nmax + 1):
            H.append(plugin_entropy_estimate(oracle, mu, n, 20_000, rng.child(n)).value)
    return H


def _sample_increment(args) -> float:
    H = _sample_curve(args)
    return H[-1] - H[-2]


def bundle_entropy_curves(ell: int, p: float, mu: StepDistribution, nmax: int, samples: int, seed: int,
                          threads: int = 1, budget: int | None = None) -> np.ndarray:
    """Per-sample entropy curves, shape (samples, nmax + 1)."""
    if samples < 1 or nmax < 1:
        raise ValueError("samples and nmax must be >= 1")
    budget = support_budget() if budget is None else budget
    jobs = [(ell, p, seed, i, mu, nmax, budget) for i in range(samples)]
    if p == 1.0:
        # the trivial subgroup: one exact computation serves every sample
        curves = [_sample_curve(jobs[0])] * samples
    elif threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(_sample_curve, jobs))
    else:
        curves = [_sample_curve(j) for j in jobs]
    return np.array(curves)


def bundle_entropy_estimate(ell: int, p: float, mu: StepDistribution, nmax: int, samples: int, seed: int,
                            batches: int = 8, threads: int = 1, budget: int | None = None) -> EntropyEstimate:
    """Average of the final increment over independently sampled covers."""
    curves = bundle_entropy_curves(ell, p, mu, nmax, samples, seed, threads, budget)
    values = list(curves[:, -1] - curves[:, -2])
    mean, ci = batch_means_ci(values, batches)
    return EntropyEstimate(mean, ci, "exact-dp", nmax, samples, per_sample=values)


def bundle_entropy_curve(ell: int, p: float, mu: StepDistribution, nmax: int, samples: int, seed: int,
                         batches: int = 8, threads: int = 1, budget: int | None = None) -> EntropyCurve:
    """Sample-averaged curve with batch-means CIs on each increment."""
    curves = bundle_entropy_curves(ell, p, mu, nmax, samples, seed, threads, budget)
    rows = [(0, 0.0, 0.0, 0.0)]
    for n in range(1, nmax + 1):
        inc, ci = batch_means_ci(curves[:, n] - curves[:, n - 1], batches)
        rows.append((n, float(curves[:, n].mean()), inc, ci))
    return EntropyCurve(rows)


def kingman_entropy_estimate(oracle: OracleLike, mu: StepDistribution, n: int, trajectories: int,
                             rng: RngStream, budget: int | None = None) -> EntropyEstimate:
    """Mean of -(1/n) log P^n(root, xi_n) over sampled trajectories."""
    if n < 1 or trajectories < 1:
        raise ValueError("n and trajectories must be >= 1")
    members = as_ensemble(oracle)
    laws = [exact_coset_distribution(m, mu, n, budget).masses for _, m in members]
    weights = np.array([w for w, _ in members])
    pick = rng.gen.choice(len(members), size=trajectories, p=weights) if len(members) > 1 else np.zeros(trajectories, int)
    vals = []
    for i in range(trajectories):
        j = int(pick[i])
        end = members[j][1].word(_walk(members[j][1], mu, n, rng.child(i)))
        pn = laws[j].get(end, 0.0)
        assert pn > 0, f"endpoint {end!r} has zero exact mass"
        vals.append(-math.log(pn) / n)
    return EntropyEstimate(float(np.mean(vals)), _t_halfwidth(vals), "kingman-mc", n, trajectories, per_sample=vals)


def hitting_distribution_mc(oracle: LoopOracle, mu: StepDistribution, n: int, horizon: int, margin: int,
                            samples: int, rng: RngStream) -> ShadowMeasure:
    """Shadow masses at sphere n from where the coset walk sits after ``horizon`` steps."""
    if horizon <= n + margin:
        raise ValueError("horizon must exceed sphere + margin")
    counts: Counter = Counter()
    undecided = 0
    for i in range(samples):
        w = oracle.word(_walk(oracle, mu, horizon, rng.child(i)))
        if len(w) > n + margin:
            counts[w[:n]] += 1
        else:
            undecided += 1
    return _shadow_measure(n, counts, undecided, samples, f"hitting-mc(T={horizon})")


def _shadow_measure(n: int, counts: Counter, undecided: int, samples: int, provenance: str) -> ShadowMeasure:
    decided = samples - undecided
    masses = {c: counts[c] / decided for c in sorted(counts)} if decided else {}
    return ShadowMeasure(n, masses, provenance, decided, undecided / samples if samples else 0.0)


def boundary_prefix(mu: StepDistribution, t: int, margin: int, rng: RngStream, max_steps: int) -> str | None:
    """Length-t prefix of the limit word of the group walk, or None if undecided.

    The prefix is taken once the reduced walk word first reaches length
    t + margin; a later return below length t would change it.
    """
    words = mu.words
    w: list[str] = []
    target = t + margin
    drawn = 0
    while drawn < max_steps:
        chunk = min(256, max_steps - drawn)
        for i in mu.sample_indices(rng, chunk):
            for s in words[i]:
                if w and w[-1] == s.swapcase():
                    w.pop()
                else:
                    w.append(s)
            if len(w) >= target:
                return "".join(w[:t])
        drawn += chunk
    return None


def prefix_phi(oracle: LoopOracle, mu: StepDistribution, n: int, t: int, samples: int, rng: RngStream,
               margin: int = 16, max_steps: int | None = None) -> ShadowMeasure:
    """Shadow masses at sphere n from the coset image of a length-t boundary prefix."""
    if t <= n:
        raise ValueError("t must exceed the sphere radius")
    max_steps = max_steps or 50 * (t + margin)
    counts: Counter = Counter()
    undecided = 0
    for i in range(samples):
        prefix = boundary_prefix(mu, t, margin, rng.child(i), max_steps)
        if prefix is None:
            undecided += 1
            continue
        st = oracle.root
        for s in prefix:
            st = oracle.move(st, s)
        pos = oracle.word(st)
        if len(pos) >= n:
            counts[pos[:n]] += 1
        else:
            undecided += 1
    return _shadow_measure(n, counts, undecided, samples, f"prefix-phi(t={t})")


@dataclass
class StripResult:
    frequency: float
    decided: int
    undecided_fraction: float
    forward: Counter
    backward: Counter


def strip_occupancy(oracle: LoopOracle, mu: StepDistribution, samples: int, horizon: int, n: int,
                    rng: RngStream, margin: int = 4) -> StripResult:
    """Fraction of forward/backward end pairs whose sphere-n cells lie in different root branches."""
    check = mu.reflected()
    hits = 0
    undecided = 0
    fwd: Counter = Counter()
    bwd: Counter = Counter()
    for i in range(samples):
        r = rng.child(i)
        a = oracle.word(_walk(oracle, mu, horizon, r.child(0)))
        b = oracle.word(_walk(oracle, check, horizon, r.child(1)))
        if len(a) <= n + margin or len(b) <= n + margin:
            undecided += 1
            continue
        fwd[a[:n]] += 1
        bwd[b[:n]] += 1
        if a[0] != b[0]:
            hits += 1
    decided = samples - undecided
    return StripResult(hits / decided if decided else 0.0, decided, undecided / samples, fwd, bwd)


# ---------------------------------------------------------------------------
# divergences on partitions


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(c, 0.0) - q.get(c, 0.0)) for c in keys)


def _masses(m) -> Mapping:
    return m.masses if isinstance(m, ShadowMeasure) else m


def kl_on_partition(p, q) -> float:
    """KL divergence sum p log(p/q) in nats; ``math.inf`` when p charges a q-null cell."""
    p, q = _masses(p), _masses(q)
    terms = []
    for c, pc in p.items():
        if pc < 0:
            raise InvalidDistribution(f"negative mass at {c!r}")
        if pc == 0:
            continue
        qc = q.get(c, 0.0)
        if qc <= 0:
            return math.inf
        terms.append(pc * math.log(pc / qc))
    return max(0.0, math.fsum(terms))


def reverse_pinsker_gap_bound(p, q, p2, q2) -> float:
    """Upper bound on KL(p||q) - KL(p2||q2) for measures positive on one partition."""
    p, q, p2, q2 = (_masses(m) for m in (p, q, p2, q2))
    cells = list(p)
    if set(cells) != set(q) or set(cells) != set(p2) or set(cells) != set(q2):
        raise InvalidDistribution("all four measures must live on the same partition")
    for m in (p, q, p2, q2):
        if any(v <= 0 for v in m.values()):
            raise InvalidDistribution("reverse Pinsker bound needs strictly positive masses")
    C = max(p[c] / q[c] for c in cells)
    return math.log(max(q2[c] / q[c] for c in cells)) + 2 * math.sqrt(C) * max(abs(1 - p2[c] / p[c]) for c in cells)


def refine_to_sphere(masses: Mapping[str, float], n: int) -> dict[str, float]:
    """Coarsen a measure on sphere-m cells to sphere n <= m by prefix."""
    out: dict[str, float] = defaultdict(float)
    for c, v in masses.items():
        out[c[:n]] += v
    return dict(out)
