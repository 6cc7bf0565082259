import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entspec.entropy import (ShadowMeasure, batch_means_ci, bundle_entropy_curve, bundle_entropy_estimate,
                             conditional_increment, entropy_increments, exact_coset_distribution,
                             free_group_radial_curve, hitting_distribution_mc, kingman_entropy_estimate, kl_on_partition,
                             mutual_information, plugin_entropy_estimate, prefix_phi, refine_to_sphere,
                             reverse_pinsker_gap_bound, strip_occupancy, total_variation)
from entspec.errors import BudgetExceeded, InvalidDistribution
from entspec.schreier import KlOracle, NormalClosureOracle, TrivialOracle, kl_invariant_ensemble, sample_cover
from entspec.words import RngStream, StepDistribution, exact_convolution, shannon_entropy

SRW = StepDistribution.srw(2)


def test_coset_law_trivial_matches_convolution():
    law = exact_coset_distribution(TrivialOracle(), SRW, 5).masses
    conv = exact_convolution(SRW, 5)
    assert law.keys() == conv.keys()
    assert all(math.isclose(law[w], conv[w], rel_tol=1e-12) for w in law)


def test_coset_law_normal_closure_first_steps():
    law = exact_coset_distribution(NormalClosureOracle(2, "a"), SRW, 1).masses
    assert law == pytest.approx({"": 0.5, "b": 0.25, "B": 0.25})


def test_coset_law_kl_mass_conserved():
    law = exact_coset_distribution(KlOracle(2), SRW, 8).masses
    assert math.isclose(sum(law.values()), 1.0, abs_tol=1e-12)


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        exact_coset_distribution(TrivialOracle(), SRW, 8, budget=100)


def test_first_increment_trivial():
    curve = entropy_increments(TrivialOracle(), SRW, 2)
    assert curve.increments()[0] == pytest.approx(math.log(4))


def test_radial_curve_matches_dp():
    dp = entropy_increments(TrivialOracle(), SRW, 9).entropies()
    radial = free_group_radial_curve(2, 9).entropies()
    assert np.allclose(dp, radial, atol=1e-12)


def test_radial_curve_tends_to_half_log_three():
    # SRW on F_2 has Avez entropy (1/2) log 3; the increment approaches it like 1/(2n)
    curve = free_group_radial_curve(2, 3000)
    assert abs(curve.final_increment - 0.5 * math.log(3)) < 1e-3


@pytest.mark.parametrize("oracle", [TrivialOracle(), NormalClosureOracle(2, "a"), kl_invariant_ensemble(2)],
                         ids=["trivial", "normal", "kl2-orbit"])
def test_mutual_information_identity(oracle):
    curve = entropy_increments(oracle, SRW, 6)
    for n in range(2, 7):
        assert abs(mutual_information(oracle, SRW, n) - curve.increments()[n - 1]) < 1e-9


def test_mutual_information_single_rooted_kl_differs():
    # the identity needs an invariant measure; one rooted copy of K_2 is not one
    mi = mutual_information(KlOracle(2), SRW, 4)
    inc = entropy_increments(KlOracle(2), SRW, 4).final_increment
    assert abs(mi - inc) > 1e-3


def test_conditional_increment_per_graph():
    for oracle in (KlOracle(2), sample_cover(2, 0.5, 12345, 0)):
        for n in (2, 4, 6):
            ens = [(1.0, oracle)]
            assert conditional_increment(oracle, SRW, n) == pytest.approx(mutual_information(ens, SRW, n), abs=1e-9)


@pytest.mark.parametrize("oracle", [TrivialOracle(), kl_invariant_ensemble(2), sample_cover(2, 0.5, 12345, 0)],
                         ids=["trivial", "kl2-orbit", "cover"])
def test_increments_non_increasing(oracle):
    inc = entropy_increments(oracle, SRW, 8).increments()
    assert all(b <= a + 1e-12 for a, b in zip(inc, inc[1:]))


def test_kingman_tracks_average_entropy():
    # the Shannon-McMillan average -log p_n / n estimates H_n / n
    n = 8
    H = entropy_increments(TrivialOracle(), SRW, n).entropies()[n]
    est = kingman_entropy_estimate(TrivialOracle(), SRW, n, 3000, RngStream(11))
    assert abs(est.value - H / n) < est.ci_halfwidth + 0.01


def test_plugin_estimate_close_for_small_n():
    exact = exact_coset_distribution(KlOracle(2), SRW, 3).entropy()
    est = plugin_entropy_estimate(KlOracle(2), SRW, 3, 20000, RngStream(2))
    assert abs(est.value - exact) < 0.03


def test_batch_means_ci():
    mean, ci = batch_means_ci([1.0] * 16)
    assert mean == 1.0 and ci == 0.0
    vals = np.random.default_rng(0).normal(size=800)
    mean, ci = batch_means_ci(vals)
    assert abs(mean) < ci * 2 and 0 < ci < 0.3


def test_bundle_p_one_is_exact_tree():
    est = bundle_entropy_estimate(2, 1.0, SRW, 6, 8, seed=1)
    assert est.ci_halfwidth == 0.0
    assert est.value == pytest.approx(entropy_increments(TrivialOracle(), SRW, 6).final_increment)


def test_bundle_p_zero_matches_orbit():
    est = bundle_entropy_estimate(2, 0.0, SRW, 8, 48, seed=5)
    exact = entropy_increments(kl_invariant_ensemble(2), SRW, 8).final_increment
    assert abs(est.value - exact) <= max(est.ci_halfwidth, 0.01)


def test_bundle_curve_deterministic():
    a = bundle_entropy_curve(2, 0.5, SRW, 5, 8, seed=3).rows
    b = bundle_entropy_curve(2, 0.5, SRW, 5, 8, seed=3).rows
    assert a == b


def test_shadows_sum_to_one_and_positive():
    oracle = sample_cover(2, 0.5, 1, 0)
    hit = hitting_distribution_mc(oracle, SRW, 1, 120, 6, 2000, RngStream(1))
    phi = prefix_phi(oracle, SRW, 1, 32, 2000, RngStream(2))
    for m in (hit, phi):
        assert math.isclose(sum(m.masses.values()), 1.0, abs_tol=1e-8)
        assert all(v > 0 for v in m.masses.values())
    assert total_variation(hit.masses, phi.masses) < 0.1


def test_shadow_measure_warning_and_sigma():
    m = ShadowMeasure(1, {"a": 0.5, "b": 0.5}, "x", 100, 0.6)
    assert m.warning
    assert m.sigma("a") == pytest.approx(0.05)


def test_refine_to_sphere():
    assert refine_to_sphere({"ab": 0.25, "aB": 0.25, "ba": 0.5}, 1) == {"a": 0.5, "b": 0.5}


def test_strip_occupancy_trivial():
    res = strip_occupancy(TrivialOracle(), SRW, 500, 40, 1, RngStream(4))
    # ends of SRW start with independent uniform letters: P(first letters differ) = 3/4
    assert abs(res.frequency - 0.75) < 0.08


def test_kl_on_partition():
    assert kl_on_partition({"x": 1.0}, {"x": 1.0}) == 0.0
    assert kl_on_partition({"x": 0.5, "y": 0.5}, {"x": 1.0, "y": 0.0}) == math.inf
    assert kl_on_partition({"x": 0.5, "y": 0.5}, {"x": 0.25, "y": 0.75}) == pytest.approx(
        0.5 * math.log(2) + 0.5 * math.log(2 / 3))


def test_reverse_pinsker_requires_positive():
    with pytest.raises(InvalidDistribution):
        reverse_pinsker_gap_bound({"x": 1.0}, {"x": 1.0}, {"x": 1.0}, {"x": 0.0})


def _measure(draw, m):
    x = np.array(draw(st.lists(st.floats(0.01, 10.0), min_size=m, max_size=m)))
    return {f"c{i}": v for i, v in enumerate(x / x.sum())}


@settings(max_examples=300)
@given(st.data())
def test_reverse_pinsker_property(data):
    m = data.draw(st.integers(1, 8))
    p, q, p2, q2 = (_measure(data.draw, m) for _ in range(4))
    gap = kl_on_partition(p, q) - kl_on_partition(p2, q2)
    assert gap <= reverse_pinsker_gap_bound(p, q, p2, q2) + 1e-12


def test_entropy_nonnegative_on_coset_laws():
    law = exact_coset_distribution(KlOracle(3), SRW, 6).masses
    assert 0 < shannon_entropy(law) <= math.log(len(law))


def test_kl_root_return_mass():
    # brute force over the 16 length-2 words agrees with the DP; the hub root has no loops,
    # so only s s^-1 returns, while interior roots of the conjugate ensemble add loop returns
    law = exact_coset_distribution(KlOracle(2), SRW, 2).masses
    brute = sum(1 / 16 for s in "aAbB" for t in "aAbB" if KlOracle(2).canonicalize(s + t) == "")
    assert law[""] == pytest.approx(brute) == pytest.approx(0.25)
    ens = sum(w * exact_coset_distribution(o, SRW, 2).masses[""] for w, o in kl_invariant_ensemble(2))
    assert ens == pytest.approx(1 / 3)
    assert ens > 0.25


def test_bundle_independent_of_threads():
    a = bundle_entropy_curve(2, 0.5, SRW, 4, 6, seed=8, threads=1).rows
    b = bundle_entropy_curve(2, 0.5, SRW, 4, 6, seed=8, threads=2).rows
    assert a == b
