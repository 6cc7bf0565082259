import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entspec.errors import ConfigError, UnstableBall
from entspec.schreier import (BernoulliCoverOracle, KlOracle, NormalClosureOracle, RerootedOracle, SchreierBall,
                              TrivialOracle, fold_words, folded_ball, kl_conjugates, kl_invariant_ensemble,
                              kl_self_loop, make_oracle, materialize_ball, sample_cover, stallings_fold_reference,
                              verify_tree_like)
from entspec.words import reduce_word

walks = st.text(alphabet="aAbB", max_size=16)


def test_trivial_ball_sizes():
    # 1 + 4 + 12 vertices at radius 2
    assert len(materialize_ball(TrivialOracle(), 2).vertices) == 17
    assert len(materialize_ball(TrivialOracle(), 3).sphere(3)) == 36


def test_trivial_dot_output():
    dot = materialize_ball(TrivialOracle(), 2).to_dot()
    assert dot.startswith("graph schreier {")
    assert dot.count(" -- ") == 16


def test_kl_self_loop_examples():
    assert kl_self_loop(2, "a", "b")
    assert not kl_self_loop(2, "", "a")
    assert not kl_self_loop(2, "a", "a")


@pytest.mark.parametrize("ell", [2, 3])
@pytest.mark.parametrize("radius", [0, 1, 2, 3, 4])
def test_closed_form_matches_folding(ell, radius):
    ref = stallings_fold_reference(ell, radius + ell, radius)
    mine = materialize_ball(KlOracle(ell), radius)
    assert ref.same_as(mine)


def test_folding_oracle_agrees_with_closed_form():
    fast, slow = KlOracle(2), KlOracle(2, use_folding=True)
    for v in materialize_ball(fast, 3).vertices:
        for g in "ab":
            assert fast.self_loop(v, g) == slow.self_loop(v, g)


def test_fold_reference_gives_up():
    with pytest.raises(UnstableBall):
        stallings_fold_reference(3, 1, 6, max_bound=1)


def test_fold_doubling_can_stop_early_from_small_start():
    # bounds 1 and 2 both see no conjugators of <a^3, b^3>, so they agree on a wrong ball
    early = stallings_fold_reference(3, 1, 1)
    assert not early.same_as(materialize_ball(KlOracle(3), 1))


def test_kl_rejects_small_ell():
    with pytest.raises(ConfigError):
        KlOracle(1)


def test_fold_words_bouquet_and_cycle():
    g = fold_words(["a", "b"], 2)
    assert g.edges[(g.root, "a")] == g.root
    g = fold_words(["aa"], 2)
    v, rest = g.read("aa")
    assert v == g.root and rest == ""


@given(walks)
def test_trivial_canonical_is_free_reduction(w):
    assert TrivialOracle().canonicalize(w) == reduce_word(w)


@settings(max_examples=200)
@given(walks, st.sampled_from([2, 3]))
def test_kl_step_inverse_returns(w, ell):
    o = KlOracle(ell)
    c = o.canonicalize(w)
    for s in "aAbB":
        assert o.step(o.step(c, s), s.swapcase()) == c


@settings(max_examples=200)
@given(walks)
def test_canonical_words_are_reduced_and_prefix_closed(w):
    c = KlOracle(2).canonicalize(w)
    assert reduce_word(c) == c
    assert KlOracle(2).canonicalize(c) == c


@settings(max_examples=100)
@given(walks, walks)
def test_canonicalize_is_action(u, v):
    o = KlOracle(3)
    assert o.apply(o.canonicalize(u), v) == o.canonicalize(u + v)


def test_normal_closure_ball():
    ball = materialize_ball(NormalClosureOracle(2, "a"), 3)
    # the graph is the line of b-powers with an a-loop everywhere
    assert set(ball.vertices) == {"", "B", "b", "BB", "bb", "BBB", "bbb"}
    assert verify_tree_like(ball)


@pytest.mark.parametrize("ell", [2, 3])
def test_kl_balls_tree_like(ell):
    for r in range(6):
        assert verify_tree_like(materialize_ball(KlOracle(ell), r))


def test_verify_detects_cycle():
    # a 2-cycle labelled a between two vertices
    ball = SchreierBall(1, 2, ["", "a"], {("", "a"): "a", ("a", "A"): "", ("a", "a"): "", ("", "A"): "a"})
    assert not verify_tree_like(ball)


def test_conjugates_and_ensemble():
    assert kl_conjugates(3) == ["", "a", "aa", "b", "bb"]
    ens = kl_invariant_ensemble(2)
    assert len(ens) == 3 and abs(sum(w for w, _ in ens) - 1) < 1e-15


def test_rerooted_ball_tree_like():
    # seen from "a" the root sits on a subdivided edge and carries the b-loop
    re = RerootedOracle(KlOracle(2), "a")
    ball = materialize_ball(re, 4)
    assert verify_tree_like(ball)
    assert re.self_loop("", "b")


def test_cover_p_zero_is_base():
    cov = BernoulliCoverOracle(2, 0.0, seed=1)
    base = KlOracle(2)
    assert materialize_ball(cov, 5).same_as(materialize_ball(base, 5))


def test_cover_p_one_is_tree():
    cov = BernoulliCoverOracle(2, 1.0, seed=1)
    assert materialize_ball(cov, 4).same_as(materialize_ball(TrivialOracle(), 4))


def test_cover_rejects_bad_p():
    with pytest.raises(ConfigError):
        BernoulliCoverOracle(2, 1.5, seed=0)


def test_cover_retention_is_reproducible():
    a = BernoulliCoverOracle(2, 0.5, seed=9)
    b = BernoulliCoverOracle(2, 0.5, seed=9)
    ids = [(v, g) for v in ["a", "b", "aab", "bba"] for g in "ab"]
    assert [a.retained(i) for i in ids] == [b.retained(i) for i in ids]


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("root", ["", "a", "b"])
def test_cover_ball_matches_folding(seed, root):
    cov = BernoulliCoverOracle(2, 0.5, seed, root)
    radius = 4
    gens = cov.retained_generators(radius + len(cov.root_word) + 1)
    assert folded_ball(fold_words(gens, 2), radius).same_as(materialize_ball(cov, radius))


def test_cover_loop_generators_fix_root():
    cov = BernoulliCoverOracle(2, 0.3, seed=4, root_word="b")
    for g in cov.retained_generators(4):
        assert cov.canonicalize(g) == ""


def test_sample_cover_p_one_trivial():
    assert isinstance(sample_cover(2, 1.0, 0, 0), TrivialOracle)


def test_sample_cover_deterministic():
    a, b = sample_cover(2, 0.5, 3, 7), sample_cover(2, 0.5, 3, 7)
    assert materialize_ball(a, 4).same_as(materialize_ball(b, 4))


def test_make_oracle():
    assert isinstance(make_oracle("trivial"), TrivialOracle)
    assert make_oracle("kl:3").ell == 3
    assert make_oracle("normal:b").generator == "b"
    assert make_oracle("cover:2:0.5", seed=1).p == 0.5
    with pytest.raises(ConfigError):
        make_oracle("cover:2:0.5")
    with pytest.raises(ConfigError):
        make_oracle("bogus")


def test_ball_rows_symmetric():
    ball = materialize_ball(KlOracle(2), 3)
    for v, s, t, _ in ball.to_rows():
        back = ball.edges.get((t, s.swapcase()))
        assert back is None or back == v
