import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsp.decoder import (
    DecodeError,
    SpanScores,
    decode,
    objective,
    reconcile,
    reconcile_bruteforce,
    reconcile_dp,
    reconcile_greedy,
    score_all_spans,
)
from rsp.treebank import all_spans, crosses, tree_to_spans

from conftest import make_params, perturb
from oracles import exhaustive_best


def table(n, gains, base=-1.0):
    vp = {s: base + gains.get(s, -0.5) for s in all_spans(n)}
    vm = {s: base for s in all_spans(n)}
    return SpanScores.from_dict(n, vp, vm)


def random_table(n, rng):
    vp = {s: float(np.log(rng.random())) for s in all_spans(n)}
    vm = {s: float(np.log(rng.random())) for s in all_spans(n)}
    return SpanScores.from_dict(n, vp, vm)


def test_conflict_example_picks_stronger_span():
    t = table(3, {(0, 2): 2.0, (1, 3): 3.0})
    for method in ("dp", "bruteforce", "greedy"):
        assert set(reconcile(t, method).spans) == {(0, 3), (1, 3)}


def test_single_token_root_is_forced():
    for g in (1.0, -1.0):
        t = table(1, {(0, 1): g})
        sel = reconcile_dp(t)
        assert sel.spans == ((0, 1),)
        assert sel.objective == pytest.approx(objective(t, [(0, 1)]))


def test_all_negative_gains_root_only():
    t = table(5, {})
    for method in ("dp", "bruteforce", "greedy"):
        assert reconcile(t, method).spans == ((0, 5),)


def test_dp_matches_exhaustive_oracle_small():
    rng = np.random.default_rng(0)
    for n in (2, 3, 4):
        for _ in range(15):
            t = random_table(n, rng)
            best, spans = exhaustive_best(n, t.v_plus, t.v_minus)
            sel = reconcile_dp(t)
            assert sel.objective == pytest.approx(best, abs=1e-9)
            assert list(sel.spans) == spans


def test_tie_break_prefers_fewer_then_lexicographic():
    # (0,1) and (1,2) together tie with (0,2)... all gains zero: root only
    t = table(3, {s: 0.0 for s in all_spans(3)})
    assert reconcile_dp(t).spans == ((0, 3),)
    assert reconcile_bruteforce(t).spans == ((0, 3),)
    # equal gains on two crossing spans: lexicographically smaller wins
    t = table(3, {(0, 2): 1.0, (1, 3): 1.0})
    assert reconcile_dp(t).spans == reconcile_bruteforce(t).spans == ((0, 2), (0, 3))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.booleans())
def test_dp_equals_bruteforce(n, seed, coarse):
    rng = np.random.default_rng(seed)
    if coarse:  # integer scores produce many exact ties
        vp = {s: float(rng.integers(-2, 3)) for s in all_spans(n)}
        vm = {s: float(rng.integers(-2, 3)) for s in all_spans(n)}
        t = SpanScores.from_dict(n, vp, vm)
    else:
        t = random_table(n, rng)
    a, b = reconcile_dp(t), reconcile_bruteforce(t)
    assert abs(a.objective - b.objective) <= 1e-9
    assert a.spans == b.spans
    assert not any(crosses(x, y) for x in a.spans for y in a.spans)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_greedy_never_beats_dp(n, seed):
    t = random_table(n, np.random.default_rng(seed))
    g = reconcile_greedy(t)
    assert g.approximate
    assert g.objective <= reconcile_dp(t).objective + 1e-12
    assert not any(crosses(x, y) for x in g.spans for y in g.spans)


def test_greedy_equals_dp_without_conflicts(she_tree):
    gold = set(tree_to_spans(she_tree).constituents())
    vp = {s: (-1e-6 if s in gold else -20.0) for s in all_spans(5)}
    vm = {s: (-20.0 if s in gold else -1e-6) for s in all_spans(5)}
    t = SpanScores.from_dict(5, vp, vm)
    assert reconcile_greedy(t).spans == reconcile_dp(t).spans == tuple(sorted(gold))


def test_bruteforce_guard_and_unknown_method():
    with pytest.raises(DecodeError):
        reconcile_bruteforce(table(13, {}))
    with pytest.raises(DecodeError):
        reconcile(table(2, {}), "beam")


def test_binary_label_scores_normalize():
    from rsp.treebank import parse_ptb

    trees = parse_ptb("(S (NN a) (NN b))")
    p = perturb(make_params(trees))
    assert len(p.labels) == 2
    s = score_all_spans(("a", "b", "b"), p)
    for span in all_spans(3):
        assert np.exp(s.v_plus[span]) + np.exp(s.v_minus[span]) == pytest.approx(1.0, abs=1e-9)


def test_uniform_model_scores_tie(small_trees):
    p = make_params(small_trees)
    p.weights["ff_W2"][:] = 0
    p.weights["ff_b2"][:] = 0
    s = score_all_spans(("She", "runs"), p)
    for span in all_spans(2):
        assert s.v_plus[span] == s.v_minus[span]


def test_decode_one_token(small_trees):
    p = perturb(make_params(small_trees))
    t = decode(("test",), p)
    assert t.tokens == ("test",) and len(t.children) == 1
