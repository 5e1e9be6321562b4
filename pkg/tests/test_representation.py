import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsp.representation import (
    UNK,
    HashedContextProvider,
    RepresentationConfig,
    RepresentationError,
    WordVocab,
    load_contextual_file,
    make_provider,
    mix_layers,
    mix_layers_backward,
    token_ids,
    unk_replace_probability,
    write_contextual_file,
)


def test_unk_probability_values():
    assert unk_replace_probability(0) == 1.0
    assert unk_replace_probability(9) == pytest.approx(0.19)
    with pytest.raises(ValueError):
        unk_replace_probability(-1)


@given(st.integers(0, 10**9))
def test_unk_probability_floor(n):
    p = unk_replace_probability(n)
    assert 0.1 <= p <= 1.0


def test_unk_empirical_rate():
    vocab = WordVocab({"w": 9, "x": 1})
    rng = np.random.default_rng(0)
    ids = token_ids(["w"] * 10_000, vocab, True, rng)
    rate = float(np.mean(ids == 0))
    assert 0.17 <= rate <= 0.21


def test_unknown_token_is_always_unk():
    vocab = WordVocab({"w": 3})
    ids = token_ids(["zzz"] * 50, vocab, True, np.random.default_rng(1))
    assert np.all(ids == 0)
    assert token_ids(["zzz"], vocab, False)[0] == 0


def test_eval_mode_is_deterministic():
    vocab = WordVocab.build([["a", "b", "a"]])
    assert vocab.words[0] == UNK and vocab.count("a") == 2
    assert list(token_ids(["a", "b", "c"], vocab, False)) == [vocab.index["a"], vocab.index["b"], 0]


def test_mix_single_layer_and_equal_weights():
    layers = np.random.default_rng(2).normal(size=(1, 3, 4))
    np.testing.assert_allclose(mix_layers(layers, np.array([7.3]), 2.0), 2.0 * layers[0])
    layers = np.random.default_rng(3).normal(size=(2, 3, 4))
    np.testing.assert_allclose(mix_layers(layers, np.zeros(2), 1.5), 1.5 * layers.mean(axis=0))
    with pytest.raises(RepresentationError):
        mix_layers(layers, np.zeros(3), 1.0)


def test_mix_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    layers = rng.normal(size=(3, 5, 2))
    w = rng.normal(size=3)
    scale = 0.7
    d_out = rng.normal(size=(5, 2))
    dw, dscale = mix_layers_backward(layers, w, scale, d_out)
    f = lambda w_, s_: float(np.sum(d_out * mix_layers(layers, w_, s_)))
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        assert dw[k] == pytest.approx((f(w + e, scale) - f(w - e, scale)) / (2 * h), rel=1e-6, abs=1e-9)
    assert dscale == pytest.approx((f(w, scale + h) - f(w, scale - h)) / (2 * h), rel=1e-6)


def test_contextual_file_round_trip(tmp_path):
    arr = np.random.default_rng(5).normal(size=(2, 2, 4))
    path = tmp_path / "ctx.txt"
    write_contextual_file(path, {"hello world": arr})
    provider = load_contextual_file(path)
    assert provider.layers("hello world".split()).shape == (2, 2, 4)
    np.testing.assert_array_equal(provider.layers(["hello", "world"]), arr)
    with pytest.raises(RepresentationError):
        provider.layers(["absent"])


@pytest.mark.parametrize("body", [
    "nonsense\n",
    "RSPCTX v1 layers=1 dim=2\n# a b\na\t1 2\n",
    "RSPCTX v1 layers=1 dim=2\n# a\nb\t1 2\n",
    "RSPCTX v1 layers=1 dim=2\n# a\na\t1 2 3\n",
    "RSPCTX v1 layers=1 dim=2\n# a\na\t1 2\n# a\na\t1 2\n",
])
def test_contextual_file_errors(tmp_path, body):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(RepresentationError):
        load_contextual_file(path)


def test_contextual_file_dimension_check(tmp_path):
    path = tmp_path / "ctx.txt"
    write_contextual_file(path, {"a": np.zeros((2, 1, 3))})
    cfg = RepresentationConfig(4, 3, 2, "contextual-file")
    assert make_provider(cfg, path).dim == 3
    with pytest.raises(RepresentationError):
        make_provider(RepresentationConfig(4, 5, 2, "contextual-file"), path)
    with pytest.raises(RepresentationError):
        make_provider(cfg, None)


def test_hashed_provider_properties():
    p = HashedContextProvider(6, 3, seed=1)
    a = p.layers(["the", "cat", "sat"])
    b = p.layers(["a", "cat", "ran"])
    np.testing.assert_array_equal(a[0, 1], b[0, 1])
    assert not np.allclose(a[1, 1], b[1, 1])
    single = p.layers(["cat"])
    np.testing.assert_array_equal(single[1], single[0])
    np.testing.assert_array_equal(HashedContextProvider(6, 3, seed=1).layers(["the", "cat", "sat"]), a)
    assert not np.allclose(HashedContextProvider(6, 3, seed=2).layers(["cat"])[0], single[0])


def test_learned_only_config():
    cfg = RepresentationConfig(2, 32, 3, "learned-only")
    assert cfg.context_dim == 0 and cfg.input_dim == 2
    assert make_provider(cfg) is None
    with pytest.raises(RepresentationError):
        RepresentationConfig(mode="bogus")
