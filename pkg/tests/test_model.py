import numpy as np
import pytest

from rsp.model import (
    MAGIC,
    Batch,
    ModelConfig,
    ModelError,
    ModelFormatError,
    ModelShapeError,
    embed_tokens,
    encode,
    encode_sentence,
    forward,
    init_params,
    load_model,
    pos_logprobs,
    save_model,
    span_label_logprobs,
    span_repr,
)
from rsp.representation import RepresentationConfig, WordVocab
from rsp.treebank import Vocab, all_spans

from conftest import make_params, perturb


def logsumexp(x):
    m = x.max()
    return m + np.log(np.exp(x - m).sum())


def test_embedding_shape(small_trees):
    p = make_params(small_trees, learned=2, context=0, mode="learned-only")
    vecs, _ = embed_tokens(["She", "runs", "x"], p)
    assert vecs.shape == (3, 2)


def test_boundary_states_and_full_span(small_trees):
    p = perturb(make_params(small_trees))
    enc = encode_sentence(["test"], p)
    assert enc.f.shape[0] == 2 and enc.b.shape[0] == 3
    assert not enc.f[0].any() and not enc.b[2].any()
    enc = encode_sentence(["She", "enjoys", "tennis"], p)
    full = span_repr(enc, (0, 3))
    np.testing.assert_array_equal(full, np.concatenate([enc.f[3] - enc.f[0], enc.b[1] - enc.b[4]]))
    assert not np.allclose(span_repr(enc, (0, 1)), span_repr(enc, (1, 2)))
    with pytest.raises(ModelError):
        span_repr(enc, (2, 5))


def test_zero_lstm_weights_give_zero_spans(small_trees):
    p = make_params(small_trees)
    for k in p.weights:
        if k.startswith("lstm"):
            p.weights[k][:] = 0
    enc = encode_sentence(["She", "enjoys"], p)
    for s in all_spans(2):
        assert not span_repr(enc, s).any()


def test_distributions_normalize(small_trees):
    p = perturb(make_params(small_trees))
    enc = encode_sentence(["She", "enjoys", "playing"], p)
    for s in all_spans(3):
        assert abs(logsumexp(span_label_logprobs(span_repr(enc, s), p))) < 1e-9
    assert abs(logsumexp(pos_logprobs((1, 2), enc, p))) < 1e-9
    with pytest.raises(ModelError):
        pos_logprobs((0, 2), enc, p)
    with pytest.raises(ModelShapeError):
        span_label_logprobs(np.zeros(3), p)


def test_zero_head_is_uniform(small_trees):
    p = perturb(make_params(small_trees))
    for k in ("ff_W1", "ff_b1", "ff_W2", "ff_b2"):
        p.weights[k][:] = 0
    out = span_label_logprobs(np.ones(2 * p.config.hidden), p)
    np.testing.assert_allclose(out, np.log(1 / len(p.labels)))


def test_batched_forward_matches_single_sentence(small_trees):
    p = perturb(make_params(small_trees))
    sents = [("She", "enjoys", "playing", "tennis", "."), ("test",), ("the", "dog")]
    spans = [list(all_spans(len(s))) for s in sents]
    res = forward(p, Batch(sents, spans, [list(range(len(s))) for s in sents]))
    row = prow = 0
    for s, sp in zip(sents, spans):
        enc = encode_sentence(s, p)
        for span in sp:
            np.testing.assert_allclose(res.label_logp[row], span_label_logprobs(span_repr(enc, span), p),
                                       atol=1e-12)
            row += 1
        for k in range(len(s)):
            np.testing.assert_allclose(res.pos_logp[prow], pos_logprobs((k, k + 1), enc, p), atol=1e-12)
            prow += 1


def test_eval_mode_is_pure(small_trees):
    p = perturb(make_params(small_trees))
    a, b = encode_sentence(["She", "runs"], p), encode_sentence(["She", "runs"], p)
    np.testing.assert_array_equal(a.f, b.f)
    vecs, _ = embed_tokens(["She", "runs"], p)
    with pytest.raises(ModelError):
        encode(vecs, p, train=True)


def test_init_determinism_and_full_size_preset(small_trees):
    a = make_params(small_trees, seed=3)
    assert a.same_weights(make_params(small_trees, seed=3))
    assert not a.same_weights(make_params(small_trees, seed=4))
    assert not a.weights["ff_b1"].any()
    limit = np.sqrt(6 / sum(a.weights["ff_W1"].shape))
    assert np.abs(a.weights["ff_W1"]).max() <= limit
    cfg = ModelConfig.full_size()
    assert cfg.hidden == 250 and cfg.representation.learned_dim == 100
    words = WordVocab({"w": 1})
    big = init_params(cfg, words, Vocab([(), ("S",)]), Vocab(["NN"]), provider=None)
    assert big.weights["lstm0f_Wx"].shape == (100 + 1024, 1000)


def test_save_load_round_trip(tmp_path, small_trees):
    p = perturb(make_params(small_trees))
    path = tmp_path / "m.rsp"
    save_model(p, path)
    q = load_model(path)
    assert q.same_weights(p)
    assert q.labels == p.labels and q.tags == p.tags and q.words == p.words
    enc_p, enc_q = encode_sentence(["She", "runs"], p), encode_sentence(["She", "runs"], q)
    np.testing.assert_array_equal(enc_p.f, enc_q.f)
    assert load_model(path, expect=p.config).config.hidden == p.config.hidden


def test_load_errors(tmp_path, small_trees):
    p = make_params(small_trees)
    path = tmp_path / "m.rsp"
    save_model(p, path)
    data = path.read_bytes()
    assert data[:4] == MAGIC

    bad = tmp_path / "bad.rsp"
    bad.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ModelFormatError):
        load_model(bad)
    bad.write_bytes(data[:4] + (2).to_bytes(4, "little") + data[8:])
    with pytest.raises(ModelFormatError, match="version"):
        load_model(bad)
    bad.write_bytes(data[: len(data) // 2])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(bad)
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    bad.write_bytes(bytes(flipped))
    with pytest.raises(ModelFormatError):
        load_model(bad)

    other = ModelConfig(RepresentationConfig(3, 4, 2), hidden=6)
    with pytest.raises(ModelShapeError):
        load_model(path, expect=other)


def test_wrong_weight_shapes_rejected(small_trees):
    p = make_params(small_trees)
    w = dict(p.weights)
    w["ff_W2"] = np.zeros((1, 1))
    with pytest.raises(ModelShapeError):
        p.with_weights(w)
