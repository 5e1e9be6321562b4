"""Span classifier: BiLSTM encoder, span differences, feedforward label head and POS head.

Everything is plain numpy with hand-written backpropagation.  Sentences are
processed in padded batches of shape ``(T, B, ...)``; the backward direction
runs over per-sentence reversed copies so padding always trails.

Fencepost convention: ``f[0]`` and ``b[n+1]`` are zero vectors, ``f[t]`` is
the forward state after token ``t`` and ``b[t]`` the backward state at token
``t`` (tokens numbered from 1).  Span ``(i, j)`` covers tokens ``i+1..j``
and is encoded as ``[f[j] - f[i], b[i+1] - b[j+1]]``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .representation import (
    ContextualProvider,
    RepresentationConfig,
    WordVocab,
    make_provider,
    mix_layers,
    mix_layers_backward,
    token_ids,
)
from .treebank import EMPTY, Span, Vocab

MAGIC = b"RSP1"
FORMAT_VERSION = 1


class ModelError(ValueError):
    pass


class ModelFormatError(ModelError):
    pass


class ModelShapeError(ModelError):
    pass


@dataclass
class ModelConfig:
    representation: RepresentationConfig = field(default_factory=RepresentationConfig)
    hidden: int = 32
    dropout: float = 0.4
    dtype: str = "float64"

    def __post_init__(self):
        if isinstance(self.representation, dict):
            self.representation = RepresentationConfig(**self.representation)
        if self.hidden < 1:
            raise ModelError("hidden size must be positive")
        if not 0 <= self.dropout < 1:
            raise ModelError("dropout must lie in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ModelError(f"unsupported float width {self.dtype!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def full_size(cls) -> "ModelConfig":
        """Full-scale dimensions: hidden 250, learned embeddings 100, contextual vectors 1024 x 3 layers."""
        return cls(RepresentationConfig(learned_dim=100, context_dim=1024, context_layers=3), hidden=250)


LSTM_PARTS = [(layer, d) for layer in (0, 1) for d in ("f", "b")]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class ModelParams:
    """Weights plus the vocabularies and configuration needed to use them."""

    def __init__(self, config: ModelConfig, words: WordVocab, labels: Vocab, tags: Vocab,
                 weights: Dict[str, np.ndarray], provider: Optional[ContextualProvider] = None):
        if not len(labels) or labels[0] != EMPTY:
            raise ModelError("label vocabulary must hold the empty sequence at index 0")
        self.config = config
        self.words = words
        self.labels = labels
        self.tags = tags
        self.weights = weights
        self.provider = provider
        if provider is None and config.representation.mode == "hashed-context":
            self.provider = make_provider(config.representation)
        self.check_shapes()

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        rc, H = self.config.representation, self.config.hidden
        shapes: Dict[str, Tuple[int, ...]] = {}
        if rc.learned_dim:
            shapes["embed"] = (len(self.words), rc.learned_dim)
        if rc.context_dim:
            shapes["mix_w"] = (rc.context_layers,)
            shapes["mix_scale"] = (1,)
        for layer, d in LSTM_PARTS:
            din = rc.input_dim if layer == 0 else 2 * H
            shapes[f"lstm{layer}{d}_Wx"] = (din, 4 * H)
            shapes[f"lstm{layer}{d}_Wh"] = (H, 4 * H)
            shapes[f"lstm{layer}{d}_b"] = (4 * H,)
        shapes["ff_W1"] = (2 * H, H)
        shapes["ff_b1"] = (H,)
        shapes["ff_W2"] = (H, len(self.labels))
        shapes["ff_b2"] = (len(self.labels),)
        shapes["pos_W"] = (H, len(self.tags))
        shapes["pos_b"] = (len(self.tags),)
        return shapes

    def check_shapes(self) -> None:
        expected = self.expected_shapes()
        if set(expected) != set(self.weights):
            raise ModelShapeError(
                f"weight names differ: missing {sorted(set(expected) - set(self.weights))}, "
                f"unexpected {sorted(set(self.weights) - set(expected))}"
            )
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise ModelShapeError(f"{name}: expected shape {shape}, found {self.weights[name].shape}")

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.words, self.labels, self.tags,
                           {k: v.copy() for k, v in self.weights.items()}, self.provider)

    def with_weights(self, weights: Dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams(self.config, self.words, self.labels, self.tags, weights, self.provider)

    def same_weights(self, other: "ModelParams") -> bool:
        return self.weights.keys() == other.weights.keys() and all(
            np.array_equal(v, other.weights[k]) for k, v in self.weights.items()
        )


def init_params(config: ModelConfig, words: WordVocab, labels: Vocab, tags: Vocab, seed: int = 0,
                provider: Optional[ContextualProvider] = None) -> ModelParams:
    """Glorot-uniform matrices, zero biases, uniform layer mix with unit scale."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    shell = ModelParams.__new__(ModelParams)
    shell.config, shell.words, shell.labels, shell.tags = config, words, labels, tags
    weights = {}
    for name, shape in shell.expected_shapes().items():
        if name == "mix_w" or name.endswith("_b") or name.startswith("ff_b") or name == "pos_b":
            weights[name] = np.zeros(shape, dtype=dtype)
        elif name == "mix_scale":
            weights[name] = np.ones(shape, dtype=dtype)
        else:
            weights[name] = _glorot(rng, shape[0], shape[1], shape).astype(dtype)
    return ModelParams(config, words, labels, tags, weights, provider)


# ---------------------------------------------------------------------------
# LSTM


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(X: np.ndarray, Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray):
    """Run a single-direction LSTM over ``X`` of shape ``(T, B, D)``; gate order i, f, g, o."""
    T, B, _ = X.shape
    H = Wh.shape[0]
    pre = X @ Wx + b
    gates = np.empty((T, B, 4 * H), dtype=X.dtype)
    cs = np.empty((T + 1, B, H), dtype=X.dtype)
    hs = np.empty((T + 1, B, H), dtype=X.dtype)
    cs[0] = 0.0
    hs[0] = 0.0
    for t in range(T):
        a = pre[t] + hs[t] @ Wh
        g = gates[t]
        g[:, :2 * H] = _sigmoid(a[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        g[:, 3 * H:] = _sigmoid(a[:, 3 * H:])
        cs[t + 1] = g[:, H:2 * H] * cs[t] + g[:, :H] * g[:, 2 * H:3 * H]
        hs[t + 1] = g[:, 3 * H:] * np.tanh(cs[t + 1])
    return hs[1:], (X, Wx, Wh, gates, cs, hs)


def lstm_backward(dH: np.ndarray, cache):
    X, Wx, Wh, gates, cs, hs = cache
    T, B, _ = X.shape
    H = Wh.shape[0]
    dA = np.empty_like(gates)
    dh_next = np.zeros((B, H), dtype=X.dtype)
    dc_next = np.zeros((B, H), dtype=X.dtype)
    dWh = np.zeros_like(Wh)
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dh = dH[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da = dA[t]
        da[:, :H] = dc * gg * i * (1.0 - i)
        da[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
        da[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dWh += hs[t].T @ da
        dh_next = da @ Wh.T
    dWx = np.tensordot(X, dA, axes=([0, 1], [0, 1]))
    db = dA.sum(axis=(0, 1))
    dX = dA @ Wx.T
    return dX, dWx, dWh, db


# ---------------------------------------------------------------------------
# Batched forward / backward


@dataclass
class EncodedSentence:
    """Top-layer states with boundary sentinels: ``f`` is ``(n+1, H)``, ``b`` is ``(n+2, H)`` (row 0 unused)."""

    f: np.ndarray
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.f.shape[0] - 1


@dataclass
class Batch:
    tokens: List[Tuple[str, ...]]
    spans: List[List[Span]]
    pos_positions: List[List[int]] = field(default_factory=list)


@dataclass
class ForwardResult:
    label_logp: np.ndarray  # (S, |labels|), spans in batch order
    pos_logp: np.ndarray  # (P, |tags|)
    span_index: List[Tuple[int, int, int]]  # (sentence, i, j)
    pos_index: List[Tuple[int, int]]  # (sentence, k)
    cache: dict
    encoded: List[EncodedSentence] = field(default_factory=list)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _dropout_mask(rng: Optional[np.random.Generator], shape, rate: float, train: bool, dtype) -> np.ndarray:
    if not train or rate == 0.0:
        return np.ones(shape, dtype=dtype)
    if rng is None:
        raise ModelError("training mode needs a random generator")
    return ((rng.random(shape) >= rate) / (1.0 - rate)).astype(dtype)


def embed_tokens(tokens: Sequence[str], params: ModelParams, train: bool = False,
                 rng: Optional[np.random.Generator] = None):
    """``n x (learned_dim + context_dim)`` input vectors for one sentence, plus what backward needs."""
    rc = params.config.representation
    w = params.weights
    parts = []
    ids = ctx = None
    if rc.learned_dim:
        ids = token_ids(tokens, params.words, train, rng)
        parts.append(w["embed"][ids])
    if rc.context_dim:
        if params.provider is None:
            raise ModelError("this model needs a contextual provider")
        ctx = params.provider.layers(tokens)
        if ctx.shape != (rc.context_layers, len(tokens), rc.context_dim):
            raise ModelShapeError(f"provider returned shape {ctx.shape}")
        parts.append(mix_layers(ctx, w["mix_w"], float(w["mix_scale"][0])))
    return np.concatenate(parts, axis=1).astype(params.config.dtype, copy=False), (ids, ctx)


def forward(params: ModelParams, batch: Batch, train: bool = False,
            rng: Optional[np.random.Generator] = None, keep_encoded: bool = False) -> ForwardResult:
    cfg = params.config
    w = params.weights
    H = cfg.hidden
    dtype = np.dtype(cfg.dtype)
    B = len(batch.tokens)
    lengths = np.array([len(t) for t in batch.tokens])
    if B == 0 or lengths.min() < 1:
        raise ModelError("batches need at least one non-empty sentence")
    T = int(lengths.max())
    D = cfg.representation.input_dim

    X = np.zeros((T, B, D), dtype=dtype)
    emb_info = []
    for s, toks in enumerate(batch.tokens):
        vecs, info = embed_tokens(toks, params, train, rng)
        X[: len(toks), s] = vecs
        emb_info.append(info)

    valid = (np.arange(T)[:, None] < lengths[None, :])  # (T, B)
    rev = np.where(valid, lengths[None, :] - 1 - np.arange(T)[:, None], np.arange(T)[:, None])
    cols = np.arange(B)[None, :]

    masks = [_dropout_mask(rng, (B, D), cfg.dropout, train, dtype)]
    inp = X * masks[0][None]
    layer_caches = []
    top = None
    for layer in (0, 1):
        fw, fcache = lstm_forward(inp, w[f"lstm{layer}f_Wx"], w[f"lstm{layer}f_Wh"], w[f"lstm{layer}f_b"])
        bw_r, bcache = lstm_forward(inp[rev, cols], w[f"lstm{layer}b_Wx"], w[f"lstm{layer}b_Wh"],
                                    w[f"lstm{layer}b_b"])
        bw = bw_r[rev, cols]
        layer_caches.append((fcache, bcache))
        out = np.concatenate([fw, bw], axis=2)
        if layer == 0:
            masks.append(_dropout_mask(rng, (B, 2 * H), cfg.dropout, train, dtype))
            inp = out * masks[1][None]
        else:
            top = (fw, bw)

    fw, bw = top
    F = np.zeros((B, T + 1, H), dtype=dtype)
    F[:, 1:] = np.swapaxes(fw, 0, 1)
    Bk = np.zeros((B, T + 2, H), dtype=dtype)
    Bk[:, 1:T + 1] = np.swapaxes(bw * valid[:, :, None], 0, 1)

    span_index = [(s, i, j) for s, spans in enumerate(batch.spans) for i, j in spans]
    pos_index = [(s, k) for s, ks in enumerate(batch.pos_positions) for k in ks]
    for s, i, j in span_index:
        if not 0 <= i < j <= lengths[s]:
            raise ModelError(f"span {(i, j)} out of range for a {lengths[s]}-token sentence")
    for s, k in pos_index:
        if not 0 <= k < lengths[s]:
            raise ModelError(f"position {k} out of range for a {lengths[s]}-token sentence")
    # POS predictions reuse the hidden layer of width-1 spans
    all_idx = span_index + [(s, k, k + 1) for s, k in pos_index]
    sb = np.array([x[0] for x in all_idx], dtype=np.int64)
    si = np.array([x[1] for x in all_idx], dtype=np.int64)
    sj = np.array([x[2] for x in all_idx], dtype=np.int64)
    R = np.concatenate([F[sb, sj] - F[sb, si], Bk[sb, si + 1] - Bk[sb, sj + 1]], axis=1)
    Z1 = R @ w["ff_W1"] + w["ff_b1"]
    A = np.maximum(Z1, 0.0)
    S = len(span_index)
    label_logp = _log_softmax(A[:S] @ w["ff_W2"] + w["ff_b2"])
    pos_logp = _log_softmax(A[S:] @ w["pos_W"] + w["pos_b"])

    encoded = []
    if keep_encoded:
        for s, n in enumerate(lengths):
            encoded.append(EncodedSentence(F[s, : n + 1].copy(), Bk[s, : n + 2].copy()))
    cache = dict(X=X, emb_info=emb_info, masks=masks, rev=rev, cols=cols, valid=valid,
                 layer_caches=layer_caches, sb=sb, si=si, sj=sj, R=R, Z1=Z1, A=A, S=S,
                 lengths=lengths, tokens=batch.tokens)
    return ForwardResult(label_logp, pos_logp, span_index, pos_index, cache, encoded)


def backward(params: ModelParams, result: ForwardResult, d_label_logits: np.ndarray,
             d_pos_logits: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Gradients of a loss given its derivatives w.r.t. the label and POS logits."""
    w = params.weights
    c = result.cache
    H = params.config.hidden
    A, Z1, R, S = c["A"], c["Z1"], c["R"], c["S"]
    grads = {k: np.zeros_like(v) for k, v in w.items()}

    grads["ff_W2"] = A[:S].T @ d_label_logits
    grads["ff_b2"] = d_label_logits.sum(axis=0)
    dA = np.zeros_like(A)
    dA[:S] = d_label_logits @ w["ff_W2"].T
    if d_pos_logits is not None and len(d_pos_logits):
        grads["pos_W"] = A[S:].T @ d_pos_logits
        grads["pos_b"] = d_pos_logits.sum(axis=0)
        dA[S:] = d_pos_logits @ w["pos_W"].T
    dZ1 = dA * (Z1 > 0)
    grads["ff_W1"] = R.T @ dZ1
    grads["ff_b1"] = dZ1.sum(axis=0)
    dR = dZ1 @ w["ff_W1"].T

    sb, si, sj = c["sb"], c["si"], c["sj"]
    X = c["X"]
    T, B, _ = X.shape
    dF = np.zeros((B, T + 1, H), dtype=X.dtype)
    dBk = np.zeros((B, T + 2, H), dtype=X.dtype)
    np.add.at(dF, (sb, sj), dR[:, :H])
    np.add.at(dF, (sb, si), -dR[:, :H])
    np.add.at(dBk, (sb, si + 1), dR[:, H:])
    np.add.at(dBk, (sb, sj + 1), -dR[:, H:])
    valid = c["valid"][:, :, None]
    d_fw = np.swapaxes(dF[:, 1:], 0, 1) * valid
    d_bw = np.swapaxes(dBk[:, 1:T + 1], 0, 1) * valid

    rev, cols, masks = c["rev"], c["cols"], c["masks"]
    d_inp = None
    for layer in (1, 0):
        fcache, bcache = c["layer_caches"][layer]
        dx_f, gWx, gWh, gb = lstm_backward(d_fw, fcache)
        grads[f"lstm{layer}f_Wx"], grads[f"lstm{layer}f_Wh"], grads[f"lstm{layer}f_b"] = gWx, gWh, gb
        dx_b_r, gWx, gWh, gb = lstm_backward(d_bw[rev, cols], bcache)
        grads[f"lstm{layer}b_Wx"], grads[f"lstm{layer}b_Wh"], grads[f"lstm{layer}b_b"] = gWx, gWh, gb
        d_inp = dx_f + dx_b_r[rev, cols]
        if layer == 1:
            d_out = d_inp * masks[1][None] * valid
            d_fw, d_bw = d_out[:, :, :H], d_out[:, :, H:]
    dX = d_inp * masks[0][None]

    rc = params.config.representation
    for s, (ids, ctx) in enumerate(c["emb_info"]):
        n = c["lengths"][s]
        rows = dX[:n, s]
        if rc.learned_dim:
            np.add.at(grads["embed"], ids, rows[:, : rc.learned_dim])
        if rc.context_dim:
            dw, dscale = mix_layers_backward(ctx, w["mix_w"], float(w["mix_scale"][0]),
                                             rows[:, rc.learned_dim:])
            grads["mix_w"] += dw
            grads["mix_scale"][0] += dscale
    return grads


# ---------------------------------------------------------------------------
# Single-sentence views


def encode(token_vectors: np.ndarray, params: ModelParams, train: bool = False,
           rng: Optional[np.random.Generator] = None) -> EncodedSentence:
    """Encode precomputed ``n x d`` token vectors with the two-layer BiLSTM."""
    cfg = params.config
    w = params.weights
    X = np.asarray(token_vectors, dtype=cfg.dtype)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != cfg.representation.input_dim:
        raise ModelShapeError(f"expected n x {cfg.representation.input_dim} token vectors, got {X.shape}")
    n = X.shape[0]
    inp = (X * _dropout_mask(rng, (X.shape[1],), cfg.dropout, train, X.dtype))[:, None, :]
    for layer in (0, 1):
        fw, _ = lstm_forward(inp, w[f"lstm{layer}f_Wx"], w[f"lstm{layer}f_Wh"], w[f"lstm{layer}f_b"])
        bw, _ = lstm_forward(inp[::-1], w[f"lstm{layer}b_Wx"], w[f"lstm{layer}b_Wh"], w[f"lstm{layer}b_b"])
        bw = bw[::-1]
        out = np.concatenate([fw, bw], axis=2)
        if layer == 0:
            inp = out * _dropout_mask(rng, (out.shape[2],), cfg.dropout, train, X.dtype)
    H = cfg.hidden
    f = np.zeros((n + 1, H), dtype=X.dtype)
    b = np.zeros((n + 2, H), dtype=X.dtype)
    f[1:] = fw[:, 0]
    b[1:n + 1] = bw[:, 0]
    return EncodedSentence(f, b)


def span_repr(enc: EncodedSentence, span: Span) -> np.ndarray:
    i, j = span
    if not 0 <= i < j <= enc.n:
        raise ModelError(f"span {span} out of range for a {enc.n}-token sentence")
    return np.concatenate([enc.f[j] - enc.f[i], enc.b[i + 1] - enc.b[j + 1]])


def _hidden(rep: np.ndarray, params: ModelParams) -> np.ndarray:
    w = params.weights
    if rep.shape != (2 * params.config.hidden,):
        raise ModelShapeError(f"span representation must have size {2 * params.config.hidden}")
    return np.maximum(rep @ w["ff_W1"] + w["ff_b1"], 0.0)


def span_label_logprobs(rep: np.ndarray, params: ModelParams) -> np.ndarray:
    w = params.weights
    return _log_softmax(_hidden(np.asarray(rep), params) @ w["ff_W2"] + w["ff_b2"])


def pos_logprobs(span: Span, enc: EncodedSentence, params: ModelParams) -> np.ndarray:
    if span[1] - span[0] != 1:
        raise ModelError(f"POS tags are predicted for width-1 spans only, got {span}")
    w = params.weights
    return _log_softmax(_hidden(span_repr(enc, span), params) @ w["pos_W"] + w["pos_b"])


def encode_sentence(tokens: Sequence[str], params: ModelParams) -> EncodedSentence:
    vecs, _ = embed_tokens(tokens, params, train=False)
    return encode(vecs, params)


# ---------------------------------------------------------------------------
# Serialization


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def save_model(params: ModelParams, path) -> None:
    config = params.config.to_dict()
    config["format_version"] = FORMAT_VERSION
    vocab = {
        "words": params.words.to_json(),
        "labels": [list(seq) for seq in params.labels],
        "tags": list(params.tags),
    }
    names = sorted(params.weights)
    dtype = np.dtype(params.config.dtype).newbyteorder("<")
    header = json.dumps([{"name": k, "shape": list(params.weights[k].shape)} for k in names]).encode()
    raw = io.BytesIO()
    raw.write(struct.pack("<I", len(header)))
    raw.write(header)
    for k in names:
        raw.write(np.ascontiguousarray(params.weights[k], dtype=dtype).tobytes())
    body = (MAGIC + struct.pack("<I", FORMAT_VERSION)
            + _section(b"CONF", json.dumps(config, sort_keys=True).encode())
            + _section(b"VOCB", json.dumps(vocab, sort_keys=True).encode())
            + _section(b"WGHT", raw.getvalue()))
    with open(path, "wb") as f:
        f.write(body + _section(b"CSUM", hashlib.sha256(body).digest()))


def load_model(path, expect: Optional[ModelConfig] = None, provider: Optional[ContextualProvider] = None,
               context_file=None) -> ModelParams:
    """Read a model file; ``expect`` demands matching dimensions."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic / unsupported version)")
    if len(data) < 8:
        raise ModelFormatError(f"{path}: truncated file")
    (version,) = struct.unpack("<I", data[4:8])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    sections: Dict[bytes, bytes] = {}
    pos = 8
    body_end = None
    while pos < len(data):
        if pos + 12 > len(data):
            raise ModelFormatError(f"{path}: truncated file")
        tag = data[pos:pos + 4]
        (size,) = struct.unpack("<Q", data[pos + 4:pos + 12])
        if pos + 12 + size > len(data):
            raise ModelFormatError(f"{path}: truncated file")
        if tag == b"CSUM":
            body_end = pos
        sections[tag] = data[pos + 12:pos + 12 + size]
        pos += 12 + size
    if body_end is None or set(sections) != {b"CONF", b"VOCB", b"WGHT", b"CSUM"}:
        raise ModelFormatError(f"{path}: missing sections (truncated file?)")
    if hashlib.sha256(data[:body_end]).digest() != sections[b"CSUM"]:
        raise ModelFormatError(f"{path}: checksum mismatch")

    conf = json.loads(sections[b"CONF"])
    conf.pop("format_version", None)
    config = ModelConfig(**conf)
    vocab = json.loads(sections[b"VOCB"])
    words = WordVocab(vocab["words"])
    labels = Vocab([tuple(seq) for seq in vocab["labels"]])
    tags = Vocab(vocab["tags"])
    raw = sections[b"WGHT"]
    (hlen,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4:4 + hlen])
    dtype = np.dtype(config.dtype).newbyteorder("<")
    offset = 4 + hlen
    weights = {}
    for entry in header:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        chunk = raw[offset:offset + count * dtype.itemsize]
        if len(chunk) != count * dtype.itemsize:
            raise ModelFormatError(f"{path}: weight section is truncated")
        weights[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).astype(config.dtype)
        offset += count * dtype.itemsize

    if expect is not None:
        mine, theirs = config.to_dict(), expect.to_dict()
        for key in ("hidden",):
            if mine[key] != theirs[key]:
                raise ModelShapeError(f"model has {key}={mine[key]}, expected {theirs[key]}")
        for key in ("learned_dim", "context_dim", "context_layers"):
            a, b = mine["representation"][key], theirs["representation"][key]
            if a != b:
                raise ModelShapeError(f"model has {key}={a}, expected {b}")
    if provider is None and config.representation.mode == "contextual-file" and context_file is not None:
        provider = make_provider(config.representation, context_file)
    return ModelParams(config, words, labels, tags, weights, provider)
