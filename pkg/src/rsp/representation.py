"""Per-token input vectors.

Each token is the concatenation of a learned word embedding, subject to
stochastic UNK replacement while training, and a frozen contextual vector
built as a learned, softmax-weighted mix of provider layers.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

UNK = "<UNK>"
MODES = ("learned-only", "contextual-file", "hashed-context")
CONTEXT_MAGIC = "RSPCTX v1"


class RepresentationError(ValueError):
    pass


@dataclass
class RepresentationConfig:
    learned_dim: int = 16
    context_dim: int = 32
    context_layers: int = 3
    mode: str = "hashed-context"
    context_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise RepresentationError(f"unknown representation mode {self.mode!r}")
        if self.mode == "learned-only":
            self.context_dim = 0
        if self.learned_dim < 0 or self.context_dim < 0:
            raise RepresentationError("dimensions must be non-negative")
        if self.learned_dim + self.context_dim < 1:
            raise RepresentationError("token vectors need at least one dimension")
        if self.context_dim and self.context_layers < 1:
            raise RepresentationError("a contextual component needs at least one layer")

    @property
    def input_dim(self) -> int:
        return self.learned_dim + self.context_dim


class WordVocab:
    """Training-set word counts; id 0 is reserved for ``<UNK>``."""

    def __init__(self, counts: Dict[str, int]):
        if any(c < 1 for c in counts.values()):
            raise RepresentationError("listed words need a count of at least 1")
        self.words = [UNK] + sorted(counts, key=lambda w: (-counts[w], w))
        self.counts = np.array([0] + [counts[w] for w in self.words[1:]], dtype=np.int64)
        self.index = {w: k for k, w in enumerate(self.words)}

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]]) -> "WordVocab":
        counts = Counter(tok for sent in sentences for tok in sent)
        counts.pop(UNK, None)
        return cls(dict(counts))

    def __len__(self) -> int:
        return len(self.words)

    def __eq__(self, other) -> bool:
        return isinstance(other, WordVocab) and self.words == other.words and np.array_equal(
            self.counts, other.counts
        )

    def count(self, word: str) -> int:
        k = self.index.get(word)
        return 0 if k is None else int(self.counts[k])

    def to_json(self) -> Dict[str, int]:
        return {w: int(c) for w, c in zip(self.words[1:], self.counts[1:])}


def unk_replace_probability(n: int) -> float:
    """Chance that a word seen ``n`` times in training is swapped for UNK: (1 + n/10) / (1 + n)."""
    if n < 0:
        raise ValueError("occurrence count must be non-negative")
    return (1 + n / 10) / (1 + n)


def token_ids(tokens: Sequence[str], vocab: WordVocab, train: bool,
              rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Embedding rows for ``tokens``; in training mode each occurrence is resampled independently."""
    ids = np.array([vocab.index.get(t, 0) for t in tokens], dtype=np.int64)
    if train:
        if rng is None:
            raise RepresentationError("training-mode embedding needs a random generator")
        counts = vocab.counts[ids]
        p = (1 + counts / 10) / (1 + counts)
        ids = np.where(rng.random(len(ids)) < p, 0, ids)
    return ids


def softmax(w: np.ndarray) -> np.ndarray:
    e = np.exp(w - w.max())
    return e / e.sum()


def mix_layers(layers: np.ndarray, mix_weights: np.ndarray, scale: float) -> np.ndarray:
    """``scale * sum_l softmax(mix_weights)_l * layers[l]``; ``layers`` is ``(L, ..., dim)``."""
    layers = np.asarray(layers)
    if layers.shape[0] != len(mix_weights):
        raise RepresentationError(f"{layers.shape[0]} layers but {len(mix_weights)} mixing weights")
    s = softmax(np.asarray(mix_weights, dtype=float))
    return scale * np.tensordot(s, layers, axes=(0, 0))


def mix_layers_backward(layers: np.ndarray, mix_weights: np.ndarray, scale: float,
                        d_out: np.ndarray) -> Tuple[np.ndarray, float]:
    """Gradients of ``sum(d_out * mix_layers(...))`` w.r.t. the weights and the scale."""
    s = softmax(np.asarray(mix_weights, dtype=float))
    per_layer = np.array([np.sum(d_out * layer) for layer in layers])
    d_scale = float(per_layer @ s)
    ds = scale * per_layer
    return s * (ds - ds @ s), d_scale


# ---------------------------------------------------------------------------
# Contextual providers


class ContextualProvider:
    layers_count: int
    dim: int

    def layers(self, tokens: Sequence[str]) -> np.ndarray:
        """``(L, n, dim)`` vectors for the sentence."""
        raise NotImplementedError


class FileContextProvider(ContextualProvider):
    def __init__(self, vectors: Dict[str, np.ndarray], layers_count: int, dim: int):
        self.vectors = vectors
        self.layers_count = layers_count
        self.dim = dim

    def layers(self, tokens: Sequence[str]) -> np.ndarray:
        key = " ".join(tokens)
        try:
            return self.vectors[key]
        except KeyError:
            raise RepresentationError(f"no contextual vectors for sentence {key!r}") from None


@lru_cache(maxsize=65536)
def _type_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x1f{token}".encode("utf-8"), digest_size=8).digest()
    vec = np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(dim)
    vec.setflags(write=False)
    return vec


class HashedContextProvider(ContextualProvider):
    """Deterministic stand-in for a pretrained encoder.

    Layer 0 is a pseudorandom vector per word type; layer ``l`` averages
    layer 0 over a window of ``l`` neighbours on each side.
    """

    def __init__(self, dim: int, layers_count: int, seed: int = 0):
        if dim < 1 or layers_count < 1:
            raise RepresentationError("hashed context needs dim >= 1 and at least one layer")
        self.dim = dim
        self.layers_count = layers_count
        self.seed = seed

    def layers(self, tokens: Sequence[str]) -> np.ndarray:
        n = len(tokens)
        base = np.stack([_type_vector(t, self.dim, self.seed) for t in tokens])
        out = np.empty((self.layers_count, n, self.dim))
        out[0] = base
        csum = np.vstack([np.zeros((1, self.dim)), np.cumsum(base, axis=0)])
        for l in range(1, self.layers_count):
            lo = np.clip(np.arange(n) - l, 0, n)
            hi = np.clip(np.arange(n) + l + 1, 0, n)
            out[l] = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
        return out


def hashed_context_provider(dim: int, layers_count: int, seed: int = 0) -> HashedContextProvider:
    return HashedContextProvider(dim, layers_count, seed)


def load_contextual_file(path) -> FileContextProvider:
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    header = lines[0].split()
    if len(header) != 4 or " ".join(header[:2]) != CONTEXT_MAGIC:
        raise RepresentationError(f"{path}: missing '{CONTEXT_MAGIC} layers=<L> dim=<d>' header")
    try:
        fields = dict(h.split("=", 1) for h in header[2:])
        n_layers, dim = int(fields["layers"]), int(fields["dim"])
    except (KeyError, ValueError):
        raise RepresentationError(f"{path}: malformed header") from None
    vectors: Dict[str, np.ndarray] = {}
    k = 1
    while k < len(lines):
        if not lines[k].strip():
            k += 1
            continue
        if not lines[k].startswith("# "):
            raise RepresentationError(f"{path}:{k + 1}: expected '# <sentence>' block header")
        key = lines[k][2:]
        tokens = key.split(" ")
        if key in vectors:
            raise RepresentationError(f"{path}:{k + 1}: duplicate sentence {key!r}")
        n = len(tokens)
        body = lines[k + 1:k + 1 + n * n_layers]
        if len(body) != n * n_layers:
            raise RepresentationError(f"{path}:{k + 1}: block is truncated")
        arr = np.empty((n_layers, n, dim))
        for r, row in enumerate(body):
            tok, _, values = row.partition("\t")
            if tok != tokens[r % n]:
                raise RepresentationError(f"{path}:{k + 2 + r}: token {tok!r} does not match the sentence")
            try:
                vals = [float(v) for v in values.split()]
            except ValueError:
                raise RepresentationError(f"{path}:{k + 2 + r}: bad number") from None
            if len(vals) != dim:
                raise RepresentationError(f"{path}:{k + 2 + r}: expected {dim} values, got {len(vals)}")
            arr[r // n, r % n] = vals
        vectors[key] = arr
        k += 1 + n * n_layers
    return FileContextProvider(vectors, n_layers, dim)


def write_contextual_file(path, sentences: Dict[str, np.ndarray]) -> None:
    """Write ``{sentence key: (L, n, dim) array}`` in the block format read by :func:`load_contextual_file`."""
    shapes = {arr.shape[0] for arr in sentences.values()}, {arr.shape[2] for arr in sentences.values()}
    if len(shapes[0]) != 1 or len(shapes[1]) != 1:
        raise RepresentationError("all sentences need the same layer count and dimension")
    n_layers, dim = shapes[0].pop(), shapes[1].pop()
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{CONTEXT_MAGIC} layers={n_layers} dim={dim}\n")
        for key, arr in sentences.items():
            tokens = key.split(" ")
            if arr.shape[1] != len(tokens):
                raise RepresentationError(f"vector count does not match sentence {key!r}")
            f.write(f"\n# {key}\n")
            for layer in arr:
                for tok, vec in zip(tokens, layer):
                    f.write(tok + "\t" + " ".join(repr(float(v)) for v in vec) + "\n")


def make_provider(config: RepresentationConfig, context_file=None) -> Optional[ContextualProvider]:
    if config.mode == "learned-only" or config.context_dim == 0:
        return None
    if config.mode == "hashed-context":
        return HashedContextProvider(config.context_dim, config.context_layers, config.context_seed)
    if context_file is None:
        raise RepresentationError("contextual-file mode needs a context vector file")
    provider = load_contextual_file(context_file)
    if (provider.layers_count, provider.dim) != (config.context_layers, config.context_dim):
        raise RepresentationError(
            f"context file has layers={provider.layers_count} dim={provider.dim}, "
            f"model expects layers={config.context_layers} dim={config.context_dim}"
        )
    return provider
