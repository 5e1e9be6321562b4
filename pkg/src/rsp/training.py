"""Span-level likelihood training on full trees and partial annotations.

A training instance is a set of supervised spans.  A labeled span costs
``-log P(label)``, a constituent of unknown label costs ``-log(1 - P(empty))``
and a non-constituent ``-log P(empty)``; spans without supervision cost
nothing.  Full trees supervise every span, so their loss is exactly the
negative log-probability of the tree under the factorized span model.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .annotation import PartialAnnotation, derive_training_declarations
from .model import Batch, ModelConfig, ModelParams, backward, forward, init_params
from .representation import WordVocab
from .treebank import LabelSeq, Span, Tree, Vocab, collect_label_vocab, collect_pos_vocab, tree_to_spans

log = logging.getLogger(__name__)

LABEL = "label"
ANY = "any-constituent"
NON = "non-constituent"

MIX_POLICIES = ("plain", "equal", "source-k")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainInstance:
    tokens: Tuple[str, ...]
    targets: List[Tuple[Span, str, Optional[LabelSeq]]]
    pos: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        seen: Dict[Span, Tuple[str, Optional[LabelSeq]]] = {}
        for span, kind, label in self.targets:
            if kind not in (LABEL, ANY, NON):
                raise TrainingError(f"unknown target kind {kind!r}")
            if span in seen and seen[span] != (kind, label):
                raise TrainingError(f"conflicting targets for span {span}")
            seen[span] = (kind, label)
        self.targets = [(span, kind, label) for span, (kind, label) in sorted(seen.items())]

    @property
    def n(self) -> int:
        return len(self.tokens)


def instance_from_tree(tree: Tree) -> TrainInstance:
    parse = tree_to_spans(tree)
    targets = [(s, LABEL, seq) if seq else (s, NON, None) for s, seq in parse.labels.items()]
    return TrainInstance(tree.tokens, targets, tree.pos_tags)


def instance_from_annotation(ann: PartialAnnotation, max_implied: Optional[int] = None) -> TrainInstance:
    targets = []
    for decl in derive_training_declarations(ann, max_implied):
        if decl.is_constituent:
            targets.append((decl.span, LABEL, decl.label) if decl.label else (decl.span, ANY, None))
        else:
            targets.append((decl.span, NON, None))
    return TrainInstance(ann.sentence.tokens, targets)


# ---------------------------------------------------------------------------
# Loss


def _logsumexp(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.where(mask, x, -np.inf)
    m = x.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))[:, 0]


def _allowed_mask(instances: Sequence[TrainInstance], labels: Vocab) -> np.ndarray:
    rows = []
    L = len(labels)
    for inst in instances:
        for _, kind, label in inst.targets:
            row = np.zeros(L, dtype=bool)
            if kind == NON:
                row[0] = True
            elif kind == ANY:
                row[1:] = True
            else:
                if label not in labels:
                    raise TrainingError(f"label {'+'.join(label)} is not in the model's label vocabulary")
                row[labels.id(label)] = True
            rows.append(row)
    return np.array(rows, dtype=bool).reshape(-1, L)


def _make_batch(instances: Sequence[TrainInstance], params: ModelParams, pos_weight: float) -> Batch:
    pos_positions = []
    for inst in instances:
        if inst.pos is not None and pos_weight:
            pos_positions.append([k for k, tag in enumerate(inst.pos) if tag in params.tags])
        else:
            pos_positions.append([])
    return Batch([inst.tokens for inst in instances],
                 [[s for s, _, _ in inst.targets] for inst in instances], pos_positions)


def batch_loss(instances: Sequence[TrainInstance], params: ModelParams, train: bool = False,
               rng: Optional[np.random.Generator] = None, pos_weight: float = 1.0,
               need_grad: bool = True) -> Tuple[float, Optional[Dict[str, np.ndarray]]]:
    """Summed loss over ``instances`` and, optionally, its gradient."""
    instances = list(instances)
    if not instances or all(not inst.targets and not inst.pos for inst in instances):
        zero = {k: np.zeros_like(v) for k, v in params.weights.items()} if need_grad else None
        return 0.0, zero
    allowed = _allowed_mask(instances, params.labels)
    batch = _make_batch(instances, params, pos_weight)
    result = forward(params, batch, train=train, rng=rng)
    logp = result.label_logp
    picked = _logsumexp(logp, allowed)
    loss = -float(picked.sum())
    pos_gold = np.array([params.tags.id(inst.pos[k]) for inst, ks in zip(instances, batch.pos_positions)
                         for k in ks], dtype=np.int64)
    if len(pos_gold):
        loss -= pos_weight * float(result.pos_logp[np.arange(len(pos_gold)), pos_gold].sum())
    if not need_grad:
        return loss, None
    # d/dz of -logsumexp_A(logp) is p - p restricted to A and renormalized
    p = np.exp(logp)
    q = np.where(allowed, np.exp(logp - picked[:, None]), 0.0)
    d_label = p - q
    d_pos = None
    if len(pos_gold):
        d_pos = np.exp(result.pos_logp)
        d_pos[np.arange(len(pos_gold)), pos_gold] -= 1.0
        d_pos *= pos_weight
    return loss, backward(params, result, d_label, d_pos)


def span_loss(instance: TrainInstance, params: ModelParams, train: bool = False,
              rng: Optional[np.random.Generator] = None, pos_weight: float = 1.0) -> float:
    return batch_loss([instance], params, train, rng, pos_weight, need_grad=False)[0]


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    mix: str = "plain"
    mix_k: int = 50
    pos_weight: float = 1.0
    patience: int = 0
    max_len: int = 64
    max_implied: int = -1

    def __post_init__(self):
        if not self.lr >= 0:
            raise TrainingError("lr must be non-negative")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be at least 1")
        if self.mix_k < 0:
            raise TrainingError("mix_k must be non-negative")
        if self.mix not in MIX_POLICIES:
            raise TrainingError(f"mix must be one of {MIX_POLICIES}")
        if self.epochs < 0:
            raise TrainingError("epochs must be non-negative")

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        """Parse flat ``key=value`` lines (``#`` comments); ``overrides`` win over the file."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values: Dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or key not in types:
                raise TrainingError(f"line {lineno}: unknown or malformed setting {line!r}")
            values[key] = _convert(types[key], value, key)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in dataclasses.asdict(self).items())


def _convert(type_name, value: str, key: str):
    type_name = getattr(type_name, "__name__", type_name)
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
    except ValueError:
        raise TrainingError(f"{key}: cannot read {value!r} as {type_name}") from None
    return value


# ---------------------------------------------------------------------------
# Minibatches


def make_minibatches(source: Sequence, target: Sequence, policy: str, batch_size: int,
                     rng: np.random.Generator, k: int = 50) -> Iterator[List]:
    """One epoch of minibatches.

    ``plain``: shuffled partitions of ``source + target``.  ``equal``: each
    batch takes half its size from each pool; the target pool is reshuffled
    whenever it runs dry.  ``source-k``: ``k`` source items plus the whole
    target pool per batch.
    """
    source, target = list(source), list(target)
    if policy == "plain":
        pool = source + target
        order = rng.permutation(len(pool))
        for start in range(0, len(pool), batch_size):
            yield [pool[i] for i in order[start:start + batch_size]]
    elif policy == "equal":
        if not source or not target:
            raise TrainingError("equal mixing needs non-empty source and target pools")
        half = max(1, batch_size // 2)
        order = rng.permutation(len(source))
        t_order: List[int] = []
        for start in range(0, len(source), half):
            chunk = [source[i] for i in order[start:start + half]]
            picks = []
            while len(picks) < len(chunk):
                if not t_order:
                    t_order = list(rng.permutation(len(target)))
                picks.append(target[t_order.pop(0)])
            yield chunk + picks
    elif policy == "source-k":
        if not target:
            raise TrainingError("source-k mixing needs a non-empty target pool")
        if k == 0 or not source:
            yield list(target)
            return
        order = rng.permutation(len(source))
        for start in range(0, len(source), k):
            yield [source[i] for i in order[start:start + k]] + list(target)
    else:
        raise TrainingError(f"unknown mix policy {policy!r}")


# ---------------------------------------------------------------------------
# Optimization


class Adam:
    def __init__(self, weights: Dict[str, np.ndarray], config: TrainConfig):
        self.config = config
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.t = 0

    def step(self, weights: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        c = self.config
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = c.clip_norm / norm if c.clip_norm > 0 and norm > c.clip_norm else 1.0
        self.t += 1
        corr1 = 1 - c.beta1 ** self.t
        corr2 = 1 - c.beta2 ** self.t
        for k in sorted(weights):
            g = grads[k] * scale
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            if c.lr:
                weights[k] -= c.lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + c.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_accuracy: Optional[float] = None


@dataclass
class TrainResult:
    params: ModelParams
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def build_vocabularies(trees: Sequence[Tree], annotations: Sequence[PartialAnnotation] = ()):
    words = WordVocab.build([t.tokens for t in trees] + [a.sentence.tokens for a in annotations])
    labels = collect_label_vocab(trees)
    extra = sorted({d.label for a in annotations for d in a.declarations if d.label and d.label not in labels})
    if extra:
        labels = Vocab(list(labels) + extra)
    if len(labels) < 2:
        raise TrainingError("training trees contain no constituents to label")
    return words, labels, collect_pos_vocab(trees)


def span_accuracy(params: ModelParams, instances: Sequence[TrainInstance], batch_size: int = 64) -> float:
    """Percentage of supervised spans whose most probable label is the target (AnyConstituent: any non-empty)."""
    right = total = 0
    for start in range(0, len(instances), batch_size):
        chunk = [i for i in instances[start:start + batch_size] if i.targets]
        if not chunk:
            continue
        allowed = _allowed_mask(chunk, params.labels)
        result = forward(params, _make_batch(chunk, params, 0.0))
        best = result.label_logp.argmax(axis=1)
        right += int(allowed[np.arange(len(best)), best].sum())
        total += len(best)
    return 100.0 * right / total if total else 100.0


def dataset_loss(params: ModelParams, instances: Sequence[TrainInstance], pos_weight: float,
                 batch_size: int = 64) -> float:
    return sum(batch_loss(instances[s:s + batch_size], params, pos_weight=pos_weight, need_grad=False)[0]
               for s in range(0, len(instances), batch_size))


def _as_instances(data, max_len: int, max_implied: Optional[int]) -> List[TrainInstance]:
    out = []
    for item in data:
        if isinstance(item, Tree):
            inst = instance_from_tree(item)
        elif isinstance(item, PartialAnnotation):
            inst = instance_from_annotation(item, max_implied)
        else:
            inst = item
        if inst.n <= max_len:
            out.append(inst)
    return out


def optimize(params: ModelParams, source: Sequence[TrainInstance], target: Sequence[TrainInstance],
             config: TrainConfig, dev: Sequence[TrainInstance] = ()) -> TrainResult:
    """Run Adam over minibatches from ``make_minibatches``; returns final or best-dev weights."""
    rng = np.random.default_rng(config.seed)
    weights = {k: v.copy() for k, v in params.weights.items()}
    current = params.with_weights(weights)
    opt = Adam(weights, config)
    history: List[EpochRecord] = []
    best_acc, best_weights, best_epoch, stale = -1.0, None, 0, 0
    monitored = list(source) + list(target)
    for epoch in range(1, config.epochs + 1):
        for b, batch in enumerate(make_minibatches(source, target, config.mix, config.batch_size, rng,
                                                   config.mix_k)):
            loss, grads = batch_loss(batch, current, train=True, rng=rng, pos_weight=config.pos_weight)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {b}")
            opt.step(weights, grads)
        record = EpochRecord(epoch, dataset_loss(current, monitored, config.pos_weight))
        if not np.isfinite(record.train_loss):
            raise TrainingError(f"loss diverged at epoch {epoch}")
        if dev:
            record.dev_accuracy = span_accuracy(current, dev)
            if record.dev_accuracy > best_acc:
                best_acc, best_epoch, stale = record.dev_accuracy, epoch, 0
                best_weights = {k: v.copy() for k, v in weights.items()}
            else:
                stale += 1
        history.append(record)
        log.info("epoch %d loss %.4f dev %s", epoch, record.train_loss, record.dev_accuracy)
        if dev and config.patience and stale >= config.patience:
            break
    if best_weights is not None:
        return TrainResult(params.with_weights(best_weights), history, best_epoch)
    return TrainResult(current, history, len(history))


def train(data: Sequence[Union[Tree, PartialAnnotation, TrainInstance]], config: TrainConfig,
          model_config: Optional[ModelConfig] = None, dev: Sequence[Tree] = (),
          provider=None, params: Optional[ModelParams] = None) -> TrainResult:
    """Train a fresh model (vocabularies from ``data``) unless ``params`` is given."""
    if not data:
        raise TrainingError("no training data")
    max_implied = None if config.max_implied < 0 else config.max_implied
    if params is None:
        trees = [d for d in data if isinstance(d, Tree)]
        if not trees:
            raise TrainingError("a fresh model needs at least one full tree for its vocabularies")
        anns = [d for d in data if isinstance(d, PartialAnnotation)]
        words, labels, tags = build_vocabularies(trees, anns)
        params = init_params(model_config or ModelConfig(), words, labels, tags, config.seed, provider)
    instances = _as_instances(data, config.max_len, max_implied)
    return optimize(params, instances, [], config, _as_instances(dev, config.max_len, None))


def finetune(params: ModelParams, source: Sequence[Union[Tree, TrainInstance]],
             target: Sequence[Union[PartialAnnotation, TrainInstance]], config: TrainConfig) -> TrainResult:
    """Continue training ``params`` on minibatches mixing source trees with target annotations."""
    if not target:
        raise TrainingError("fine-tuning needs target annotations")
    max_implied = None if config.max_implied < 0 else config.max_implied
    src = _as_instances(source, config.max_len, max_implied)
    tgt = _as_instances(target, config.max_len, max_implied)
    return optimize(params, src, tgt, config)
