"""End-to-end domain adaptation run on synthetic source/target corpora.

Train on source-grammar trees, then fine-tune on minibatches of source trees
plus partially annotated target sentences, scoring both domains before and
after.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .annotation import PartialAnnotation, parse_markup
from .decoder import decode_many
from .evaluation import PartialMetrics, partial_metrics, prf, two_proportion_test
from .model import ModelConfig, ModelParams
from .representation import RepresentationConfig
from .synthcorpus import AnnotationPolicy, builtin_grammars, make_partial_annotations, sample_corpus
from .training import TrainConfig, finetune, train
from .treebank import Tree

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    source_train: int = 600
    source_dev: int = 200
    target_train: int = 63
    target_dev: int = 62
    max_len: int = 20
    constituent_mean: float = 2.8
    non_constituent_mean: float = 0.3
    context_mode: str = "hashed-context"
    hidden: int = 32
    learned_dim: int = 16
    context_dim: int = 32
    context_layers: int = 3
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        lr=2e-3, epochs=12, batch_size=16, patience=3))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(
        lr=1e-3, epochs=6, mix="source-k", mix_k=50))
    method: str = "dp"


PRESETS: Dict[str, ExperimentConfig] = {
    "geo-analog": ExperimentConfig(),
    "tiny": ExperimentConfig(
        source_train=120, source_dev=40, target_train=30, target_dev=30, max_len=14,
        train=TrainConfig(lr=3e-3, epochs=6, batch_size=16),
        finetune=TrainConfig(lr=1e-3, epochs=2, mix="source-k", mix_k=20),
    ),
}


@dataclass
class Stage:
    target: PartialMetrics
    source_f1: float
    target_f1: float


@dataclass
class ExperimentReport:
    before: Stage
    after: Stage
    p_value: float
    seconds: float
    target_dev_declarations: int
    target_train_declarations: int
    params: Optional[ModelParams] = field(default=None, repr=False)

    def rows(self) -> List[List[str]]:
        def row(name: str, st: Stage) -> List[str]:
            return [name, f"{st.target.correct_constituents_pct:.1f}", f"{st.target.error_free_pct:.1f}",
                    f"{st.source_f1:.2f}", f"{st.target_f1:.2f}"]
        return [row("source", self.before), row("source+target-partial", self.after)]

    def text(self) -> str:
        header = ["Training data", "correct constituents %", "error-free %", "source dev F1", "target dev F1"]
        rows = [header] + self.rows()
        widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
        lines = ["  ".join(cell.rjust(w) if c else cell.ljust(w) for c, (cell, w) in enumerate(zip(r, widths)))
                 for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append("")
        lines.append(f"target dev declarations: {self.target_dev_declarations}; "
                     f"target train declarations: {self.target_train_declarations}")
        lines.append(f"one-sided two-proportion p-value (correct constituents): {self.p_value:.3g}")
        return "\n".join(lines) + "\n"

    def tsv(self) -> str:
        header = "stage\tcorrect_constituents_pct\terror_free_pct\tsource_dev_f1\ttarget_dev_f1\n"
        return header + "".join("\t".join(r) + "\n" for r in self.rows())


def _stage(params: ModelParams, source_dev: List[Tree], target_dev: List[Tree],
           target_anns: List[PartialAnnotation], method: str) -> Stage:
    src_pred = decode_many([t.tokens for t in source_dev], params, method)
    tgt_pred = decode_many([t.tokens for t in target_dev], params, method)
    return Stage(partial_metrics(tgt_pred, target_anns), prf(source_dev, src_pred).f1,
                 prf(target_dev, tgt_pred).f1)


def run_experiment(config: ExperimentConfig, seed: int = 7) -> ExperimentReport:
    start = time.perf_counter()
    source_g, target_g = builtin_grammars()
    src_train = sample_corpus(source_g, config.source_train, config.max_len, seed)
    src_dev = sample_corpus(source_g, config.source_dev, config.max_len, seed + 1)
    tgt_train = sample_corpus(target_g, config.target_train, config.max_len, seed + 2)
    tgt_dev = sample_corpus(target_g, config.target_dev, config.max_len, seed + 3)
    policy = dict(constituent_mean=config.constituent_mean, non_constituent_mean=config.non_constituent_mean)
    train_anns = [parse_markup(line) for line in
                  make_partial_annotations(tgt_train, AnnotationPolicy(**policy, seed=seed + 4))]
    dev_anns = [parse_markup(line) for line in
                make_partial_annotations(tgt_dev, AnnotationPolicy(**policy, seed=seed + 5))]

    model_config = ModelConfig(
        RepresentationConfig(config.learned_dim, config.context_dim, config.context_layers,
                             config.context_mode, context_seed=seed),
        hidden=config.hidden,
    )
    train_cfg = dataclasses.replace(config.train, seed=seed)
    log.info("training on %d source trees", len(src_train))
    base = train(src_train, train_cfg, model_config, dev=src_dev).params
    before = _stage(base, src_dev, tgt_dev, dev_anns, config.method)
    log.info("fine-tuning on %d target annotations", len(train_anns))
    ft_cfg = dataclasses.replace(config.finetune, seed=seed + 1)
    tuned = finetune(base, src_train, train_anns, ft_cfg).params
    after = _stage(tuned, src_dev, tgt_dev, dev_anns, config.method)
    p = two_proportion_test(before.target.correct, before.target.declarations,
                            after.target.correct, after.target.declarations) \
        if before.target.declarations else 1.0
    return ExperimentReport(before, after, p, time.perf_counter() - start,
                            before.target.declarations, sum(len(a.declarations) for a in train_anns), tuned)
