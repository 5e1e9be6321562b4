"""Span-classification constituency parsing with partial-annotation fine-tuning."""

from .annotation import PartialAnnotation, SpanDeclaration, parse_markup, write_markup
from .decoder import SpanScores, decode, decode_many, reconcile, reconcile_bruteforce, reconcile_dp
from .evaluation import PRF, partial_metrics, prf
from .model import ModelConfig, ModelParams, init_params, load_model, save_model
from .representation import RepresentationConfig
from .training import TrainConfig, finetune, train
from .treebank import Tree, parse_ptb, spans_to_tree, tree_to_spans, write_ptb

__version__ = "0.1.0"

__all__ = [
    "PartialAnnotation", "SpanDeclaration", "parse_markup", "write_markup",
    "SpanScores", "decode", "decode_many", "reconcile", "reconcile_bruteforce", "reconcile_dp",
    "PRF", "partial_metrics", "prf",
    "ModelConfig", "ModelParams", "init_params", "load_model", "save_model",
    "RepresentationConfig", "TrainConfig", "finetune", "train",
    "Tree", "parse_ptb", "spans_to_tree", "tree_to_spans", "write_ptb",
]
