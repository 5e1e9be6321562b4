"""Command line interface.

Exit status: 0 on success, 1 on usage errors, 2 on data or model errors.
Stochastic commands take ``--seed``; without it the ``RSP_SEED`` environment
variable is used, and failing that seed 0 (7 for ``experiment``).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

from .annotation import AnnotationError, derive_training_declarations, read_markup_file
from .decoder import METHODS, DecodeError, decode_many, score_batch, reconcile, selection_to_tree
from .evaluation import EvaluationError, bracket_counts, partial_metrics, prf_from_counts
from .experiment import PRESETS, run_experiment
from .model import ModelConfig, ModelError, load_model, save_model
from .representation import MODES, RepresentationConfig, RepresentationError, make_provider
from .synthcorpus import (
    AnnotationPolicy,
    GrammarError,
    builtin_grammars,
    make_partial_annotations,
    read_grammar_file,
    sample_corpus,
)
from .training import TrainConfig, TrainingError, finetune, train
from .treebank import Sentence, TreebankError, format_label, read_ptb_file, write_ptb

log = logging.getLogger("rsp")

DATA_ERRORS = (OSError, TreebankError, AnnotationError, ModelError, RepresentationError, TrainingError,
               GrammarError, EvaluationError, DecodeError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(args, default: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RSP_SEED")
    if env is None:
        return default
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"RSP_SEED must be an integer, got {env!r}") from None


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (falls back to $RSP_SEED)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value training config file")
    for name, typ in (("lr", float), ("epochs", int), ("batch-size", int), ("patience", int),
                      ("pos-weight", float), ("clip-norm", float), ("max-len", int), ("mix-k", int),
                      ("max-implied", int)):
        p.add_argument(f"--{name}", type=typ, default=None)
    p.add_argument("--mix", choices=("plain", "equal", "source-k"), default=None)


def _train_config(args, **defaults) -> TrainConfig:
    overrides = {
        "lr": args.lr, "epochs": args.epochs, "batch_size": args.batch_size, "patience": args.patience,
        "pos_weight": args.pos_weight, "clip_norm": args.clip_norm, "max_len": args.max_len,
        "mix": args.mix, "mix_k": args.mix_k, "max_implied": args.max_implied, "seed": _seed(args),
    }
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            text = f.read()
    base = TrainConfig.from_text(text)
    # defaults apply only to settings the file left alone
    for k, v in defaults.items():
        if f"{k}=" not in text:
            setattr(base, k, v)
    return TrainConfig.from_text(base.to_text(), **overrides)


def _read_sentences(path: str) -> List[tuple]:
    with open(path, encoding="utf-8") as f:
        return [tuple(line.split()) for line in f if line.strip()]


def _parse_chunk(job):
    model_path, context_file, sentences, method = job
    params = load_model(model_path, context_file=context_file)
    return [write_ptb(t) for t in decode_many(sentences, params, method)]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    seed = _seed(args)
    if args.grammar in ("source", "target"):
        source, target = builtin_grammars()
        grammar = source if args.grammar == "source" else target
    else:
        grammar = read_grammar_file(args.grammar)
    trees = sample_corpus(grammar, args.count, args.max_len, seed)
    lines = [write_ptb(t) for t in trees]
    _write_lines(args.out, lines)
    if args.annotate:
        policy = AnnotationPolicy(args.constituent_mean, args.non_constituent_mean, args.label_prob, seed)
        _write_lines(args.annotate, make_partial_annotations(trees, policy))
    return 0


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        RepresentationConfig(args.learned_dim, args.context_dim, args.context_layers, args.context_mode,
                             context_seed=args.context_seed),
        hidden=args.hidden, dropout=args.dropout,
    )


def cmd_train(args) -> int:
    config = _train_config(args)
    model_config = _model_config(args)
    provider = make_provider(model_config.representation, args.context_file)
    data: list = read_ptb_file(args.train)
    if args.annotations:
        data += read_markup_file(args.annotations)
    dev = read_ptb_file(args.dev) if args.dev else []
    result = train(data, config, model_config, dev=dev, provider=provider)
    for rec in result.history:
        dev_txt = "" if rec.dev_accuracy is None else f"\tdev_span_acc={rec.dev_accuracy:.2f}"
        print(f"epoch={rec.epoch}\tloss={rec.train_loss:.4f}{dev_txt}", file=sys.stderr)
    save_model(result.params, args.model_out)
    return 0


def cmd_finetune(args) -> int:
    config = _train_config(args, mix="source-k")
    params = load_model(args.model, context_file=args.context_file)
    source = read_ptb_file(args.source) if args.source else []
    target = read_markup_file(args.target)
    result = finetune(params, source, target, config)
    save_model(result.params, args.model_out)
    return 0


def cmd_parse(args) -> int:
    sentences = _read_sentences(args.input)
    if args.jobs > 1 and len(sentences) > 1 and not args.scores_out:
        size = -(-len(sentences) // args.jobs)
        jobs = [(args.model, args.context_file, sentences[k:k + size], args.method)
                for k in range(0, len(sentences), size)]
        with ProcessPoolExecutor(args.jobs) as pool:
            lines = [line for chunk in pool.map(_parse_chunk, jobs) for line in chunk]
        _write_lines(args.output, lines)
        return 0
    params = load_model(args.model, context_file=args.context_file)
    lines, rows = [], []
    for k, toks in enumerate(sentences):
        scores, tags = score_batch([toks], params)[0]
        selection = reconcile(scores, args.method)
        lines.append(write_ptb(selection_to_tree(Sentence(toks), selection, scores, params.labels, tags)))
        for i, j, vp, vm, label in scores.rows():
            rows.append(f"{k}\t{i}\t{j}\t{vp!r}\t{vm!r}\t{format_label(params.labels[label])}")
    _write_lines(args.output, lines)
    if args.scores_out:
        _write_lines(args.scores_out, ["sentence\ti\tj\tv_plus\tv_minus\tlabel"] + rows)
    return 0


def _counts(job):
    gold, pred = job
    return bracket_counts(gold, pred)


def cmd_eval(args) -> int:
    gold, pred = read_ptb_file(args.gold), read_ptb_file(args.pred)
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold trees but {len(pred)} predicted")
    if args.jobs > 1 and len(gold) > 1:
        size = -(-len(gold) // args.jobs)
        jobs = [(gold[k:k + size], pred[k:k + size]) for k in range(0, len(gold), size)]
        with ProcessPoolExecutor(args.jobs) as pool:
            parts = list(pool.map(_counts, jobs))
        counts = tuple(sum(p[c] for p in parts) for c in range(3))
    else:
        counts = bracket_counts(gold, pred)
    score = prf_from_counts(*counts)
    print(f"Sentences {len(gold)}  Brackets gold {counts[1]} pred {counts[2]} matched {counts[0]}")
    print(score)
    if args.tsv:
        _write_lines(args.tsv, ["recall\tprecision\tf1",
                                f"{score.recall:.2f}\t{score.precision:.2f}\t{score.f1:.2f}"])
    return 0


def cmd_eval_partial(args) -> int:
    anns, pred = read_markup_file(args.ann), read_ptb_file(args.pred)
    m = partial_metrics(pred, anns)
    print(f"Sentences {m.sentences}  Declarations {m.declarations}")
    print(f"correct constituents % {m.correct_constituents_pct:.1f}  error-free % {m.error_free_pct:.1f}")
    if args.tsv:
        _write_lines(args.tsv, ["correct_constituents_pct\terror_free_pct",
                                f"{m.correct_constituents_pct:.1f}\t{m.error_free_pct:.1f}"])
    return 0


def cmd_extract(args) -> int:
    anns = read_markup_file(args.ann)
    rows = ["sentence\ti\tj\tkind\tlabel\torigin"]
    for k, ann in enumerate(anns):
        explicit = {d.span for d in ann.declarations}
        decls = derive_training_declarations(ann) if args.implied else ann.declarations
        for d in decls:
            label = "+".join(d.label) if d.label else "-"
            origin = "explicit" if d.span in explicit else "implied"
            rows.append(f"{k}\t{d.span[0]}\t{d.span[1]}\t{d.kind}\t{label}\t{origin}")
    _write_lines(args.out, rows)
    return 0


def cmd_experiment(args) -> int:
    config = PRESETS[args.preset]
    if args.context_mode:
        config = dataclasses.replace(config, context_mode=args.context_mode)
    report = run_experiment(config, _seed(args, default=7))
    text = report.text()
    _write_lines(args.out, [text.rstrip("\n")])
    if args.out and args.out != "-":
        with open(args.out + ".tsv", "w", encoding="utf-8") as f:
            f.write(report.tsv())
    if args.model_out:
        save_model(report.params, args.model_out)
    log.info("experiment finished in %.1f s", report.seconds)
    return 0


def _write_lines(path: Optional[str], lines: Sequence[str]) -> None:
    text = "".join(line + "\n" for line in lines)
    if not path or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsp", description="Span-classification constituency parser toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="sample a treebank from a PCFG")
    p.add_argument("--grammar", default="source", help="'source', 'target' or a grammar file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--max-len", type=int, default=30)
    p.add_argument("--out", default="-")
    p.add_argument("--annotate", help="also write partial-annotation markup here")
    p.add_argument("--constituent-mean", type=float, default=2.8)
    p.add_argument("--non-constituent-mean", type=float, default=0.3)
    p.add_argument("--label-prob", type=float, default=0.0)
    _add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on trees (and optional annotations)")
    p.add_argument("--train", required=True, help="bracketed treebank file")
    p.add_argument("--annotations", help="partial-annotation markup file")
    p.add_argument("--dev", help="bracketed dev treebank for early stopping")
    p.add_argument("--model-out", required=True)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.4)
    p.add_argument("--learned-dim", type=int, default=16)
    p.add_argument("--context-dim", type=int, default=32)
    p.add_argument("--context-layers", type=int, default=3)
    p.add_argument("--context-mode", choices=MODES, default="hashed-context")
    p.add_argument("--context-seed", type=int, default=0)
    p.add_argument("--context-file")
    _add_train_flags(p)
    _add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="continue training on source trees plus target annotations")
    p.add_argument("--model", required=True)
    p.add_argument("--source", help="bracketed source treebank mixed into every batch")
    p.add_argument("--target", required=True, help="partial-annotation markup file")
    p.add_argument("--model-out", required=True)
    p.add_argument("--context-file")
    _add_train_flags(p)
    _add_seed(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("parse", help="parse whitespace-tokenized sentences, one per line")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--method", choices=sorted(METHODS), default="dp")
    p.add_argument("--scores-out", help="dump per-span scores as TSV")
    p.add_argument("--context-file")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="labeled bracket recall / precision / F1")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--tsv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-partial", help="correct-constituent and error-free percentages")
    p.add_argument("--ann", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--tsv")
    p.set_defaults(func=cmd_eval_partial)

    p = sub.add_parser("extract", help="dump the declarations of a markup file")
    p.add_argument("--ann", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--implied", action="store_true", help="include implied non-constituents")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("experiment", help="source training, then fine-tuning on target partial annotations")
    p.add_argument("--preset", choices=sorted(PRESETS), default="geo-analog")
    p.add_argument("--context-mode", choices=MODES)
    p.add_argument("--out", default="-")
    p.add_argument("--model-out")
    _add_seed(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def _validate(args) -> None:
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be at least 1")
    if getattr(args, "count", 1) < 1:
        raise UsageError("--count must be at least 1")
    if args.command in ("train", "finetune", "synth", "experiment"):
        _seed(args)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required (see --help)")
        _validate(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
