import numpy as np
import pytest

from rsp.model import ModelConfig, init_params
from rsp.representation import RepresentationConfig
from rsp.training import build_vocabularies
from rsp.treebank import parse_ptb

SHE = "(S (NP (PRP She)) (VP (VBZ enjoys) (S (VP (VBG playing) (NP (NN tennis))))) (. .))"


@pytest.fixture
def she_tree():
    return parse_ptb(SHE)[0]


@pytest.fixture
def small_trees():
    return parse_ptb(SHE + "\n(NP (NN test))\n(S (NP (DT the) (NN dog)) (VP (VBZ runs)))")


def make_params(trees, hidden=4, learned=3, context=4, layers=2, dropout=0.3, seed=1, mode="hashed-context",
                annotations=()):
    words, labels, tags = build_vocabularies(trees, annotations)
    cfg = ModelConfig(RepresentationConfig(learned, context, layers, mode), hidden=hidden, dropout=dropout)
    return init_params(cfg, words, labels, tags, seed=seed)


def perturb(params, scale=0.3, seed=5):
    rng = np.random.default_rng(seed)
    for k in params.weights:
        params.weights[k] += rng.normal(scale=scale, size=params.weights[k].shape)
    # keep the ReLU layer mostly active so finite differences see every path
    params.weights["ff_b1"][:] = 0.5
    return params


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[k])
