import pytest
from hypothesis import given, strategies as st

from rsp.treebank import (
    EMPTY,
    Leaf,
    Parse,
    Sentence,
    Tree,
    TreebankError,
    all_spans,
    collect_label_vocab,
    collect_pos_vocab,
    constituent_labels,
    crosses,
    format_label,
    parse_ptb,
    pos_map,
    read_ptb_file,
    spans_to_tree,
    tree_to_spans,
    write_ptb,
    write_ptb_file,
)

from conftest import SHE


def test_parse_example_sentence(she_tree):
    assert she_tree.label == "S"
    assert she_tree.tokens == ("She", "enjoys", "playing", "tennis", ".")
    assert she_tree.pos_tags == ("PRP", "VBZ", "VBG", "NN", ".")
    assert len(she_tree) == 5


def test_wrapper_stripped():
    (t,) = parse_ptb("(TOP (NP (NN test)))")
    assert t.label == "NP" and t.tokens == ("test",)
    (t,) = parse_ptb("(ROOT (S (NN a) (NN b)))")
    assert t.label == "S"


def test_unbalanced_reports_offset():
    with pytest.raises(TreebankError) as e:
        parse_ptb("(S (NP")
    assert e.value.offset == 7


@pytest.mark.parametrize("bad", ["(S (NP a) b)", "(S (NP (NN a))))", "()", "(S ( (NN a)))", "(NN a"])
def test_malformed_inputs_raise(bad):
    with pytest.raises(TreebankError):
        parse_ptb(bad)


def test_writer_canonical_forms(she_tree):
    assert write_ptb(parse_ptb("(NP (NN test))")[0]) == "(NP (NN test))"
    assert write_ptb(she_tree) == SHE
    t = Tree("S", (Tree("VP", (Leaf("VB", "go"),)),))
    assert write_ptb(t) == "(S (VP (VB go)))"


def test_parentheses_in_tokens_are_escaped():
    t = Tree("NP", (Leaf("-LRB-", "("), Leaf("NN", "x"), Leaf("-RRB-", ")")))
    text = write_ptb(t)
    assert text == "(NP (-LRB- -LRB-) (NN x) (-RRB- -RRB-))"
    assert parse_ptb(text)[0].tokens == ("-LRB-", "x", "-RRB-")


def test_file_round_trip(tmp_path, small_trees):
    path = tmp_path / "t.ptb"
    write_ptb_file(small_trees, path)
    assert read_ptb_file(path) == small_trees


def test_labels_of_example(she_tree):
    parse = tree_to_spans(she_tree)
    assert parse[(2, 4)] == ("S", "VP")
    assert parse[(1, 3)] == EMPTY
    assert parse[(0, 5)] == ("S",)
    assert len(parse.labels) == 15
    assert sorted(parse.constituents()) == [(0, 1), (0, 5), (1, 4), (2, 4), (3, 4)]
    assert tree_to_spans(parse_ptb("(NP (NN test))")[0])[(0, 1)] == ("NP",)


def test_spans_to_tree_inverts(she_tree):
    assert spans_to_tree(tree_to_spans(she_tree), pos_map(she_tree)) == she_tree
    one = Parse(Sentence(("w",)), {(0, 1): ("NP",)})
    assert write_ptb(spans_to_tree(one, {(0, 1): "NN"})) == "(NP (NN w))"


def test_spans_to_tree_rejects_crossing():
    sent = Sentence(("a", "b", "c"))
    labels = {s: EMPTY for s in all_spans(3)}
    labels.update({(0, 3): ("S",), (0, 2): ("X",), (1, 3): ("Y",)})
    with pytest.raises(TreebankError, match="cross"):
        spans_to_tree(Parse(sent, labels), {(k, k + 1): "T" for k in range(3)})


def test_spans_to_tree_needs_root_and_pos():
    sent = Sentence(("a", "b"))
    labels = {s: EMPTY for s in all_spans(2)}
    with pytest.raises(TreebankError):
        spans_to_tree(Parse(sent, labels), {(0, 1): "T", (1, 2): "T"})
    labels[(0, 2)] = ("S",)
    with pytest.raises(TreebankError):
        spans_to_tree(Parse(sent, labels), {(0, 1): "T"})


def test_parse_must_be_total():
    with pytest.raises(TreebankError):
        Parse(Sentence(("a", "b")), {(0, 2): ("S",)})


def test_crosses_cases():
    assert crosses((0, 2), (1, 3))
    assert not crosses((1, 3), (1, 3))
    assert not crosses((1, 2), (1, 3))
    assert not crosses((0, 2), (2, 4))


@given(st.tuples(st.integers(0, 8), st.integers(0, 8)), st.tuples(st.integers(0, 8), st.integers(0, 8)))
def test_crosses_is_symmetric_and_matches_definition(a, b):
    a, b = tuple(sorted(a)), tuple(sorted(b))
    (i, j), (k, l) = a, b
    expected = i < k < j < l or k < i < l < j
    assert crosses(a, b) == crosses(b, a) == expected


def test_label_vocab(she_tree):
    vocab = collect_label_vocab([she_tree])
    assert vocab[0] == EMPTY
    assert set(vocab) == {EMPTY, ("S",), ("NP",), ("VP",), ("S", "VP")}
    assert collect_label_vocab([she_tree, she_tree]) == vocab
    with pytest.raises(TreebankError):
        collect_label_vocab([])
    assert "NN" in collect_pos_vocab([she_tree])


def test_constituent_labels_collapse_unaries(she_tree):
    labels = constituent_labels(she_tree)
    assert labels[(2, 4)] == ("S", "VP")
    assert format_label(labels[(2, 4)]) == "S+VP"
