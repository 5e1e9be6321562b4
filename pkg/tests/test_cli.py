import subprocess
import sys

import pytest

from rsp.annotation import read_markup_file
from rsp.cli import run
from rsp.evaluation import partial_metrics
from rsp.treebank import read_ptb_file


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--grammar", "source", "--count", "30", "--max-len", "10",
                "--out", str(d / "src.ptb"), "--seed", "1"]) == 0
    assert run(["synth", "--grammar", "target", "--count", "8", "--max-len", "10", "--out", str(d / "tgt.ptb"),
                "--annotate", str(d / "tgt.ann"), "--seed", "2"]) == 0
    assert run(["train", "--train", str(d / "src.ptb"), "--model-out", str(d / "m.rsp"), "--epochs", "2",
                "--hidden", "6", "--learned-dim", "4", "--context-dim", "6", "--seed", "3"]) == 0
    (d / "sents.txt").write_text("".join(" ".join(t.tokens) + "\n" for t in read_ptb_file(d / "tgt.ptb")))
    return d


def test_synth_is_reproducible(workdir, tmp_path):
    out = tmp_path / "again.ptb"
    assert run(["synth", "--grammar", "source", "--count", "30", "--max-len", "10", "--out", str(out),
                "--seed", "1"]) == 0
    assert out.read_bytes() == (workdir / "src.ptb").read_bytes()


def test_seed_from_environment(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("RSP_SEED", "1")
    out = tmp_path / "env.ptb"
    assert run(["synth", "--grammar", "source", "--count", "30", "--max-len", "10", "--out", str(out)]) == 0
    assert out.read_bytes() == (workdir / "src.ptb").read_bytes()
    monkeypatch.setenv("RSP_SEED", "x")
    assert run(["synth", "--count", "3", "--out", str(out)]) == 1


def test_parse_single_sentence(workdir, tmp_path, capsys):
    one = tmp_path / "one.txt"
    one.write_text("the side is equal .\n")
    assert run(["parse", "--model", str(workdir / "m.rsp"), "--input", str(one)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1 and lines[0].startswith("(")


def test_parse_jobs_preserve_order(workdir):
    a, b = workdir / "p1.ptb", workdir / "p2.ptb"
    scores = workdir / "s.tsv"
    assert run(["parse", "--model", str(workdir / "m.rsp"), "--input", str(workdir / "sents.txt"),
                "--output", str(a), "--scores-out", str(scores)]) == 0
    assert run(["parse", "--model", str(workdir / "m.rsp"), "--input", str(workdir / "sents.txt"),
                "--output", str(b), "--jobs", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    header, *rows = scores.read_text().splitlines()
    assert header.split("\t") == ["sentence", "i", "j", "v_plus", "v_minus", "label"]
    n_spans = sum(len(t) * (len(t) + 1) // 2 for t in read_ptb_file(workdir / "tgt.ptb"))
    assert len(rows) == n_spans


def test_eval_identical(workdir, capsys):
    g = str(workdir / "tgt.ptb")
    assert run(["eval", "--gold", g, "--pred", g]) == 0
    assert "F1 100.00" in capsys.readouterr().out
    assert run(["eval", "--gold", g, "--pred", g, "--jobs", "2"]) == 0
    assert "F1 100.00" in capsys.readouterr().out


def test_extract_consistent_with_eval_partial(workdir, tmp_path, capsys):
    pred = workdir / "p1.ptb"
    if not pred.exists():
        run(["parse", "--model", str(workdir / "m.rsp"), "--input", str(workdir / "sents.txt"),
             "--output", str(pred)])
    dump = tmp_path / "decl.tsv"
    assert run(["extract", "--ann", str(workdir / "tgt.ann"), "--out", str(dump)]) == 0
    rows = [r.split("\t") for r in dump.read_text().splitlines()[1:]]
    trees = read_ptb_file(pred)
    from rsp.treebank import constituent_labels

    hits = 0
    for k, i, j, kind, _label, _origin in rows:
        has = (int(i), int(j)) in constituent_labels(trees[int(k)])
        hits += has == (kind == "constituent")
    direct = partial_metrics(trees, read_markup_file(workdir / "tgt.ann"))
    assert direct.declarations == len(rows)
    assert direct.correct == hits
    tsv = tmp_path / "partial.tsv"
    assert run(["eval-partial", "--ann", str(workdir / "tgt.ann"), "--pred", str(pred), "--tsv", str(tsv)]) == 0
    assert f"{direct.correct_constituents_pct:.1f}" in tsv.read_text()


def test_finetune_runs(workdir):
    assert run(["finetune", "--model", str(workdir / "m.rsp"), "--source", str(workdir / "src.ptb"),
                "--target", str(workdir / "tgt.ann"), "--model-out", str(workdir / "m2.rsp"),
                "--epochs", "1", "--mix-k", "10", "--seed", "0"]) == 0
    assert (workdir / "m2.rsp").stat().st_size > 0


def test_training_config_file_with_flag_override(workdir, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs=1\nlr=0.0\n")
    out = tmp_path / "m.rsp"
    assert run(["train", "--train", str(workdir / "src.ptb"), "--model-out", str(out), "--config", str(cfg),
                "--hidden", "4", "--learned-dim", "2", "--context-dim", "2", "--seed", "5"]) == 0
    cfg.write_text("nonsense=1\n")
    assert run(["train", "--train", str(workdir / "src.ptb"), "--model-out", str(out), "--config",
                str(cfg)]) == 2


def test_exit_codes(workdir, tmp_path):
    assert run([]) == 1
    assert run(["parse", "--input", "x"]) == 1
    assert run(["parse", "--model", str(workdir / "m.rsp"), "--input", "x", "--jobs", "0"]) == 1
    assert run(["parse", "--model", str(tmp_path / "missing.rsp"), "--input", str(workdir / "sents.txt")]) == 2
    bad = tmp_path / "bad.ptb"
    bad.write_text("(S (NP")
    assert run(["eval", "--gold", str(bad), "--pred", str(bad)]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rsp", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "experiment" in proc.stdout


def test_experiment_tiny(tmp_path):
    out = tmp_path / "report.txt"
    assert run(["experiment", "--preset", "tiny", "--seed", "7", "--out", str(out)]) == 0
    text = out.read_text()
    assert "correct constituents %" in text and "error-free %" in text
    assert (tmp_path / "report.txt.tsv").read_text().startswith("stage\t")
    again = tmp_path / "again.txt"
    assert run(["experiment", "--preset", "tiny", "--seed", "7", "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()
