import csv
import json
import subprocess
import sys

import pytest

from vsec_lda.cli import EXIT_INVALID, EXIT_IO, main, run_group
from vsec_lda.corpus import load_corpus

SMALL = ["--k", "4", "--c-rel", "60", "--t-rel", "15", "--c-irr", "20", "--t-irr", "5",
         "--docs", "200"]


def _files(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("c") / "corpus"
    assert main(["synth", *SMALL, "--seed", "3", "--out", str(out), "-q"]) == 0
    return out


@pytest.fixture(scope="module")
def vsec_run(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("r") / "vsec-seed3"
    args = ["--corpus", str(corpus_dir), "--k", "4", "--seed", "3", "--out", str(out), "-q"]
    assert main(["train", "--model", "vsec", *args]) == 0
    assert main(["eval", "--corpus", str(corpus_dir), "--model-dir", str(out), "--out", str(out), "-q"]) == 0
    return out


def test_synth_default_scale_split(tmp_path):
    out = tmp_path / "corpus"
    argv = ["synth", "--k", "20", "--c-rel", "800", "--t-rel", "80", "--c-irr", "200",
            "--t-irr", "20", "--docs", "8000", "--alpha", "0.2", "--beta", "0.1",
            "--gamma", "0.1", "--seed", "7", "--out", str(out), "-q"]
    assert main(argv) == 0
    corpus = load_corpus(out)
    assert (len(corpus.indices("train")), len(corpus.indices("test"))) == (7200, 800)
    assert len(corpus.vocab_primary) == 1000 and len(corpus.vocab_conditioned) == 100
    assert (out / "truth.json").is_file()


def test_synth_deterministic(tmp_path, corpus_dir):
    out = tmp_path / "again"
    assert main(["synth", *SMALL, "--seed", "3", "--out", str(out), "-q"]) == 0
    a, b = _files(corpus_dir), _files(out)
    a.pop("resolved_config.json"), b.pop("resolved_config.json")
    assert a == b


def test_synth_summary_on_stderr(tmp_path, capsys):
    assert main(["synth", *SMALL, "--out", str(tmp_path / "c")]) == 0
    err = capsys.readouterr().err
    assert "D=200" in err and "train 180 / test 20" in err


def test_exit_codes(tmp_path, corpus_dir):
    assert main(["synth", *SMALL, "--alpha", "0", "--out", str(tmp_path / "a"), "-q"]) == EXIT_INVALID
    assert main(["train", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "b"), "-q"]) == EXIT_IO
    assert main(["train", "--corpus", str(corpus_dir), "--k", "1", "--out", str(tmp_path / "c"), "-q"]) == EXIT_INVALID
    assert main(["train", "--corpus", str(corpus_dir), "--filter", "audio", "--out", str(tmp_path / "d"), "-q"]) == EXIT_INVALID
    assert main(["synth", *SMALL, "-q"]) == EXIT_INVALID  # no --out


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"docs": 100, "k": 3, "seed": 11, "c_rel": 30, "t_rel": 10}))
    out = tmp_path / "c"
    assert main(["synth", "--config", str(cfg), "--docs", "50", "--out", str(out), "-q"]) == 0
    resolved = json.loads((out / "resolved_config.json").read_text())["synth"]
    assert resolved["docs"] == 50 and resolved["k"] == 3 and resolved["seed"] == 11
    assert resolved["c_irr"] == 200  # default
    assert len(load_corpus(out)) == 50
    cfg.write_text(json.dumps({"dcos": 10}))
    assert main(["synth", "--config", str(cfg), "--out", str(out), "-q"]) == EXIT_INVALID


def test_train_reduction(tmp_path, corpus_dir):
    common = ["--corpus", str(corpus_dir), "--k", "4", "--seed", "5", "--max-iters", "30", "-q"]
    assert main(["train", "--model", "baseline", *common, "--out", str(tmp_path / "b")]) == 0
    assert main(["train", "--model", "vsec", "--filter", "none", *common, "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "b" / "trace.csv").read_bytes() == (tmp_path / "v" / "trace.csv").read_bytes()
    assert not (tmp_path / "b" / "selection.json").exists()
    assert (tmp_path / "v" / "selection.json").is_file()


def test_train_and_eval_artifacts(vsec_run):
    names = set(_files(vsec_run))
    assert {"model.json", "trace.csv", "selection.json", "eval.json", "ranks.csv",
            "err_curve.csv", "resolved_config.json"} <= names
    metrics = json.loads((vsec_run / "eval.json").read_text())
    for key in ("perplexity", "score_primary", "score_conditioned", "recall_at_10pct"):
        assert isinstance(metrics[key], float)
    assert "recall" in metrics["selection"]["primary"]
    assert set(json.loads((vsec_run / "resolved_config.json").read_text())) == {"train", "eval"}
    with open(vsec_run / "ranks.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(1 <= int(r["rank"]) <= int(r["D_test"]) for r in rows)


def test_eval_deterministic_and_without_truth(tmp_path, corpus_dir, vsec_run):
    out = tmp_path / "e"
    argv = ["eval", "--corpus", str(corpus_dir), "--model-dir", str(vsec_run), "--out", str(out), "-q"]
    assert main(argv) == 0
    for name in ("eval.json", "ranks.csv", "err_curve.csv"):
        assert (out / name).read_bytes() == (vsec_run / name).read_bytes()
    bare = tmp_path / "bare"
    bare.mkdir()
    for p in corpus_dir.iterdir():
        if p.name != "truth.json":
            (bare / p.name).write_bytes(p.read_bytes())
    assert main(["eval", "--corpus", str(bare), "--model-dir", str(vsec_run), "--out", str(tmp_path / "n"), "-q"]) == 0
    metrics = json.loads((tmp_path / "n" / "eval.json").read_text())
    assert "selection" not in metrics and "perplexity" in metrics


def test_eval_vocabulary_mismatch(tmp_path, vsec_run):
    other = tmp_path / "other"
    assert main(["synth", "--k", "4", "--c-rel", "50", "--t-rel", "15", "--c-irr", "0",
                 "--t-irr", "0", "--irr-fraction", "0", "--docs", "50", "--out", str(other), "-q"]) == 0
    argv = ["eval", "--corpus", str(other), "--model-dir", str(vsec_run), "--out", str(tmp_path / "e"), "-q"]
    assert main(argv) == EXIT_INVALID


def test_report(tmp_path, corpus_dir, vsec_run, capsys):
    assert main(["report", str(vsec_run), "--out", str(tmp_path / "one"), "-q"]) == 0
    text = capsys.readouterr().out
    assert "perplexity" in text and "vsec" in text
    base = tmp_path / "base-seed3"
    common = ["--corpus", str(corpus_dir), "--k", "4", "--seed", "3", "-q"]
    assert main(["train", "--model", "baseline", *common, "--out", str(base)]) == 0
    assert main(["eval", "--corpus", str(corpus_dir), "--model-dir", str(base), "--out", str(base), "-q"]) == 0
    out = tmp_path / "two"
    assert main(["report", str(base), str(vsec_run), "--out", str(out), "-q"]) == 0
    with open(out / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["run"] for r in rows] == ["base-seed3", "vsec-seed3"]
    with open(out / "report_summary.csv") as fh:
        groups = [r["group"] for r in csv.DictReader(fh)]
    assert groups == ["base", "vsec"]
    assert (out / "curves.csv").is_file() and (out / "report.txt").is_file()
    assert main(["report", str(tmp_path / "nothing"), "--out", str(tmp_path / "x"), "-q"]) == EXIT_INVALID


def test_run_group():
    assert run_group("vsec-seed3") == "vsec"
    assert run_group("base_s12") == "base"
    assert run_group("seed4") == "seed4"
    assert run_group("plain") == "plain"


def test_console_entry(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "vsec_lda.cli", "synth", *SMALL, "--out", str(tmp_path / "c"), "-q"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "vsec_lda.cli", "train"], capture_output=True, text=True)
    assert res.returncode != 0
