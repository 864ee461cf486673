import json
import subprocess
import sys

import pytest

from dsgsum.cli import main
from dsgsum.corpus import write_corpus
from dsgsum.synthetic import make_corpus


@pytest.fixture()
def files(tmp_path):
    pairs = make_corpus(6, seed=1)
    write_corpus(tmp_path / "train.jsonl", pairs[:4])
    write_corpus(tmp_path / "valid.jsonl", pairs[4:])
    (tmp_path / "kb.tsv").write_text("bike\tUsedFor\tharbor\nlamp\tIsA\tkite\n")
    cfg = {"d_model": 16, "n_heads": 2, "d_ff": 16, "enc_layers": 1, "dec_layers": 1,
           "lstm_hidden": 8, "lstm_layers": 1, "gat_layers": 1, "gat_heads": 2, "max_entities": 8,
           "max_steps": 3, "grad_accum": 1, "batch_size": 2, "checkpoint_interval": 2,
           "max_src_len": 64, "max_tgt_len": 20}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return tmp_path


def test_extract_writes_one_graph_per_line(files):
    out = files / "graphs.jsonl"
    assert main(["extract", "--corpus", str(files / "train.jsonl"), "--kb", str(files / "kb.tsv"),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert {"id", "nodes", "edges"} <= set(rec)
    assert all(e["relation"] == "have relation with" for e in rec["edges"])


def test_extract_with_jobs_matches_serial(files):
    a, b = files / "a.jsonl", files / "b.jsonl"
    main(["extract", "--corpus", str(files / "train.jsonl"), "--out", str(a)])
    main(["extract", "--corpus", str(files / "train.jsonl"), "--out", str(b), "--jobs", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_usage_and_data_errors(files, capsys):
    assert main(["extract", "--out", "x"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["bogus"]) == 1
    assert main([]) == 1
    bad = files / "bad.jsonl"
    bad.write_text('{"id": "a", "document": ["x"]}\nnot json\n')
    assert main(["extract", "--corpus", str(bad), "--out", str(files / "o")]) == 2
    assert "bad.jsonl:2" in capsys.readouterr().err
    assert main(["train", "--train", str(files / "train.jsonl"), "--out", str(files / "m"),
                 "--set", "no_such_key=1"]) == 1


def _train(files, out):
    return main(["train", "--config", str(files / "cfg.json"), "--train", str(files / "train.jsonl"),
                 "--valid", str(files / "valid.jsonl"), "--out", str(out), "--seed", "3"])


def test_train_summarize_evaluate_sigtest_pipeline(files, capsys):
    assert _train(files, files / "run") == 0
    run = files / "run"
    log_lines = (run / "train.log").read_text().splitlines()
    assert len(log_lines) == 3 and len(log_lines[0].split("\t")) == 4
    best = json.loads((run / "best.json").read_text())
    assert [b["step"] for b in best] and json.loads((run / "config.json").read_text())["train"]["seed"] == 3

    summ = files / "s.jsonl"
    assert main(["summarize", "--model", str(run / "final.ckpt"), "--corpus", str(files / "valid.jsonl"),
                 "--out", str(summ), "--beam", "2", "--max-len", "8"]) == 0
    recs = [json.loads(x) for x in summ.read_text().splitlines()]
    assert [r["id"] for r in recs] == ["syn-0004", "syn-0005"]
    assert all(isinstance(r["summary"], str) for r in recs)

    gold_summ = files / "gold.jsonl"
    gold_summ.write_text("".join(json.dumps({"id": p.id, "summary": " ".join(p.summary)}) + "\n"
                                 for p in make_corpus(6, seed=1)[4:]))
    rep_path, scores = files / "rep.json", files / "a.scores"
    assert main(["evaluate", "--gold", str(files / "valid.jsonl"), "--summaries", str(gold_summ),
                 "--out", str(rep_path), "--scores-out", str(scores)]) == 0
    rep = json.loads(rep_path.read_text())
    assert rep["rouge1"]["f1"] == 1.0 and rep["n"] == 2
    assert rep["entity_coverage"] == 1.0
    assert main(["evaluate", "--gold", str(files / "valid.jsonl"), "--summaries", str(summ),
                 "--scores-out", str(files / "b.scores")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert set(printed) >= {"rouge1", "rouge2", "rougeL", "entity_coverage", "n"}

    assert main(["evaluate", "--gold", str(files / "valid.jsonl"), "--summaries", str(summ),
                 str(gold_summ)]) == 0
    avg = json.loads(capsys.readouterr().out)
    assert avg["averaged_over"] == 2

    assert main(["sigtest", "--a", str(scores), "--b", str(files / "b.scores"), "--sample-size", "30",
                 "--iters", "10", "--seed", "7"]) == 0
    sig = json.loads(capsys.readouterr().out)
    assert sig["n_iter"] == 10 and sig["sample_size"] == 30 and sig["seed"] == 7
    assert 0.0 <= sig["p_value"] <= 1.0


def test_train_is_byte_reproducible(files):
    assert _train(files, files / "r1") == 0
    assert _train(files, files / "r2") == 0
    for name in ("train.log", "final.ckpt", "history.json"):
        assert (files / "r1" / name).read_bytes() == (files / "r2" / name).read_bytes()


def test_sigtest_id_mismatch_is_data_error(tmp_path):
    (tmp_path / "a").write_text("x\t0.5\ny\t0.2\n")
    (tmp_path / "b").write_text("x\t0.5\nz\t0.2\n")
    assert main(["sigtest", "--a", str(tmp_path / "a"), "--b", str(tmp_path / "b")]) == 2
    (tmp_path / "b").write_text("x\t0.5\ny\tnot-a-number\n")
    assert main(["sigtest", "--a", str(tmp_path / "a"), "--b", str(tmp_path / "b")]) == 2


def test_evaluate_id_mismatch_is_data_error(files):
    s = files / "s.jsonl"
    s.write_text(json.dumps({"id": "other", "summary": "x"}) + "\n")
    assert main(["evaluate", "--gold", str(files / "valid.jsonl"), "--summaries", str(s)]) == 2


def test_bad_log_level_is_usage_error(tmp_path, monkeypatch):
    (tmp_path / "a").write_text("x\t0.5\n")
    monkeypatch.setenv("DSGSUM_LOG", "loud")
    assert main(["sigtest", "--a", str(tmp_path / "a"), "--b", str(tmp_path / "a")]) == 1


def test_module_entry_point(tmp_path):
    (tmp_path / "a").write_text("x\t0.5\n")
    out = subprocess.run([sys.executable, "-m", "dsgsum", "sigtest", "--a", str(tmp_path / "a"),
                          "--b", str(tmp_path / "a"), "--iters", "5", "--sample-size", "5"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["p_value"] == 1.0
    out = subprocess.run([sys.executable, "-m", "dsgsum", "extract"], capture_output=True, text=True)
    assert out.returncode == 1 and "usage" in out.stderr
