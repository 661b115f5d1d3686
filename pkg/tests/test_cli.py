import json

import numpy as np
import pytest

from oracles import ranking_disagreements
from sparta.cli import main, read_config, CliError
from sparta.core import CorpusRecord, EvalRecord, load_corpus, make_candidate, make_query, save_corpus, save_queries
from sparta.encoder import encode
from sparta.model import load_model
from sparta.scoring import rank_brute_force


@pytest.fixture
def small(tmp_path):
    """A 50-answer corpus with training questions, trained for two epochs."""
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(40)]
    recs = [
        CorpusRecord(i, " ".join(rng.choice(words, 4)), " ".join(rng.choice(words, 3)), "", f"d{i // 5}")
        for i in range(50)
    ]
    save_corpus(recs, tmp_path / "corpus.jsonl")
    qs = [EvalRecord(i, " ".join(recs[i].answer.split()[:2]), i) for i in range(50)]
    save_queries(qs, tmp_path / "q.jsonl")
    args = ["train", "--corpus", str(tmp_path / "corpus.jsonl"), "--queries", str(tmp_path / "q.jsonl"),
            "--out", str(tmp_path / "m.spmd"), "--epochs", "2", "--d", "8", "--lr", "0.01", "--seed", "7"]
    assert main(args) == 0
    return tmp_path


def _run(capsys, args):
    code = main(args)
    return code, capsys.readouterr()


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_file_names_path(tmp_path, capsys):
    code, out = _run(capsys, ["bm25-index", "--corpus", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "x")])
    assert code == 1
    assert "nope.jsonl" in out.err


def test_corrupt_index_names_path(small, capsys):
    bad = small / "bad.spix"
    bad.write_bytes(b"JUNK" + bytes(24))
    code, out = _run(capsys, ["search", "--index", str(bad), "--model", str(small / "m.spmd"), "--query", "w1"])
    assert code == 1 and "bad.spix" in out.err and "bad magic" in out.err


def test_train_writes_curve(small):
    curve = json.loads((small / "m.spmd.curve.json").read_text())
    assert len(curve["epoch_loss"]) == 2
    assert curve["steps"] == 100


def test_train_deterministic(small):
    first = (small / "m.spmd").read_bytes()
    args = ["train", "--corpus", str(small / "corpus.jsonl"), "--queries", str(small / "q.jsonl"),
            "--out", str(small / "m2.spmd"), "--epochs", "2", "--d", "8", "--lr", "0.01", "--seed", "7"]
    assert main(args) == 0
    assert (small / "m2.spmd").read_bytes() == first


def test_index_then_search_matches_brute_force(small, capsys):
    assert main(["index", "--corpus", str(small / "corpus.jsonl"), "--model", str(small / "m.spmd"),
                 "--out", str(small / "i.spix"), "--top-k", "0"]) == 0
    capsys.readouterr()
    model = load_model(small / "m.spmd")
    encs = [encode(make_candidate(r, model.vocab), model.encoder) for r in load_corpus(small / "corpus.jsonl")]
    for text in ["w1 w2", "w5", "w7 w7 w30"]:
        code, out = _run(capsys, ["search", "--index", str(small / "i.spix"), "--model", str(small / "m.spmd"),
                                  "--query", text, "--k", "10", "--corpus", str(small / "corpus.jsonl")])
        assert code == 0
        rows = [line.split("\t") for line in out.out.strip().splitlines()]
        got = [(int(r[0]), float(r[1])) for r in rows]
        ref = rank_brute_force(make_query(text, model.vocab), encs, model.table, 10, drop_zero=True)
        assert ranking_disagreements(got, ref, 1e-5) == []
        assert rows[0][2] == load_corpus(small / "corpus.jsonl")[got[0][0]].answer


def test_all_oov_query_is_empty(small, capsys):
    main(["index", "--corpus", str(small / "corpus.jsonl"), "--model", str(small / "m.spmd"), "--out", str(small / "i.spix")])
    capsys.readouterr()
    code, out = _run(capsys, ["search", "--index", str(small / "i.spix"), "--model", str(small / "m.spmd"),
                              "--query", "zebra quagga"])
    assert code == 0 and out.out == ""


def test_eval_and_bm25(small, capsys):
    main(["index", "--corpus", str(small / "corpus.jsonl"), "--model", str(small / "m.spmd"), "--out", str(small / "i.spix")])
    main(["bm25-index", "--corpus", str(small / "corpus.jsonl"), "--out", str(small / "b.spbm")])
    capsys.readouterr()
    code, out = _run(capsys, ["eval", "--queries", str(small / "q.jsonl"), "--index", str(small / "i.spix"),
                              "--model", str(small / "m.spmd")])
    report = json.loads(out.out)
    assert code == 0 and 0.0 <= report["mrr"] <= 1.0 and len(report["per_query"]) == 50
    code, out = _run(capsys, ["eval", "--queries", str(small / "q.jsonl"), "--bm25", str(small / "b.spbm")])
    assert code == 0 and json.loads(out.out)["recall"]["1"] > 0.5
    code, out = _run(capsys, ["bm25-search", "--index", str(small / "b.spbm"), "--query", "w3", "--k", "3"])
    assert code == 0 and len(out.out.strip().splitlines()) <= 3


def test_inspect(small, capsys):
    main(["index", "--corpus", str(small / "corpus.jsonl"), "--model", str(small / "m.spmd"), "--out", str(small / "i.spix")])
    capsys.readouterr()
    code, out = _run(capsys, ["inspect", "--index", str(small / "i.spix"), "--model", str(small / "m.spmd"),
                              "--answer-id", "3", "--k", "4"])
    lines = out.out.strip().splitlines()
    assert code == 0 and len(lines) == 4
    values = [float(line.split("\t")[1]) for line in lines]
    assert values == sorted(values, reverse=True)
    code, out = _run(capsys, ["inspect", "--index", str(small / "i.spix"), "--model", str(small / "m.spmd"),
                              "--answer-id", "999"])
    assert code == 1


def test_config_file_and_flag_precedence(small, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# desk run\nepochs = 1\nlr=0.01\nd = 8\nseed = 7\nfreeze-query-embeddings = false\n")
    assert read_config(cfg)["freeze_query_embeddings"] is False
    args = ["train", "--corpus", str(small / "corpus.jsonl"), "--queries", str(small / "q.jsonl"),
            "--out", str(tmp_path / "c.spmd"), "--config", str(cfg), "--epochs", "2"]
    assert main(args) == 0
    assert len(json.loads((tmp_path / "c.spmd.curve.json").read_text())["epoch_loss"]) == 2


def test_bad_config_entry(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warp_speed = 9\n")
    with pytest.raises(CliError, match="bad.cfg:1"):
        read_config(cfg)


def test_invalid_hyperparameter_rejected(small):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--corpus", "c", "--queries", "q", "--out", "o", "--lr", "-1"])
    assert exc.value.code == 2


def test_synth_then_train_with_embeddings(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "data"), "--seed", "1", "--d", "16"]) == 0
    for name in ("corpus", "train", "validation", "heldout", "embeddings"):
        assert (tmp_path / "data" / f"{name}.jsonl").exists()
    assert main(["train", "--corpus", str(tmp_path / "data/corpus.jsonl"), "--queries", str(tmp_path / "data/train.jsonl"),
                 "--validation", str(tmp_path / "data/validation.jsonl"), "--embeddings", str(tmp_path / "data/embeddings.jsonl"),
                 "--out", str(tmp_path / "m.spmd"), "--epochs", "1", "--lr", "0.01", "--window", "0"]) == 0
    assert load_model(tmp_path / "m.spmd").dim == 16
