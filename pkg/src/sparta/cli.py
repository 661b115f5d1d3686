"""Command-line entry point: ``sparta <command> [flags]``.

Every command is a pure function of its input files, flags and seed.
Exit status is 0 on success, 1 on a data or file error (the message names
the path) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from sparta._binary import FormatError
from sparta.bm25 import bm25_build, bm25_score, load_bm25, save_bm25
from sparta.core import (
    CorpusError,
    CorpusRecord,
    build_vocabulary,
    load_corpus,
    load_queries,
    make_candidate,
    make_query,
    save_corpus,
    save_queries,
)
from sparta.encoder import DEFAULT_DIM, DEFAULT_WINDOW, encode, load_term_vectors, save_term_vectors
from sparta.evaluation import evaluate, report_to_json
from sparta.index import DEFAULT_TOP_K, build_index, load_index, query_index, save_index, top_k_terms
from sparta.model import SpartaModel, load_model, save_model
from sparta.synthetic import correlated_term_vectors, make_synthetic_qa
from sparta.training import DEFAULT_LR, DEFAULT_NEARBY, DEFAULT_NEGATIVES, TrainConfig, train


class CliError(Exception):
    """Reported as ``error: <message>`` with exit status 1."""


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _int_at_least(low: int) -> Callable[[str], int]:
    def parse(text: str) -> int:
        value = int(text)
        if value < low:
            raise argparse.ArgumentTypeError(f"must be >= {low}, got {text}")
        return value

    return parse


@dataclass(frozen=True)
class _Setting:
    parse: Callable[[str], Any]
    default: Any


# Hyperparameters settable from a key=value config file or from flags
# (flags win). Keys use underscores; the matching flag uses dashes.
SETTINGS: dict[str, _Setting] = {
    "lr": _Setting(_positive_float, DEFAULT_LR),
    "epochs": _Setting(_int_at_least(0), 10),
    "negatives": _Setting(_int_at_least(1), DEFAULT_NEGATIVES),
    "nearby_window": _Setting(_int_at_least(0), DEFAULT_NEARBY),
    "batch_size": _Setting(_int_at_least(1), 1),
    "d": _Setting(_int_at_least(1), DEFAULT_DIM),
    "window": _Setting(_int_at_least(0), DEFAULT_WINDOW),
    "top_k": _Setting(_int_at_least(0), DEFAULT_TOP_K),
    "k": _Setting(_int_at_least(1), 10),
    "seed": _Setting(_int_at_least(0), 42),
    "max_len": _Setting(_int_at_least(1), 512),
    "freeze_query_embeddings": _Setting(parse_bool, True),
    "literal_loss": _Setting(parse_bool, False),
    "answer_only_max": _Setting(parse_bool, False),
}


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in SETTINGS:
            raise CliError(f"{path}:{lineno}: unknown config entry {raw.strip()!r}")
        try:
            out[key] = SETTINGS[key].parse(value.strip())
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    config = read_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, setting in SETTINGS.items():
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else config.get(key, setting.default)
    return merged


# --- helpers -------------------------------------------------------------------


def _from_file(loader: Callable[..., Any], path: str, *extra: Any) -> Any:
    """Call ``loader(path)``, prefixing format errors with the path."""
    try:
        return loader(path, *extra)
    except FormatError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_corpus_records(path: str) -> list[CorpusRecord]:
    records = load_corpus(path)
    if not records:
        raise CliError(f"{path}: empty corpus")
    return records


def _candidates(records: Sequence[CorpusRecord], model: SpartaModel) -> list:
    return [make_candidate(r, model.vocab, max_len=model.max_len) for r in records]


def _print_hits(hits: Sequence[tuple[int, float]], records: Sequence[CorpusRecord] | None) -> None:
    for aid, value in hits:
        text = records[aid].answer if records is not None and aid < len(records) else ""
        print(f"{aid}\t{value:.6f}\t{text}")


# --- commands --------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_synthetic_qa(seed=cfg["seed"])
    vocab = data.vocabulary()
    save_corpus(data.corpus, out / "corpus.jsonl")
    save_queries(data.train, out / "train.jsonl")
    save_queries(data.validation, out / "validation.jsonl")
    save_queries(data.heldout, out / "heldout.jsonl")
    vectors = correlated_term_vectors(
        vocab, data.synonyms, cfg["d"], args.correlation, seed=cfg["seed"]
    )
    save_term_vectors(vocab, vectors, out / "embeddings.jsonl")
    print(f"wrote {len(data.corpus)} answers and {len(vocab)} term vectors to {out}")


def cmd_train(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    records = _load_corpus_records(args.corpus)
    questions = load_queries(args.queries)
    if not questions:
        raise CliError(f"{args.queries}: empty training set")
    held = load_queries(args.validation) if args.validation else []

    pretrained = None
    if args.embeddings:
        vocab, pretrained = load_term_vectors(args.embeddings)
    else:
        texts = [t for r in records for t in r.texts] + [q.question for q in questions]
        vocab = build_vocabulary(texts)
    model = SpartaModel.initialize(
        vocab,
        dim=cfg["d"],
        window=cfg["window"],
        seed=cfg["seed"],
        freeze_query_embeddings=cfg["freeze_query_embeddings"],
        max_len=cfg["max_len"],
        pretrained=pretrained,
    )
    corpus = _candidates(records, model)
    for q in questions + held:
        if not 0 <= q.answer_id < len(corpus):
            raise CliError(f"qid {q.qid}: answer_id {q.answer_id} is not in the corpus")
    pairs = [(make_query(q.question, vocab), q.answer_id) for q in questions]
    validation = [(make_query(q.question, vocab), q.answer_id) for q in held]
    config = TrainConfig(
        lr=cfg["lr"],
        epochs=cfg["epochs"],
        negatives=cfg["negatives"],
        nearby_window=cfg["nearby_window"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        literal_loss=cfg["literal_loss"],
        answer_only_max=cfg["answer_only_max"],
    )
    result = train(model, pairs, corpus, config, validation or None)
    save_model(result.model, args.out)
    curve = {
        "epoch_loss": result.epoch_losses,
        "validation_mrr": result.validation_mrr,
        "best_epoch": result.best_epoch,
        "steps": result.steps,
    }
    curve_path = args.curve or f"{args.out}.curve.json"
    Path(curve_path).write_text(json.dumps(curve, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({result.steps} steps, best epoch {result.best_epoch})")


def cmd_index(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    model = _from_file(load_model, args.model, cfg["max_len"])
    corpus = _candidates(_load_corpus_records(args.corpus), model)
    encodings = [encode(c, model.encoder) for c in corpus]
    index = build_index(encodings, model.table, model.vocab, cfg["top_k"], cfg["answer_only_max"])
    save_index(index, args.out)
    print(f"wrote {args.out} ({index.num_answers} answers, {index.num_postings} postings)")


def cmd_search(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    model = _from_file(load_model, args.model)
    index = _from_file(load_index, args.index)
    records = load_corpus(args.corpus) if args.corpus else None
    _print_hits(query_index(index, make_query(args.query, model.vocab), cfg["k"]), records)


def _parse_k_list(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise CliError(f"--k-list must be comma-separated integers, got {text!r}") from exc
    if not ks or min(ks) < 1:
        raise CliError("--k-list entries must be >= 1")
    return ks


def cmd_eval(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    records = load_queries(args.queries)
    k_list = _parse_k_list(args.k_list)
    if args.bm25:
        bm = _from_file(load_bm25, args.bm25)
        num_answers = bm.num_docs

        def ranker(question: str, k: int) -> list[tuple[int, float]]:
            return bm25_score(bm, make_query(question, bm.vocab), k)

    else:
        if not (args.index and args.model):
            raise CliError("eval needs --index and --model, or --bm25")
        model = _from_file(load_model, args.model)
        index = _from_file(load_index, args.index)
        num_answers = index.num_answers

        def ranker(question: str, k: int) -> list[tuple[int, float]]:
            return query_index(index, make_query(question, model.vocab), k)

    report = evaluate(ranker, records, range(num_answers), k_list)
    text = report_to_json(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"MRR {report['mrr']:.4f}; report written to {args.out}")
    else:
        sys.stdout.write(text)


def cmd_inspect(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    model = _from_file(load_model, args.model)
    index = _from_file(load_index, args.index)
    if args.corpus:
        records = load_corpus(args.corpus)
        if 0 <= args.answer_id < len(records):
            print(f"answer {args.answer_id}: {records[args.answer_id].answer}")
    for term, value in top_k_terms(index, model.vocab, cfg["k"], args.answer_id):
        print(f"{term}\t{value:.4f}")


def cmd_bm25_index(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    records = _load_corpus_records(args.corpus)
    vocab = build_vocabulary([t for r in records for t in r.texts])
    candidates = [make_candidate(r, vocab, max_len=cfg["max_len"]) for r in records]
    index = bm25_build(candidates, vocab, args.k1, args.b)
    save_bm25(index, args.out)
    print(f"wrote {args.out} ({index.num_docs} documents)")


def cmd_bm25_search(args: argparse.Namespace, cfg: dict[str, Any]) -> None:
    index = _from_file(load_bm25, args.index)
    records = load_corpus(args.corpus) if args.corpus else None
    _print_hits(bm25_score(index, make_query(args.query, index.vocab), cfg["k"]), records)


# --- parser ------------------------------------------------------------------------


def _add_settings(p: argparse.ArgumentParser, keys: Sequence[str]) -> None:
    for key in keys:
        setting = SETTINGS[key]
        p.add_argument(
            "--" + key.replace("_", "-"),
            dest=key,
            type=setting.parse,
            default=None,
            metavar="BOOL" if setting.parse is parse_bool else "N",
            help=f"default {setting.default}",
        )
    p.add_argument("--config", metavar="PATH", help="key=value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparta", description="Learned sparse retrieval.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("train", help="train a model on corpus + training questions")
    p.add_argument("--corpus", required=True, metavar="PATH")
    p.add_argument("--queries", required=True, metavar="PATH", help="training questions")
    p.add_argument("--validation", metavar="PATH", help="questions used to pick the best epoch")
    p.add_argument("--embeddings", metavar="PATH", help="pretrained term vectors (JSON lines)")
    p.add_argument("--out", required=True, metavar="PATH", help="model file to write")
    p.add_argument("--curve", metavar="PATH", help="loss curve JSON (default OUT.curve.json)")
    _add_settings(
        p,
        ["lr", "epochs", "negatives", "nearby_window", "batch_size", "d", "window", "seed",
         "max_len", "freeze_query_embeddings", "literal_loss", "answer_only_max"],
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="precompute the inverted index of a corpus")
    p.add_argument("--corpus", required=True, metavar="PATH")
    p.add_argument("--model", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    _add_settings(p, ["top_k", "max_len", "answer_only_max"])
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="rank answers for one query")
    p.add_argument("--index", required=True, metavar="PATH")
    p.add_argument("--model", required=True, metavar="PATH")
    p.add_argument("--query", required=True)
    p.add_argument("--corpus", metavar="PATH", help="print answer text from this corpus")
    _add_settings(p, ["k"])
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="MRR / Recall@k report as JSON")
    p.add_argument("--queries", required=True, metavar="PATH")
    p.add_argument("--index", metavar="PATH")
    p.add_argument("--model", metavar="PATH")
    p.add_argument("--bm25", metavar="PATH", help="evaluate a BM25 index instead")
    p.add_argument("--k-list", default="1,5,10", help="recall cut-offs (default 1,5,10)")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="top terms of one answer's sparse vector")
    p.add_argument("--index", required=True, metavar="PATH")
    p.add_argument("--model", required=True, metavar="PATH")
    p.add_argument("--answer-id", required=True, type=int)
    p.add_argument("--corpus", metavar="PATH")
    _add_settings(p, ["k"])
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("bm25-index", help="build the BM25 baseline index")
    p.add_argument("--corpus", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    _add_settings(p, ["max_len"])
    p.set_defaults(func=cmd_bm25_index)

    p = sub.add_parser("bm25-search", help="rank answers with BM25")
    p.add_argument("--index", required=True, metavar="PATH")
    p.add_argument("--query", required=True)
    p.add_argument("--corpus", metavar="PATH")
    _add_settings(p, ["k"])
    p.set_defaults(func=cmd_bm25_search)

    p = sub.add_parser("synth", help="write a synthetic paraphrase QA dataset")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--correlation", type=float, default=0.5, help="synonym vector correlation")
    _add_settings(p, ["seed", "d"])
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s"
    )
    try:
        args.func(args, _settings(args))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        where = exc.filename if exc.filename is not None else "I/O"
        print(f"error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    except (FormatError, CorpusError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
