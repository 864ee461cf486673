"""Command-line entry point: extract, train, summarize, evaluate, sigtest.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .corpus import CorpusError, RawPair, build_vocab, frame_sentences, load_corpus
from .graph import GraphOptions, RelationKB, annotate_entities, build_graph, load_graphs, load_kb
from .ndgrad import CheckpointError

log = logging.getLogger("dsgsum")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    name = os.environ.get("DSGSUM_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"DSGSUM_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


# ------------------------------------------------------------------ extract

_WORKER: dict = {}


def _init_extract(kb, options, max_src_len):
    _WORKER.update(kb=kb, options=options, max_src_len=max_src_len)


def _extract_one(pair: RawPair) -> str:
    sents = None
    if _WORKER["max_src_len"]:
        sents = frame_sentences(pair.doc_tokens(), _WORKER["max_src_len"])
    g = build_graph(pair, _WORKER["kb"], _WORKER["options"], sentences=sents)
    return json.dumps({"id": pair.id, **g.to_json()}, sort_keys=True, ensure_ascii=False)


def _map(fn, items, jobs: int, initializer, initargs):
    if jobs <= 1:
        initializer(*initargs)
        return [fn(x) for x in items]
    with Pool(jobs, initializer=initializer, initargs=initargs) as pool:
        return pool.map(fn, items, chunksize=16)


def _options(args) -> GraphOptions:
    stop = GraphOptions().stopwords
    if args.stopwords:
        words = Path(args.stopwords).read_text(encoding="utf-8").split()
        stop = frozenset(w.lower() for w in words)
    return GraphOptions(stop, args.filter_triples, args.max_arg_words)


def _kb(path) -> RelationKB | None:
    return load_kb(path) if path else None


def cmd_extract(args) -> int:
    pairs = load_corpus(args.corpus, args.split)
    lines = _map(_extract_one, pairs, args.jobs, _init_extract,
                 (_kb(args.kb), _options(args), args.max_src_len))
    _write_lines(args.out, lines)
    log.info("wrote %d graphs to %s", len(lines), args.out)
    return 0


# -------------------------------------------------------------------- train


def _split_config(obj: dict):
    from .model import ModelConfig
    from .train import TrainConfig

    train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    model_keys = {f.name for f in dataclasses.fields(ModelConfig)} - {"vocab_size"}
    unknown = set(obj) - train_keys - model_keys
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return ({k: v for k, v in obj.items() if k in train_keys},
            {k: v for k, v in obj.items() if k in model_keys and k not in train_keys})


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _examples(pairs, vocab, mcfg, kb, graphs, options, with_target=True):
    from .model import make_example

    out = []
    for p in pairs:
        g = graphs.get(p.id) if graphs is not None else None
        if graphs is not None and g is None:
            raise CorpusError(f"no graph for id {p.id!r}")
        out.append(make_example(p, vocab, mcfg, kb, g, options, with_target))
    return out


def cmd_train(args) -> int:
    from .model import DSGSum, ModelConfig
    from .train import TrainConfig, fit, save_model, select_checkpoints

    obj: dict = {}
    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed JSON config ({exc.msg})", args.config, exc.lineno) from None
        if not isinstance(obj, dict):
            raise CorpusError("config must be a JSON object", args.config)
    obj.update(_parse_set(args.set))
    for flag in ("max_steps", "batch_size", "seed"):
        value = getattr(args, flag)
        if value is not None:
            obj[flag] = value
    tkeys, mkeys = _split_config(obj)
    try:
        tcfg = TrainConfig.from_json(tkeys)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    train_pairs = load_corpus(args.train, "train")
    valid_pairs = load_corpus(args.valid, "valid") if args.valid else None
    vocab = build_vocab(train_pairs, args.min_count)
    mkeys.setdefault("seed", tcfg.seed)
    mkeys.setdefault("max_src_len", tcfg.max_src_len)
    mkeys.setdefault("max_tgt_len", tcfg.max_tgt_len)
    mkeys.setdefault("dropout", tcfg.dropout)
    try:
        mcfg = ModelConfig(vocab_size=len(vocab), **mkeys)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    kb = _kb(args.kb)
    graphs = load_graphs(args.graphs) if args.graphs else None
    options = _options(args)
    train = _examples(train_pairs, vocab, mcfg, kb, graphs, options)
    valid = _examples(valid_pairs, vocab, mcfg, kb, graphs, options) if valid_pairs else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(
        {"train": tcfg.to_json(), "model": mcfg.to_json()}, indent=1, sort_keys=True))
    model = DSGSum(mcfg)
    with open(out / "train.log", "w", encoding="utf-8") as fh:
        history = fit(model, vocab, train, tcfg, valid, out, fh)
    save_model(out / "final.ckpt", model, vocab, tcfg.max_steps)
    if history:
        best = select_checkpoints(history, tcfg.keep_checkpoints)
        (out / "best.json").write_text(json.dumps([c.to_json() for c in best], indent=1))
    return 0


# ---------------------------------------------------------------- summarize


def cmd_summarize(args) -> int:
    from .decode import beam_search, greedy_decode
    from .train import load_model

    model, vocab, _ = load_model(args.model)
    pairs = load_corpus(args.corpus, args.split)
    graphs = load_graphs(args.graphs) if args.graphs else None
    examples = _examples(pairs, vocab, model.cfg, _kb(args.kb), graphs, _options(args),
                         with_target=False)
    lines = []
    for ex in examples:
        if args.beam == 1:
            hyp = greedy_decode(model, ex, args.max_len, not args.no_block_trigrams)
        else:
            hyp = beam_search(model, ex, args.beam, args.max_len, not args.no_length_norm,
                              not args.no_block_trigrams)
        text = " ".join(vocab.decode(hyp.tokens))
        lines.append(json.dumps({"id": ex.id, "summary": text}, ensure_ascii=False))
    _write_lines(args.out, lines)
    return 0


# ----------------------------------------------------------------- evaluate


def load_summaries(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise CorpusError("summaries file not found", path)
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pid, text = rec["id"], rec["summary"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise CorpusError('expected {"id": str, "summary": str}', path, lineno) from None
        if not isinstance(pid, str) or not isinstance(text, str):
            raise CorpusError('expected {"id": str, "summary": str}', path, lineno)
        if pid in out:
            raise CorpusError(f"duplicate id {pid!r}", path, lineno)
        out[pid] = text
    return out


def gold_entities(pair: RawPair, kb: RelationKB | None = None, stopwords=None) -> list[str]:
    """Entity surfaces found in the gold summary by the extraction rules."""
    summ = RawPair(pair.id, list(pair.summary) or [""], [])
    kwargs = {} if stopwords is None else {"stopwords": stopwords}
    return sorted({s.key for s in annotate_entities(summ, kb=kb, **kwargs)})


def _eval_one(item):
    from .evaluation import METRICS, entity_coverage

    cand, ref, ents, metric = item
    score = METRICS[metric](cand, ref).f1 if metric else None
    return entity_coverage(ents, cand), score


def _noop():
    pass


def _report_for(gold: list[RawPair], summaries: dict[str, str], args, kb):
    from .evaluation import corpus_report

    ids = [p.id for p in gold]
    missing = [i for i in ids if i not in summaries]
    extra = sorted(set(summaries) - set(ids))
    if missing or extra:
        raise CorpusError(f"summary ids do not match gold ids (missing {missing[:3]}, extra {extra[:3]})",
                          args.gold)
    cands = [summaries[i].split() for i in ids]
    refs = [p.summary_tokens() for p in gold]
    items = [(c, r, gold_entities(p, kb), args.metric if args.scores_out else None)
             for c, r, p in zip(cands, refs, gold)]
    per = _map(_eval_one, items, args.jobs, _noop, ())
    report = corpus_report(cands, refs, [c for c, _ in per], args.limited_length)
    return report, [(i, s) for i, (_, s) in zip(ids, per)]


def _average_reports(reports: list[dict]) -> dict:
    out: dict = {}
    for key, val in reports[0].items():
        if isinstance(val, dict):
            out[key] = {k: float(np.mean([r[key][k] for r in reports])) for k in val}
        elif key == "entity_coverage":
            vals = [r[key] for r in reports if r[key] is not None]
            out[key] = float(np.mean(vals)) if vals else None
        else:
            out[key] = val
    return out


def cmd_evaluate(args) -> int:
    gold = load_corpus(args.gold, args.split)
    kb = _kb(args.kb)
    reports = []
    scores = None
    for path in args.summaries:
        report, per = _report_for(gold, load_summaries(path), args, kb)
        reports.append(report)
        scores = scores or per
    report = reports[0] if len(reports) == 1 else _average_reports(reports)
    if len(reports) > 1:
        report["averaged_over"] = len(reports)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.scores_out:
        _write_lines(args.scores_out, [f"{i}\t{s!r}" for i, s in scores])
    return 0


# ------------------------------------------------------------------ sigtest


def load_scores(path) -> dict[str, float]:
    path = Path(path)
    if not path.exists():
        raise CorpusError("score file not found", path)
    out: dict[str, float] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError("expected id<TAB>score", path, lineno)
        try:
            value = float(parts[1])
        except ValueError:
            raise CorpusError(f"bad score {parts[1]!r}", path, lineno) from None
        if parts[0] in out:
            raise CorpusError(f"duplicate id {parts[0]!r}", path, lineno)
        out[parts[0]] = value
    return out


def cmd_sigtest(args) -> int:
    from .evaluation import SigTestConfig, paired_bootstrap

    a, b = load_scores(args.a), load_scores(args.b)
    if set(a) != set(b):
        diff = sorted(set(a) ^ set(b))
        raise CorpusError(f"score files disagree on ids, e.g. {diff[:3]}", args.b)
    try:
        cfg = SigTestConfig(args.sample_size, args.iters, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ids = sorted(a)
    p = paired_bootstrap([a[i] for i in ids], [b[i] for i in ids], cfg)
    print(json.dumps({"p_value": p, "n_iter": cfg.n_iter, "sample_size": cfg.sample_size,
                      "seed": cfg.seed}, sort_keys=True))
    return 0


# ------------------------------------------------------------------- parser


def _graph_flags(p) -> None:
    p.add_argument("--kb", help="knowledge-base TSV (subject, relation type, object)")
    p.add_argument("--stopwords", help="whitespace-separated stopword file")
    p.add_argument("--filter-triples", action="store_true",
                   help="drop triples with an argument longer than --max-arg-words")
    p.add_argument("--max-arg-words", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsgsum", description="Graph-augmented abstractive summarization.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("extract", help="build entity/relation graphs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=("train", "valid", "test"))
    p.add_argument("--max-src-len", type=int, default=512,
                   help="restrict extraction to sentences kept under this length (0: whole doc)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _graph_flags(p)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat JSON of training and model keys")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--graphs", help="graphs JSONL from extract; built on the fly if absent")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    _graph_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("summarize", help="decode summaries with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--graphs")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int)
    p.add_argument("--no-block-trigrams", action="store_true")
    p.add_argument("--no-length-norm", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _graph_flags(p)
    p.set_defaults(fn=cmd_summarize)

    p = sub.add_parser("evaluate", help="ROUGE and entity coverage")
    p.add_argument("--gold", required=True, help="gold corpus JSONL")
    p.add_argument("--summaries", required=True, nargs="+",
                   help="one or more summary files; metrics are averaged across them")
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--out")
    p.add_argument("--scores-out", help="per-example id<TAB>F1 of --metric (first summaries file)")
    p.add_argument("--metric", default="rouge1", choices=("rouge1", "rouge2", "rougeL"))
    p.add_argument("--limited-length", action="store_true")
    p.add_argument("--kb")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sigtest", help="paired bootstrap significance test")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--sample-size", type=int, default=3000)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_sigtest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        return args.fn(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dsgsum: error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, CheckpointError, OSError, json.JSONDecodeError) as exc:
        print(f"dsgsum: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
