"""Command-line entry point tying the pipeline together.

Subcommands:
  index build / index search    BM25 retrieval over a corpus
  synth generate                synthetic benchmark data
  train                         one training phase (warmup or feature)
  rerank                        score candidate sets with a checkpoint
  eval                          ranking metrics for a run against qrels
  fuse fit / fuse apply         linear score fusion
  analyze attention / scores    mechanism statistics
  plot                          render analysis CSVs to SVG

Every subcommand is deterministic given --seed.  Exit code 0 on success,
2 on usage errors, 1 on bad inputs (message names the offending file).
Config files are flat "key = value" text; command-line flags win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

log = logging.getLogger("crossrank")


def _setup_logging():
    level = os.environ.get("RANK_LOG", "info").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}
    logging.basicConfig(level=levels.get(level, logging.INFO),
                        format="%(levelname)s %(message)s")


def read_config_file(path):
    """Flat key = value file; later keys win, '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _add_index(sub):
    p = sub.add_parser("index", help="BM25 retrieval")
    inner = p.add_subparsers(dest="index_cmd", required=True)
    b = inner.add_parser("build", help="build and save an inverted index")
    b.add_argument("--corpus", required=True)
    b.add_argument("--out-index", required=True)
    s = inner.add_parser("search", help="retrieve top-k per query")
    s.add_argument("--corpus", help="corpus file (builds the index in memory)")
    s.add_argument("--index", help="previously saved index")
    s.add_argument("--queries", required=True)
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--k1", type=float, default=0.9)
    s.add_argument("--b", type=float, default=0.4)
    s.add_argument("--out-run", required=True)
    s.add_argument("--tag", default="bm25")


def _add_synth(sub):
    p = sub.add_parser("synth", help="synthetic benchmark data")
    inner = p.add_subparsers(dest="synth_cmd", required=True)
    g = inner.add_parser("generate")
    g.add_argument("--task", choices=["pointwise", "comparative"], required=True)
    g.add_argument("--queries", type=int, default=100)
    g.add_argument("--n", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale-len", type=int, default=24)
    g.add_argument("--skew", type=float, default=4.0)
    g.add_argument("--distractor", type=float, default=0.0)
    g.add_argument("--out-dir", required=True)


def _add_train(sub):
    p = sub.add_parser("train", help="train one phase")
    p.add_argument("--phase", choices=["warmup", "feature"], required=True)
    p.add_argument("--config", help="key = value file with model/training keys")
    p.add_argument("--data-dir", required=True,
                   help="directory with corpus.tsv queries.tsv qrels.txt run.txt")
    p.add_argument("--init-checkpoint")
    p.add_argument("--vocab", help="existing vocab file (default: build fresh)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--feature-buckets", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")


def _add_rerank(sub):
    p = sub.add_parser("rerank", help="score candidate sets with a model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--model-config", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--run-in", required=True)
    p.add_argument("--mode", choices=["full", "no_feature", "no_global"],
                   default="full")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--feature-buckets", type=int, default=10)
    p.add_argument("--feature-range", nargs=2, type=float, metavar=("MIN", "MAX"),
                   help="global clip range (default: per-query min-max)")
    p.add_argument("--out-run", required=True)
    p.add_argument("--tag", default="rerank")
    p.add_argument("--dump-attention", help="CSV path for pairwise similarities")
    p.add_argument("--qrels", help="labels for the attention dump")
    p.add_argument("--threads", type=int, default=1)


def _add_eval(sub):
    p = sub.add_parser("eval", help="ranking metrics")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default="mrr10,map,ndcg10,mrr")
    p.add_argument("--rel-threshold", type=int)
    p.add_argument("--out-csv")


def _add_fuse(sub):
    p = sub.add_parser("fuse", help="linear score fusion")
    inner = p.add_subparsers(dest="fuse_cmd", required=True)
    f = inner.add_parser("fit")
    f.add_argument("--runs", required=True,
                   help="comma-separated run files, one per feature")
    f.add_argument("--names", required=True, help="comma-separated feature names")
    f.add_argument("--qrels", required=True)
    f.add_argument("--rel-threshold", type=int)
    f.add_argument("--restarts", type=int, default=5)
    f.add_argument("--sweeps", type=int, default=5)
    f.add_argument("--sample", type=int, help="fit on this many queries")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out-model", required=True)
    a = inner.add_parser("apply")
    a.add_argument("--model", required=True)
    a.add_argument("--runs", required=True)
    a.add_argument("--out-run", required=True)
    a.add_argument("--tag", default="fusion")


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="attention / score analysis")
    inner = p.add_subparsers(dest="analyze_cmd", required=True)
    at = inner.add_parser("attention")
    at.add_argument("--dump", required=True, help="CSV from rerank --dump-attention")
    at.add_argument("--out-summary", required=True)
    sc = inner.add_parser("scores")
    sc.add_argument("--run", required=True)
    sc.add_argument("--qrels", required=True)
    sc.add_argument("--out-csv", required=True)


def _add_plot(sub):
    p = sub.add_parser("plot", help="render analysis CSVs to SVG")
    p.add_argument("--kind", choices=["attention", "scores"], required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="crossrank", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="cmd", required=True)
    _add_index(sub)
    _add_synth(sub)
    _add_train(sub)
    _add_rerank(sub)
    _add_eval(sub)
    _add_fuse(sub)
    _add_analyze(sub)
    _add_plot(sub)
    return parser


# --- command implementations -------------------------------------------------

def cmd_index(args):
    from . import retrieval
    from .data import read_corpus, read_queries, write_run, RunRecord
    if args.index_cmd == "build":
        index = retrieval.build_index(read_corpus(args.corpus))
        retrieval.save_index(args.out_index, index)
        log.info("indexed %d documents, %d terms",
                 index.doc_count, len(index.postings))
        return 0
    if args.index:
        index = retrieval.load_index(args.index)
    elif args.corpus:
        index = retrieval.build_index(read_corpus(args.corpus))
    else:
        raise ValueError("index search: need --corpus or --index")
    records = []
    for qid, text in read_queries(args.queries).items():
        hits = retrieval.bm25_search(index, text, args.k, args.k1, args.b)
        records += [RunRecord(qid, doc_id, rank, score, args.tag)
                    for rank, (doc_id, score) in enumerate(hits, 1)]
    write_run(args.out_run, records)
    log.info("wrote %d result rows to %s", len(records), args.out_run)
    return 0


def cmd_synth(args):
    from .synth import SynthSpec, generate, write_dataset
    spec = SynthSpec(num_queries=args.queries, n=args.n, seed=args.seed,
                     task=args.task, scale_len=args.scale_len, skew=args.skew,
                     distractor_strength=args.distractor)
    write_dataset(generate(spec), args.out_dir)
    log.info("wrote %s dataset (%d queries) to %s", args.task, args.queries,
             args.out_dir)
    return 0


def _load_dataset(data_dir, n):
    from pathlib import Path
    from .data import read_corpus, read_queries, read_qrels, read_run
    from .retrieval import assemble_candidate_sets
    d = Path(data_dir)
    corpus = read_corpus(d / "corpus.tsv")
    queries = read_queries(d / "queries.tsv")
    qrels = read_qrels(d / "qrels.txt")
    run = read_run(d / "run.txt")
    sets = assemble_candidate_sets(run, corpus, queries, n)
    return corpus, queries, qrels, run, sets


def cmd_train(args):
    from pathlib import Path
    from .model import ModelConfig, init_params, params_from_arrays
    from .tensor import load_checkpoint
    from .text import Vocab
    from .training import TrainConfig, examples_from_qrels, train

    file_cfg = read_config_file(args.config) if args.config else {}
    model_keys = {k: int(v) for k, v in file_cfg.items()
                  if k in ModelConfig.__dataclass_fields__}
    corpus, queries, qrels, run, sets = _load_dataset(args.data_dir, args.n)
    if args.vocab:
        vocab = Vocab.load(args.vocab)
    else:
        vocab = Vocab.build([p for _, p in corpus.values()]
                            + [t for t, _ in corpus.values()]
                            + list(queries.values()),
                            max_size=int(file_cfg.get("vocab_max_size", 2048)))
    model_keys.setdefault("vocab_size", len(vocab))
    config = ModelConfig(**model_keys)

    phase = "with_feature" if args.phase == "feature" else "warmup_no_feature"
    tc_kwargs = dict(phase=phase, seed=args.seed)
    for key, flag in (("learning_rate", args.lr), ("steps", args.steps),
                      ("batch", args.batch)):
        if flag is not None:
            tc_kwargs[key] = flag
        elif key in file_cfg:
            tc_kwargs[key] = type(TrainConfig.__dataclass_fields__[key].default)(
                file_cfg[key])
    if "checkpoint_every" in file_cfg:
        tc_kwargs["checkpoint_every"] = int(file_cfg["checkpoint_every"])
    train_config = TrainConfig(**tc_kwargs)

    if args.init_checkpoint:
        params = params_from_arrays(load_checkpoint(args.init_checkpoint))
    else:
        params = init_params(config, seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    examples = examples_from_qrels(sets, qrels)
    train(params, config, train_config, examples, vocab,
          out_dir=out, log_path=out / "metrics.csv")
    config.save(out / "model.cfg")
    vocab.save(out / "vocab.txt")
    log.info("trained %s for %d steps; wrote %s", phase, train_config.steps, out)
    return 0


def cmd_rerank(args):
    from concurrent.futures import ThreadPoolExecutor
    from .analysis import attention_records, write_attention_dump
    from .data import read_corpus, read_queries, read_qrels, read_run, write_run, RunRecord
    from .model import ModelConfig, params_from_arrays, score_candidates
    from .retrieval import assemble_candidate_sets
    from .tensor import load_checkpoint
    from .text import FeatureSpec, Vocab

    config = ModelConfig.load(args.model_config)
    params = params_from_arrays(load_checkpoint(args.checkpoint))
    vocab = Vocab.load(args.vocab)
    corpus = read_corpus(args.corpus)
    queries = read_queries(args.queries)
    run = read_run(args.run_in)
    sets = assemble_candidate_sets(run, corpus, queries, args.n)
    spec = None
    if args.feature_range:
        spec = FeatureSpec(args.feature_range[0], args.feature_range[1],
                           args.feature_buckets)

    def score_one(cset):
        return score_candidates(cset, params, config, vocab, mode=args.mode,
                                feature_spec=spec,
                                collect_attention=bool(args.dump_attention))

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(score_one, sets))
    else:
        results = [score_one(cset) for cset in sets]

    records = []
    for cset, (ranked, _) in zip(sets, results):
        records += [RunRecord(cset.query_id, c.doc_id, c.new_rank, c.score,
                              args.tag) for c in ranked]
    write_run(args.out_run, records)

    if args.dump_attention:
        grades = {}
        if args.qrels:
            for q in read_qrels(args.qrels):
                grades[(q.query_id, q.doc_id)] = q.grade
        all_records = []
        for cset, (_, dump) in zip(sets, results):
            labels = [grades.get((cset.query_id, c.doc_id), 0)
                      for c in cset.candidates]
            all_records += attention_records(cset.query_id, dump, labels)
        write_attention_dump(args.dump_attention, all_records)
        log.info("wrote %d attention records", len(all_records))
    log.info("re-ranked %d queries to %s", len(sets), args.out_run)
    return 0


def cmd_eval(args):
    from .data import read_qrels, read_run
    from .metrics import evaluate, write_report
    from .training import default_threshold
    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    threshold = args.rel_threshold
    if threshold is None:
        threshold = default_threshold(qrels)
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    results = evaluate(run, qrels, names, rel_threshold=threshold)
    for name, res in results.items():
        print(f"{name}\tall\t{res.mean:.6f}")
    if args.out_csv:
        write_report(args.out_csv, results)
    return 0


def _named_runs(runs_arg, names=None):
    from .data import read_run
    paths = [p.strip() for p in runs_arg.split(",") if p.strip()]
    if names is None:
        names = [os.path.basename(p) for p in paths]
    else:
        names = [n.strip() for n in names.split(",")]
    if len(names) != len(paths):
        raise ValueError(f"{len(paths)} run files but {len(names)} names")
    return {name: read_run(path) for name, path in zip(names, paths)}


def cmd_fuse(args):
    from .data import write_run
    from .fusion import (coordinate_ascent_fit, features_from_runs, fused_run,
                         load_fusion, save_fusion)
    if args.fuse_cmd == "fit":
        from .data import read_qrels
        from .training import default_threshold
        named = _named_runs(args.runs, args.names)
        features = features_from_runs(named)
        qrels = read_qrels(args.qrels)
        threshold = args.rel_threshold or default_threshold(qrels)
        if args.sample and args.sample < len(features):
            rng = np.random.default_rng(args.seed)
            idx = rng.choice(len(features), size=args.sample, replace=False)
            features = [features[i] for i in sorted(idx)]
        model, traces = coordinate_ascent_fit(
            features, qrels, list(named), restarts=args.restarts,
            sweeps=args.sweeps, seed=args.seed, rel_threshold=threshold)
        save_fusion(args.out_model, model)
        if model.degenerate:
            log.warning("degenerate objective: wrote uniform weights")
        log.info("fitted weights %s -> %s", dict(zip(model.feature_names,
                                                     model.weights)), args.out_model)
        return 0
    named = _named_runs(args.runs)
    model = load_fusion(args.model)
    features = features_from_runs(dict(zip(model.feature_names, named.values())))
    write_run(args.out_run, fused_run(model, features, tag=args.tag))
    return 0


def cmd_analyze(args):
    from .analysis import (grade_summaries, read_attention_dump, score_distribution,
                           summarize_attention, write_attention_summary,
                           write_grade_summaries, write_score_distribution)
    from .data import read_qrels, read_run
    if args.analyze_cmd == "attention":
        records = read_attention_dump(args.dump)
        write_attention_summary(args.out_summary, summarize_attention(records))
        return 0
    rows = score_distribution(read_run(args.run), read_qrels(args.qrels))
    write_score_distribution(args.out_csv, rows)
    base, ext = os.path.splitext(args.out_csv)
    write_grade_summaries(base + "_summary" + ext, grade_summaries(rows))
    return 0


def cmd_plot(args):
    from .analysis import (PairSummary, plot_attention_summary,
                           plot_score_distribution)
    if args.kind == "attention":
        summaries = []
        with open(args.input, "r", encoding="utf-8") as f:
            f.readline()
            for line in f:
                layer, r1, r2, mean, normalized = line.strip().split(",")
                summaries.append(PairSummary(int(layer), int(r1), int(r2),
                                             float(mean), float(normalized), 0))
        plot_attention_summary(summaries, args.out)
        return 0
    rows = []
    with open(args.input, "r", encoding="utf-8") as f:
        f.readline()
        for line in f:
            qid, doc_id, grade, score = line.strip().split(",")
            rows.append((qid, doc_id, int(grade), float(score)))
    plot_score_distribution(rows, args.out)
    return 0


COMMANDS = {
    "index": cmd_index,
    "synth": cmd_synth,
    "train": cmd_train,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "analyze": cmd_analyze,
    "plot": cmd_plot,
}


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
