"""Single executable exposing the engine as batch subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 external-scorer error.
File outputs land next to --out; each writing command also echoes its
effective configuration to <out>.config.json so a run can be reproduced.
Progress goes to stderr, machine-readable results to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis, corpus, dense, lexical, metrics, pipeline, trainer
from .errors import DataError, ProtocolError, ScorerError, XdnrError
from .ranking import load_run, save_run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SCORER = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def _effective_seed(seed: int) -> int:
    env = os.environ.get("XDNR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"XDNR_SEED={env!r} is not an integer") from None
    return seed


def _echo_config(out_path: str, command: str, args: argparse.Namespace) -> None:
    cfg = {"command": command}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    path = Path(str(out_path) + ".config.json")
    path.write_text(json.dumps(cfg, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _load_texts_jsonl(path: str) -> list[tuple[str, str]]:
    items: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                items.append((obj["id"], obj["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed text line: {exc}") from exc
    return items


# --- subcommand implementations ----------------------------------------------


def cmd_validate_data(args) -> int:
    debunks, queries, judgments = corpus.load_corpus(args.debunks, args.queries, args.qrels)
    counts = judgments.counts()
    report = {
        "queries": len(queries),
        "debunks": len(debunks),
        "judgments": counts,
    }
    if args.splits:
        spec = corpus.load_split_spec(args.splits)
        train, validation, test = corpus.split(queries, judgments, spec)
        report["split"] = {
            "train": len(train.query_ids),
            "validation": len(validation.query_ids),
            "test": len(test.query_ids),
            "train_pool": len(train.query_ids) + len(validation.query_ids),
            "excluded_train_judgments": train.excluded_judgment_count,
        }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_index_lexical(args) -> int:
    debunks = corpus.load_debunks(args.debunks)
    translations = corpus.load_translations(args.translations) if args.translations else None
    index = lexical.build_index(debunks, use_translated=args.use_translated, translations=translations)
    lexical.save_index(index, args.out)
    _echo_config(args.out, "index-lexical", args)
    _progress(f"indexed {index.doc_count} docs -> {args.out}")
    print(json.dumps({"doc_count": index.doc_count, "avg_doc_length": index.avg_doc_length}))
    return EXIT_OK


def cmd_index_dense(args) -> int:
    matrix = dense.load_embeddings(args.embeddings)
    index = dense.DenseIndex(matrix)
    diag = index.diagnostics()
    diag.pop("zero_norm_ids")
    print(json.dumps(diag))
    return EXIT_OK


def cmd_embed_hash(args) -> int:
    if args.debunks:
        corp = corpus.load_debunks(args.debunks)
        items = [(d.id, corpus.doc_text(d)) for d in corp]
    elif args.queries:
        qs = corpus.load_queries(args.queries)
        items = [(q.id, q.text) for q in qs]
    else:
        items = _load_texts_jsonl(args.texts)
    if not items:
        raise DataError("nothing to embed")
    seed = _effective_seed(args.seed)
    matrix = dense.embed_texts(items, dim=args.dim, seed=seed)
    dense.save_embeddings(matrix, args.out)
    _echo_config(args.out, "embed-hash", args)
    _progress(f"embedded {len(items)} texts (dim {args.dim}) -> {args.out}")
    print(json.dumps({"count": len(items), "dim": args.dim, "seed": seed}))
    return EXIT_OK


def cmd_train(args) -> int:
    query_emb = dense.load_embeddings(args.query_emb)
    doc_emb = dense.load_embeddings(args.doc_emb)
    seed = _effective_seed(args.seed)
    config = trainer.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        warmup=args.warmup,
        weight_decay=args.weight_decay,
        seed=seed,
        init=args.init,
    )

    if args.pairs:
        pairs = _load_pairs(args.pairs)
        val_pairs = _load_pairs(args.validation_pairs) if args.validation_pairs else None
    else:
        if not (args.queries and args.qrels and args.splits):
            raise DataError("train needs --pairs or all of --queries/--qrels/--splits")
        debunks = corpus.load_debunks(args.debunks) if args.debunks else None
        if debunks is None:
            raise DataError("building pairs requires --debunks")
        queries = corpus.load_queries(args.queries)
        judgments = corpus.load_qrels(args.qrels, queries, debunks)
        spec = corpus.load_split_spec(args.splits)
        train_split, val_split, _ = corpus.split(queries, judgments, spec)
        pairs = corpus.build_train_pairs(
            train_split, judgments, debunks, args.negatives, seed=seed
        )
        val_pairs = corpus.build_train_pairs(
            val_split, judgments, debunks, args.negatives, seed=seed + 1
        )
        _progress(
            f"built {len(pairs)} train pairs, {len(val_pairs)} validation pairs "
            f"(excluded {train_split.excluded_judgment_count} leaked judgments)"
        )

    head, reports = trainer.train(query_emb, doc_emb, pairs, config, val_pairs)
    trainer.save_head(head, args.out, config)
    if args.log:
        trainer.save_training_log(reports, args.log)
    _echo_config(args.out, "train", args)
    last = reports[-1]
    print(json.dumps(last.to_dict()))
    return EXIT_OK


def _load_pairs(path: str) -> list[corpus.TrainPair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pairs.append(
                    corpus.TrainPair(obj["query_id"], obj["debunk_id"], float(obj["label"]))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed pair line: {exc}") from exc
    return pairs


def cmd_search(args) -> int:
    queries = corpus.load_queries(args.queries)
    if args.mode == "bm25":
        if not args.index:
            raise DataError("bm25 search requires --index")
        index = lexical.load_index(args.index)
        params = lexical.Bm25Params(k1=args.k1, b=args.b)
        q_trans = corpus.load_translations(args.query_translations) if args.query_translations else None
        stage1 = pipeline.Bm25Stage1(index, params, query_translations=q_trans)
    else:
        if not args.embeddings:
            raise DataError("dense search requires --embeddings")
        doc_matrix = dense.load_embeddings(args.embeddings)
        head = trainer.load_head(args.head) if args.head else None
        if head is not None:
            doc_matrix = dense.apply_projection(doc_matrix, head)
        if args.query_emb:
            q_matrix = dense.load_embeddings(args.query_emb)
            if head is not None:
                q_matrix = dense.apply_projection(q_matrix, head)
            stage1 = pipeline.DenseStage1(dense.DenseIndex(doc_matrix), query_vectors=q_matrix)
        else:
            seed = _effective_seed(args.seed)
            embed_fn = lambda text: dense.hash_embed(text, dim=args.dim, seed=seed)  # noqa: E731
            stage1 = pipeline.DenseStage1(
                dense.DenseIndex(doc_matrix), embed_fn=embed_fn, projection=head
            )

    results = [stage1.search(q, args.top_k) for q in queries]
    save_run(args.out, results)
    _echo_config(args.out, "search", args)
    _progress(f"searched {len(results)} queries -> {args.out}")
    return EXIT_OK


def cmd_rerank(args) -> int:
    run = load_run(args.run)
    queries = corpus.load_queries(args.queries)
    debunks = corpus.load_debunks(args.debunks)
    kind = pipeline.ScorerKind(args.scorer)
    depth = args.depth
    if kind in (pipeline.ScorerKind.EXTERNAL_PAIR, pipeline.ScorerKind.EXTERNAL_LISTWISE):
        depth = min(depth, args.max_candidates)  # cap external request size
    top_k = max((len(r) for r in run), default=1)
    config = pipeline.RerankConfig(
        top_k_stage1=max(top_k, depth), rerank_depth=depth, scorer=kind
    )

    conn = None
    if kind in (pipeline.ScorerKind.EXTERNAL_PAIR, pipeline.ScorerKind.EXTERNAL_LISTWISE):
        if not args.scorer_cmd:
            raise DataError(f"scorer {kind.value!r} requires --scorer-cmd")
        conn = pipeline.ScorerConnection(args.scorer_cmd.split(), timeout=args.timeout)
        scorer = pipeline.ExternalPairScorer(conn) if kind is pipeline.ScorerKind.EXTERNAL_PAIR else conn
    elif kind is pipeline.ScorerKind.ORACLE_QRELS:
        if not args.qrels:
            raise DataError("oracle scorer requires --qrels")
        scorer = pipeline.OracleQrelsScorer(metrics.Qrels.from_file(args.qrels))
    else:
        scorer = pipeline.PassThroughScorer()

    class _FixedStage1:
        def __init__(self, result):
            self._result = result
            self.tag = result.stage_tag or "run"

        def search(self, query, top_k):
            return self._result

    try:
        out = []
        for r in run:
            if r.query_id not in queries:
                raise DataError(f"run query {r.query_id!r} missing from --queries")
            out.append(
                pipeline.retrieve(
                    queries[r.query_id], _FixedStage1(r), config, scorer=scorer, corpus=debunks
                )
            )
    finally:
        if conn is not None:
            conn.close()

    save_run(args.out, out)
    _echo_config(args.out, "rerank", args)
    _progress(f"re-ranked {len(out)} queries (K={depth}) -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run = load_run(args.run)
    qrels = metrics.Qrels.from_file(args.qrels)
    languages = None
    if args.queries:
        qs = corpus.load_queries(args.queries)
        languages = {q.id: q.lang for q in qs}
    report = metrics.evaluate(run, qrels, languages)
    if args.table:
        _progress(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
        _echo_config(args.out, "evaluate", args)
    print(json.dumps({"mrr": report.mrr, "ndcg@1": report.ndcg1, "ndcg@5": report.ndcg5}))
    return EXIT_OK


def cmd_candidates(args) -> int:
    matrix = dense.load_embeddings(args.embeddings)
    pairs = analysis.candidate_pairs(matrix, depth=args.depth, threshold=args.threshold)
    analysis.save_candidate_pairs(pairs, args.out)
    _echo_config(args.out, "candidates", args)
    print(json.dumps({"pairs": len(pairs), "depth": args.depth, "threshold": args.threshold}))
    return EXIT_OK


def cmd_overlap(args) -> int:
    test_texts = [t for _, t in _load_texts_jsonl(args.test_texts)]
    train_texts = [t for _, t in _load_texts_jsonl(args.train_texts)]
    value = analysis.domain_overlap(test_texts, train_texts)
    print(json.dumps({"overlap": value}))
    return EXIT_OK


def cmd_kappa(args) -> int:
    table, _ = analysis.load_agreement_table(args.table)
    value = analysis.fleiss_kappa(table, args.raters)
    print(json.dumps({"kappa": value, "items": len(table), "raters": args.raters}))
    return EXIT_OK


def cmd_timegap(args) -> int:
    debunks, queries, judgments = corpus.load_corpus(args.debunks, args.queries, args.qrels)
    stats = analysis.time_gap_stats(judgments, queries, debunks, bin_days=args.bin_days)
    print(json.dumps(stats.to_dict()))
    return EXIT_OK


def cmd_bench(args) -> int:
    debunks = corpus.load_debunks(args.debunks)
    queries = corpus.load_queries(args.queries)
    qrels = metrics.Qrels.from_file(args.qrels) if args.qrels else None
    seed = _effective_seed(args.seed)

    if args.mode == "bm25":
        index = lexical.build_index(debunks)
        stage1 = pipeline.Bm25Stage1(index, lexical.Bm25Params(k1=args.k1, b=args.b))
        run_query = lambda q: stage1.search(q, args.top_k)  # noqa: E731
    else:
        items = [(d.id, corpus.doc_text(d)) for d in debunks]
        matrix = dense.embed_texts(items, dim=args.dim, seed=seed)
        index = dense.DenseIndex(matrix)
        embed_fn = lambda text: dense.hash_embed(text, dim=args.dim, seed=seed)  # noqa: E731
        stage1 = pipeline.DenseStage1(index, embed_fn=embed_fn)
        if args.mode == "dense":
            run_query = lambda q: stage1.search(q, args.top_k)  # noqa: E731
        else:  # dense+passthrough: full multistage pipeline with identity re-ranker
            config = pipeline.RerankConfig(
                top_k_stage1=args.top_k, rerank_depth=min(args.depth, args.top_k),
                scorer=pipeline.ScorerKind.PASS_THROUGH,
            )
            run_query = lambda q: pipeline.retrieve(q, stage1, config, corpus=debunks)  # noqa: E731

    report = analysis.latency_bench(
        run_query, queries, warmup=args.warmup, repeats=args.repeats,
        qrels=qrels, model_tag=args.mode,
    )
    out = report.to_dict()
    if not args.samples:
        out.pop("samples")
    print(json.dumps(out))
    return EXIT_OK


# --- parser wiring ------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="xdnr", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="parallelism bound (default 1, deterministic)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("validate-data", cmd_validate_data, "load corpus files and report counts")
    p.add_argument("--debunks", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--splits")

    p = add("index-lexical", cmd_index_lexical, "build and persist the BM25 inverted index")
    p.add_argument("--debunks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--translations")
    p.add_argument("--use-translated", action="store_true")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)

    p = add("index-dense", cmd_index_dense, "validate an embedding file and report diagnostics")
    p.add_argument("--embeddings", required=True)

    p = add("embed-hash", cmd_embed_hash, "deterministic hash embeddings for texts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--debunks")
    src.add_argument("--queries")
    src.add_argument("--texts")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "fine-tune the shared projection head")
    p.add_argument("--query-emb", required=True)
    p.add_argument("--doc-emb", required=True)
    p.add_argument("--pairs")
    p.add_argument("--validation-pairs")
    p.add_argument("--queries")
    p.add_argument("--qrels")
    p.add_argument("--splits")
    p.add_argument("--debunks")
    p.add_argument("--negatives", type=int, default=10)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=4e-5)
    p.add_argument("--warmup", type=float, default=0.1)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--init", default="auto", choices=["auto", "identity", "uniform"])
    p.add_argument("--out", required=True)
    p.add_argument("--log")

    p = add("search", cmd_search, "stage-1 retrieval over all queries")
    p.add_argument("--mode", required=True, choices=["bm25", "dense"])
    p.add_argument("--queries", required=True)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--index")
    p.add_argument("--query-translations")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--embeddings")
    p.add_argument("--query-emb")
    p.add_argument("--head")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)

    p = add("rerank", cmd_rerank, "re-rank the top-K of an existing run")
    p.add_argument("--run", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--debunks", required=True)
    p.add_argument("--scorer", required=True,
                   choices=[k.value for k in pipeline.ScorerKind])
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--qrels")
    p.add_argument("--scorer-cmd")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-candidates", type=int, default=100)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--queries")
    p.add_argument("--table", action="store_true")
    p.add_argument("--out")

    p = add("candidates", cmd_candidates, "claim-matching candidate generation")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--depth", type=int, default=7)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--out", required=True)

    p = add("overlap", cmd_overlap, "weighted-Jaccard domain overlap of two corpora")
    p.add_argument("--test-texts", required=True)
    p.add_argument("--train-texts", required=True)

    p = add("kappa", cmd_kappa, "Fleiss kappa from an annotation counts CSV")
    p.add_argument("--table", required=True)
    p.add_argument("--raters", type=int, required=True)

    p = add("timegap", cmd_timegap, "publication gap stats for positive pairs")
    p.add_argument("--debunks", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--bin-days", type=int, default=30)

    p = add("bench", cmd_bench, "retrieval latency benchmark")
    p.add_argument("--mode", required=True, choices=["bm25", "dense", "dense+passthrough"])
    p.add_argument("--debunks", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels")
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--samples", action="store_true", help="include raw samples in the report")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ProtocolError, ScorerError) as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except (DataError, XdnrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
