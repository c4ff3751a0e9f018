"""Command-line interface for the full pipeline.

Subcommands: generate, ingest, build-ontology, build-kg, train-relext,
eval-relext, train-qgen, eval-qgen, eval-triage, serve, bench, stats.
Settings resolve as flags > TRIAGE_* environment variables > --config file >
defaults; every command exits 0 on success and 1 with a machine-parsable
"error: <Class>: <message>" line otherwise (argparse usage errors exit 2).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from . import corpus as corpus_mod
from . import kg as kg_mod
from . import qgen as qgen_mod
from . import relext as relext_mod
from . import triage as triage_mod
from .errors import TriageKitError
from .ontology import Ontology, build_ontology
from .textproc import TextPipeline

logger = logging.getLogger("triagekit")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _resolve(args: argparse.Namespace, config: dict, name: str, default=None, cast=None):
    """flags > TRIAGE_<NAME> env > config file > default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is None:
        value = os.environ.get(f"TRIAGE_{name.upper().replace('-', '_')}")
    if value is None:
        value = config.get(name)
    if value is None:
        value = default
    if value is not None and cast is not None:
        value = cast(value)
    return value


def _corpus_sha(records) -> str:
    return hashlib.sha1(corpus_mod.dumps_corpus(records).encode("utf-8")).hexdigest()


def _write_json(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# -- commands ----------------------------------------------------------------


def cmd_generate(args, config):
    profile = corpus_mod.GeneratorProfile.load(_resolve(args, config, "profile"))
    n = _resolve(args, config, "n", 1000, int)
    seed = _resolve(args, config, "seed", 7, int)
    records = corpus_mod.generate_corpus(profile, n, seed)
    corpus_mod.save_corpus(records, args.out)
    print(f"wrote {len(records)} records to {args.out} (sha1 {_corpus_sha(records)})")


def cmd_ingest(args, config):
    pipe = TextPipeline.default()
    records = corpus_mod.load_corpus(args.corpus, pipe.dictionary)
    out_records = []
    changed = 0
    for record in records:
        extracted = tuple(
            corpus_mod.CaseMention(c, polarity, location)
            for c, polarity, location in pipe.extract_mentions(record.text)
        )

        def key(mentions):
            return sorted((m.concept_id, m.polarity, m.body_location or "") for m in mentions)

        if key(extracted) != key(record.mentions):
            changed += 1
        out_records.append(
            corpus_mod.CaseRecord(
                id=record.id,
                age=record.age,
                gender=record.gender,
                mentions=extracted,
                text=record.text,
                label=record.label,
            )
        )
    corpus_mod.save_corpus(out_records, args.out)
    print(
        f"ingested {len(out_records)} records to {args.out}; "
        f"{changed} differed from stored annotations"
    )


def cmd_build_ontology(args, config):
    pipe = TextPipeline.default()
    records = corpus_mod.load_corpus(args.corpus, pipe.dictionary)
    ontology = build_ontology(records, pipe.dictionary)
    ontology.save(args.out)
    print(
        f"ontology: {len(ontology.concepts)} concepts, "
        f"{len(ontology.child_of)} child_of edges -> {args.out}"
    )


def cmd_build_kg(args, config):
    pipe = TextPipeline.default()
    records = corpus_mod.load_corpus(args.corpus, pipe.dictionary)
    ontology = Ontology.load(args.ontology)
    graph = kg_mod.build_graph(records, ontology)
    if args.learn_weights:
        graph.weights = kg_mod.learn_weights(graph, records, ontology)
    kg_mod.save_snapshot(graph, args.out)
    print(graph.stats())
    print(f"snapshot -> {args.out}")


def cmd_train_relext(args, config):
    n = _resolve(args, config, "n", 10000, int)
    seed = _resolve(args, config, "seed", 7, int)
    epochs = _resolve(args, config, "epochs", 5, int)
    sentences = relext_mod.generate_relation_corpus(n, seed)
    sentences = relext_mod.balance_dataset(sentences, seed=seed)
    train_set, val_set, test_set = _split3(sentences, (0.6, 0.1, 0.3), seed)
    cfg = relext_mod.CnnConfig(epochs=epochs, seed=seed)
    started = time.time()
    params, vocab = relext_mod.train(train_set, val_set, cfg)
    elapsed = time.time() - started
    relext_mod.save_checkpoint(params, args.out)
    Path(args.vocab_out).write_text(json.dumps(vocab.to_dict()), encoding="utf-8")
    report = relext_mod.evaluate(params, test_set, vocab)
    print(f"trained in {elapsed:.1f}s -> {args.out}")
    for cls, metrics in report.items():
        print(
            f"  {cls:16s} P={metrics['precision']:.3f} R={metrics['recall']:.3f} "
            f"F={metrics['f_score']:.3f}"
        )


def cmd_eval_relext(args, config):
    params = relext_mod.load_checkpoint(args.model)
    vocab = relext_mod.Vocab.from_dict(json.loads(Path(args.vocab).read_text(encoding="utf-8")))
    n = _resolve(args, config, "n", 2000, int)
    seed = _resolve(args, config, "seed", 99, int)
    test_set = relext_mod.generate_relation_corpus(n, seed)
    report = relext_mod.evaluate(params, test_set, vocab)
    payload = {"n": n, "seed": seed, "report": report}
    _write_json(args.out, payload)
    for cls, metrics in report.items():
        print(
            f"{cls:16s} P={metrics['precision']:.4f} R={metrics['recall']:.4f} "
            f"F={metrics['f_score']:.4f} support={metrics['support']}"
        )


def _split3(items, ratios, seed):
    import math
    import random as random_mod

    n = len(items)
    raw = [r * n for r in ratios]
    sizes = [int(math.floor(x)) for x in raw]
    rest = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:rest]:
        sizes[i] += 1
    indices = list(range(n))
    random_mod.Random(seed).shuffle(indices)
    out = []
    start = 0
    for size in sizes:
        out.append([items[i] for i in indices[start : start + size]])
        start += size
    return out


def cmd_train_qgen(args, config):
    pipe = TextPipeline.default()
    records = corpus_mod.load_corpus(args.corpus, pipe.dictionary)
    ontology = Ontology.load(args.ontology)
    seed = _resolve(args, config, "seed", 7, int)
    epochs = _resolve(args, config, "epochs", 20, int)
    train_split, val_split, _test = corpus_mod.split_corpus(records, [0.7, 0.1, 0.2], seed)
    predictor, history = qgen_mod.train_masked_predictor(
        train_split,
        val_split,
        ontology,
        qgen_mod.PredictorConfig(epochs=epochs, seed=seed),
    )
    qgen_mod.save_predictor(predictor, args.out)
    last = history[-1] if history else {}
    print(
        f"masked predictor: vocab {len(predictor.vocab)}, epochs {epochs}, "
        f"final val_loss {last.get('val_loss', float('nan')):.4f} -> {args.out}"
    )


def cmd_eval_qgen(args, config):
    pipe = TextPipeline.default()
    records = corpus_mod.load_corpus(args.corpus, pipe.dictionary)
    ontology = Ontology.load(args.ontology)
    seed = _resolve(args, config, "seed", 7, int)
    epochs = _resolve(args, config, "epochs", 20, int)
    results, metadata = evaluate_question_methods(records, ontology, seed=seed, epochs=epochs)
    payload = {"metadata": metadata, "results": results}
    _write_json(args.out, payload)
    ks = sorted({k for accs in results.values() for k in accs})
    header = "method".ljust(10) + "".join(f"Acc@{k:<6d}" for k in ks)
    print(header)
    for method, accs in results.items():
        print(method.ljust(10) + "".join(f"{accs[k]:<10.4f}" for k in ks))


def evaluate_question_methods(records, ontology, *, seed: int, epochs: int = 30, ks=(1, 5, 10)):
    """Shared by eval-qgen and the acceptance suite: split, train the masked
    predictor, and compare it with the five rankers on the held-out split."""
    train_split, val_split, test_split = corpus_mod.split_corpus(records, [0.7, 0.1, 0.2], seed)
    graph = kg_mod.build_graph(train_split, ontology)
    predictor, _history = qgen_mod.train_masked_predictor(
        train_split,
        val_split,
        ontology,
        qgen_mod.PredictorConfig(epochs=epochs, learning_rate=3e-3, seed=seed),
    )
    frequencies = qgen_mod.concept_frequencies(train_split, ontology)
    examples, skipped = qgen_mod.build_masked_eval(test_split, ontology, frequencies, seed + 1)
    methods: list[tuple[str, object]] = [("NN", predictor)]
    for ranker_cls in qgen_mod.ALL_RANKERS:
        methods.append((ranker_cls.name, qgen_mod.RankerMethod(graph, ranker_cls())))
    results = {}
    for name, method in methods:
        results[name] = qgen_mod.eval_acc_at_k(method, examples, ks)
    metadata = {
        "seed": seed,
        "corpus_sha1": _corpus_sha(records),
        "train": len(train_split),
        "eval_examples": len(examples),
        "skipped_single_concept": skipped,
        "vocabulary": len(predictor.vocab),
    }
    return results, metadata


def cmd_eval_triage(args, config):
    pipe = TextPipeline.default()
    graph = kg_mod.load_snapshot(args.graph)
    ontology = Ontology.load(args.ontology)
    truth = corpus_mod.load_corpus(args.truth, pipe.dictionary)
    engine = triage_mod.TriageEngine(graph, ontology)
    metrics = triage_mod.evaluate_recommendations(engine, truth)
    _write_json(args.out, metrics.to_dict())
    print(metrics.report())


def cmd_serve(args, config):
    from .service import ServiceConfig, serve

    service_config = ServiceConfig(
        graph_path=args.graph,
        ontology_path=args.ontology,
        workers=_resolve(args, config, "workers", 1, int),
        session_ttl=_resolve(args, config, "session_ttl", 1800, float),
        host=_resolve(args, config, "host", "127.0.0.1"),
        port=_resolve(args, config, "port", 8321, int),
    )
    serve(service_config)


def cmd_bench(args, config):
    ontology = Ontology.load(args.ontology)
    graph = kg_mod.load_snapshot(args.graph)
    observed = graph.observed_concepts()
    concepts = sorted(
        c.concept_id
        for c in ontology.concepts.values()
        if c.concept_id in observed
        and c.semantic_type in ("symptom", "disease")
        and "red_flag" not in c.flags
    )
    workers = tuple(int(w) for w in str(_resolve(args, config, "workers", "1,2,4")).split(","))
    bench_config = bench_mod.BenchConfig(
        graph_path=args.graph,
        ontology_path=args.ontology,
        workers=workers,
        concurrency=_resolve(args, config, "concurrency", 30, int),
        sessions_per_run=_resolve(args, config, "sessions", 120, int),
        seed=_resolve(args, config, "seed", 7, int),
        port=_resolve(args, config, "port", 8441, int),
    )
    report = bench_mod.run_bench(bench_config, concepts)
    bench_mod.save_report(report, args.out)
    for entry in report["reports"]:
        print(
            f"workers={entry['worker_count']} mean={entry['mean_ms']:.1f}ms "
            f"p50={entry['p50_ms']:.1f}ms p99={entry['p99_ms']:.1f}ms "
            f"throughput={entry['throughput_rps']:.1f} req/s"
        )
    for pair, eff in report["scaling_efficiency_per_doubling"].items():
        print(f"efficiency {pair}: {eff:.2f}")
    print(f"report -> {args.out}")


def cmd_stats(args, config):
    graph = kg_mod.load_snapshot(args.graph)
    print(graph.stats())


# -- argument wiring ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triage", description=__doc__)
    parser.add_argument("--config", help="JSON config file with per-command defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic corpus")
    p.add_argument("--profile")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("ingest", help="re-extract mentions from corpus free text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("build-ontology", help="build the ontology from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_ontology)

    p = sub.add_parser("build-kg", help="build the knowledge graph snapshot")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--learn-weights", action="store_true")
    p.set_defaults(fn=cmd_build_kg)

    p = sub.add_parser("train-relext", help="train the relation-extraction CNN")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-out", required=True)
    p.set_defaults(fn=cmd_train_relext)

    p = sub.add_parser("eval-relext", help="evaluate a relation-extraction checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval_relext)

    p = sub.add_parser("train-qgen", help="train the masked-concept predictor")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_qgen)

    p = sub.add_parser("eval-qgen", help="compare question-ranking methods (Acc@k)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval_qgen)

    p = sub.add_parser("eval-triage", help="replay ground-truth cases and report metrics")
    p.add_argument("--graph", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval_triage)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--graph", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("bench", help="latency/worker-scaling benchmark")
    p.add_argument("--graph", required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--workers")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--sessions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--port", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("stats", help="print node/edge counts of a snapshot")
    p.add_argument("--graph", required=True)
    p.set_defaults(fn=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("httpx").setLevel(logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _load_config_file(args.config)
    try:
        args.fn(args, config)
    except TriageKitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFoundError: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
