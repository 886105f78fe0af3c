"""Command line entry points.

One executable, subcommand per pipeline stage: embed texts, train the
classifier, fit the scoring dictionary, generate intent guidelines, build
the fine-tuning set, classify, serve over HTTP, benchmark a dataset, and
re-render saved run output as reports. Every flag shadows a config key, so
``--config run.toml`` plus a couple of overrides is the normal invocation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import finetune, gate, scoring
from .backends import HttpEmbedBackend, HttpGenerateBackend, MockEmbedBackend, MockGenerateBackend
from .domain import (
    EmbeddedUtterance,
    LabeledDataset,
    load_catalog,
    load_dataset,
    normalize_embedding,
    save_catalog,
    save_dataset,
)
from .errors import GateError
from .evaluation import FORMATTERS, evaluate, routing_analysis
from .pipeline import (
    MOCK,
    Pipeline,
    PipelineConfig,
    apply_overrides,
    load_config,
    routing_analysis_csv,
    run_benchmark,
    save_responses_jsonl,
)

EMBED_BATCH = 64


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        name: getattr(args, name)
        for name in (
            "catalog_path",
            "classifier_path",
            "dictionary_path",
            "template_path",
            "embed_backend",
            "generate_backend",
            "strategy",
            "score_method",
            "k",
            "oos_token",
            "timeout",
            "concurrency",
            "on_backend_error",
            "max_tokens",
            "temperature",
        )
        if hasattr(args, name)
    }
    return apply_overrides(config, **overrides)


def _add_config_flags(parser: argparse.ArgumentParser, *names: str) -> None:
    parser.add_argument("--config", help="TOML config file")
    flags = {
        "catalog_path": ("--catalog", str, "intent catalog JSON"),
        "classifier_path": ("--classifier", str, "classifier model JSON"),
        "dictionary_path": ("--dictionary", str, "scoring dictionary JSON"),
        "template_path": ("--template", str, "gate prompt template file"),
        "embed_backend": ("--embed-backend", str, "embed backend URL or 'mock'"),
        "generate_backend": ("--generate-backend", str, "generate backend URL or 'mock'"),
        "strategy": ("--strategy", str, "routing strategy name or tau=<float>"),
        "score_method": ("--score-method", str, "nnk, entropy, or energy"),
        "k": ("--k", int, "candidate count for the gate"),
        "oos_token": ("--oos-token", str, "out-of-scope label token"),
        "timeout": ("--timeout", float, "backend timeout in seconds"),
        "concurrency": ("--concurrency", int, "max in-flight generate calls"),
        "on_backend_error": ("--on-backend-error", str, "fail or degrade"),
        "max_tokens": ("--max-tokens", int, "generation token budget"),
        "temperature": ("--temperature", float, "generation temperature"),
    }
    for name in names:
        flag, typ, help_text = flags[name]
        parser.add_argument(flag, dest=name, type=typ, default=None, help=help_text)


def _embedder_for(config: PipelineConfig, dim: int):
    if config.embed_backend == MOCK:
        return MockEmbedBackend(dim=dim)
    return HttpEmbedBackend(config.embed_backend, timeout=config.timeout)


def _generator_for(config: PipelineConfig):
    if config.generate_backend == MOCK:
        return MockGenerateBackend()
    return HttpGenerateBackend(config.generate_backend, timeout=config.timeout)


def cmd_embed(args: argparse.Namespace) -> int:
    config = _build_config(args)
    dataset = load_dataset(args.input, normalize=False)
    pending = [
        (i, utt) for i, (utt, _) in enumerate(dataset)
        if args.force or utt.embedding is None
    ]
    items = [(utt, label) for utt, label in dataset]
    if pending:
        if config.embed_backend == MOCK and args.dim is None:
            dim = dataset.dim if dataset.dim is not None else 16
        else:
            dim = args.dim or 16
        embedder = _embedder_for(config, dim)
        for start in range(0, len(pending), EMBED_BATCH):
            chunk = pending[start : start + EMBED_BATCH]
            matrix = embedder.embed([utt.text for _, utt in chunk])
            for (i, utt), row in zip(chunk, matrix):
                items[i] = (
                    EmbeddedUtterance(utt.id, utt.text, normalize_embedding(row)),
                    items[i][1],
                )
    save_dataset(LabeledDataset(items), args.output)
    print(f"embedded {len(pending)} of {len(items)} utterances -> {args.output}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _build_config(args)
    catalog = load_catalog(config.catalog_path)
    dataset = load_dataset(args.input)
    train_config = clf.TrainingConfig(
        gamma=args.gamma,
        alpha=args.alpha,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
    )
    model = clf.train(dataset, catalog, train_config)
    clf.save_model(model, args.output)
    accuracy = clf.training_accuracy(model, dataset)
    print(
        f"trained on {len(dataset)} utterances, {model.n_classes} intents; "
        f"final loss {model.meta['final_loss']:.6f}, train accuracy {accuracy:.4f} -> {args.output}"
    )
    return 0


def cmd_fit_scorer(args: argparse.Namespace) -> int:
    config = _build_config(args)
    catalog = load_catalog(config.catalog_path)
    dataset = load_dataset(args.input)
    n_atoms = args.atoms or scoring.default_n_atoms(len(dataset), len(catalog))
    dictionary = scoring.fit_nnk(
        dataset.embedding_matrix(),
        n_atoms=n_atoms,
        neighbors_K=args.neighbors,
        iterations=args.iters,
        seed=args.seed,
    )
    scoring.save_dictionary(dictionary, args.output)
    print(
        f"fit {n_atoms} atoms on {len(dataset)} embeddings, "
        f"mean residual {dictionary.meta['final_mean_error']:.6f} -> {args.output}"
    )
    return 0


def cmd_gen_guidelines(args: argparse.Namespace) -> int:
    config = _build_config(args)
    catalog = load_catalog(config.catalog_path)
    dataset = load_dataset(args.input, normalize=False)
    template = gate.load_template(args.guideline_template) if args.guideline_template else None
    generator = _generator_for(config)
    updated = gate.generate_catalog_guidelines(generator, catalog, dataset, template)
    save_catalog(updated, args.output)
    print(f"wrote guidelines for {len(updated)} intents -> {args.output}")
    return 0


def cmd_build_ftset(args: argparse.Namespace) -> int:
    config = _build_config(args)
    catalog = load_catalog(config.catalog_path)
    dataset = load_dataset(args.input)
    model = clf.load_model(config.classifier_path)
    subset = finetune.select_examples(dataset, args.per_intent, args.seed, catalog)
    examples = finetune.build_ftset(
        subset, model, catalog, config.k, args.seed,
        force_gold_in_candidates=args.force_gold,
    )
    template = gate.load_template(config.template_path) if config.template_path else None
    paths = finetune.write_epochs(
        examples, args.epochs, args.seed, catalog, args.output, template
    )
    absent = finetune.gold_absent_positives(examples)
    print(
        f"built {len(examples)} examples from {len(subset)} utterances "
        f"({absent} positives without gold in candidates); wrote {len(paths)} epoch files"
    )
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    config = _build_config(args)
    pipeline = Pipeline.from_config(config)
    if args.text is not None:
        response = pipeline.classify_text(args.text)
        print(json.dumps(response.to_dict(), indent=2, ensure_ascii=False))
        return 0
    dataset = load_dataset(args.input)
    responses = []
    for utt, _ in dataset:
        if utt.embedding is not None:
            responses.append(
                pipeline.classify_embedding(utt.embedding, text=utt.text, utterance_id=utt.id)
            )
        else:
            responses.append(pipeline.classify_text(utt.text, utterance_id=utt.id))
    save_responses_jsonl(responses, args.output)
    print(f"classified {len(responses)} utterances -> {args.output}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = _build_config(args)
    app = create_app(Pipeline.from_config(config))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    config = _build_config(args)
    dataset = load_dataset(args.input)
    base = Pipeline.from_config(config)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]

    def factory(strategy: str) -> Pipeline:
        return Pipeline(
            dataclasses.replace(config, strategy=strategy),
            base.catalog,
            base.classifier,
            base.dictionary,
            base.embedder,
            base.generator,
            base.template,
        )

    results, analysis = run_benchmark(factory, dataset, strategies)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, result in results.items():
        (outdir / f"report-{name}.json").write_text(
            FORMATTERS["json"](result.report) + "\n", encoding="utf-8"
        )
        (outdir / f"report-{name}.txt").write_text(
            FORMATTERS["text"](result.report), encoding="utf-8"
        )
        save_responses_jsonl(result.responses, outdir / f"responses-{name}.jsonl")
        print(
            f"{name}: micro-F1 {result.report.micro_f1:.4f}, "
            f"OOS recall {result.report.oos_recall:.4f}"
        )
    (outdir / "routing_analysis.csv").write_text(
        routing_analysis_csv(analysis), encoding="utf-8"
    )
    print(f"wrote reports for {len(results)} strategies -> {outdir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _build_config(args)
    catalog = load_catalog(config.catalog_path)
    dataset = load_dataset(args.input, normalize=False)
    gold_by_id = {utt.id: label for utt, label in dataset}
    responses = []
    with open(args.responses, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                responses.append(json.loads(line))
    golds, predictions, top1s, scores = [], [], [], []
    for record in responses:
        utt_id = record.get("utterance_id")
        if utt_id not in gold_by_id:
            raise GateError(f"response id {utt_id!r} not present in the dataset")
        golds.append(gold_by_id[utt_id])
        predictions.append(record["intent"])
        top1s.append(record["top_k"][0]["intent"])
        scores.append(float(record["uncertainty"]))
    report = evaluate(golds, predictions, catalog)
    sys.stdout.write(FORMATTERS[args.format](report))
    if args.analysis_csv:
        analysis = routing_analysis(golds, top1s, scores, oos_token=catalog.oos_token)
        Path(args.analysis_csv).write_text(routing_analysis_csv(analysis), encoding="utf-8")
        print(f"routing analysis -> {args.analysis_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentgate",
        description="Uncertainty-routed intent classification with an LLM fallback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="attach backend embeddings to a dataset")
    _add_config_flags(p, "embed_backend", "timeout")
    p.add_argument("--input", required=True, help="dataset JSONL")
    p.add_argument("--output", required=True, help="embedded dataset JSONL")
    p.add_argument("--dim", type=int, default=None, help="mock backend dimension")
    p.add_argument("--force", action="store_true", help="re-embed utterances that already have embeddings")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="train the softmax intent classifier")
    _add_config_flags(p, "catalog_path")
    p.add_argument("--input", required=True, help="embedded in-scope dataset JSONL")
    p.add_argument("--output", required=True, help="model JSON path")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=None, help="fixed focal alpha; omit for inverse-frequency")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-scorer", help="fit the reconstruction dictionary")
    _add_config_flags(p, "catalog_path")
    p.add_argument("--input", required=True, help="embedded in-scope dataset JSONL")
    p.add_argument("--output", required=True, help="dictionary JSON path")
    p.add_argument("--atoms", type=int, default=None, help="dictionary size; default scales with the catalog")
    p.add_argument("--neighbors", type=int, default=10)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_scorer)

    p = sub.add_parser("gen-guidelines", help="generate intent guidelines with the backend")
    _add_config_flags(p, "catalog_path", "generate_backend", "timeout")
    p.add_argument("--input", required=True, help="dataset JSONL with example utterances")
    p.add_argument("--output", required=True, help="catalog JSON path to write")
    p.add_argument("--guideline-template", default=None, help="override the guideline prompt template")
    p.set_defaults(func=cmd_gen_guidelines)

    p = sub.add_parser("build-ftset", help="build the gate fine-tuning dataset")
    _add_config_flags(p, "catalog_path", "classifier_path", "template_path", "k")
    p.add_argument("--input", required=True, help="embedded in-scope dataset JSONL")
    p.add_argument("--output", required=True, help="output base path; epoch files get .epochN.jsonl")
    p.add_argument("--per-intent", type=int, default=5)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force-gold", action="store_true", help="swap the gold label into positive candidates")
    p.set_defaults(func=cmd_build_ftset)

    p = sub.add_parser("classify", help="classify one text or a dataset")
    _add_config_flags(
        p,
        "catalog_path", "classifier_path", "dictionary_path", "template_path",
        "embed_backend", "generate_backend", "strategy", "score_method", "k",
        "oos_token", "timeout", "on_backend_error", "max_tokens", "temperature",
    )
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="single utterance")
    group.add_argument("--input", help="dataset JSONL to classify")
    p.add_argument("--output", default="responses.jsonl", help="responses JSONL (dataset mode)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("serve", help="run the HTTP service")
    _add_config_flags(
        p,
        "catalog_path", "classifier_path", "dictionary_path", "template_path",
        "embed_backend", "generate_backend", "strategy", "score_method", "k",
        "oos_token", "timeout", "concurrency", "on_backend_error", "max_tokens",
        "temperature",
    )
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8100)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="benchmark a dataset under several strategies")
    _add_config_flags(
        p,
        "catalog_path", "classifier_path", "dictionary_path", "template_path",
        "embed_backend", "generate_backend", "score_method", "k",
        "oos_token", "timeout", "on_backend_error", "max_tokens", "temperature",
    )
    p.add_argument("--input", required=True, help="gold dataset JSONL")
    p.add_argument("--strategies", default="classifier_only,low,moderate,high,full")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="score saved responses against a gold dataset")
    _add_config_flags(p, "catalog_path")
    p.add_argument("--input", required=True, help="gold dataset JSONL")
    p.add_argument("--responses", required=True, help="responses JSONL from classify or bench")
    p.add_argument("--format", choices=sorted(FORMATTERS), default="text")
    p.add_argument("--analysis-csv", default=None, help="also write routing analysis CSV here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
