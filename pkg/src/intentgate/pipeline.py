"""End-to-end classification pipeline and its configuration.

The flow per utterance: embed, normalize, classifier top-k, uncertainty
score, threshold routing, and on escalation one generation call that picks a
candidate or the out-of-scope token. Everything the pipeline holds after
construction is immutable, so one instance can serve concurrent requests.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # runtime is allowed to predate 3.11
    import tomli as tomllib

from .backends import (
    DEFAULT_TIMEOUT,
    EmbedBackend,
    GenerateBackend,
    HttpEmbedBackend,
    HttpGenerateBackend,
    MockEmbedBackend,
    MockGenerateBackend,
)
from .classifier import ClassifierModel, load_model, predict_topk
from .domain import IntentCatalog, LabeledDataset, load_catalog, normalize_embedding
from .errors import BackendError, ConfigError, DataError
from .evaluation import MetricsReport, evaluate, routing_analysis
from .gate import DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, decide, load_template
from .routing import RoutingStrategy, resolve_strategy, route
from .scoring import SCORE_METHODS, NnkDictionary, load_dictionary, score

SOURCE_CLASSIFIER = "classifier"
SOURCE_LLM = "llm"

MOCK = "mock"

ERROR_POLICY_FAIL = "fail"
ERROR_POLICY_DEGRADE = "degrade"


def _check_backend_spec(name: str, value: str) -> None:
    if value == MOCK or value.startswith(("http://", "https://")):
        return
    raise ConfigError(f"{name} backend must be {MOCK!r} or an http(s) URL, got {value!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """Static pipeline wiring; every field has a CLI flag of the same name."""

    catalog_path: Optional[str] = None
    classifier_path: Optional[str] = None
    dictionary_path: Optional[str] = None
    template_path: Optional[str] = None
    embed_backend: str = MOCK
    generate_backend: str = MOCK
    strategy: str = "moderate"
    score_method: str = "nnk"
    k: int = 3
    oos_token: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT
    concurrency: int = 8
    on_backend_error: str = ERROR_POLICY_DEGRADE
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.score_method not in SCORE_METHODS:
            raise ConfigError(f"unknown score method: {self.score_method!r}")
        if self.on_backend_error not in (ERROR_POLICY_FAIL, ERROR_POLICY_DEGRADE):
            raise ConfigError(
                f"on_backend_error must be {ERROR_POLICY_FAIL!r} or {ERROR_POLICY_DEGRADE!r}"
            )
        _check_backend_spec("embed", self.embed_backend)
        _check_backend_spec("generate", self.generate_backend)
        resolve_strategy(self.strategy)


_CONFIG_SCHEMA = {
    "backends": {"embed": "embed_backend", "generate": "generate_backend", "timeout": "timeout"},
    "routing": {"strategy": "strategy", "score": "score_method"},
    "models": {
        "catalog": "catalog_path",
        "classifier": "classifier_path",
        "dictionary": "dictionary_path",
        "template": "template_path",
    },
    "gate": {
        "k": "k",
        "max_tokens": "max_tokens",
        "temperature": "temperature",
        "on_backend_error": "on_backend_error",
    },
    "service": {"concurrency": "concurrency", "oos_token": "oos_token"},
}


def load_config(path) -> PipelineConfig:
    """Read a TOML config file; unknown sections or keys are an error."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    kwargs = {}
    for section, entries in raw.items():
        if section not in _CONFIG_SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if not isinstance(entries, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        schema = _CONFIG_SCHEMA[section]
        for key, value in entries.items():
            if key not in schema:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kwargs[schema[key]] = value
    return PipelineConfig(**kwargs)


def apply_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    """Return a config with every non-None override applied."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **updates) if updates else config


@dataclass(eq=False)
class ClassifyResponse:
    """One pipeline decision with full provenance.

    Construction enforces the two contract invariants: when the source is
    the classifier the intent is its top-1, and an out-of-scope verdict can
    only come from the generation path.
    """

    intent: str
    oos: bool
    source: str
    uncertainty: float
    score_method: str
    strategy: str
    tau: Optional[float]
    escalated: bool
    top_k: tuple[tuple[str, float], ...]
    timings_ms: dict[str, float] = field(default_factory=dict)
    degraded: bool = False
    parse_path: Optional[str] = None
    utterance_id: Optional[str] = None

    def __post_init__(self):
        if self.source not in (SOURCE_CLASSIFIER, SOURCE_LLM):
            raise DataError(f"bad source: {self.source!r}")
        if self.source == SOURCE_CLASSIFIER and self.intent != self.top_k[0][0]:
            raise DataError("classifier-sourced intent must be the top-1 prediction")
        if self.oos and self.source != SOURCE_LLM:
            raise DataError("an out-of-scope verdict can only come from the llm source")

    def to_dict(self) -> dict:
        return {
            "intent": self.intent,
            "oos": self.oos,
            "source": self.source,
            "uncertainty": self.uncertainty,
            "score_method": self.score_method,
            "strategy": self.strategy,
            "tau": self.tau,
            "escalated": self.escalated,
            "top_k": [{"intent": name, "probability": p} for name, p in self.top_k],
            "timings_ms": dict(self.timings_ms),
            "degraded": self.degraded,
            "parse_path": self.parse_path,
        }


def _ms(t0: float, t1: float) -> float:
    return (t1 - t0) * 1000.0


class Pipeline:
    """Immutable bundle of artifacts plus the per-utterance decision flow."""

    def __init__(
        self,
        config: PipelineConfig,
        catalog: IntentCatalog,
        classifier: ClassifierModel,
        dictionary: Optional[NnkDictionary],
        embedder: EmbedBackend,
        generator: GenerateBackend,
        template: Optional[str] = None,
    ):
        if tuple(classifier.classes) != catalog.names:
            raise ConfigError("classifier classes do not match the catalog")
        if config.oos_token is not None and config.oos_token != catalog.oos_token:
            raise ConfigError(
                f"config oos_token {config.oos_token!r} contradicts catalog {catalog.oos_token!r}"
            )
        if config.score_method == "nnk":
            if dictionary is None:
                raise ConfigError("nnk scoring requires a dictionary")
            if dictionary.dim != classifier.dim:
                raise ConfigError(
                    f"dictionary dim {dictionary.dim} does not match classifier dim {classifier.dim}"
                )
        if config.k > classifier.n_classes:
            raise ConfigError(
                f"k={config.k} exceeds the {classifier.n_classes} catalog intents"
            )
        self.config = config
        self.catalog = catalog
        self.classifier = classifier
        self.dictionary = dictionary
        self.embedder = embedder
        self.generator = generator
        self.template = template
        self.strategy: RoutingStrategy = resolve_strategy(config.strategy)

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "Pipeline":
        if not config.catalog_path:
            raise ConfigError("catalog path is required")
        if not config.classifier_path:
            raise ConfigError("classifier model path is required")
        catalog = load_catalog(config.catalog_path)
        classifier = load_model(config.classifier_path)
        dictionary = None
        if config.dictionary_path:
            dictionary = load_dictionary(config.dictionary_path)
        elif config.score_method == "nnk":
            raise ConfigError("nnk scoring requires a dictionary path")
        template = load_template(config.template_path) if config.template_path else None
        if config.embed_backend == MOCK:
            embedder: EmbedBackend = MockEmbedBackend(dim=classifier.dim)
        else:
            embedder = HttpEmbedBackend(config.embed_backend, timeout=config.timeout)
        if config.generate_backend == MOCK:
            generator: GenerateBackend = MockGenerateBackend()
        else:
            generator = HttpGenerateBackend(config.generate_backend, timeout=config.timeout)
        return cls(config, catalog, classifier, dictionary, embedder, generator, template)

    def ready(self) -> bool:
        return self.embedder.health() and self.generator.health()

    def embed_text(self, text: str) -> tuple[np.ndarray, float]:
        t0 = time.perf_counter()
        matrix = self.embedder.embed([text])
        elapsed = _ms(t0, time.perf_counter())
        return normalize_embedding(matrix[0]), elapsed

    def _score(self, embedding: np.ndarray, topk) -> float:
        result = score(
            self.config.score_method,
            dictionary=self.dictionary,
            embedding=embedding,
            probabilities=topk.probabilities,
            logits=topk.logits,
        )
        return result.value

    def classify_embedding(
        self,
        embedding: np.ndarray,
        text: Optional[str] = None,
        utterance_id: Optional[str] = None,
        embed_ms: float = 0.0,
    ) -> ClassifyResponse:
        """Run the decision flow on an already-normalized embedding.

        ``text`` feeds the escalation prompt; without it escalation makes no
        sense, so a missing text forces the keep branch (the embedding-bypass
        entry point documents this).
        """
        t0 = time.perf_counter()
        topk = predict_topk(self.classifier, embedding, self.config.k)
        t1 = time.perf_counter()
        uncertainty = self._score(embedding, topk)
        t2 = time.perf_counter()
        timings = {
            "embed": embed_ms,
            "classify": _ms(t0, t1),
            "score": _ms(t1, t2),
            "llm": 0.0,
        }
        escalate = route(uncertainty, self.strategy) and text is not None

        common = dict(
            uncertainty=uncertainty,
            score_method=self.config.score_method,
            strategy=self.strategy.name,
            tau=self.strategy.tau,
            escalated=escalate,
            top_k=tuple(topk.ranked),
            timings_ms=timings,
            utterance_id=utterance_id,
        )
        if not escalate:
            return ClassifyResponse(
                intent=topk.top1, oos=False, source=SOURCE_CLASSIFIER, **common
            )

        t3 = time.perf_counter()
        try:
            verdict = decide(
                self.generator,
                text,
                topk,
                self.catalog,
                template=self.template,
                max_tokens=self.config.max_tokens,
                temperature=self.config.temperature,
            )
        except BackendError:
            if self.config.on_backend_error == ERROR_POLICY_FAIL:
                raise
            timings["llm"] = _ms(t3, time.perf_counter())
            return ClassifyResponse(
                intent=topk.top1,
                oos=False,
                source=SOURCE_CLASSIFIER,
                degraded=True,
                **common,
            )
        timings["llm"] = _ms(t3, time.perf_counter())
        return ClassifyResponse(
            intent=verdict.label,
            oos=verdict.label == self.catalog.oos_token,
            source=SOURCE_LLM,
            parse_path=verdict.parse_path,
            **common,
        )

    def classify_text(self, text: str, utterance_id: Optional[str] = None) -> ClassifyResponse:
        embedding, embed_ms = self.embed_text(text)
        return self.classify_embedding(
            embedding, text=text, utterance_id=utterance_id, embed_ms=embed_ms
        )


@dataclass(eq=False)
class BenchmarkResult:
    strategy: str
    report: MetricsReport
    responses: list[ClassifyResponse]


def run_benchmark(
    pipeline_factory,
    dataset: LabeledDataset,
    strategies,
    analysis_thresholds=None,
) -> tuple[dict[str, BenchmarkResult], dict]:
    """Classify every dataset item under each strategy and score the runs.

    ``pipeline_factory(strategy_name)`` must yield a pipeline bound to that
    strategy but sharing artifacts; items carrying embeddings bypass the
    embed backend. Returns per-strategy results plus a routing analysis over
    the scores (identical across strategies, so computed once).
    """
    if len(dataset) == 0:
        raise DataError("benchmark dataset is empty")
    results: dict[str, BenchmarkResult] = {}
    analysis: dict = {}
    for spec in strategies:
        name = resolve_strategy(spec).name
        pipeline = pipeline_factory(spec)
        golds: list[str] = []
        predictions: list[str] = []
        responses: list[ClassifyResponse] = []
        for idx, (utt, gold) in enumerate(dataset):
            try:
                if utt.embedding is not None:
                    response = pipeline.classify_embedding(
                        utt.embedding, text=utt.text, utterance_id=utt.id
                    )
                else:
                    response = pipeline.classify_text(utt.text, utterance_id=utt.id)
            except (BackendError, DataError) as exc:
                raise type(exc)(f"item {idx} ({utt.id}): {exc}") from exc
            golds.append(gold)
            predictions.append(response.intent)
            responses.append(response)
        report = evaluate(golds, predictions, pipeline.catalog)
        results[name] = BenchmarkResult(name, report, responses)
        if not analysis:
            analysis = routing_analysis(
                golds,
                [r.top_k[0][0] for r in responses],
                [r.uncertainty for r in responses],
                oos_token=pipeline.catalog.oos_token,
                thresholds=analysis_thresholds,
            )
    return results, analysis


def escalation_rate(responses) -> float:
    """Fraction of responses that took the generation path."""
    responses = list(responses)
    if not responses:
        raise DataError("no responses")
    return sum(1 for r in responses if r.escalated) / len(responses)


def save_responses_jsonl(responses, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in responses:
            record = r.to_dict()
            record["utterance_id"] = r.utterance_id
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def routing_analysis_csv(analysis: dict) -> str:
    """Flatten a routing analysis to threshold,category,fraction rows."""
    lines = ["threshold,category,fraction"]
    for name, row in analysis.items():
        for category, fraction in row.items():
            lines.append(f"{name},{category},{fraction:.6f}")
    return "\n".join(lines) + "\n"
