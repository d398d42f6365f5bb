"""End-to-end per-query execution: retrieve, weave, decode, record.

This is the library-side implementation of the `run` command.  Each query is
independent: retrieval picks the tool set, the weaver builds both the
reconstructed and the baseline prompt against the shared cache store, the
configured reference model decodes the plan and the arbiter verdict through
the speculative path, and the token accounting plus decode statistics land
in one trace record for the simulator.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import corpus, exspec, lm, toolrag
from .clusterplan import ClusterPlan
from .kvstore import KVStore
from .simulator import RoleTrace, TraceRecord
from .tokenizer import Tokenizer
from .weaver import Weaver


@dataclass
class CorpusBundle:
    tokenizer: Tokenizer
    registry: corpus.ToolRegistry
    train: list[corpus.QuerySample]
    test: list[corpus.QuerySample]
    examples: list[corpus.ToolUseExample]
    embedder: toolrag.TfidfEmbedder

    def make_rag(self, scorer_name: str) -> toolrag.ToolRag:
        if scorer_name == "oracle":
            scorer = toolrag.OracleToolScorer(self.registry, self.train + self.test, self.tokenizer)
        elif scorer_name == "cosine":
            scorer = toolrag.CosineToolScorer(self.registry, self.examples, self.embedder, self.tokenizer)
        else:
            raise ValueError(f"unknown scorer '{scorer_name}'")
        return toolrag.ToolRag(self.registry, self.examples, self.embedder, scorer, self.tokenizer)


def load_bundle(registry_path, train_path, test_path, examples_path, vocab_path=None) -> CorpusBundle:
    """Load and cross-validate the whole corpus behind one call.

    The embedder is fitted on the raw example texts before the database is
    loaded, because loading computes each entry's embedding.
    """
    tok = Tokenizer.load(vocab_path) if vocab_path else Tokenizer()
    registry = corpus.load_registry(registry_path, tok)
    train = corpus.load_dataset(train_path, registry, tok)
    test = corpus.load_dataset(test_path, registry, tok) if test_path else []

    texts = []
    for line in Path(examples_path).read_text().splitlines():
        if line.strip():
            texts.append(json.loads(line)["example_text"])
    embedder = toolrag.TfidfEmbedder.fit(texts)
    examples = corpus.load_example_db(examples_path, registry, tok, embedder)
    return CorpusBundle(
        tokenizer=tok, registry=registry, train=train, test=test, examples=examples, embedder=embedder
    )


def observation_text(plan: corpus.PlanDAG) -> str:
    """Deterministic call-observation rendering for the arbiter input."""
    parts = ["calls ."]
    for i, node in enumerate(plan.nodes, start=1):
        args = " , ".join(node.args)
        parts.append(f"{i} . {node.call} ( {args} ) observation ok result {i}")
    return " ".join(parts)


ARBITER_VERDICT = (
    "every call succeeded and the final observation answers the request , so the verdict is complete"
)


@dataclass
class RunSettings:
    tau: float = 0.5
    scorer: str = "oracle"
    top_k: int = 3  # baseline retrieved-example count
    k: int = 1
    n: int = exspec.DEFAULT_N
    draft_len: int = exspec.DEFAULT_DRAFT_LEN
    selective: bool = True
    extract: str = "fewshot"
    model: str = "scripted"
    max_tokens: int = 160
    jobs: int = 1


def _build_markov(bundle: CorpusBundle) -> lm.MarkovModel:
    """Order-2 chain over request+plan streams in the example-text shape.

    Concatenating each query with its plan render teaches the chain to flow
    from request text into plan text, so its greedy continuations overlap
    the prompt's few-shot examples the way real planner output does.
    """
    streams = []
    for sample in bundle.train:
        text = f"request : {sample.query_text} . plan : {corpus.render_plan(sample.gt_plan)}"
        streams.append(bundle.tokenizer.tokenize(text))
    for ex in bundle.examples:
        streams.append(list(ex.example_tokens))
    return lm.train_markov(streams, order=2, smoothing=0.0)


def run_queries(
    bundle: CorpusBundle,
    plan: ClusterPlan,
    store: KVStore | None,
    settings: RunSettings,
) -> list[TraceRecord]:
    rag = bundle.make_rag(settings.scorer)
    weaver = Weaver(bundle.registry, bundle.tokenizer, plan, bundle.examples, rag, tau=settings.tau)
    markov = _build_markov(bundle) if settings.model == "markov" else None
    if settings.model not in ("scripted", "markov"):
        raise ValueError(f"unknown reference model '{settings.model}'")

    def run_one(idx_sample) -> TraceRecord:
        idx, sample = idx_sample
        retrieved = rag.retrieve_tools(sample.query_tokens, settings.tau)
        wp = weaver.planner_prompt(sample.query_tokens, k=settings.k, store=store, retrieved=retrieved)
        bp = weaver.baseline_prompt(sample.query_tokens, k_rag=settings.top_k, store=store, retrieved=retrieved)

        planner_script = bundle.tokenizer.tokenize(corpus.render_plan(sample.gt_plan))
        obs_tokens = bundle.tokenizer.tokenize(observation_text(sample.gt_plan))
        ap = weaver.arbiter_prompt(obs_tokens, variant="a", store=store)
        arbiter_script = bundle.tokenizer.tokenize(ARBITER_VERDICT)

        if settings.model == "scripted":
            planner_model = lm.ScriptedModel({tuple(wp.tokens): tuple(planner_script)})
            arbiter_model = lm.ScriptedModel({tuple(ap.tokens): tuple(arbiter_script)})
        else:
            planner_model = markov
            arbiter_model = markov

        planner_lut = exspec.build_lut(wp.extraction_region(settings.extract), settings.n)
        planner_out, planner_stats = exspec.decode(
            planner_model, wp.tokens, planner_lut, settings.draft_len, settings.selective, settings.max_tokens
        )
        arbiter_lut = exspec.build_lut(ap.extraction_region(settings.extract), settings.n)
        arbiter_out, arbiter_stats = exspec.decode(
            arbiter_model, ap.tokens, arbiter_lut, settings.draft_len, settings.selective, settings.max_tokens
        )

        planner_role = RoleTrace(
            baseline_total=bp.total_tokens,
            baseline_uncacheable=bp.uncacheable_tokens,
            weaver_total=wp.total_tokens,
            weaver_uncacheable=wp.uncacheable_tokens,
            output_tokens=len(planner_out),
            decode=planner_stats.to_dict(),
        )
        # The arbiter has a single prompt shape; its baseline is the same
        # prompt with nothing precomputed.
        arbiter_role = RoleTrace(
            baseline_total=ap.total_tokens,
            baseline_uncacheable=ap.total_tokens,
            weaver_total=ap.total_tokens,
            weaver_uncacheable=ap.uncacheable_tokens,
            output_tokens=len(arbiter_out),
            decode=arbiter_stats.to_dict(),
        )
        return TraceRecord(
            query_id=f"q{idx:04d}",
            tool_count=len(sample.gt_plan.nodes),
            planner=planner_role,
            arbiter=arbiter_role,
        )

    items = list(enumerate(bundle.test))
    if settings.jobs > 1:
        with ThreadPoolExecutor(max_workers=settings.jobs) as pool:
            return list(pool.map(run_one, items))
    return [run_one(item) for item in items]
