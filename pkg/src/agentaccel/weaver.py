"""Online prompt reconstruction for cache-friendly planner and arbiter inputs.

The reconstructed planner prompt front-loads everything static — system
text plus descriptions and guidelines for every registered tool in ascending
id order — then appends the activated clusters' examples in plan order,
single-tool examples for each activated tool, the retrieved top-K examples,
and finally the query.  The static head and the leading run of cluster
examples can then hit precomputed cache entries; only the tail is computed
online.

The baseline builder mirrors the conventional layout (retrieved-tool
descriptions injected right after a short greeting, guidance text trapped
behind them) for token-accounting comparisons.  It is a documented
approximation of that prompt family, not a verbatim template.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .clusterplan import ClusterPlan
from .corpus import ToolRegistry, ToolUseExample
from .kvstore import CacheEntry, KVStore
from .toolrag import ToolRag

SEG_STATIC_SYSTEM = "static_system"
SEG_ALL_TOOL_DESCRIPTIONS = "all_tool_descriptions"
SEG_CLUSTERED_EXAMPLES = "clustered_examples"
SEG_SINGLE_TOOL_EXAMPLES = "single_tool_examples"
SEG_RAG_EXAMPLES = "rag_examples"
SEG_USER_QUERY = "user_query"
SEG_CALL_OBSERVATIONS = "call_observations"
SEG_DECISION_GUIDELINES = "decision_guidelines"

PLANNER_SEGMENT_ORDER = (
    SEG_STATIC_SYSTEM,
    SEG_ALL_TOOL_DESCRIPTIONS,
    SEG_CLUSTERED_EXAMPLES,
    SEG_SINGLE_TOOL_EXAMPLES,
    SEG_RAG_EXAMPLES,
    SEG_USER_QUERY,
)

# Segments the on-the-fly draft table is built from under the default
# extraction policy: the few-shot material plus the live request.
FEWSHOT_REGION_KINDS = frozenset(
    {
        SEG_CLUSTERED_EXAMPLES,
        SEG_SINGLE_TOOL_EXAMPLES,
        SEG_RAG_EXAMPLES,
        SEG_USER_QUERY,
        SEG_DECISION_GUIDELINES,
        SEG_CALL_OBSERVATIONS,
    }
)

MAX_DYNAMIC_EXAMPLES = 4

PLANNER_HEADER = (
    "you are the planner of an on device assistant. plan tool calls that satisfy the user request."
)

PLANNER_INSTRUCTIONS = (
    "planning instructions. produce the complete plan before any tool runs. "
    "write one numbered step per tool call in the form n . tool_name ( argument = value ). "
    "reference the output of an earlier step with $ followed by that step number, for example $1. "
    "never invent tools that are not listed above and never pass arguments of the wrong kind. "
    "prefer the smallest plan that satisfies the request, merge duplicate lookups into one step, "
    "and reuse earlier results instead of repeating work. when the request names a person, resolve "
    "their contact details before composing messages or events. when the request mentions a date or "
    "time, pass the phrase through unchanged and let the tool parse it. keep literal text from the "
    "request, such as titles and bodies, exactly as the user wrote it. if the request cannot be "
    "satisfied with the listed tools, emit a single step calling the closest tool and note the gap. "
    "study the worked examples that follow the tool list; they show complete plans for common "
    "requests and the exact output format. finish every plan with the marker end of plan."
)

BASELINE_HEADER = "you are a helpful assistant that plans tool calls for the user."

ARBITER_VARIANTS = {
    "a": (
        "you are the arbiter of an on device assistant. you receive the executed tool calls and "
        "their observations and must decide whether the user request was satisfied. decision "
        "guidelines. accept the run only if every planned call executed without an error "
        "observation and the final observation answers the request. reject the run and ask for a "
        "retry if any call returned an error, if a referenced result was empty, or if the plan "
        "skipped a step the request clearly required. never invent observations that are not "
        "listed, and never accept a run whose last call failed. when you accept, reply with the "
        "single word complete. when you reject, reply with retry followed by the number of the "
        "failing step. treat a warning observation as a success unless a later call depended on the "
        "missing part. treat an empty observation from a lookup as a failure of that lookup. when "
        "two steps failed, report the earliest one, because fixing it may fix the rest. decision "
        "examples. example one. calls. 1 . get_email_address ( name = anna ) "
        "observation ok address found. 2 . compose_new_email ( to = $1 ) observation ok message "
        "sent. every call succeeded and the message was sent, so the verdict is complete. example "
        "two. calls. 1 . get_phone_number ( name = omar ) observation error no match. the lookup "
        "failed before anything else could run, so the verdict is retry 1. example three. calls. "
        "1 . create_note ( title = groceries ) observation ok note created. 2 . append_note_content "
        "( note = $1 ) observation error note locked. the second step failed after the first "
        "succeeded, so the verdict is retry 2. example four. calls. 1 . search_notes ( phrase = "
        "budget ) observation ok one match. 2 . open_note ( title = $1 ) observation ok note "
        "opened. every call succeeded and the requested note is open, so the verdict is complete. "
        "example five. calls. 1 . create_calendar_event ( title = review , when = friday ) "
        "observation ok event created. 2 . create_reminder ( text = review ) observation error "
        "reminders unavailable. the event exists but the requested reminder failed, so the verdict "
        "is retry 2. example six. calls. 1 . get_zoom_link ( topic = standup ) observation ok link "
        "created. 2 . get_email_address ( name = wei ) observation ok address found. 3 . "
        "create_calendar_event ( title = standup , invitee = $2 , link = $1 ) observation ok event "
        "created. all three calls succeeded and the meeting carries the link and the invitee, so "
        "the verdict is complete. example seven. calls. 1 . summarize_inbox ( count = 10 ) "
        "observation ok digest ready. 2 . forward_email ( subject = invoice , to = dana ) "
        "observation error message not found. the digest worked but the forward failed to locate "
        "its message, so the verdict is retry 2. now judge the following run."
    ),
    "b": (
        "you are the arbiter of an on device assistant reviewing a retried run. you receive the "
        "executed tool calls and their observations and must decide whether the retry satisfied the "
        "user request. decision guidelines. the run you are judging already failed once, so be "
        "strict. accept only if every call in this retried run executed without an error "
        "observation and the final observation answers the request. reject again if any call "
        "returned an error or if the retried step failed the same way, and say give up instead of "
        "retry when the same step has now failed twice, because repeating it a third time is "
        "unlikely to help. never invent observations that are not listed. when you accept, reply "
        "with the single word complete. when you reject, reply with retry or give up followed by "
        "the number of the failing step. a retried run that fails on a new, different step earns a "
        "retry for that step rather than give up, because the original defect was fixed. decision "
        "examples. example one. calls. 1 . get_zoom_link "
        "( topic = standup ) observation ok link created. 2 . compose_new_email ( body = $1 ) "
        "observation ok message sent. the retried run succeeded end to end, so the verdict is "
        "complete. example two. calls. 1 . open_note ( title = ideas ) observation error not "
        "found. the same lookup failed again, so the verdict is give up 1. example three. calls. "
        "1 . get_phone_number ( name = ines ) observation ok number found. 2 . add_new_contact "
        "( name = ines , phone = $1 ) observation error storage full. the lookup that failed last "
        "time now works and a different step failed, so the verdict is retry 2. example four. "
        "calls. 1 . search_notes ( phrase = trip ) observation ok two matches. 2 . open_note "
        "( title = $1 ) observation ok note opened. 3 . append_note_content ( note = $2 , text = "
        "flights ) observation ok text appended. the retried run completed every step and the note "
        "now holds the new text, so the verdict is complete. example five. calls. 1 . "
        "delete_calendar_event ( title = sync ) observation error event missing. the event this "
        "retry was meant to move no longer exists, so repeating the plan cannot help and the "
        "verdict is give up 1. now judge the following retried run."
    ),
}


@dataclass(frozen=True)
class ReconstructedPrompt:
    """An ordered list of (kind, tokens) segments plus cache accounting."""

    segments: tuple[tuple[str, tuple[int, ...]], ...]
    cache_entry: CacheEntry | None
    match_len: int
    stats: dict = field(default_factory=dict)

    @property
    def tokens(self) -> list[int]:
        out: list[int] = []
        for _, toks in self.segments:
            out.extend(toks)
        return out

    @property
    def total_tokens(self) -> int:
        return sum(len(toks) for _, toks in self.segments)

    @property
    def cacheable_tokens(self) -> int:
        return self.match_len

    @property
    def uncacheable_tokens(self) -> int:
        return self.total_tokens - self.match_len

    def segment_tokens(self, kind: str) -> list[int]:
        out: list[int] = []
        for seg_kind, toks in self.segments:
            if seg_kind == kind:
                out.extend(toks)
        return out

    def extraction_region(self, mode: str = "fewshot") -> list[int]:
        """Token stream the draft lookup table is built from."""
        if mode == "all":
            return self.tokens
        if mode != "fewshot":
            raise ValueError(f"unknown extraction mode '{mode}'")
        out: list[int] = []
        for kind, toks in self.segments:
            if kind in FEWSHOT_REGION_KINDS:
                out.extend(toks)
        return out

    def to_dict(self) -> dict:
        return {
            "segments": [{"kind": kind, "tokens": list(toks)} for kind, toks in self.segments],
            "total_tokens": self.total_tokens,
            "cacheable_tokens": self.cacheable_tokens,
            "uncacheable_tokens": self.uncacheable_tokens,
            "stats": self.stats,
        }


def warm_vocabulary(tokenizer) -> None:
    """Tokenize every template so persisted vocabularies cover them.

    Must run before a vocabulary is frozen to disk; otherwise separate
    commands could assign different ids to template words and cached
    prefixes would never match.
    """
    tokenizer.tokenize(PLANNER_HEADER)
    tokenizer.tokenize(PLANNER_INSTRUCTIONS)
    tokenizer.tokenize(BASELINE_HEADER)
    for text in ARBITER_VARIANTS.values():
        tokenizer.tokenize(text)
    for word in ("tool", "guidelines", ":", "request", "examples", "observations"):
        tokenizer.tokenize(word)


class Weaver:
    """Builds reconstructed, baseline, and arbiter prompts over one corpus."""

    def __init__(
        self,
        registry: ToolRegistry,
        tokenizer,
        plan: ClusterPlan,
        examples: list[ToolUseExample],
        rag: ToolRag | None = None,
        tau: float = 0.5,
    ):
        self.registry = registry
        self.tokenizer = tokenizer
        self.plan = plan
        self.examples = list(examples)
        self.rag = rag
        self.tau = tau

        self._header = tuple(tokenizer.tokenize(PLANNER_HEADER))
        self._instructions = tuple(tokenizer.tokenize(PLANNER_INSTRUCTIONS))
        self._baseline_header = tuple(tokenizer.tokenize(BASELINE_HEADER))
        self._arbiter = {v: tuple(tokenizer.tokenize(text)) for v, text in ARBITER_VARIANTS.items()}
        self._tool_blocks = {t: self._tool_block(t) for t in registry.tool_ids()}

        self._single_example: dict[str, ToolUseExample] = {}
        for tool_id in registry.tool_ids():
            self._single_example[tool_id] = self._pick_single_example(tool_id)

    def _tool_block(self, tool_id: str) -> tuple[int, ...]:
        tool = self.registry[tool_id]
        head = self.tokenizer.tokenize(f"tool {tool.id} :")
        mid = self.tokenizer.tokenize("guidelines :")
        return tuple(head) + tool.description_tokens + tuple(mid) + tool.guideline_tokens

    def _pick_single_example(self, tool_id: str) -> ToolUseExample | None:
        """Single-tool example for a tool, or its double-tool substitute.

        A few tools have no single-tool example in the database; for those
        the smallest two-tool example mentioning the tool stands in.
        """
        singles = sorted((ex for ex in self.examples if ex.tools == frozenset({tool_id})), key=lambda e: e.id)
        if singles:
            return singles[0]
        doubles = sorted(
            (ex for ex in self.examples if tool_id in ex.tools and len(ex.tools) == 2),
            key=lambda e: e.id,
        )
        if doubles:
            return doubles[0]
        return None

    # ---- cacheable prefixes -------------------------------------------------

    def static_planner_prefix(self) -> tuple[int, ...]:
        """Header, instructions, and every tool's description block."""
        out = list(self._header) + list(self._instructions)
        for tool_id in self.registry.tool_ids():
            out.extend(self._tool_blocks[tool_id])
        return tuple(out)

    def combination_prefix(self, combo) -> tuple[int, ...]:
        """Static prefix extended with one cached cluster combination."""
        out = list(self.static_planner_prefix())
        for cluster_id in combo:
            out.extend(self.plan.cluster_by_id(cluster_id).example_tokens)
        return tuple(out)

    def arbiter_prefix(self, variant: str) -> tuple[int, ...]:
        return self._arbiter[variant]

    def baseline_header_prefix(self) -> tuple[int, ...]:
        return self._baseline_header

    def cacheable_prefixes(self) -> dict[str, list[tuple[int, ...]]]:
        """Everything the offline phase should precompute, grouped by tag."""
        static = [self.static_planner_prefix(), self.baseline_header_prefix()]
        combos = [self.combination_prefix(c) for c in self.plan.cached_combinations]
        arbiters = [self.arbiter_prefix(v) for v in sorted(self._arbiter)]
        return {"static": static, "cluster_combination": combos, "arbiter_static": arbiters}

    # ---- prompt builders ----------------------------------------------------

    def _retrieve(self, query_tokens, retrieved) -> set[str]:
        if retrieved is not None:
            return set(retrieved)
        if self.rag is None:
            raise ValueError("no retrieval configured and no tool set supplied")
        return self.rag.retrieve_tools(query_tokens, self.tau)

    def _match(self, store: KVStore | None, tokens) -> tuple[CacheEntry | None, int]:
        if store is None:
            return None, 0
        return store.longest_cached_prefix(tokens)

    def planner_prompt(
        self,
        query_tokens,
        k: int = 1,
        store: KVStore | None = None,
        retrieved=None,
    ) -> ReconstructedPrompt:
        """The reconstructed planner prompt for one query.

        `k` is the dynamic example count appended after the single-tool
        examples.  An empty retrieved tool set still produces a valid prompt
        (no clusters activate); the condition is flagged in the stats.
        """
        if not (0 <= k <= MAX_DYNAMIC_EXAMPLES):
            raise ValueError(f"k must be within [0, {MAX_DYNAMIC_EXAMPLES}]")
        retrieved = self._retrieve(query_tokens, retrieved)

        activated = self.plan.activation_sequence(retrieved)
        clustered: list[int] = []
        clustered_ids: list[str] = []
        for cluster_id in activated:
            cluster = self.plan.cluster_by_id(cluster_id)
            clustered.extend(cluster.example_tokens)
            clustered_ids.append(cluster.example_id)

        singles: list[int] = []
        duplicate_singles = 0
        for tool_id in sorted(retrieved):
            example = self._single_example.get(tool_id)
            if example is None:
                continue
            if example.id in clustered_ids:
                duplicate_singles += 1
            singles.extend(example.example_tokens)

        rag_tokens: list[int] = []
        rag_ids: list[str] = []
        if k > 0 and self.rag is not None:
            for ex in self.rag.retrieve_examples(query_tokens, retrieved, k):
                rag_tokens.extend(ex.example_tokens)
                rag_ids.append(ex.id)

        segments = (
            (SEG_STATIC_SYSTEM, tuple(self._header) + tuple(self._instructions)),
            (SEG_ALL_TOOL_DESCRIPTIONS, tuple(t for tid in self.registry.tool_ids() for t in self._tool_blocks[tid])),
            (SEG_CLUSTERED_EXAMPLES, tuple(clustered)),
            (SEG_SINGLE_TOOL_EXAMPLES, tuple(singles)),
            (SEG_RAG_EXAMPLES, tuple(rag_tokens)),
            (SEG_USER_QUERY, tuple(query_tokens)),
        )
        prompt_tokens = [t for _, toks in segments for t in toks]
        entry, match_len = self._match(store, prompt_tokens)
        stats = {
            "retrieved_tools": sorted(retrieved),
            "activated_clusters": list(activated),
            "rag_example_ids": rag_ids,
            "duplicate_single_tool_examples": duplicate_singles,
            "degenerate_empty_retrieval": not retrieved,
        }
        return ReconstructedPrompt(segments=segments, cache_entry=entry, match_len=match_len, stats=stats)

    def baseline_prompt(
        self,
        query_tokens,
        k_rag: int = 3,
        store: KVStore | None = None,
        retrieved=None,
    ) -> ReconstructedPrompt:
        """Conventional prompt order used as the accounting baseline.

        Retrieved-tool descriptions land right after a short greeting, which
        is what pushes the first dynamic token near the front and strands the
        guidance text behind it.  Without a store, the greeting is treated as
        the cacheable region (it is the only prefix the baseline policy would
        ever precompute).
        """
        retrieved = self._retrieve(query_tokens, retrieved)
        desc: list[int] = []
        for tool_id in sorted(retrieved):
            desc.extend(self._tool_blocks[tool_id])

        rag_tokens: list[int] = []
        if k_rag > 0 and self.rag is not None:
            for ex in self.rag.retrieve_examples(query_tokens, retrieved, k_rag):
                rag_tokens.extend(ex.example_tokens)

        segments = (
            (SEG_STATIC_SYSTEM, tuple(self._baseline_header)),
            (SEG_ALL_TOOL_DESCRIPTIONS, tuple(desc)),
            (SEG_DECISION_GUIDELINES, tuple(self._instructions)),
            (SEG_RAG_EXAMPLES, tuple(rag_tokens)),
            (SEG_USER_QUERY, tuple(query_tokens)),
        )
        prompt_tokens = [t for _, toks in segments for t in toks]
        if store is None:
            entry, match_len = None, len(self._baseline_header)
        else:
            entry, match_len = store.longest_cached_prefix(prompt_tokens)
        stats = {
            "retrieved_tools": sorted(retrieved),
            "first_dynamic_token_index": len(self._baseline_header),
            "degenerate_empty_retrieval": not retrieved,
        }
        return ReconstructedPrompt(segments=segments, cache_entry=entry, match_len=match_len, stats=stats)

    def arbiter_prompt(self, observation_tokens, variant: str = "a", store: KVStore | None = None) -> ReconstructedPrompt:
        """Static variant prefix followed by the call-observation pairs."""
        if variant not in self._arbiter:
            raise ValueError(f"unknown arbiter variant '{variant}'")
        segments = (
            (SEG_DECISION_GUIDELINES, self._arbiter[variant]),
            (SEG_CALL_OBSERVATIONS, tuple(observation_tokens)),
        )
        prompt_tokens = [t for _, toks in segments for t in toks]
        entry, match_len = self._match(store, prompt_tokens)
        return ReconstructedPrompt(
            segments=segments,
            cache_entry=entry,
            match_len=match_len,
            stats={"variant": variant},
        )
