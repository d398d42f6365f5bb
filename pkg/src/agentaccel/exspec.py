"""Lookup-table speculative decoding with selective fallback.

The draft model is an n-gram table built on the fly from a designated
region of the prompt (few-shot examples plus the user query by default).
Draft generation is a chain of constant-time lookups; the target model then
verifies a whole draft group in one pass.  Because verification only ever
commits the target's own greedy choices, the decoded output is token-level
identical to plain autoregressive decoding in every mode.

Selective mode consults the table before drafting: if the current context
misses, the round degenerates to a single autoregressive step instead of
paying a multi-token verification pass that would likely reject everything.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lm import ReferenceModel, greedy_decode
from .tokenizer import EOS_ID

DEFAULT_N = 3
DEFAULT_DRAFT_LEN = 4


@dataclass(frozen=True)
class NGramLUT:
    """Maps each (n-1)-token context to its most frequent successor.

    Ties break toward the successor whose pair occurred earliest in the
    extraction stream.  `filler` is the globally most frequent token of the
    stream, emitted for in-group lookup misses after the first hit.
    """

    n: int
    table: dict[tuple[int, ...], tuple[int, int]]  # context -> (token, frequency)
    filler: int
    source_token_count: int

    def lookup(self, context) -> int | None:
        if len(context) < self.n - 1:
            return None
        hit = self.table.get(tuple(context[-(self.n - 1):]))
        return hit[0] if hit else None

    def __len__(self) -> int:
        return len(self.table)


def build_lut(extraction_region, n: int = DEFAULT_N) -> NGramLUT:
    """One linear pass over the stream, sliding an n-token window.

    Streams shorter than n produce an empty (always-missing) table, which is
    valid: decoding then falls back to plain autoregressive steps.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    stream = list(extraction_region)
    # (key, successor) -> [count, first occurrence index]
    pair_stats: dict[tuple[tuple[int, ...], int], list[int]] = {}
    for i in range(len(stream) - n + 1):
        key = tuple(stream[i: i + n - 1])
        nxt = stream[i + n - 1]
        stat = pair_stats.get((key, nxt))
        if stat is None:
            pair_stats[(key, nxt)] = [1, i]
        else:
            stat[0] += 1

    table: dict[tuple[int, ...], tuple[int, int]] = {}
    best_rank: dict[tuple[int, ...], tuple[int, int]] = {}
    for (key, nxt), (count, first) in pair_stats.items():
        rank = (-count, first)
        if key not in best_rank or rank < best_rank[key]:
            best_rank[key] = rank
            table[key] = (nxt, count)

    filler = EOS_ID
    if stream:
        tok_stats: dict[int, list[int]] = {}
        for i, tok in enumerate(stream):
            stat = tok_stats.get(tok)
            if stat is None:
                tok_stats[tok] = [1, i]
            else:
                stat[0] += 1
        filler = min(tok_stats, key=lambda t: (-tok_stats[t][0], tok_stats[t][1]))
    return NGramLUT(n=n, table=table, filler=filler, source_token_count=len(stream))


MISS = None


def draft(lut: NGramLUT, context, n_draft: int) -> list[int] | None:
    """Up to `n_draft` chained draft tokens, or MISS if the first lookup fails.

    Once the first lookup hits, later misses emit the filler token and the
    chain keeps going to full length; verification weeds out bad guesses.
    """
    if n_draft < 1:
        raise ValueError("n_draft must be at least 1")
    ctx = list(context)
    first = lut.lookup(ctx)
    if first is None:
        return MISS
    drafts = [first]
    ctx.append(first)
    while len(drafts) < n_draft:
        nxt = lut.lookup(ctx)
        if nxt is None:
            nxt = lut.filler
        drafts.append(nxt)
        ctx.append(nxt)
    return drafts


def verify(target: ReferenceModel, context, drafts) -> tuple[int, int]:
    """Greedy verification of a draft group.

    Walks the drafts against the target's greedy choices on the growing
    context; the first mismatch discards that draft and everything after it.
    Returns (accepted_count, corrected_token) where the corrected token is
    the target's choice at the first mismatch, or the next token after full
    acceptance.
    """
    if not drafts:
        raise ValueError("drafts must be non-empty")
    ctx = list(context)
    accepted = 0
    for d in drafts:
        choice = target.greedy_next(ctx)
        if d != choice:
            return accepted, choice
        accepted += 1
        ctx.append(d)
    return accepted, target.greedy_next(ctx)


@dataclass
class DecodeStats:
    drafts_generated: int = 0
    drafts_accepted: int = 0
    fallbacks: int = 0
    rounds: int = 0
    output_tokens: int = 0
    modeled_latency: float = 0.0
    selective: bool = True
    draft_len: int = DEFAULT_DRAFT_LEN
    lut_size: int = 0

    @property
    def accuracy(self) -> float:
        if self.drafts_generated == 0:
            return 0.0
        return self.drafts_accepted / self.drafts_generated

    def to_dict(self) -> dict:
        return {
            "drafts_generated": self.drafts_generated,
            "drafts_accepted": self.drafts_accepted,
            "fallbacks": self.fallbacks,
            "rounds": self.rounds,
            "output_tokens": self.output_tokens,
            "modeled_latency": self.modeled_latency,
            "selective": self.selective,
            "draft_len": self.draft_len,
            "accuracy": self.accuracy,
        }


def decode(
    target: ReferenceModel,
    prompt,
    lut: NGramLUT,
    n_draft: int = DEFAULT_DRAFT_LEN,
    selective: bool = True,
    max_tokens: int = 256,
) -> tuple[list[int], DecodeStats]:
    """Speculative decoding loop; output always equals greedy_decode.

    In selective mode a first-lookup miss costs one plain step.  In
    non-selective mode every round drafts (fillers on a miss) and pays the
    full verification pass, which is what makes the two modes comparable on
    cost while identical on output.
    """
    if max_tokens < 0:
        raise ValueError("max_tokens must be non-negative")
    if n_draft < 1:
        raise ValueError("n_draft must be at least 1")
    stats = DecodeStats(selective=selective, draft_len=n_draft, lut_size=len(lut))
    context = list(prompt)
    out: list[int] = []
    done = False
    while not done and len(out) < max_tokens:
        drafts = draft(lut, context, n_draft)
        if drafts is MISS and selective:
            tok = target.greedy_next(context)
            if tok == EOS_ID:
                break
            # A fallback event is an output token produced autoregressively;
            # the terminal end-of-sequence probe above is not one.
            stats.rounds += 1
            stats.fallbacks += 1
            stats.modeled_latency += target.step_cost(1)
            out.append(tok)
            context.append(tok)
            continue
        if drafts is MISS:
            drafts = [lut.filler] * n_draft
        accepted, corrected = verify(target, context, drafts)
        emit = drafts[:accepted] + [corrected]
        if emit[0] == EOS_ID:
            # The pass only discovered the end of the sequence; like the
            # baseline's terminal probe it contributes no output and is
            # left out of the per-round accounting.
            break
        stats.rounds += 1
        stats.drafts_generated += len(drafts)
        stats.drafts_accepted += accepted
        stats.modeled_latency += target.step_cost(len(drafts) + 1)
        for tok in emit:
            if tok == EOS_ID:
                done = True
                break
            out.append(tok)
            context.append(tok)
            if len(out) >= max_tokens:
                break
    stats.output_tokens = len(out)
    return out, stats


def autoregressive_reference(target: ReferenceModel, prompt, max_tokens: int) -> tuple[list[int], float]:
    """Greedy output plus its modeled cost (one step per token), for comparisons."""
    out = greedy_decode(target, prompt, max_tokens)
    return out, len(out) * target.step_cost(1)
