"""Deterministic reference models for exact verification of decoding.

Real weights never run in this package.  ScriptedModel replays a fixed
continuation per prompt and MarkovModel is a count-based n-gram chain, both
fully deterministic, so "speculative output equals greedy output" can be
asserted token for token.

Decoding is greedy throughout: the next token is the argmax of the model's
distribution, with ties broken toward the lowest token id, and token id 0 is
the end-of-sequence sentinel.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter

from .tokenizer import EOS_ID

# Single-token step cost is the unit; a k-token verification pass costs
# tax(k) units.  Only k=1 and k=2 are measured on the reference runtime;
# between configured points the curve interpolates linearly and beyond the
# last point it stays flat.
DEFAULT_TAX_POINTS = ((1, 1.0), (2, 1.86))


class TaxCurve:
    """Piecewise-linear multi-token tax: cost multiplier per pass width."""

    def __init__(self, points=DEFAULT_TAX_POINTS):
        pts = sorted((int(k), float(v)) for k, v in points)
        if not pts or pts[0][0] != 1:
            pts = [(1, 1.0)] + [p for p in pts if p[0] > 1]
        if pts[0][1] != 1.0:
            raise ValueError("tax_curve(1) must be 1.0")
        if any(k <= 0 for k, _ in pts):
            raise ValueError("pass widths must be positive")
        if any(v <= 0 for _, v in pts):
            raise ValueError("tax multipliers must be positive")
        self.points = tuple(pts)

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError("pass width must be at least 1")
        pts = self.points
        if k >= pts[-1][0]:
            return pts[-1][1]
        for (k0, v0), (k1, v1) in zip(pts, pts[1:]):
            if k0 <= k <= k1:
                if k1 == k0:
                    return v0
                return v0 + (v1 - v0) * (k - k0) / (k1 - k0)
        return pts[0][1]

    def to_pairs(self) -> list[list[float]]:
        return [[k, v] for k, v in self.points]


IDEAL_TAX = TaxCurve([(1, 1.0)])  # multi-token pass costs the same as one token
MEASURED_TAX = TaxCurve(DEFAULT_TAX_POINTS)


class ReferenceModel:
    """Shared behavior: greedy argmax choice and modeled step cost."""

    def __init__(self, tax_curve: TaxCurve | None = None, base_step_seconds: float = 1.0):
        self.tax_curve = tax_curve or TaxCurve()
        self.base_step_seconds = base_step_seconds

    def next_distribution(self, context) -> dict[int, float]:
        raise NotImplementedError

    def greedy_next(self, context) -> int:
        dist = self.next_distribution(context)
        if not dist:
            return EOS_ID
        best_p = max(dist.values())
        return min(tok for tok, p in dist.items() if p == best_p)

    def step_cost(self, k: int) -> float:
        """Modeled latency of one forward pass over k tokens."""
        return self.base_step_seconds * self.tax_curve(k)


class ScriptedModel(ReferenceModel):
    """Puts full probability mass on a scripted continuation of each prompt.

    After the script is exhausted (or off-script), the model emits
    end-of-sequence.
    """

    def __init__(self, scripts: dict | None = None, **kwargs):
        super().__init__(**kwargs)
        self._scripts: dict[tuple[int, ...], tuple[int, ...]] = {}
        for prompt, script in (scripts or {}).items():
            self.add_script(prompt, script)

    def add_script(self, prompt, script):
        self._scripts[tuple(prompt)] = tuple(script)

    def next_distribution(self, context) -> dict[int, float]:
        context = tuple(context)
        # Longest registered prompt that prefixes the context wins.
        best: tuple[int, ...] | None = None
        for prompt in self._scripts:
            if len(prompt) <= len(context) and context[: len(prompt)] == prompt:
                if best is None or len(prompt) > len(best):
                    best = prompt
        if best is None:
            return {EOS_ID: 1.0}
        script = self._scripts[best]
        pos = len(context) - len(best)
        if pos >= len(script) or context[len(best):] != script[:pos]:
            return {EOS_ID: 1.0}
        return {script[pos]: 1.0}


def prompt_script_key(prompt) -> str:
    """Stable key for script files: sha256 over the comma-joined token ids."""
    return hashlib.sha256(",".join(str(t) for t in prompt).encode()).hexdigest()


def save_scripts(path, scripts: dict) -> None:
    doc = {prompt_script_key(p): list(s) for p, s in scripts.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def load_scripts(path) -> dict[str, tuple[int, ...]]:
    with open(path) as fh:
        return {k: tuple(v) for k, v in json.load(fh).items()}


class KeyedScriptedModel(ScriptedModel):
    """ScriptedModel variant resolving scripts by prompt hash.

    Used when scripts come from a JSON file keyed by `prompt_script_key`; the
    prompt must be bound before decoding because hashes are not invertible.
    """

    def __init__(self, keyed_scripts: dict[str, tuple[int, ...]], **kwargs):
        super().__init__(**kwargs)
        self._keyed = dict(keyed_scripts)

    def bind_prompt(self, prompt) -> bool:
        key = prompt_script_key(prompt)
        if key not in self._keyed:
            return False
        self.add_script(prompt, self._keyed[key])
        return True


class MarkovModel(ReferenceModel):
    """Order-m chain with add-constant smoothing over the training vocabulary.

    Unseen (or too-short) contexts back off to the order-0 unigram
    distribution, so the chain is total and decoding always terminates via
    the end-of-sequence counts appended during training.
    """

    def __init__(self, order: int, counts, unigram, vocab, smoothing: float = 0.0, **kwargs):
        super().__init__(**kwargs)
        self.order = order
        self.counts = counts  # dict[tuple, Counter]
        self.unigram = unigram  # Counter
        self.vocab = tuple(sorted(vocab))
        self.smoothing = smoothing

    def _distribution(self, counter: Counter) -> dict[int, float]:
        total = sum(counter.values()) + self.smoothing * len(self.vocab)
        if total <= 0:
            return {tok: 1.0 / len(self.vocab) for tok in self.vocab}
        return {tok: (counter.get(tok, 0) + self.smoothing) / total for tok in self.vocab}

    def next_distribution(self, context) -> dict[int, float]:
        context = tuple(context)
        if len(context) >= self.order:
            key = context[-self.order:]
            counter = self.counts.get(key)
            if counter:
                return self._distribution(counter)
        return self._distribution(self.unigram)


def train_markov(corpus, order: int, smoothing: float = 0.0, **kwargs) -> MarkovModel:
    """Count context -> successor transitions over a corpus of sequences.

    Each sequence is terminated with the end-of-sequence token before
    counting, so the chain learns to stop.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if not corpus:
        raise ValueError("corpus must be non-empty")
    counts: dict[tuple[int, ...], Counter] = {}
    unigram: Counter = Counter()
    vocab: set[int] = {EOS_ID}
    for seq in corpus:
        seq = list(seq) + [EOS_ID]
        vocab.update(seq)
        for tok in seq:
            unigram[tok] += 1
        for i in range(order, len(seq)):
            key = tuple(seq[i - order: i])
            counts.setdefault(key, Counter())[seq[i]] += 1
    return MarkovModel(order=order, counts=counts, unigram=unigram, vocab=vocab, smoothing=smoothing, **kwargs)


def greedy_decode(model: ReferenceModel, prompt, max_tokens: int) -> list[int]:
    """Plain autoregressive argmax decoding, the ground truth for all modes."""
    if max_tokens < 0:
        raise ValueError("max_tokens must be non-negative")
    context = list(prompt)
    out: list[int] = []
    while len(out) < max_tokens:
        tok = model.greedy_next(context)
        if tok == EOS_ID:
            break
        out.append(tok)
        context.append(tok)
    return out
