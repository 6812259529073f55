"""Add-k smoothed character n-gram language model."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .core import ValidationError

BOS = "<s>"
EOS = "</s>"
SCHEMA = "lm/1"


@dataclass(frozen=True)
class NGramModel:
    """Counts-backed n-gram model over ``vocab`` plus end-of-sequence.

    A context that was never observed falls back to its longest observed
    suffix, so every queried distribution is a proper add-k distribution.
    """

    order: int
    k: float
    vocab: tuple[str, ...]
    counts: Mapping[tuple[str, ...], Mapping[str, int]]
    _totals: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValidationError("order must be >= 1")
        if not self.k > 0:
            raise ValidationError("smoothing k must be > 0")
        if len(set(self.vocab)) != len(self.vocab) or EOS in self.vocab or BOS in self.vocab:
            raise ValidationError("vocabulary must be unique and exclude boundary markers")
        totals = {ctx: sum(c.values()) for ctx, c in self.counts.items()}
        object.__setattr__(self, "_totals", totals)

    @property
    def outcomes(self) -> tuple[str, ...]:
        return self.vocab + (EOS,)

    def _context(self, history: Sequence[str]) -> tuple[str, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        padded = (BOS,) * n + tuple(history)
        ctx = padded[len(padded) - n:]
        while ctx and self._totals.get(ctx, 0) == 0:
            ctx = ctx[1:]
        return ctx

    def prob(self, symbol: str, history: Sequence[str] = ()) -> float:
        if symbol != EOS and symbol not in self.vocab:
            raise ValidationError(f"symbol {symbol!r} is out of vocabulary")
        ctx = self._context(history)
        c = self.counts.get(ctx, {})
        total = self._totals.get(ctx, 0)
        return (c.get(symbol, 0) + self.k) / (total + self.k * len(self.outcomes))

    def log_prob(self, symbol: str, history: Sequence[str] = ()) -> float:
        return math.log(self.prob(symbol, history))

    def log_prob_end(self, history: Sequence[str]) -> float:
        return self.log_prob(EOS, history)

    def distribution(self, history: Sequence[str] = ()) -> dict[str, float]:
        return {s: self.prob(s, history) for s in self.outcomes}

    def to_json(self) -> dict:
        contexts = {
            json.dumps(list(ctx), ensure_ascii=False): dict(sorted(c.items()))
            for ctx, c in sorted(self.counts.items())
        }
        return {"schema": SCHEMA, "order": self.order, "k": self.k, "vocab": list(self.vocab), "contexts": contexts}

    @classmethod
    def from_json(cls, doc: Mapping) -> "NGramModel":
        if doc.get("schema") != SCHEMA:
            raise ValidationError(f"expected schema {SCHEMA!r}, got {doc.get('schema')!r}")
        try:
            counts = {}
            for key, c in doc["contexts"].items():
                ctx = tuple(json.loads(key))
                counts[ctx] = {str(s): int(n) for s, n in c.items()}
            return cls(int(doc["order"]), float(doc["k"]), tuple(doc["vocab"]), counts)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed language model: {exc}") from None


def train_ngram(
    corpus: Iterable[Sequence[str]], order: int = 5, smoothing_k: float = 1.0,
    vocab: Optional[Iterable[str]] = None,
) -> NGramModel:
    """Count every context of length 0..order-1 in ``corpus``.

    ``vocab`` defaults to the sorted set of symbols in the corpus.
    """
    seqs = [tuple(s) for s in corpus]
    if not seqs:
        raise ValidationError("cannot train on an empty corpus")
    if order < 1:
        raise ValidationError("order must be >= 1")
    seen = sorted({c for s in seqs for c in s})
    vocab_t = tuple(seen) if vocab is None else tuple(vocab)
    unknown = set(seen) - set(vocab_t)
    if unknown:
        raise ValidationError(f"corpus symbols outside vocabulary: {sorted(unknown)}")
    n = order - 1
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    for s in seqs:
        padded = (BOS,) * n + s + (EOS,)
        for i in range(n, len(padded)):
            for m in range(n + 1):
                counts[padded[i - m:i]][padded[i]] += 1
    return NGramModel(order, float(smoothing_k), vocab_t, {ctx: dict(c) for ctx, c in counts.items()})


def sequence_log_prob(model: NGramModel, seq: Sequence[str]) -> float:
    """Chain-rule log probability of ``seq`` followed by end-of-sequence."""
    seq = tuple(seq)
    total = sum(model.log_prob(s, seq[:i]) for i, s in enumerate(seq))
    return total + model.log_prob_end(seq)


def perplexity(model: NGramModel, corpus: Iterable[Sequence[str]]) -> float:
    seqs = [tuple(s) for s in corpus]
    if not seqs:
        raise ValidationError("perplexity needs a non-empty corpus")
    logp = sum(sequence_log_prob(model, s) for s in seqs)
    predicted = sum(len(s) + 1 for s in seqs)
    return math.exp(-logp / predicted)
