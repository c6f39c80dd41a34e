"""Micro-averaged scoring, per-triplet-count breakdowns, and the
context-quality metric P(N_KB).

Matching is exact equality of normalized (subject, predicate, object) tuples,
scored over sets, with subject/object order significant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import AnnotatedSentence, Triplet
from .encoder import encode
from .retriever import RetrievedContext, diversity_filter
from .vector_index import VectorIndex, top_k


def sentence_f1(pred: set, gold: set) -> float:
    """Per-sentence F1; 2*tp/(|pred|+|gold|) is the harmonic mean of
    precision and recall and is exact in floating point for small counts."""
    denominator = len(pred) + len(gold)
    if denominator == 0:
        return 0.0
    return 2 * len(pred & gold) / denominator


@dataclass(frozen=True)
class CountBucket:
    """Counters restricted to sentences with a given gold-triplet count."""

    tp: int
    n_pred: int
    n_gold: int

    @property
    def f1(self) -> float:
        denominator = self.n_pred + self.n_gold
        return 2 * self.tp / denominator if denominator else 0.0


@dataclass(frozen=True)
class SentenceScore:
    index: int
    pred: tuple[Triplet, ...]
    gold: tuple[Triplet, ...]
    tp: int


@dataclass(frozen=True)
class EvalReport:
    tp: int
    n_pred: int
    n_gold: int
    precision: float
    recall: float
    f1: float
    per_count: dict[int, CountBucket]
    per_sentence: tuple[SentenceScore, ...]

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "n_pred": self.n_pred,
            "n_gold": self.n_gold,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_count": {
                str(count): {
                    "tp": bucket.tp,
                    "n_pred": bucket.n_pred,
                    "n_gold": bucket.n_gold,
                    "f1": bucket.f1,
                }
                for count, bucket in sorted(self.per_count.items())
            },
            "per_sentence": [
                {
                    "id": record.index,
                    "pred": [list(t.as_tuple()) for t in record.pred],
                    "gold": [list(t.as_tuple()) for t in record.gold],
                    "tp": record.tp,
                }
                for record in self.per_sentence
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def micro_f1(
    predictions: Sequence[Iterable[Triplet]], gold: Sequence[Iterable[Triplet]]
) -> EvalReport:
    """Corpus-level micro scores from aligned per-sentence triplet sets.

    Each gold triplet can match at most once (set semantics); per-count
    buckets are keyed by the sentence's gold set size and sum to the global
    counters exactly.
    """
    if len(predictions) != len(gold):
        raise ValueError(
            f"misaligned inputs: {len(predictions)} predictions vs {len(gold)} gold sets"
        )
    tp_total = 0
    n_pred_total = 0
    n_gold_total = 0
    buckets: dict[int, list[int]] = {}
    records = []
    for index, (pred_raw, gold_raw) in enumerate(zip(predictions, gold)):
        pred_set = set(pred_raw)
        gold_set = set(gold_raw)
        tp = len(pred_set & gold_set)
        tp_total += tp
        n_pred_total += len(pred_set)
        n_gold_total += len(gold_set)
        bucket = buckets.setdefault(len(gold_set), [0, 0, 0])
        bucket[0] += tp
        bucket[1] += len(pred_set)
        bucket[2] += len(gold_set)
        records.append(
            SentenceScore(
                index=index,
                pred=tuple(sorted(pred_set)),
                gold=tuple(sorted(gold_set)),
                tp=tp,
            )
        )
    precision = tp_total / n_pred_total if n_pred_total else 0.0
    recall = tp_total / n_gold_total if n_gold_total else 0.0
    denominator = n_pred_total + n_gold_total
    f1 = 2 * tp_total / denominator if denominator else 0.0
    return EvalReport(
        tp=tp_total,
        n_pred=n_pred_total,
        n_gold=n_gold_total,
        precision=precision,
        recall=recall,
        f1=f1,
        per_count={count: CountBucket(*vals) for count, vals in buckets.items()},
        per_sentence=tuple(records),
    )


def _as_triplet_set(context) -> frozenset[Triplet]:
    if isinstance(context, RetrievedContext):
        return context.triplet_set()
    return frozenset(context)


def context_hit_probability(
    contexts: Sequence, gold: Sequence[Iterable[Triplet]]
) -> float:
    """Fraction of gold triplets present in their sentence's retrieved context.

    Contexts may be triplet collections or ``RetrievedContext`` values; an
    examples-mode context contributes the union of its examples' gold sets.
    """
    if len(contexts) != len(gold):
        raise ValueError(f"misaligned inputs: {len(contexts)} contexts vs {len(gold)} gold sets")
    hits = 0
    total = 0
    for context, gold_raw in zip(contexts, gold):
        context_set = _as_triplet_set(context)
        gold_set = set(gold_raw)
        total += len(gold_set)
        hits += len(gold_set & context_set)
    if total == 0:
        raise ValueError("no gold triplets to score against")
    return hits / total


@dataclass(frozen=True)
class ContextQualityCurve:
    points: tuple[tuple[int, float], ...]
    mode: str
    scale: float

    def __post_init__(self) -> None:
        ns = [n for n, _ in self.points]
        ps = [p for _, p in self.points]
        if any(a >= b for a, b in zip(ns, ns[1:])):
            raise ValueError("points must have strictly increasing n_kb")
        if any(a > b for a, b in zip(ps, ps[1:])):
            raise ValueError("P must be non-decreasing in n_kb")

    def to_csv(self) -> str:
        lines = ["n_kb,p"]
        lines.extend(f"{n},{p:.10g}" for n, p in self.points)
        return "\n".join(lines) + "\n"


def sweep_context_quality(
    sentences: Sequence[AnnotatedSentence],
    index: VectorIndex,
    n_kb_values: Sequence[int],
    *,
    mode: str | None = None,
    scale: float = 1.0,
    client=None,
) -> ContextQualityCurve:
    """P(N_KB) over a split for each requested N_KB.

    Uses the retrieval pipeline, including the diversity filter in triplets
    mode. Each sentence is encoded and ranked once at the largest N_KB; the
    smaller values reuse rank prefixes, which is equivalent to retrieving at
    each N_KB separately.
    """
    if not sentences:
        raise ValueError("no sentences to sweep")
    values = [int(n) for n in n_kb_values]
    if not values or any(n < 1 for n in values):
        raise ValueError("n_kb values must be >= 1")
    if any(a >= b for a, b in zip(values, values[1:])):
        raise ValueError("n_kb values must be strictly increasing")
    derived_mode = "triplets" if index.kind == "triplet" else "examples"
    if mode is not None and mode != derived_mode:
        raise ValueError(f"mode {mode!r} does not match index kind {index.kind!r}")
    golds = [set(s.gold) for s in sentences]
    ranked_per_sentence = []
    for sentence in sentences:
        query = encode(sentence.text, index.encoder_config, client=client)
        ranked_per_sentence.append(
            [(node.payload, score) for node, score in top_k(index, query, values[-1])]
        )
    points = []
    for n in values:
        contexts = []
        for ranked in ranked_per_sentence:
            prefix = ranked[:n]
            if derived_mode == "triplets":
                contexts.append(frozenset(t for t, _ in diversity_filter(prefix)))
            else:
                contexts.append(frozenset(t for ex, _ in prefix for t in ex.gold))
        points.append((n, context_hit_probability(contexts, golds)))
    return ContextQualityCurve(points=tuple(points), mode=derived_mode, scale=scale)
