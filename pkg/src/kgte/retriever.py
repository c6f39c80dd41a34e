"""Turn an input sentence into KB context: a diversity-filtered triplet set or
a ranked list of (sentence, triplets) examples."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import AnnotatedSentence, Triplet
from .encoder import encode
from .vector_index import VectorIndex, top_k

CONTEXT_MODES = ("triplets", "examples")


@dataclass(frozen=True)
class RetrievedContext:
    mode: str
    items: tuple[tuple[Triplet | AnnotatedSentence, float], ...]
    n_kb_requested: int

    def __post_init__(self) -> None:
        if self.mode not in CONTEXT_MODES:
            raise ValueError(f"unknown context mode {self.mode!r}")
        if self.n_kb_requested < 0:
            raise ValueError("n_kb_requested must be >= 0")
        object.__setattr__(self, "items", tuple(self.items))
        if len(self.items) > self.n_kb_requested:
            raise ValueError("more items than requested")
        scores = [score for _, score in self.items]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("items are not in descending score order")
        if self.mode == "triplets":
            per_predicate = Counter(t.predicate for t, _ in self.items)
            if per_predicate and per_predicate.most_common(1)[0][1] > 2:
                raise ValueError("triplets context holds more than two items per predicate")

    @property
    def n_returned(self) -> int:
        return len(self.items)

    def triplets(self) -> list[Triplet]:
        if self.mode != "triplets":
            raise ValueError("not a triplets context")
        return [t for t, _ in self.items]

    def examples(self) -> list[AnnotatedSentence]:
        if self.mode != "examples":
            raise ValueError("not an examples context")
        return [ex for ex, _ in self.items]

    def ranked_triplets(self) -> list[Triplet]:
        """Context triplets in rank order; for example contexts, gold triplets
        concatenated in example rank order, deduplicated."""
        if self.mode == "triplets":
            return self.triplets()
        return list(dict.fromkeys(t for ex, _ in self.items for t in ex.gold))

    def triplet_set(self) -> frozenset[Triplet]:
        return frozenset(self.ranked_triplets())


def empty_context(mode: str, n_kb: int = 0) -> RetrievedContext:
    """Context for the no-KB settings (scale 0, or prompts without retrieval)."""
    return RetrievedContext(mode=mode, items=(), n_kb_requested=n_kb)


def diversity_filter(
    ranked: Sequence[tuple[Triplet, float]]
) -> list[tuple[Triplet, float]]:
    """Keep the first two occurrences of each predicate, in rank order.

    Stable: the output is a subsequence of the input. A predicate seen only
    once keeps its single occurrence.
    """
    seen: Counter[str] = Counter()
    kept = []
    for triplet, score in ranked:
        if seen[triplet.predicate] < 2:
            kept.append((triplet, score))
            seen[triplet.predicate] += 1
    return kept


def retrieve_triplets(
    sentence: str, index: VectorIndex, n_kb: int, *, client=None
) -> RetrievedContext:
    """Top ``n_kb`` KB triplets by cosine similarity to the sentence, then the
    diversity filter. The filter may return fewer than ``n_kb`` items; no
    top-up is performed."""
    if index.kind != "triplet":
        raise ValueError(f"retrieve_triplets needs a triplet index, got {index.kind!r}")
    if n_kb < 1:
        raise ValueError("n_kb must be >= 1")
    query = encode(sentence, index.encoder_config, client=client)
    ranked = [(node.payload, score) for node, score in top_k(index, query, n_kb)]
    return RetrievedContext(mode="triplets", items=tuple(diversity_filter(ranked)), n_kb_requested=n_kb)


def retrieve_examples(
    sentence: str, index: VectorIndex, n_kb: int, *, client=None
) -> RetrievedContext:
    """Top ``n_kb`` (sentence, triplets) examples by similarity; no filtering."""
    if index.kind != "example":
        raise ValueError(f"retrieve_examples needs an example index, got {index.kind!r}")
    if n_kb < 1:
        raise ValueError("n_kb must be >= 1")
    query = encode(sentence, index.encoder_config, client=client)
    items = tuple((node.payload, score) for node, score in top_k(index, query, n_kb))
    return RetrievedContext(mode="examples", items=items, n_kb_requested=n_kb)
