"""Sentence/triplet data model, dataset ingestion, and knowledge-base construction.

Datasets are newline-delimited JSON files, one record per sentence:

    {"text": "...", "triplets": [["subject", "predicate", "object"], ...]}

with one file per split and a manifest JSON mapping split names to files:

    {"train": "train.jsonl", "validation": "valid.jsonl", "test": "test.jsonl"}

All triplet surface strings are normalized on load (lowercase, underscores to
spaces, whitespace runs collapsed) so that string equality is meaningful
between dataset labels and generator output. Sentence text is kept raw.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

SPLIT_NAMES = ("train", "validation", "test")


class DatasetFormatError(ValueError):
    """A dataset file or manifest violates the record grammar."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        detail = str(message)
        if path is not None:
            detail = f"{path}: {detail}" if line is None else f"{path}:{line}: {detail}"
        super().__init__(detail)
        self.path = str(path) if path is not None else None
        self.line = line


def normalize_surface(raw: str) -> str:
    """Canonical surface form: trimmed, lowercased, underscores as spaces,
    internal whitespace runs collapsed to a single space. Idempotent."""
    return " ".join(raw.lower().replace("_", " ").split())


@dataclass(frozen=True, order=True)
class Triplet:
    """A (subject, predicate, object) fact; fields are normalized at construction."""

    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        for name in ("subject", "predicate", "object"):
            norm = normalize_surface(getattr(self, name))
            if not norm:
                raise ValueError(f"triplet {name} is empty after normalization")
            object.__setattr__(self, name, norm)

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


@dataclass(frozen=True)
class AnnotatedSentence:
    """A sentence together with its gold triplet set (ordered, deduplicated)."""

    text: str
    gold: tuple[Triplet, ...]

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("sentence text is empty")
        object.__setattr__(self, "gold", tuple(dict.fromkeys(self.gold)))


@dataclass(frozen=True)
class Dataset:
    train: tuple[AnnotatedSentence, ...]
    validation: tuple[AnnotatedSentence, ...]
    test: tuple[AnnotatedSentence, ...]
    relation_vocab: frozenset[str]
    max_triplets: int
    avg_triplets: float

    @classmethod
    def from_splits(
        cls,
        train: Sequence[AnnotatedSentence],
        validation: Sequence[AnnotatedSentence],
        test: Sequence[AnnotatedSentence],
    ) -> "Dataset":
        sentences = list(train) + list(validation) + list(test)
        if not sentences:
            raise ValueError("dataset has no sentences")
        sizes = [len(s.gold) for s in sentences]
        vocab = frozenset(t.predicate for s in sentences for t in s.gold)
        return cls(
            train=tuple(train),
            validation=tuple(validation),
            test=tuple(test),
            relation_vocab=vocab,
            max_triplets=max(sizes),
            avg_triplets=sum(sizes) / len(sizes),
        )

    def split(self, name: str) -> tuple[AnnotatedSentence, ...]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class DatasetStats:
    train: int
    validation: int
    test: int
    relations: int
    max_triplets: int
    avg_triplets: float

    def to_dict(self) -> dict:
        return {
            "train": self.train,
            "validation": self.validation,
            "test": self.test,
            "relations": self.relations,
            "max_triplets": self.max_triplets,
            "avg_triplets": self.avg_triplets,
        }


def dataset_stats(dataset: Dataset) -> DatasetStats:
    return DatasetStats(
        train=len(dataset.train),
        validation=len(dataset.validation),
        test=len(dataset.test),
        relations=len(dataset.relation_vocab),
        max_triplets=dataset.max_triplets,
        avg_triplets=dataset.avg_triplets,
    )


@dataclass(frozen=True)
class KnowledgeBase:
    """Deduplicated triplet set plus the sentences it was collected from.

    ``source_scale`` records the fraction of the original example pool
    retained (1.0 for an undownscaled KB).
    """

    triplets: tuple[Triplet, ...]
    examples: tuple[AnnotatedSentence, ...]
    source_scale: float = 1.0


def build_kb(
    train: Sequence[AnnotatedSentence], validation: Sequence[AnnotatedSentence]
) -> KnowledgeBase:
    """Pool train and validation examples, in that order, into a KB.

    Triplets are deduplicated preserving first-occurrence order.
    """
    if not train or not validation:
        raise ValueError("build_kb requires non-empty train and validation splits")
    examples = tuple(train) + tuple(validation)
    triplets = dict.fromkeys(t for ex in examples for t in ex.gold)
    return KnowledgeBase(triplets=tuple(triplets), examples=examples, source_scale=1.0)


def downscale_kb(kb: KnowledgeBase, scale: float, seed: int) -> KnowledgeBase:
    """Retain floor(scale * |examples|) examples, sampled uniformly without
    replacement; triplets are recomputed from the retained examples.

    Sampling takes a prefix of a seed-determined permutation, so for a fixed
    seed a smaller scale always retains a subset of a larger scale's examples.
    Retained examples keep their original order.
    """
    if not 0.0 <= scale <= 1.0:
        raise ValueError(f"scale must be in [0, 1], got {scale}")
    n = len(kb.examples)
    # tiny epsilon guards float error in products like 0.3 * 10 -> 2.999...
    keep = math.floor(scale * n + 1e-9)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    retained = sorted(order[:keep])
    examples = tuple(kb.examples[i] for i in retained)
    triplets = dict.fromkeys(t for ex in examples for t in ex.gold)
    return KnowledgeBase(triplets=tuple(triplets), examples=examples, source_scale=scale)


def _parse_record(obj: object) -> AnnotatedSentence:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    text = obj.get("text")
    if not isinstance(text, str):
        raise ValueError("record field 'text' missing or not a string")
    raw_triplets = obj.get("triplets")
    if not isinstance(raw_triplets, list) or not raw_triplets:
        raise ValueError("record field 'triplets' missing or empty")
    triplets = []
    for item in raw_triplets:
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise ValueError(f"triplet entry {item!r} is not a 3-element list")
        if not all(isinstance(f, str) for f in item):
            raise ValueError(f"triplet entry {item!r} has non-string fields")
        triplets.append(Triplet(*item))
    return AnnotatedSentence(text=text, gold=tuple(triplets))


def load_records(path: str | Path) -> list[AnnotatedSentence]:
    """Load one newline-delimited record file. Raises ``DatasetFormatError``
    carrying the offending line number on malformed input."""
    path = Path(path)
    records: list[AnnotatedSentence] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(_parse_record(obj))
            except DatasetFormatError:
                raise
            except (ValueError, TypeError) as exc:
                raise DatasetFormatError(str(exc), path=path, line=lineno) from exc
    if not records:
        raise DatasetFormatError("split contains no records", path=path)
    return records


def load_dataset(manifest_path: str | Path, format: str = "jsonl") -> Dataset:
    """Load a dataset from a manifest file; split paths resolve relative to it."""
    if format != "jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"manifest is not valid JSON: {exc}", path=manifest_path) from exc
    if not isinstance(manifest, dict):
        raise DatasetFormatError("manifest must be a JSON object", path=manifest_path)
    missing = [name for name in SPLIT_NAMES if name not in manifest]
    if missing:
        raise DatasetFormatError(f"manifest missing splits: {missing}", path=manifest_path)
    splits = {}
    for name in SPLIT_NAMES:
        split_path = Path(manifest[name])
        if not split_path.is_absolute():
            split_path = manifest_path.parent / split_path
        splits[name] = load_records(split_path)
    return Dataset.from_splits(splits["train"], splits["validation"], splits["test"])


def _record_to_json(sentence: AnnotatedSentence) -> str:
    return json.dumps(
        {"text": sentence.text, "triplets": [list(t.as_tuple()) for t in sentence.gold]}
    )


def save_dataset(dataset: Dataset, directory: str | Path) -> Path:
    """Write the dataset back out in the record grammar; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    filenames = {"train": "train.jsonl", "validation": "valid.jsonl", "test": "test.jsonl"}
    for name, filename in filenames.items():
        lines = [_record_to_json(s) for s in dataset.split(name)]
        (directory / filename).write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(filenames, indent=2) + "\n", encoding="utf-8")
    return manifest_path
