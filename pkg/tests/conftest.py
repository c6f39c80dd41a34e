from __future__ import annotations

import random
from pathlib import Path

import pytest

from kgte import AnnotatedSentence, Dataset, Triplet, save_dataset, triplet_to_string

DATA_DIR = Path(__file__).parent / "data"

# known statistics of the committed mini fixture
MINI_STATS = {
    "train": 8,
    "validation": 2,
    "test": 4,
    "relations": 5,
    "max_triplets": 3,
    "avg_triplets": 22 / 14,
}

_CONSONANTS = "bcdfghjklmnpqrstvwxz"


@pytest.fixture
def mini_manifest() -> Path:
    return DATA_DIR / "mini" / "manifest.json"


def _token(rng: random.Random, length: int = 8) -> str:
    return "".join(rng.choice(_CONSONANTS) for _ in range(length))


def planted_pair_records(count: int = 50, seed: int = 77) -> list[AnnotatedSentence]:
    """Sentences with two gold triplets each; every entity and predicate is
    derived from a sentence-unique token, so each sentence's own triplets are
    its nearest KB neighbors under the hashed n-gram encoder."""
    rng = random.Random(seed)
    records = []
    for _ in range(count):
        tok = _token(rng)
        t1 = Triplet(f"{tok}a", f"{tok}p", f"{tok}b")
        t2 = Triplet(f"{tok}c", f"{tok}q", f"{tok}d")
        text = f"{triplet_to_string(t1)} {triplet_to_string(t2)}"
        records.append(AnnotatedSentence(text, (t1, t2)))
    return records


def planted_single_records(count: int = 30, seed: int = 99) -> list[AnnotatedSentence]:
    """One gold triplet per sentence; the sentence text IS the triplet string,
    so the query vector equals its own triplet node vector exactly."""
    rng = random.Random(seed)
    records = []
    for _ in range(count):
        tok = _token(rng)
        t = Triplet(f"{tok}a", f"{tok}p", f"{tok}b")
        records.append(AnnotatedSentence(triplet_to_string(t), (t,)))
    return records


def planted_dataset(records: list[AnnotatedSentence], holdout: int = 5) -> Dataset:
    """Dataset whose test split is fully covered by the train+validation KB."""
    return Dataset.from_splits(records[:-holdout], records[-holdout:], records)


@pytest.fixture
def planted_pair_manifest(tmp_path: Path) -> Path:
    return save_dataset(planted_dataset(planted_pair_records()), tmp_path / "planted")
