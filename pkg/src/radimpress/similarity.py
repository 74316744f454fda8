"""Label-vector store with exact Euclidean nearest-neighbour search."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .labeler import N_OBSERVATIONS, OBSERVATIONS, LabelVector

_VALID_CODES = frozenset((-1, 0, 1, 2))


class SimilarityIndexError(LookupError):
    """Raised when the index cannot satisfy a query (too few entries, unknown id)."""


@dataclass(frozen=True)
class IndexEntry:
    report_id: str
    vector: LabelVector


@dataclass(frozen=True)
class SearchConfig:
    n_similar: int = 15
    subset_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_similar < 1:
            raise ValueError("n_similar must be >= 1")
        if self.subset_size is not None and self.subset_size < self.n_similar:
            raise ValueError("subset_size must be >= n_similar")


def _check_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.int64)
    if arr.shape != (N_OBSERVATIONS,):
        raise ValueError(f"label vector must have {N_OBSERVATIONS} codes, got shape {arr.shape}")
    return arr


def euclidean_distance(a: Sequence[int], b: Sequence[int]) -> float:
    diff = _check_vector(a) - _check_vector(b)
    return math.sqrt(int(diff @ diff))


def sample_start(stride: int, seed: int) -> int:
    """Seeded uniform start offset in [0, stride)."""
    return int(np.random.default_rng(seed).integers(0, stride))


def systematic_sample(entries: Sequence[IndexEntry], subset_size: int, seed: int) -> list[IndexEntry]:
    """Every k-th entry from a seeded random start, k = floor(len / subset_size)."""
    n = len(entries)
    if subset_size < 1:
        raise ValueError("subset_size must be >= 1")
    if subset_size > n:
        raise ValueError(f"subset_size {subset_size} exceeds {n} entries")
    k = n // subset_size
    s = sample_start(k, seed)
    return list(entries[s::k][:subset_size])


class LabelIndex:
    """In-memory label store. Rows keep insertion order, which breaks distance ties."""

    def __init__(self, entries: Iterable[IndexEntry]):
        self.entries = list(entries)
        ids = [e.report_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate report ids in index")
        self._pos = {rid: i for i, rid in enumerate(ids)}
        self.matrix = np.array([e.vector for e in self.entries], dtype=np.int8).reshape(-1, N_OBSERVATIONS)
        if self.matrix.size and not np.isin(self.matrix, list(_VALID_CODES)).all():
            raise ValueError("label codes must be in {-1, 0, 1, 2}")
        self._subsets: dict[tuple[int, int], LabelIndex] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, report_id: str) -> bool:
        return report_id in self._pos

    def vector(self, report_id: str) -> LabelVector:
        try:
            return self.entries[self._pos[report_id]].vector
        except KeyError:
            raise SimilarityIndexError(f"unknown report id {report_id!r}") from None

    def subset(self, config: SearchConfig) -> "LabelIndex":
        if config.subset_size is None or config.subset_size >= len(self):
            return self
        key = (config.subset_size, config.seed)
        if key not in self._subsets:
            self._subsets[key] = LabelIndex(systematic_sample(self.entries, *key))
        return self._subsets[key]

    def search(self, query: Sequence[int], k: int, exclude_id: str | None = None) -> list[tuple[str, float]]:
        q = _check_vector(query).astype(np.int8)
        d2 = _kernels.squared_distances(self.matrix, q)
        order = np.argsort(d2, kind="stable")
        if exclude_id is not None and exclude_id in self._pos:
            order = order[order != self._pos[exclude_id]]
        if len(order) < k:
            raise SimilarityIndexError(f"index holds {len(order)} candidate entries, {k} requested")
        return [(self.entries[i].report_id, math.sqrt(int(d2[i]))) for i in order[:k]]

    def save_tsv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["report_id", *(o.letter for o in OBSERVATIONS)])
            for e in self.entries:
                w.writerow([e.report_id, *e.vector])

    @classmethod
    def load_tsv(cls, path) -> "LabelIndex":
        entries = []
        with Path(path).open(encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
                if not row or (lineno == 1 and row[0] == "report_id"):
                    continue
                if len(row) != N_OBSERVATIONS + 1:
                    raise ValueError(f"{path}:{lineno}: expected {N_OBSERVATIONS + 1} columns, got {len(row)}")
                try:
                    codes = tuple(int(c) for c in row[1:])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-integer label code") from None
                if not set(codes) <= _VALID_CODES:
                    raise ValueError(f"{path}:{lineno}: label codes must be in {{-1, 0, 1, 2}}")
                entries.append(IndexEntry(row[0], codes))
        return cls(entries)


def top_k_similar(
    query: Sequence[int],
    index: LabelIndex | Sequence[IndexEntry],
    config: SearchConfig,
    query_id: str | None = None,
) -> list[tuple[str, float]]:
    """The ``n_similar`` nearest entries, ascending by (distance, insertion order).

    The subset drawn by ``config.subset_size`` depends only on the seed, so it
    is the same for every query of a run. ``query_id`` is excluded from results.
    """
    if not isinstance(index, LabelIndex):
        index = LabelIndex(index)
    return index.subset(config).search(query, config.n_similar, exclude_id=query_id)
