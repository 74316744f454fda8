"""Rouge-1, Rouge-2 and Rouge-L F1 over lowercased alphanumeric tokens."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels

_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


ZERO = RougeScore(0.0, 0.0, 0.0)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit.

    >>> tokenize("X-ray, PA/lateral")
    ['x', 'ray', 'pa', 'lateral']
    """
    return _TOKEN.findall(text.lower())


def _as_tokens(x) -> list[str]:
    return tokenize(x) if isinstance(x, str) else list(x)


def _score(overlap: int, n_cand: int, n_ref: int) -> RougeScore:
    if overlap == 0 or n_cand == 0 or n_ref == 0:
        return ZERO
    p = overlap / n_cand
    r = overlap / n_ref
    return RougeScore(p, r, 2 * p * r / (p + r))


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int = 1) -> RougeScore:
    """Clipped n-gram overlap. Accepts raw text or token sequences."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    cand = ngrams(_as_tokens(candidate), n)
    ref = ngrams(_as_tokens(reference), n)
    overlap = sum((cand & ref).values())
    return _score(overlap, sum(cand.values()), sum(ref.values()))


def _encode(a: Sequence[str], b: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    vocab: dict[str, int] = {}
    ea = np.fromiter((vocab.setdefault(t, len(vocab)) for t in a), dtype=np.int64, count=len(a))
    eb = np.fromiter((vocab.setdefault(t, len(vocab)) for t in b), dtype=np.int64, count=len(b))
    return ea, eb


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    ea, eb = _encode(list(a), list(b))
    return _kernels.lcs_length(ea, eb)


def rouge_l(candidate, reference) -> RougeScore:
    cand, ref = _as_tokens(candidate), _as_tokens(reference)
    return _score(lcs_length(cand, ref), len(cand), len(ref))


def rouge_all(candidate, reference) -> dict[str, RougeScore]:
    cand, ref = _as_tokens(candidate), _as_tokens(reference)
    return {"r1": rouge_n(cand, ref, 1), "r2": rouge_n(cand, ref, 2), "rl": rouge_l(cand, ref)}


def mean_rouge1_against(candidate: str, references: Sequence[str]) -> float:
    """Mean Rouge-1 F1 of one candidate against each reference text."""
    if not references:
        raise ValueError("at least one reference is required")
    cand = tokenize(candidate)
    return sum(rouge_n(cand, tokenize(r), 1).f1 for r in references) / len(references)
