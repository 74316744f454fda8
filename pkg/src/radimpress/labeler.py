"""Rule-based 14-observation labeler for chest radiograph findings.

Each observation gets one code: 1 present, 0 absent, -1 uncertain, 2 unmentioned.
Mentions, negation cues and uncertainty cues are token phrases matched
within a single sentence; a cue applies when the gap between it and the
mention is at most ``window`` tokens.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources
from pathlib import Path

from .corpus import split_sentences
from .rouge import tokenize


class LabelCode(IntEnum):
    UNCERTAIN = -1
    ABSENT = 0
    PRESENT = 1
    UNMENTIONED = 2


@dataclass(frozen=True)
class Observation:
    index: int
    name: str
    letter: str


OBSERVATION_NAMES = (
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Lesion",
    "Lung Opacity",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
)
OBSERVATIONS = tuple(
    Observation(i, name, chr(ord("a") + i)) for i, name in enumerate(OBSERVATION_NAMES)
)
N_OBSERVATIONS = len(OBSERVATIONS)
NO_FINDING = 0

LabelVector = tuple[int, ...]


class RuleSetError(ValueError):
    pass


Phrase = tuple[str, ...]


@dataclass(frozen=True)
class RuleSet:
    """Mention patterns per observation (index order) plus global cue lists.

    For "No Finding" the patterns are the explicit normality phrases.
    """

    patterns: tuple[tuple[str, ...], ...]
    negation_cues: tuple[str, ...]
    uncertainty_cues: tuple[str, ...]
    window: int = 6

    def __post_init__(self):
        if len(self.patterns) != N_OBSERVATIONS:
            raise RuleSetError(f"expected {N_OBSERVATIONS} observations, got {len(self.patterns)}")
        for obs, pats in zip(OBSERVATIONS, self.patterns):
            if not pats or not all(_phrase(p) for p in pats):
                raise RuleSetError(f"observation {obs.letter!r} ({obs.name}) has no usable patterns")
        if not self.negation_cues or not all(_phrase(c) for c in self.negation_cues):
            raise RuleSetError("negation_cues must be a non-empty list of phrases")
        if not self.uncertainty_cues or not all(_phrase(c) for c in self.uncertainty_cues):
            raise RuleSetError("uncertainty_cues must be a non-empty list of phrases")
        if self.window < 0:
            raise RuleSetError("window must be >= 0")
        # tokenised forms, cached on the frozen instance
        object.__setattr__(self, "_pat_tokens", tuple(tuple(_phrase(p) for p in ps) for ps in self.patterns))
        object.__setattr__(self, "_neg_tokens", tuple(_phrase(c) for c in self.negation_cues))
        object.__setattr__(self, "_unc_tokens", tuple(_phrase(c) for c in self.uncertainty_cues))

    def to_dict(self) -> dict:
        return {
            "observations": [
                {"name": o.name, "letter": o.letter, "patterns": list(p)}
                for o, p in zip(OBSERVATIONS, self.patterns)
            ],
            "negation_cues": list(self.negation_cues),
            "uncertainty_cues": list(self.uncertainty_cues),
            "window": self.window,
        }


def _phrase(text: str) -> Phrase:
    return tuple(tokenize(text)) if isinstance(text, str) else ()


def rules_from_dict(obj: dict) -> RuleSet:
    if not isinstance(obj, dict):
        raise RuleSetError("rule file must hold a JSON object")
    entries = obj.get("observations")
    if not isinstance(entries, list):
        raise RuleSetError("'observations' must be a list")
    by_letter: dict[str, list] = {}
    for entry in entries:
        letter = entry.get("letter") if isinstance(entry, dict) else None
        if letter not in {o.letter for o in OBSERVATIONS}:
            raise RuleSetError(f"unknown observation letter {letter!r}")
        if letter in by_letter:
            raise RuleSetError(f"observation {letter!r} listed twice")
        obs = OBSERVATIONS[ord(letter) - ord("a")]
        if entry.get("name", obs.name) != obs.name:
            raise RuleSetError(f"observation {letter!r} must be named {obs.name!r}, got {entry['name']!r}")
        pats = entry.get("patterns")
        if not isinstance(pats, list) or not pats:
            raise RuleSetError(f"observation {letter!r} ({obs.name}) needs a non-empty 'patterns' list")
        by_letter[letter] = pats
    for obs in OBSERVATIONS:
        if obs.letter not in by_letter:
            raise RuleSetError(f"observation {obs.letter!r} ({obs.name}) is missing")
    window = obj.get("window", 6)
    if not isinstance(window, int) or isinstance(window, bool):
        raise RuleSetError("'window' must be an integer")
    return RuleSet(
        patterns=tuple(tuple(by_letter[o.letter]) for o in OBSERVATIONS),
        negation_cues=tuple(obj.get("negation_cues") or ()),
        uncertainty_cues=tuple(obj.get("uncertainty_cues") or ()),
        window=window,
    )


def load_rules(path) -> RuleSet:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RuleSetError(f"{path}: invalid JSON ({exc.msg})") from None
    return rules_from_dict(obj)


DEFAULT_RULES_PATH = resources.files("radimpress") / "data" / "default_rules.json"


def default_rules() -> RuleSet:
    return rules_from_dict(json.loads(DEFAULT_RULES_PATH.read_text(encoding="utf-8")))


def _find(tokens: list[str], phrase: Phrase):
    n = len(phrase)
    for i in range(len(tokens) - n + 1):
        if tuple(tokens[i : i + n]) == phrase:
            yield i, i + n


def _cue_near(tokens, cues, start, end, window) -> bool:
    for cue in cues:
        for cs, ce in _find(tokens, cue):
            if ce <= start and start - ce <= window:
                return True
            if cs >= end and cs - end <= window:
                return True
    return False


def _mention_codes(sentences: list[list[str]], pats, rules: RuleSet) -> list[int]:
    codes = []
    for tokens in sentences:
        for pat in pats:
            for s, e in _find(tokens, pat):
                if _cue_near(tokens, rules._unc_tokens, s, e, rules.window):
                    codes.append(LabelCode.UNCERTAIN)
                elif _cue_near(tokens, rules._neg_tokens, s, e, rules.window):
                    codes.append(LabelCode.ABSENT)
                else:
                    codes.append(LabelCode.PRESENT)
    return codes


def _aggregate(codes: list[int]) -> int:
    # any affirmed mention wins, then uncertain, then negated
    if not codes:
        return LabelCode.UNMENTIONED
    for c in (LabelCode.PRESENT, LabelCode.UNCERTAIN, LabelCode.ABSENT):
        if c in codes:
            return int(c)
    raise AssertionError("unreachable")


def label_report(findings: str, rules: RuleSet | None = None) -> LabelVector:
    """Label a findings text; returns 14 codes ordered by observation letter a..n."""
    rules = rules or _default_cached()
    sentences = [tokenize(s) for s in split_sentences(findings)]
    out = [int(LabelCode.UNMENTIONED)] * N_OBSERVATIONS
    for obs in OBSERVATIONS[1:]:
        out[obs.index] = int(_aggregate(_mention_codes(sentences, rules._pat_tokens[obs.index], rules)))
    if all(c in (LabelCode.UNMENTIONED, LabelCode.ABSENT) for c in out[1:]):
        normal = any(
            True for tokens in sentences for pat in rules._pat_tokens[NO_FINDING] for _ in _find(tokens, pat)
        )
        if normal:
            out[NO_FINDING] = int(LabelCode.PRESENT)
    return tuple(out)


_DEFAULT: RuleSet | None = None


def _default_cached() -> RuleSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = default_rules()
    return _DEFAULT
