"""Radiology report parsing, eligibility filtering, JSON-lines storage and stats."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

MIN_FINDINGS_WORDS = 10
MIN_IMPRESSION_WORDS = 2

# Target headers: at line start the colon is optional, mid-line it is required.
_TARGET_HEADER = re.compile(
    r"^[ \t]*(?P<a>FINDINGS|IMPRESSION)\b[ \t]*:?|\b(?P<b>FINDINGS|IMPRESSION)[ \t]*:",
    re.IGNORECASE | re.MULTILINE,
)
# Any other uppercase "HEADER:" at line start ends the current section.
_OTHER_HEADER = re.compile(r"^[ \t]*[A-Z][A-Z /&()-]{1,40}:", re.MULTILINE)
_SENTENCE = re.compile(r"[^.!?]*[.!?]+|[^.!?]+$")


class CorpusError(Exception):
    """Base class for corpus problems."""


class MissingSection(CorpusError):
    def __init__(self, section: str):
        super().__init__(f"missing {section} section")
        self.section = section


class CorpusFormatError(CorpusError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


@dataclass(frozen=True)
class RadiologyReport:
    id: str
    findings: str
    impression: str

    def to_dict(self) -> dict:
        return {"id": self.id, "findings": self.findings, "impression": self.impression}


@dataclass(frozen=True)
class CorpusStats:
    report_count: int
    avg_words_findings: float
    avg_words_impression: float
    avg_sentences_findings: float
    avg_sentences_impression: float


def word_count(text: str) -> int:
    """Number of maximal runs of non-whitespace characters."""
    return len(text.split())


def split_sentences(text: str) -> list[str]:
    """Segments terminated by '.', '!' or '?'; a trailing unterminated segment counts too.

    Segments that hold only whitespace and punctuation are dropped.
    """
    return [m.group(0) for m in _SENTENCE.finditer(text) if m.group(0).strip(" \t\r\n.!?")]


def sentence_count(text: str) -> int:
    return len(split_sentences(text))


def _section_spans(raw: str) -> dict[str, tuple[int, int]]:
    """Map section name -> (header start, body start) for the first occurrence of each."""
    spans: dict[str, tuple[int, int]] = {}
    for m in _TARGET_HEADER.finditer(raw):
        name = (m.group("a") or m.group("b")).lower()
        spans.setdefault(name, (m.start(), m.end()))
    return spans


def _section_body(raw: str, body_start: int, header_starts: list[int]) -> str:
    end = len(raw)
    for s in header_starts:
        if s >= body_start:
            end = min(end, s)
            break
    for m in _OTHER_HEADER.finditer(raw, body_start):
        end = min(end, m.start())
        break
    return " ".join(raw[body_start:end].split())


def parse_report(raw: str, report_id: str = "") -> RadiologyReport:
    """Extract the FINDINGS and IMPRESSION sections from a free-text report.

    Section bodies run until the next header and are whitespace-normalised.
    A whitespace-only body is treated as missing.

    Raises:
        MissingSection: if either header or its body is absent.
    """
    spans = _section_spans(raw)
    starts = sorted(v[0] for v in spans.values())
    sections = {}
    for name in ("findings", "impression"):
        if name not in spans:
            raise MissingSection(name)
        body = _section_body(raw, spans[name][1], starts)
        if not body:
            raise MissingSection(name)
        sections[name] = body
    return RadiologyReport(report_id, sections["findings"], sections["impression"])


def is_eligible(report: RadiologyReport) -> bool:
    return (
        word_count(report.findings) >= MIN_FINDINGS_WORDS
        and word_count(report.impression) >= MIN_IMPRESSION_WORDS
    )


def filter_eligible(reports: Iterable[RadiologyReport]) -> list[RadiologyReport]:
    """Keep reports with >= 10 findings words and >= 2 impression words, in order."""
    return [r for r in reports if is_eligible(r)]


def load_corpus(path) -> list[RadiologyReport]:
    """Read a JSON-lines corpus. Blank lines are skipped; unknown fields ignored."""
    path = Path(path)
    reports: list[RadiologyReport] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusFormatError(path, lineno, "record is not an object")
            for key in ("id", "findings", "impression"):
                if not isinstance(obj.get(key), str):
                    raise CorpusFormatError(path, lineno, f"field {key!r} missing or not a string")
            if obj["id"] in seen:
                raise CorpusFormatError(path, lineno, f"duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            reports.append(RadiologyReport(obj["id"], obj["findings"], obj["impression"]))
    return reports


def save_corpus(reports: Iterable[RadiologyReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def compute_stats(reports: Iterable[RadiologyReport]) -> CorpusStats:
    reports = list(reports)
    n = len(reports)
    if n == 0:
        return CorpusStats(0, 0.0, 0.0, 0.0, 0.0)
    return CorpusStats(
        report_count=n,
        avg_words_findings=sum(word_count(r.findings) for r in reports) / n,
        avg_words_impression=sum(word_count(r.impression) for r in reports) / n,
        avg_sentences_findings=sum(sentence_count(r.findings) for r in reports) / n,
        avg_sentences_impression=sum(sentence_count(r.impression) for r in reports) / n,
    )


def ingest_dir(raw_dir, pattern: str = "*.txt") -> tuple[list[RadiologyReport], dict[str, str]]:
    """Parse every raw report file in ``raw_dir``; the file stem becomes the id.

    Returns the parsed reports (sorted by file name) and a mapping of
    failed ids to the reason they were rejected.
    """
    reports, failures = [], {}
    for f in sorted(Path(raw_dir).glob(pattern)):
        try:
            reports.append(parse_report(f.read_text(encoding="utf-8"), f.stem))
        except MissingSection as exc:
            failures[f.stem] = str(exc)
    return reports, failures
