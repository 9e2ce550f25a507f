"""Script classification and language-aware sentence segmentation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import LanguageMismatch

if TYPE_CHECKING:
    from .ingest import LectureMeta

# The nine language codes this pipeline handles: English plus eight
# Indic languages written in seven distinct scripts (Hindi and Marathi
# share Devanagari).
LANGUAGES = frozenset({"en", "bn", "gu", "hi", "kn", "ml", "mr", "ta", "te"})
INDIC_LANGUAGES = frozenset(LANGUAGES - {"en"})

# Unicode block ranges, inclusive.
SCRIPT_RANGES: dict[str, tuple[int, int]] = {
    "Devanagari": (0x0900, 0x097F),
    "Bengali": (0x0980, 0x09FF),
    "Gujarati": (0x0A80, 0x0AFF),
    "Tamil": (0x0B80, 0x0BFF),
    "Telugu": (0x0C00, 0x0C7F),
    "Kannada": (0x0C80, 0x0CFF),
    "Malayalam": (0x0D00, 0x0D7F),
}

SCRIPT_FOR_LANGUAGE: dict[str, str] = {
    "en": "Latin",
    "hi": "Devanagari",
    "mr": "Devanagari",
    "bn": "Bengali",
    "gu": "Gujarati",
    "ta": "Tamil",
    "te": "Telugu",
    "kn": "Kannada",
    "ml": "Malayalam",
}

# A text whose dominant script holds less than this share of its
# script-bearing characters is labelled Mixed.
MIXED_THRESHOLD = 0.9

DANDA = "।"
DOUBLE_DANDA = "॥"

_EN_TERMINATORS = ".!?"
_INDIC_TERMINATORS = ".!?" + DANDA + DOUBLE_DANDA
_EN_TERMINATOR_RUN = re.compile(r"[.!?]+")
_INDIC_TERMINATOR_RUN = re.compile(r"[.!?।॥]+")

# English abbreviations that must not end a sentence at a period.
DEFAULT_ABBREVIATIONS = (
    "Dr", "Mr", "Mrs", "Prof", "etc", "e.g", "i.e", "Fig", "Eq", "vs", "No",
)

_TOKEN_BEFORE_PERIOD = re.compile(r"([A-Za-z]+(?:\.[A-Za-z]+)*)$")


@dataclass(frozen=True)
class ScriptLabel:
    """Classification of a text by dominant Unicode script.

    ``label`` is one of the seven Indic script names, ``Latin``, ``Mixed``
    or ``Neutral``.  ``dominant`` names the script with the highest
    character count (None when Neutral) so that Mixed text can still be
    routed by majority.
    """

    label: str
    dominant_ratio: float
    dominant: str | None = None


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    block_order: int | None = None


@dataclass
class MonoDocument:
    """Ordered sentences of a single language for one lecture."""

    meta: "LectureMeta"
    language: str
    sentences: list[Sentence] = field(default_factory=list)
    mixed_blocks: tuple[int, ...] = ()
    neutral_blocks: tuple[int, ...] = ()

    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]

    def validate(self) -> None:
        """Check structural invariants; raise on violation."""
        for i, sent in enumerate(self.sentences):
            if sent.index != i:
                raise ValueError(f"sentence indices not contiguous at {i}")
            if not sent.text.strip():
                raise ValueError(f"empty sentence at index {i}")
        expected = SCRIPT_FOR_LANGUAGE[self.language]
        labelled = [
            classify_script(s.text).dominant for s in self.sentences
        ]
        bearing = [d for d in labelled if d is not None]
        if bearing:
            share = sum(1 for d in bearing if d == expected) / len(bearing)
            if share < 0.9:
                raise LanguageMismatch(
                    f"only {share:.0%} of sentences look like {self.language}"
                )


def _script_of_char(ch: str) -> str | None:
    o = ord(ch)
    if 0x41 <= o <= 0x5A or 0x61 <= o <= 0x7A:
        return "Latin"
    if o < 0x0900 or o > 0x0D7F:
        return None
    for name, (lo, hi) in SCRIPT_RANGES.items():
        if lo <= o <= hi:
            return name
    return None


def script_char_counts(text: str) -> dict[str, int]:
    """Count script-bearing characters per script name."""
    counts: dict[str, int] = {}
    for ch in text:
        script = _script_of_char(ch)
        if script is not None:
            counts[script] = counts.get(script, 0) + 1
    return counts


def classify_script(text: str) -> ScriptLabel:
    """Classify text by the dominant script of its script-bearing characters.

    Characters outside Basic Latin letters and the seven Indic blocks do
    not count.  Returns Neutral when nothing counts, Mixed when the
    dominant script holds less than ``MIXED_THRESHOLD`` of the counted
    characters.
    """
    counts = script_char_counts(text)
    total = sum(counts.values())
    if total == 0:
        return ScriptLabel(label="Neutral", dominant_ratio=0.0, dominant=None)
    # Deterministic winner on equal counts: alphabetical script name.
    dominant = min(counts, key=lambda s: (-counts[s], s))
    ratio = counts[dominant] / total
    label = dominant if ratio >= MIXED_THRESHOLD else "Mixed"
    return ScriptLabel(label=label, dominant_ratio=ratio, dominant=dominant)


def load_abbreviations(path: str | Path) -> tuple[str, ...]:
    """Read an abbreviation guard list, one token per line."""
    tokens = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        tok = line.strip().rstrip(".")
        if tok and not tok.startswith("#"):
            tokens.append(tok)
    return tuple(tokens)


def _period_is_guarded(
    text: str,
    start: int,
    end: int,
    guards: tuple[str, ...],
    dotted_prefixes: frozenset[str],
) -> bool:
    # No split inside digit.digit (decimal numbers).
    if 0 < start and end < len(text):
        if text[start - 1].isdigit() and text[end].isdigit():
            return True
    m = _TOKEN_BEFORE_PERIOD.search(text, 0, start)
    if m is None:
        return False
    token = m.group(1)
    if token in guards:
        return True
    # "e.g." / "i.e.": the first period sits mid-abbreviation, so guard any
    # token that is a dotted prefix of a known dotted abbreviation.
    return token in dotted_prefixes


def _dotted_prefixes(guards: tuple[str, ...]) -> frozenset[str]:
    prefixes = set()
    for g in guards:
        if "." in g:
            parts = g.split(".")
            for i in range(1, len(parts)):
                prefixes.add(".".join(parts[:i]))
    return frozenset(prefixes)


def segment_sentences(
    text: str,
    language: str,
    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS,
) -> list[Sentence]:
    """Split text into sentences at terminator runs.

    English splits on ``. ! ?`` with an abbreviation guard list and a
    digit.digit guard; Indic languages additionally split on danda and
    double danda.  Terminator runs stay attached to the sentence they
    close.  A trailing chunk with no terminator is still a sentence.
    """
    if language not in LANGUAGES:
        raise ValueError(f"unknown language code {language!r}")
    run_pattern = _EN_TERMINATOR_RUN if language == "en" else _INDIC_TERMINATOR_RUN
    dotted = _dotted_prefixes(abbreviations)

    pieces: list[str] = []
    begin = 0
    for m in run_pattern.finditer(text):
        if m.group() == "." and _period_is_guarded(
            text, m.start(), m.end(), abbreviations, dotted
        ):
            continue
        pieces.append(text[begin : m.end()])
        begin = m.end()
    if begin < len(text):
        pieces.append(text[begin:])

    sentences = []
    for piece in pieces:
        stripped = piece.strip()
        if stripped:
            sentences.append(Sentence(index=len(sentences), text=stripped))
    return sentences
