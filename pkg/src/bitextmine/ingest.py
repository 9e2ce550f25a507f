"""Parsing of bilingual transcript documents into cleaned, per-language text.

Input documents are plain UTF-8 text, one file per lecture per language
pair, with text blocks separated by blank lines and presentation
artifacts (slide-time markers, time-code lines, page numbers)
interleaved with the content.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigInvalid, EmptyDocument, EncodingError, LanguageMismatch
from .segment import (
    INDIC_LANGUAGES,
    LANGUAGES,
    SCRIPT_FOR_LANGUAGE,
    DEFAULT_ABBREVIATIONS,
    MonoDocument,
    Sentence,
    classify_script,
    script_char_counts,
    segment_sentences,
)

_WS = re.compile(r"\s+")
_BLOCK_SEP = re.compile(r"\n\s*\n")

ACTION_DELETE_MATCH = "delete-match"
ACTION_DELETE_LINE = "delete-line"
_ACTIONS = (ACTION_DELETE_MATCH, ACTION_DELETE_LINE)


@dataclass(frozen=True)
class LectureMeta:
    lecture_id: str
    course_id: str
    language_pair: tuple[str, str]
    source_path: str = ""

    def __post_init__(self):
        if not self.lecture_id:
            raise ValueError("lecture_id must be nonempty")
        for code in self.language_pair:
            if code not in LANGUAGES:
                raise ValueError(f"unknown language code {code!r}")


@dataclass(frozen=True)
class TextBlock:
    text: str
    original_order: int


@dataclass
class BilingualDocument:
    meta: LectureMeta
    blocks: list[TextBlock] = field(default_factory=list)


@dataclass(frozen=True)
class ArtifactPattern:
    name: str
    pattern: str
    action: str

    def __post_init__(self):
        if self.action not in _ACTIONS:
            raise ConfigInvalid(
                f"pattern {self.name!r}: action must be one of {_ACTIONS}"
            )
        try:
            compiled = re.compile(self.pattern, re.IGNORECASE)
        except re.error as exc:
            raise ConfigInvalid(f"pattern {self.name!r} does not compile: {exc}")
        object.__setattr__(self, "_compiled", compiled)

    @property
    def compiled(self) -> re.Pattern:
        return self._compiled  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ArtifactPatternSet:
    """Ordered, versioned set of artifact-removal rules."""

    version: str
    patterns: tuple[ArtifactPattern, ...]

    @classmethod
    def default(cls) -> "ArtifactPatternSet":
        return _DEFAULT_PATTERNS

    @classmethod
    def from_file(cls, path: str | Path) -> "ArtifactPatternSet":
        """Load a pattern set from a YAML file.

        Expected shape::

            version: "1"
            patterns:
              - {name: ..., pattern: '...', action: delete-match|delete-line}
        """
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigInvalid(f"cannot load pattern set {path}: {exc}")
        if not isinstance(data, dict) or "patterns" not in data:
            raise ConfigInvalid(f"pattern set {path}: expected a mapping with 'patterns'")
        patterns = []
        for entry in data["patterns"]:
            try:
                patterns.append(
                    ArtifactPattern(
                        name=str(entry["name"]),
                        pattern=str(entry["pattern"]),
                        action=str(entry["action"]),
                    )
                )
            except KeyError as exc:
                raise ConfigInvalid(f"pattern set {path}: missing field {exc}")
        return cls(version=str(data.get("version", "unversioned")), patterns=tuple(patterns))


# Default artifact rules.  The upstream documents carry parenthesized
# "Refer Slide Time" markers and bare time-code / page-number lines; new
# shapes can be added via a pattern-set file without code changes.
_DEFAULT_PATTERNS = ArtifactPatternSet(
    version="default-1",
    patterns=(
        ArtifactPattern(
            name="refer-slide-time",
            pattern=r"\(\s*refer\s+slide\s+time\s*[:.]?\s*\d{1,2}:\d{2}(?::\d{2})?\s*\)",
            action=ACTION_DELETE_MATCH,
        ),
        ArtifactPattern(
            name="timecode-line",
            pattern=r"^\s*\(?\s*\d{1,2}:\d{2}(?::\d{2})?\s*\)?\s*$",
            action=ACTION_DELETE_LINE,
        ),
        ArtifactPattern(
            name="page-number-line",
            pattern=r"^\s*(?:page|slide)?\s*\d{1,4}\s*$",
            action=ACTION_DELETE_LINE,
        ),
    ),
)


def normalize_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _strip_once(text: str, patterns: ArtifactPatternSet) -> str:
    for pat in patterns.patterns:
        if pat.action == ACTION_DELETE_LINE:
            lines = text.split("\n")
            kept = [ln for ln in lines if not pat.compiled.search(ln)]
            if len(kept) != len(lines):
                text = "\n".join(kept)
        else:
            text = pat.compiled.sub(" ", text)
    return normalize_whitespace(text)


def strip_artifacts(block: str, patterns: ArtifactPatternSet | None = None) -> str:
    """Remove artifact matches from a block and normalize whitespace.

    Runs the rules to a fixed point so that removing one artifact cannot
    uncover another (this is what makes the operation idempotent).
    May return an empty string.
    """
    if patterns is None:
        patterns = ArtifactPatternSet.default()
    current = block
    while True:
        stripped = _strip_once(current, patterns)
        if stripped == current:
            return stripped
        current = stripped


def parse_document(
    raw: str | bytes,
    meta: LectureMeta,
    patterns: ArtifactPatternSet | None = None,
) -> BilingualDocument:
    """Parse raw transcript text into ordered, cleaned blocks.

    Blocks are separated by blank lines; each is artifact-stripped and
    whitespace-normalized, and empty survivors are dropped.
    ``original_order`` keeps each block's position in the raw document.
    """
    if patterns is None:
        patterns = ArtifactPatternSet.default()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"{meta.source_path or meta.lecture_id}: {exc}")
    else:
        try:
            raw.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise EncodingError(f"{meta.source_path or meta.lecture_id}: {exc}")

    raw = raw.replace("\r\n", "\n").replace("\r", "\n")
    blocks = []
    for order, chunk in enumerate(_BLOCK_SEP.split(raw)):
        cleaned = strip_artifacts(chunk, patterns)
        if cleaned:
            blocks.append(TextBlock(text=cleaned, original_order=order))
    if not blocks:
        raise EmptyDocument(meta.source_path or meta.lecture_id)
    return BilingualDocument(meta=meta, blocks=blocks)


def split_bilingual(
    doc: BilingualDocument,
    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS,
    mismatch_limit: float = 0.10,
) -> tuple[MonoDocument, MonoDocument]:
    """Route blocks to the English or Indic side and segment into sentences.

    Routing is by script classification: Latin-dominant blocks go to the
    English side, Indic-script blocks to the Indic side.  Mixed blocks
    are routed by character-majority script and flagged; blocks with no
    script-bearing characters at all go to the English side and are
    flagged as neutral.  Raises LanguageMismatch when more than
    ``mismatch_limit`` of the Indic side's script-bearing characters sit
    in an Indic script other than the declared one.
    """
    src_lang, tgt_lang = doc.meta.language_pair
    if tgt_lang not in INDIC_LANGUAGES:
        raise ValueError(f"target language {tgt_lang!r} is not Indic")
    declared_script = SCRIPT_FOR_LANGUAGE[tgt_lang]

    en_blocks: list[TextBlock] = []
    xx_blocks: list[TextBlock] = []
    mixed: list[int] = []
    neutral: list[int] = []
    for block in doc.blocks:
        label = classify_script(block.text)
        if label.label == "Neutral":
            neutral.append(block.original_order)
            en_blocks.append(block)
            continue
        if label.label == "Mixed":
            mixed.append(block.original_order)
        if label.dominant == "Latin":
            en_blocks.append(block)
        else:
            xx_blocks.append(block)

    # Validate the Indic side against the declared script.
    declared_chars = 0
    foreign_chars = 0
    for block in xx_blocks:
        for name, count in script_char_counts(block.text).items():
            if name == declared_script:
                declared_chars += count
            elif name != "Latin":
                foreign_chars += count
    total_indic = declared_chars + foreign_chars
    if total_indic and foreign_chars / total_indic > mismatch_limit:
        raise LanguageMismatch(
            f"{doc.meta.lecture_id}: {foreign_chars}/{total_indic} Indic-side "
            f"characters are not {declared_script}"
        )

    en_doc = _build_mono(doc.meta, "en", en_blocks, abbreviations, mixed, neutral)
    xx_doc = _build_mono(doc.meta, tgt_lang, xx_blocks, abbreviations, mixed, neutral)
    return en_doc, xx_doc


def load_manifest(path: str | Path) -> list[LectureMeta]:
    """Read the lecture manifest: one tab-separated record per line.

    Columns: lecture_id, course_id, source language, target language,
    transcript path (relative paths resolve against the manifest's
    directory).  Blank lines and '#' comments are skipped.
    """
    path = Path(path)
    base = path.resolve().parent
    records: list[LectureMeta] = []
    seen: set[tuple[str, str, str]] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ConfigInvalid(f"{path}:{lineno}: expected 5 tab-separated columns")
        lecture_id, course_id, src_lang, tgt_lang, rel = parts
        if src_lang != "en":
            raise ConfigInvalid(f"{path}:{lineno}: source language must be 'en'")
        if tgt_lang not in INDIC_LANGUAGES:
            raise ConfigInvalid(f"{path}:{lineno}: target {tgt_lang!r} is not an Indic code")
        dedup_key = (lecture_id, src_lang, tgt_lang)
        if dedup_key in seen:
            raise ConfigInvalid(f"{path}:{lineno}: duplicate record for {dedup_key}")
        seen.add(dedup_key)
        source = Path(rel)
        if not source.is_absolute():
            source = base / source
        try:
            records.append(
                LectureMeta(
                    lecture_id=lecture_id,
                    course_id=course_id,
                    language_pair=(src_lang, tgt_lang),
                    source_path=str(source),
                )
            )
        except ValueError as exc:
            raise ConfigInvalid(f"{path}:{lineno}: {exc}")
    return records


def _build_mono(
    meta: LectureMeta,
    language: str,
    blocks: list[TextBlock],
    abbreviations: tuple[str, ...],
    mixed: list[int],
    neutral: list[int],
) -> MonoDocument:
    own_orders = {b.original_order for b in blocks}
    sentences: list[Sentence] = []
    for block in blocks:
        for sent in segment_sentences(block.text, language, abbreviations):
            sentences.append(
                Sentence(
                    index=len(sentences),
                    text=sent.text,
                    block_order=block.original_order,
                )
            )
    return MonoDocument(
        meta=meta,
        language=language,
        sentences=sentences,
        mixed_blocks=tuple(o for o in mixed if o in own_orders),
        neutral_blocks=tuple(o for o in neutral if o in own_orders),
    )
