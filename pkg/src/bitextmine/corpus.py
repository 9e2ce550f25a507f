"""Collation, deduplication, pivoting, statistics, splitting and export."""

from __future__ import annotations

import json
import re
import unicodedata
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InsufficientPairs, LectureMismatch, MetadataMissing, UnescapableText

ALIGN_TYPES = ("1-1", "1-n", "n-1", "pivoted")
HISTOGRAM_BINS = 20

_WS = re.compile(r"\s+")

_JSONL_FIELDS = (
    "src_lang",
    "tgt_lang",
    "src_text",
    "tgt_text",
    "score",
    "lecture_id",
    "course_id",
    "src_span",
    "tgt_span",
    "align_type",
)


@dataclass(frozen=True)
class TranslationPair:
    src_lang: str
    tgt_lang: str
    src_text: str
    tgt_text: str
    score: float
    lecture_id: str
    course_id: str
    src_span: tuple[int, int]
    tgt_span: tuple[int, int]
    align_type: str

    def __post_init__(self):
        if not self.src_text or not self.tgt_text:
            raise ValueError("pair texts must be nonempty")
        if self.src_lang == self.tgt_lang:
            raise ValueError("source and target language must differ")
        if not -1.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [-1, 1]")
        if self.align_type not in ALIGN_TYPES:
            raise ValueError(f"unknown align_type {self.align_type!r}")


@dataclass
class Corpus:
    pairs: list[TranslationPair] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)


def normalize_for_key(text: str) -> str:
    """NFC + whitespace collapse; deliberately no case folding (unsafe
    across scripts)."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()


def pair_key(pair: TranslationPair) -> tuple[str, str, str, str]:
    return (
        pair.src_lang,
        pair.tgt_lang,
        normalize_for_key(pair.src_text),
        normalize_for_key(pair.tgt_text),
    )


def _sort_key(pair: TranslationPair):
    return (pair.lecture_id, pair.src_span, pair.tgt_span, pair.src_lang, pair.tgt_lang)


def collate(
    pair_lists: Iterable[Sequence[TranslationPair]],
    provenance: dict[str, Any] | None = None,
) -> Corpus:
    """Concatenate per-lecture pair lists into one corpus in stable order."""
    pairs: list[TranslationPair] = []
    for chunk in pair_lists:
        for pair in chunk:
            if not pair.lecture_id:
                raise MetadataMissing(f"pair without lecture_id: {pair.src_text[:40]!r}")
            pairs.append(pair)
    pairs.sort(key=_sort_key)
    return Corpus(pairs=pairs, provenance=dict(provenance or {}))


def dedup(corpus: Corpus) -> Corpus:
    """Drop duplicate pairs, keeping the highest-score instance per key.

    Keys are (src_lang, tgt_lang, normalized src_text, normalized
    tgt_text); score ties keep the first instance in stable order.
    Idempotent.
    """
    best: dict[tuple, TranslationPair] = {}
    for pair in corpus.pairs:
        key = pair_key(pair)
        kept = best.get(key)
        if kept is None or pair.score > kept.score:
            best[key] = pair
    pairs = sorted(best.values(), key=_sort_key)
    return Corpus(pairs=pairs, provenance=dict(corpus.provenance))


def pivot(
    pairs_en_xx: Sequence[TranslationPair],
    pairs_en_yy: Sequence[TranslationPair],
) -> list[TranslationPair]:
    """Join two English-pivot alignments of the same lecture into xx-yy pairs.

    Pairs join when their English-side span index ranges are exactly
    equal; the joined pair takes the minimum of the parent scores and
    align_type "pivoted".  Requires both inputs to come from the same
    lecture (and, per the caller's contract, the same English document).
    """
    if not pairs_en_xx or not pairs_en_yy:
        return []
    lectures = {p.lecture_id for p in pairs_en_xx} | {p.lecture_id for p in pairs_en_yy}
    if len(lectures) != 1:
        raise LectureMismatch(f"pivot inputs span lectures {sorted(lectures)}")

    by_en_span = {p.src_span: p for p in pairs_en_xx}
    out = []
    for right in pairs_en_yy:
        left = by_en_span.get(right.src_span)
        if left is None:
            continue
        out.append(
            TranslationPair(
                src_lang=left.tgt_lang,
                tgt_lang=right.tgt_lang,
                src_text=left.tgt_text,
                tgt_text=right.tgt_text,
                score=min(left.score, right.score),
                lecture_id=left.lecture_id,
                course_id=left.course_id,
                src_span=left.tgt_span,
                tgt_span=right.tgt_span,
                align_type="pivoted",
            )
        )
    return out


@dataclass
class CorpusStats:
    total_pairs: int
    language_pairs: int
    per_pair: dict[str, dict[str, Any]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_pairs": self.total_pairs,
            "language_pairs": self.language_pairs,
            "per_pair": self.per_pair,
        }


def compute_stats(corpus: Corpus) -> CorpusStats:
    """Exact per-language-pair counts, mean scores, score histograms and
    alignment-type distributions.

    Histograms use 20 bins over [0, 1] (scores clip into range); means
    are omitted for empty groups rather than reported as NaN.
    """
    groups: dict[str, list[TranslationPair]] = {}
    for pair in corpus.pairs:
        groups.setdefault(f"{pair.src_lang}-{pair.tgt_lang}", []).append(pair)

    per_pair: dict[str, dict[str, Any]] = {}
    for name in sorted(groups):
        pairs = groups[name]
        scores = np.array([p.score for p in pairs], dtype=np.float64)
        hist, _ = np.histogram(np.clip(scores, 0.0, 1.0), bins=HISTOGRAM_BINS, range=(0.0, 1.0))
        types: dict[str, int] = {}
        for p in pairs:
            types[p.align_type] = types.get(p.align_type, 0) + 1
        per_pair[name] = {
            "count": len(pairs),
            "mean_score": float(scores.mean()),
            "histogram": hist.tolist(),
            "align_types": {k: types[k] for k in sorted(types)},
        }
    return CorpusStats(
        total_pairs=len(corpus.pairs),
        language_pairs=len(per_pair),
        per_pair=per_pair,
    )


def format_stats_table(stats: CorpusStats) -> str:
    """Plain-text summary: pair counts (in thousands) and mean scores."""
    lines = [
        f"{'pair':<8}{'count':>10}{'count(k)':>10}{'mean':>8}",
        "-" * 36,
    ]
    for name, entry in stats.per_pair.items():
        lines.append(
            f"{name:<8}{entry['count']:>10}{entry['count'] / 1000:>10.1f}{entry['mean_score']:>8.3f}"
        )
    lines.append("-" * 36)
    lines.append(f"total pairs: {stats.total_pairs}  language pairs: {stats.language_pairs}")
    return "\n".join(lines) + "\n"


def split_holdout(
    corpus: Corpus,
    held_out_lectures: Iterable[str],
    k: int = 1000,
) -> tuple[Corpus, Corpus]:
    """Reserve the top-k pairs by score per language pair as a test set.

    Test pairs come only from held-out lectures (document-level holdout,
    no leakage); score ties resolve by stable corpus order.  The train
    side drops any pair sharing a dedup key with a selected test pair.
    Warns InsufficientPairs when a language pair has fewer than k
    held-out candidates.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    held = set(held_out_lectures)
    known = {p.lecture_id for p in corpus.pairs}
    missing = held - known
    if missing:
        warnings.warn(
            f"held-out lectures not present in corpus: {sorted(missing)}",
            InsufficientPairs,
        )

    candidates: dict[str, list[tuple[float, int]]] = {}
    for pos, pair in enumerate(corpus.pairs):
        if pair.lecture_id in held:
            candidates.setdefault(f"{pair.src_lang}-{pair.tgt_lang}", []).append(
                (-pair.score, pos)
            )

    test_positions: set[int] = set()
    for name in sorted(candidates):
        ranked = sorted(candidates[name])
        if len(ranked) < k:
            warnings.warn(
                f"{name}: only {len(ranked)} held-out pairs available (requested {k})",
                InsufficientPairs,
            )
        test_positions.update(pos for _, pos in ranked[:k])

    test_pairs = [corpus.pairs[pos] for pos in sorted(test_positions)]
    test_keys = {pair_key(p) for p in test_pairs}
    train_pairs = [
        p
        for pos, p in enumerate(corpus.pairs)
        if pos not in test_positions and pair_key(p) not in test_keys
    ]
    prov = dict(corpus.provenance)
    return Corpus(train_pairs, prov), Corpus(test_pairs, prov)


def pair_to_obj(pair: TranslationPair) -> dict[str, Any]:
    obj = asdict(pair)
    return {k: (list(obj[k]) if k.endswith("_span") else obj[k]) for k in _JSONL_FIELDS}


def pair_from_obj(obj: dict[str, Any]) -> TranslationPair:
    return TranslationPair(
        src_lang=obj["src_lang"],
        tgt_lang=obj["tgt_lang"],
        src_text=obj["src_text"],
        tgt_text=obj["tgt_text"],
        score=float(obj["score"]),
        lecture_id=obj["lecture_id"],
        course_id=obj["course_id"],
        src_span=tuple(obj["src_span"]),
        tgt_span=tuple(obj["tgt_span"]),
        align_type=obj["align_type"],
    )


def export_jsonl(corpus: Corpus, path: str | Path) -> None:
    """One JSON object per pair, UTF-8, field order fixed; round-trips
    every field bit-exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(json.dumps(pair_to_obj(pair), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def load_jsonl(path: str | Path, provenance: dict[str, Any] | None = None) -> Corpus:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(pair_from_obj(json.loads(line)))
    return Corpus(pairs=pairs, provenance=dict(provenance or {}))


def export_tsv(corpus: Corpus, path: str | Path) -> None:
    """Five-column TSV (src_lang, tgt_lang, src_text, tgt_text, score).

    Raises UnescapableText for texts containing tabs or newlines rather
    than silently corrupting the table.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            for text in (pair.src_text, pair.tgt_text):
                if "\t" in text or "\n" in text or "\r" in text:
                    raise UnescapableText(f"text contains tab/newline: {text[:60]!r}")
            fh.write(
                f"{pair.src_lang}\t{pair.tgt_lang}\t{pair.src_text}\t{pair.tgt_text}\t{pair.score!r}\n"
            )


def export(corpus: Corpus, path: str | Path, format: str = "jsonl") -> None:
    if format == "jsonl":
        export_jsonl(corpus, path)
    elif format == "tsv":
        export_tsv(corpus, path)
    else:
        raise ValueError(f"unknown export format {format!r}")
