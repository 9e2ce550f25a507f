"""bitextmine: mine multilingual parallel corpora from bilingual transcripts."""

__version__ = "0.1.0"

from .align import AlignmentPath, AlignParams, Link, align_coarse_to_fine, align_exact
from .corpus import Corpus, CorpusStats, TranslationPair
from .ingest import ArtifactPatternSet, BilingualDocument, LectureMeta
from .segment import MonoDocument, ScriptLabel, Sentence

__all__ = [
    "__version__",
    "AlignParams",
    "AlignmentPath",
    "ArtifactPatternSet",
    "BilingualDocument",
    "Corpus",
    "CorpusStats",
    "LectureMeta",
    "Link",
    "MonoDocument",
    "ScriptLabel",
    "Sentence",
    "TranslationPair",
    "align_coarse_to_fine",
    "align_exact",
]
