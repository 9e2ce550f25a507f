"""Pipeline stages over an on-disk workspace.

Each stage reads the previous stage's outputs from a well-defined
workspace subdirectory and writes its own, so long corpus runs are
resumable and any stage can be rerun in isolation.  Per-document errors
are collected in the stage report; only configuration and environment
problems abort a stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .align import AlignmentPath, align_coarse_to_fine, extract_pairs
from .config import PipelineConfig
from .corpus import (
    Corpus,
    collate,
    compute_stats,
    dedup,
    export,
    format_stats_table,
    load_jsonl,
    pair_from_obj,
    pair_to_obj,
    pivot,
    split_holdout,
)
from .embed import CacheProvider, VectorCache, get_provider
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    MissingPriorStage,
    PipelineError,
    ProviderUnavailable,
)
from .ingest import (
    ArtifactPatternSet,
    BilingualDocument,
    LectureMeta,
    TextBlock,
    load_manifest,
    parse_document,
    split_bilingual,
)
from .segment import DEFAULT_ABBREVIATIONS, MonoDocument, Sentence, load_abbreviations

log = logging.getLogger("bitextmine")

STAGES = (
    "ingest",
    "segment",
    "embed",
    "align",
    "pivot",
    "collate",
    "stats",
    "split",
    "export",
)

LONG_SENTENCE_CHARS = 512

_SAFE_KEY = re.compile(r"[^A-Za-z0-9_.-]")


@dataclass
class StageReport:
    stage: str
    processed: int = 0
    produced: int = 0
    failures: list[dict[str, str]] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)

    def fail(self, item: str, error: Exception) -> None:
        self.failures.append({"item": item, "error": f"{type(error).__name__}: {error}"})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PipelineReport:
    stages: list[StageReport] = field(default_factory=list)
    fatal: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": [r.to_dict() for r in self.stages],
            "fatal": self.fatal,
        }


class Workspace:
    """Directory layout shared by all stages."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def dir(self, stage: str) -> Path:
        return self.root / stage

    def listing(self, stage: str) -> Path:
        return self.dir(stage) / "documents.jsonl"

    def require(self, path: Path, needed_by: str, produced_by: str) -> Path:
        if not path.exists():
            raise MissingPriorStage(
                f"{needed_by}: missing {path}; run the {produced_by} stage first"
            )
        return path


def doc_key(meta: LectureMeta) -> str:
    raw = f"{meta.lecture_id}__{meta.language_pair[0]}-{meta.language_pair[1]}"
    return _SAFE_KEY.sub("_", raw)


def _write_jsonl(path: Path, objs) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _patterns(config: PipelineConfig) -> ArtifactPatternSet:
    if config.pattern_set is not None:
        return ArtifactPatternSet.from_file(config.pattern_set)
    return ArtifactPatternSet.default()


def _abbreviations(config: PipelineConfig):
    if config.abbreviations is not None:
        return load_abbreviations(config.abbreviations)
    return DEFAULT_ABBREVIATIONS


def run_ingest(config: PipelineConfig) -> StageReport:
    """Parse every manifest document into cleaned, ordered text blocks."""
    if config.manifest is None:
        raise ConfigInvalid("ingest requires a manifest")
    report = StageReport("ingest")
    ws = Workspace(config.workspace)
    patterns = _patterns(config)
    metas = load_manifest(config.manifest)
    if not metas:
        log.warning("manifest %s lists no documents", config.manifest)

    out_dir = ws.dir("ingest")
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    total_blocks = 0
    for meta in metas:
        key = doc_key(meta)
        try:
            raw = Path(meta.source_path).read_bytes()
            doc = parse_document(raw, meta, patterns)
        except (OSError, PipelineError) as exc:
            report.fail(key, exc)
            continue
        _write_jsonl(
            out_dir / f"{key}.blocks.jsonl",
            ({"order": b.original_order, "text": b.text} for b in doc.blocks),
        )
        records.append(
            {
                "key": key,
                "lecture_id": meta.lecture_id,
                "course_id": meta.course_id,
                "src_lang": meta.language_pair[0],
                "tgt_lang": meta.language_pair[1],
                "source_path": meta.source_path,
                "blocks": len(doc.blocks),
            }
        )
        total_blocks += len(doc.blocks)
        report.processed += 1
    _write_jsonl(ws.listing("ingest"), records)
    (out_dir / "meta.json").write_text(
        json.dumps(
            {"pattern_set_version": patterns.version, "manifest": str(config.manifest)},
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    report.produced = total_blocks
    report.info["pattern_set_version"] = patterns.version
    return report


def _doc_meta(record: dict) -> LectureMeta:
    return LectureMeta(
        lecture_id=record["lecture_id"],
        course_id=record["course_id"],
        language_pair=(record["src_lang"], record["tgt_lang"]),
        source_path=record.get("source_path", ""),
    )


def run_segment(config: PipelineConfig) -> StageReport:
    """Split blocks into per-language sentence files plus sidecar metadata."""
    report = StageReport("segment")
    ws = Workspace(config.workspace)
    listing = ws.require(ws.listing("ingest"), "segment", "ingest")
    abbreviations = _abbreviations(config)
    pattern_version = json.loads((ws.dir("ingest") / "meta.json").read_text())[
        "pattern_set_version"
    ]

    out_dir = ws.dir("segment")
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(record: dict):
        meta = _doc_meta(record)
        blocks = [
            TextBlock(text=o["text"], original_order=o["order"])
            for o in _read_jsonl(ws.dir("ingest") / f"{record['key']}.blocks.jsonl")
        ]
        doc = BilingualDocument(meta=meta, blocks=blocks)
        sides = split_bilingual(doc, abbreviations)
        for side in sides:
            if side.sentences:
                side.validate()
        return sides

    records = _read_jsonl(listing)
    out_records = []
    sentence_total = 0
    long_total = 0
    for record in records:
        key = record["key"]
        try:
            en_doc, xx_doc = one(record)
        except PipelineError as exc:
            report.fail(key, exc)
            continue
        for side in (en_doc, xx_doc):
            path = out_dir / f"{key}.{side.language}.txt"
            path.write_text(
                "".join(s.text + "\n" for s in side.sentences), encoding="utf-8"
            )
        long_count = sum(
            1
            for side in (en_doc, xx_doc)
            for s in side.sentences
            if len(s.text) > LONG_SENTENCE_CHARS
        )
        sidecar = {
            "key": key,
            "lecture_id": record["lecture_id"],
            "course_id": record["course_id"],
            "src_lang": en_doc.language,
            "tgt_lang": xx_doc.language,
            "sentences": {
                en_doc.language: len(en_doc.sentences),
                xx_doc.language: len(xx_doc.sentences),
            },
            "blocks": {
                en_doc.language: [s.block_order for s in en_doc.sentences],
                xx_doc.language: [s.block_order for s in xx_doc.sentences],
            },
            "mixed_blocks": sorted(set(en_doc.mixed_blocks) | set(xx_doc.mixed_blocks)),
            "neutral_blocks": sorted(set(en_doc.neutral_blocks) | set(xx_doc.neutral_blocks)),
            "long_sentences": long_count,
            "pattern_set_version": pattern_version,
        }
        (out_dir / f"{key}.meta.json").write_text(
            json.dumps(sidecar, ensure_ascii=False, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        out_records.append(
            {
                "key": key,
                "lecture_id": record["lecture_id"],
                "course_id": record["course_id"],
                "src_lang": en_doc.language,
                "tgt_lang": xx_doc.language,
                "en_sentences": len(en_doc.sentences),
                "xx_sentences": len(xx_doc.sentences),
            }
        )
        sentence_total += len(en_doc.sentences) + len(xx_doc.sentences)
        long_total += long_count
        report.processed += 1
    _write_jsonl(ws.listing("segment"), out_records)
    report.produced = sentence_total
    report.info["long_sentences"] = long_total
    return report


def _read_sentences(path: Path) -> list[str]:
    return [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln]


def _workspace_cache(config: PipelineConfig, ws: Workspace) -> VectorCache:
    provider_cfg = config.provider
    model_id = provider_cfg.model_id
    return VectorCache(
        ws.dir("embed") / "vectors.bin",
        model_id=model_id,
        dimension=provider_cfg.dimension,
    )


def run_embed(config: PipelineConfig) -> StageReport:
    """Embed every sentence into the workspace vector cache."""
    report = StageReport("embed")
    ws = Workspace(config.workspace)
    listing = ws.require(ws.listing("segment"), "embed", "segment")
    ws.dir("embed").mkdir(parents=True, exist_ok=True)

    compute = get_provider(config.provider)
    cache = _workspace_cache(config, ws)
    cache.path.touch(exist_ok=True)  # stage output must exist even for zero documents
    provider = CacheProvider(cache, fallback=compute)

    records = _read_jsonl(listing)
    for record in records:
        key = record["key"]
        try:
            for lang_field in ("src_lang", "tgt_lang"):
                lang = record[lang_field]
                texts = _read_sentences(ws.dir("segment") / f"{key}.{lang}.txt")
                for start in range(0, len(texts), config.provider.batch_size):
                    chunk = texts[start : start + config.provider.batch_size]
                    if chunk:
                        provider.embed_batch(chunk, language=lang)
        except (ProviderUnavailable, DimensionMismatch):
            raise  # backend down or misconfigured: fatal, not per-document
        except (PipelineError, OSError, ValueError) as exc:
            report.fail(key, exc)
            continue
        report.processed += 1
    report.produced = len(cache)
    report.info.update(
        {
            "backend": config.provider.backend,
            "model_id": cache.model_id,
            "dimension": cache.dimension,
            "cache_hits": provider.hits,
            "cache_misses": provider.misses,
        }
    )
    return report


def _mono_from_files(
    record: dict, lang: str, sentences: list[str], sidecar: dict
) -> MonoDocument:
    blocks = sidecar["blocks"].get(lang, [None] * len(sentences))
    return MonoDocument(
        meta=_doc_meta(record),
        language=lang,
        sentences=[
            Sentence(index=i, text=t, block_order=blocks[i] if i < len(blocks) else None)
            for i, t in enumerate(sentences)
        ],
    )


def _dump_links(path: Path, alignment: AlignmentPath) -> None:
    def span(s):
        return f"{s[0]}-{s[1]}" if s is not None else "-"

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for link in alignment.links:
            score = "" if link.score is None else repr(link.score)
            fh.write(f"{span(link.src_span)}\t{span(link.tgt_span)}\t{score}\t{link.kind}\n")


def run_align(config: PipelineConfig) -> StageReport:
    """Align each document pair and extract confident translation pairs."""
    report = StageReport("align")
    ws = Workspace(config.workspace)
    listing = ws.require(ws.listing("segment"), "align", "segment")
    ws.require(ws.dir("embed") / "vectors.bin", "align", "embed")
    cache = _workspace_cache(config, ws)
    lookup = CacheProvider(cache, fallback=None)
    out_dir = ws.dir("align")
    out_dir.mkdir(parents=True, exist_ok=True)

    records = _read_jsonl(listing)

    def one(record: dict):
        key = record["key"]
        sidecar = json.loads(
            (ws.dir("segment") / f"{key}.meta.json").read_text(encoding="utf-8")
        )
        en_texts = _read_sentences(ws.dir("segment") / f"{key}.{record['src_lang']}.txt")
        xx_texts = _read_sentences(ws.dir("segment") / f"{key}.{record['tgt_lang']}.txt")
        en_doc = _mono_from_files(record, record["src_lang"], en_texts, sidecar)
        xx_doc = _mono_from_files(record, record["tgt_lang"], xx_texts, sidecar)
        en_vecs = (
            lookup.embed_batch(en_texts, language="en")
            if en_texts
            else np.zeros((0, cache.dimension))
        )
        xx_vecs = (
            lookup.embed_batch(xx_texts, language=record["tgt_lang"])
            if xx_texts
            else np.zeros((0, cache.dimension))
        )
        alignment = align_coarse_to_fine(en_vecs, xx_vecs, config.align)
        pairs = extract_pairs(alignment, en_doc, xx_doc, config.align)
        return alignment, pairs

    jobs = max(1, min(config.effective_jobs, max(1, len(records))))
    if jobs > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: _safe(one, r), records))
    else:
        results = [_safe(one, r) for r in records]

    total_links = 0
    prefilter_scores: list[float] = []
    for record, outcome in zip(records, results):
        key = record["key"]
        if isinstance(outcome, Exception):
            report.fail(key, outcome)
            continue
        alignment, pairs = outcome
        _dump_links(out_dir / f"{key}.links.tsv", alignment)
        _write_jsonl(out_dir / f"{key}.pairs.jsonl", (pair_to_obj(p) for p in pairs))
        scored = [l.score for l in alignment.links if l.score is not None]
        prefilter_scores.extend(scored)
        total_links += len(alignment.links)
        report.processed += 1
        report.produced += len(pairs)
    report.info.update(
        {
            "links": total_links,
            "prefilter_scored_links": len(prefilter_scores),
            "prefilter_mean_score": (
                float(np.mean(prefilter_scores)) if prefilter_scores else None
            ),
            "threshold": config.align.keep_threshold,
        }
    )
    return report


def _safe(fn: Callable, *args):
    try:
        return fn(*args)
    except (PipelineError, OSError, ValueError, RuntimeError) as exc:
        return exc


def run_pivot(config: PipelineConfig) -> StageReport:
    """Derive Indic-Indic pairs by joining alignments through English."""
    report = StageReport("pivot")
    ws = Workspace(config.workspace)
    listing = ws.require(ws.listing("segment"), "pivot", "segment")
    align_dir = ws.require(ws.dir("align"), "pivot", "align")
    out_dir = ws.dir("pivot")
    out_dir.mkdir(parents=True, exist_ok=True)

    by_lecture: dict[str, list[dict]] = {}
    for record in _read_jsonl(listing):
        by_lecture.setdefault(record["lecture_id"], []).append(record)

    produced_files = 0
    for lecture_id in sorted(by_lecture):
        records = sorted(by_lecture[lecture_id], key=lambda r: r["tgt_lang"])
        if len(records) < 2:
            continue
        # The join is only sound if every pair saw the same English text.
        hashes = {}
        for record in records:
            en_file = ws.dir("segment") / f"{record['key']}.{record['src_lang']}.txt"
            hashes[record["key"]] = hashlib.blake2b(
                en_file.read_bytes(), digest_size=16
            ).hexdigest()
        if len(set(hashes.values())) != 1:
            report.fail(
                lecture_id,
                PipelineError("English sides differ across language pairs; pivot skipped"),
            )
            continue
        for i, rec_xx in enumerate(records):
            for rec_yy in records[i + 1 :]:
                pairs_xx = [
                    pair_from_obj(o)
                    for o in _read_jsonl(align_dir / f"{rec_xx['key']}.pairs.jsonl")
                ]
                pairs_yy = [
                    pair_from_obj(o)
                    for o in _read_jsonl(align_dir / f"{rec_yy['key']}.pairs.jsonl")
                ]
                joined = pivot(pairs_xx, pairs_yy)
                name = f"{lecture_id}__{rec_xx['tgt_lang']}-{rec_yy['tgt_lang']}"
                name = _SAFE_KEY.sub("_", name)
                _write_jsonl(
                    out_dir / f"{name}.pairs.jsonl", (pair_to_obj(p) for p in joined)
                )
                produced_files += 1
                report.produced += len(joined)
        report.processed += 1
    report.info["pair_files"] = produced_files
    return report


def run_collate(config: PipelineConfig) -> StageReport:
    """Collect aligned and pivoted pairs into one deduplicated corpus."""
    report = StageReport("collate")
    ws = Workspace(config.workspace)
    align_dir = ws.require(ws.dir("align"), "collate", "align")
    ingest_meta = ws.require(ws.dir("ingest") / "meta.json", "collate", "ingest")
    out_dir = ws.dir("corpus")
    out_dir.mkdir(parents=True, exist_ok=True)

    pair_lists = []
    sources = sorted(align_dir.glob("*.pairs.jsonl"))
    pivot_dir = ws.dir("pivot")
    if pivot_dir.exists():
        sources += sorted(pivot_dir.glob("*.pairs.jsonl"))
    for path in sources:
        pair_lists.append([pair_from_obj(o) for o in _read_jsonl(path)])

    pattern_version = json.loads(ingest_meta.read_text())["pattern_set_version"]
    provenance = {
        "pipeline_version": __version__,
        "align_params": asdict(config.align),
        "pattern_set_version": pattern_version,
        "provider": {
            "backend": config.provider.backend,
            "model_id": config.provider.model_id,
            "dimension": config.provider.dimension,
        },
    }
    raw = collate(pair_lists, provenance)
    deduped = dedup(raw)
    export(deduped, out_dir / "corpus.jsonl", "jsonl")
    (out_dir / "provenance.json").write_text(
        json.dumps(deduped.provenance, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    report.processed = len(sources)
    report.produced = len(deduped)
    report.info.update({"raw_pairs": len(raw), "deduplicated_pairs": len(deduped)})
    return report


def _load_corpus(ws: Workspace, needed_by: str) -> Corpus:
    path = ws.require(ws.dir("corpus") / "corpus.jsonl", needed_by, "collate")
    prov_path = ws.dir("corpus") / "provenance.json"
    provenance = json.loads(prov_path.read_text()) if prov_path.exists() else {}
    return load_jsonl(path, provenance)


def run_stats(config: PipelineConfig) -> StageReport:
    """Summarize the corpus: counts, mean scores, histograms per language pair."""
    report = StageReport("stats")
    ws = Workspace(config.workspace)
    corpus = _load_corpus(ws, "stats")
    out_dir = ws.dir("stats")
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = compute_stats(corpus)
    (out_dir / "stats.json").write_text(
        json.dumps(stats.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    (out_dir / "stats.txt").write_text(format_stats_table(stats), encoding="utf-8")
    report.processed = len(corpus)
    report.produced = stats.language_pairs
    report.info.update(
        {
            "total_pairs": stats.total_pairs,
            "language_pairs": stats.language_pairs,
        }
    )
    return report


def run_split(config: PipelineConfig) -> StageReport:
    """Hold out whole lectures and take the top-k pairs per language as test."""
    report = StageReport("split")
    ws = Workspace(config.workspace)
    corpus = _load_corpus(ws, "split")
    out_dir = ws.dir("split")
    out_dir.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        train, test = split_holdout(corpus, config.holdout_lectures, config.test_top_k)
    for w in caught:
        report.info.setdefault("warnings", []).append(str(w.message))
        log.warning("%s", w.message)
    export(train, out_dir / "train.jsonl", "jsonl")
    export(test, out_dir / "test.jsonl", "jsonl")
    report.processed = len(corpus)
    report.produced = len(test)
    report.info.update({"train_pairs": len(train), "test_pairs": len(test)})
    return report


def run_export(config: PipelineConfig) -> StageReport:
    """Write the corpus (and split, when present) in the configured format."""
    report = StageReport("export")
    ws = Workspace(config.workspace)
    corpus = _load_corpus(ws, "export")
    out_dir = ws.dir("export")
    out_dir.mkdir(parents=True, exist_ok=True)
    fmt = config.export_format
    export(corpus, out_dir / f"corpus.{fmt}", fmt)
    report.processed = len(corpus)
    report.produced = 1
    split_dir = ws.dir("split")
    for name in ("train", "test"):
        src = split_dir / f"{name}.jsonl"
        if src.exists():
            export(load_jsonl(src), out_dir / f"{name}.{fmt}", fmt)
            report.produced += 1
    report.info["format"] = fmt
    return report


_STAGE_RUNNERS: dict[str, Callable[[PipelineConfig], StageReport]] = {
    "ingest": run_ingest,
    "segment": run_segment,
    "embed": run_embed,
    "align": run_align,
    "pivot": run_pivot,
    "collate": run_collate,
    "stats": run_stats,
    "split": run_split,
    "export": run_export,
}


def run_stage(stage: str, config: PipelineConfig) -> StageReport:
    """Run one named stage; deterministic outputs for identical inputs."""
    if stage not in _STAGE_RUNNERS:
        raise ConfigInvalid(f"unknown stage {stage!r}; expected one of {STAGES}")
    log.info("stage %s starting", stage)
    report = _STAGE_RUNNERS[stage](config)
    log.info(
        "stage %s done: processed=%d produced=%d failures=%d",
        stage,
        report.processed,
        report.produced,
        len(report.failures),
    )
    return report


def run_all(config: PipelineConfig) -> PipelineReport:
    """Run every stage in order, stopping at the first fatal error."""
    pipeline = PipelineReport()
    for stage in STAGES:
        try:
            pipeline.stages.append(run_stage(stage, config))
        except PipelineError as exc:
            pipeline.fatal = f"{stage}: {type(exc).__name__}: {exc}"
            log.error("pipeline aborted at %s: %s", stage, exc)
            break
    return pipeline
