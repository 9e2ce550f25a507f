"""Shared test utilities: independent oracles and synthetic fixtures.

The alignment oracles here deliberately avoid the production code paths:
costs are computed from raw block sums per call (no prefix matrices, no
banding, no vectorized rows), and the search is a plain top-down
recursion over every monotone move sequence.
"""

from __future__ import annotations

import functools
from pathlib import Path

import numpy as np

from bitextmine.align import AlignParams, AlignmentPath, Link
from bitextmine.embed import mock_embed, noisy_copy, save_seed_map, stable_seed


def oracle_moves(params: AlignParams) -> list[tuple[int, int]]:
    moves = [(1, 0), (0, 1), (1, 1)]
    for k in range(2, params.max_merge + 1):
        moves += [(1, k), (k, 1)]
    return moves


def oracle_move_cost(src, tgt, a: int, b: int, i: int, j: int, params: AlignParams) -> float:
    """Cost of a single move ending at DP node (i, j), computed directly."""
    if a == 0 or b == 0:
        return (a + b) * params.skip_cost
    x = np.sum(src[i - a : i], axis=0)
    y = np.sum(tgt[j - b : j], axis=0)
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx < 1e-9 or ny < 1e-9:
        cos = 0.0
    else:
        cos = float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))
    return (1.0 - cos) * (a + b) / 2.0


def oracle_min_cost(src, tgt, params: AlignParams) -> float:
    """Exhaustive search over all monotone move sequences (memoized)."""
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    src = src / np.linalg.norm(src, axis=1, keepdims=True) if len(src) else src
    tgt = tgt / np.linalg.norm(tgt, axis=1, keepdims=True) if len(tgt) else tgt
    moves = oracle_moves(params)

    @functools.lru_cache(maxsize=None)
    def best(i: int, j: int) -> float:
        if i == 0 and j == 0:
            return 0.0
        candidates = []
        for a, b in moves:
            if a <= i and b <= j:
                candidates.append(best(i - a, j - b) + oracle_move_cost(src, tgt, a, b, i, j, params))
        return min(candidates)

    return best(len(src), len(tgt))


def count_paths(n: int, m: int, max_merge: int) -> int:
    """Number of monotone move sequences from (0,0) to (n,m)."""
    moves = [(1, 0), (0, 1), (1, 1)] + [
        mv for k in range(2, max_merge + 1) for mv in ((1, k), (k, 1))
    ]

    @functools.lru_cache(maxsize=None)
    def f(i: int, j: int) -> int:
        if i == 0 and j == 0:
            return 1
        return sum(f(i - a, j - b) for a, b in moves if a <= i and b <= j)

    return f(n, m)


def enumerate_paths(src, tgt, params: AlignParams):
    """Literal enumeration: yields (total_cost, move list) for every path."""
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    src = src / np.linalg.norm(src, axis=1, keepdims=True) if len(src) else src
    tgt = tgt / np.linalg.norm(tgt, axis=1, keepdims=True) if len(tgt) else tgt
    moves = oracle_moves(params)
    n, m = len(src), len(tgt)

    stack = [(0, 0, 0.0, [])]
    while stack:
        i, j, cost, taken = stack.pop()
        if i == n and j == m:
            yield cost, taken
            continue
        for a, b in moves:
            if i + a <= n and j + b <= m:
                step = oracle_move_cost(src, tgt, a, b, i + a, j + b, params)
                stack.append((i + a, j + b, cost + step, taken + [(a, b)]))


def move_tie_key(a: int, b: int) -> tuple[int, int, int, int]:
    """Documented tie order: (1,1) first, then smaller a+b, then smaller a,
    then non-skip over skip."""
    is_skip = 1 if (a == 0 or b == 0) else 0
    return (0 if (a == 1 and b == 1) else 1, a + b, a, is_skip)


def oracle_best_path(src, tgt, params: AlignParams, tolerance: float = 1e-12):
    """Minimum cost plus the tie-policy winner among all optimal paths.

    The production backtrace resolves ties from the end of the path
    backwards, so the canonical optimal path is the one whose reversed
    move sequence is lexicographically smallest under the tie key.
    """
    paths = list(enumerate_paths(src, tgt, params))
    best_cost = min(c for c, _ in paths)
    tied = [mv for c, mv in paths if c <= best_cost + tolerance]
    tied.sort(key=lambda mv: [move_tie_key(a, b) for a, b in reversed(mv)])
    return best_cost, tied[0]


def path_moves(path: AlignmentPath) -> list[tuple[int, int]]:
    moves = []
    for link in path.links:
        a = 0 if link.src_span is None else link.src_span[1] - link.src_span[0] + 1
        b = 0 if link.tgt_span is None else link.tgt_span[1] - link.tgt_span[0] + 1
        moves.append((a, b))
    return moves


def nonskip_spans(links: list[Link]) -> set[tuple[tuple[int, int], tuple[int, int]]]:
    return {(l.src_span, l.tgt_span) for l in links if not l.is_skip}


def links_f1(predicted: list[Link], truth: set) -> float:
    pred = nonskip_spans(predicted)
    if not pred and not truth:
        return 1.0
    hits = len(pred & truth)
    return 2 * hits / (len(pred) + len(truth))


def planted_instance(
    seed: int,
    n_concepts: int,
    dimension: int = 768,
    noise: float = 0.1,
    skip_frac: float = 0.05,
    merge_frac: float = 0.15,
):
    """Build a synthetic parallel document pair with known alignment.

    Each concept becomes a 1-1, 1-2 or 2-1 link whose sentence embeddings
    are mock noisy copies of the concept embedding; skips insert
    unrelated sentences on one side.  Structure is drawn from a seeded
    generator, vectors come from the mock-embedding harness.  Returns
    (src, tgt, true_links) where true_links is the set of non-skip
    (src_span, tgt_span) tuples.
    """
    rng = np.random.default_rng(seed)
    src_rows: list[np.ndarray] = []
    tgt_rows: list[np.ndarray] = []
    truth: set[tuple[tuple[int, int], tuple[int, int]]] = set()

    def noisy(concept_key, side_idx):
        base = mock_embed(concept_key, dimension)
        return noisy_copy(base, noise, seed=stable_seed(concept_key, salt=side_idx))

    for k in range(n_concepts):
        r = rng.random()
        if r < skip_frac:
            src_rows.append(mock_embed(f"p{seed}:skip{k}", dimension))
            continue
        if r < 2 * skip_frac:
            tgt_rows.append(mock_embed(f"p{seed}:skip{k}", dimension))
            continue
        key = f"p{seed}:c{k}"
        kind = rng.random()
        i, j = len(src_rows), len(tgt_rows)
        if kind < merge_frac:  # 1-2
            src_rows.append(noisy(key, 0))
            tgt_rows.append(noisy(key, 1))
            tgt_rows.append(noisy(key, 2))
            truth.add(((i, i), (j, j + 1)))
        elif kind < 2 * merge_frac:  # 2-1
            src_rows.append(noisy(key, 0))
            src_rows.append(noisy(key, 1))
            tgt_rows.append(noisy(key, 2))
            truth.add(((i, i + 1), (j, j)))
        else:  # 1-1
            src_rows.append(noisy(key, 0))
            tgt_rows.append(noisy(key, 1))
            truth.add(((i, i), (j, j)))
    return np.stack(src_rows), np.stack(tgt_rows), truth


def diagonal_instance(seed: int, n: int, dimension: int = 768, noise: float = 0.1):
    """Noisy-diagonal fixture: tgt sentences are mock noisy copies of src,
    in order."""
    src = np.stack([mock_embed(f"d{seed}:{i}", dimension) for i in range(n)])
    tgt = np.stack(
        [
            noisy_copy(src[i], noise, seed=stable_seed(f"d{seed}:{i}", salt=1))
            for i in range(n)
        ]
    )
    return src.astype(np.float64), tgt.astype(np.float64)


# ---------------------------------------------------------------------------
# End-to-end corpus fixture: synthetic bilingual transcripts plus a seed
# map that makes the mock backend embed planted translations near each
# other.

_SCRIPT_LETTERS = {
    "hi": "कखगघचछजझटठडतथदधनपफबभमयरलवशषसह",
    "bn": "কখগঘচছজঝটঠডতথদধনপফবভমযরলশষসহ",
    "ta": "கஙசஞடணதநபமயரலவழளறன",
    "gu": "કખગઘચછજઝટઠડતથદધનપફબભમયરલવશષસહ",
    "te": "కఖగఘచఛజఝటఠడతథదధనపఫబభమయరలవశషసహ",
    "kn": "ಕಖಗಘಚಛಜಝಟಠಡತಥದಧನಪಫಬಭಮಯರಲವಶಷಸಹ",
    "ml": "കഖഗഘചഛജഝടഠഡതഥദധനപഫബഭമയരലവശഷസഹ",
    "mr": "कखगघचछजझटठडतथदधनपफबभमयरलवशषसह",
}

_EN_WORDS = (
    "signal system filter matrix vector theorem lemma proof circuit state "
    "energy phase module kernel tensor graph node edge bound limit"
).split()


def _indic_sentence(lang: str, rng: np.random.Generator, words: int = 4) -> str:
    letters = _SCRIPT_LETTERS[lang]
    parts = []
    for _ in range(words):
        size = int(rng.integers(2, 5))
        parts.append("".join(letters[int(rng.integers(0, len(letters)))] for _ in range(size)))
    terminator = "।" if lang in ("hi", "bn", "mr", "gu") else "."
    return " ".join(parts) + terminator


def _en_sentence(lecture_id: str, idx: int, rng: np.random.Generator) -> str:
    w1 = _EN_WORDS[int(rng.integers(0, len(_EN_WORDS)))]
    w2 = _EN_WORDS[int(rng.integers(0, len(_EN_WORDS)))]
    return f"In lecture {lecture_id} part {idx} the {w1} follows the {w2}."


def build_corpus_fixture(
    root: Path,
    lectures: tuple[str, ...] = ("lec1", "lec2", "lec3"),
    langs: tuple[str, ...] = ("hi", "ta", "bn"),
    sentences: int = 8,
    noise: float = 0.05,
    seed: int = 7,
) -> dict:
    """Write transcripts, manifest and mock seed map under ``root``.

    Every lecture has one bilingual document per Indic language, all
    sharing the same English side, so the pivot stage has work to do.
    Artifact lines are sprinkled in to exercise the cleaning rules.
    """
    root = Path(root)
    raw_dir = root / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    seed_entries: dict[str, tuple[str, float, int]] = {}
    manifest_lines = []
    for lecture in lectures:
        en_sents = [_en_sentence(lecture, i, rng) for i in range(sentences)]
        for li, lang in enumerate(langs):
            xx_sents = [_indic_sentence(lang, rng) for _ in range(sentences)]
            for i, (en, xx) in enumerate(zip(en_sents, xx_sents)):
                concept = f"{lecture}#concept{i}"
                seed_entries[en] = (concept, noise, 1)
                seed_entries[xx] = (concept, noise, 2 + li)
            blocks = []
            for i in range(0, sentences, 2):
                blocks.append(" ".join(en_sents[i : i + 2]))
                blocks.append("(Refer Slide Time: 00:14)")
                blocks.append(" ".join(xx_sents[i : i + 2]) + "\n05:3" + str(i % 10))
            text = "\n\n".join(blocks) + "\n"
            path = raw_dir / f"{lecture}.{lang}.txt"
            path.write_text(text, encoding="utf-8")
            manifest_lines.append(f"{lecture}\tcourse-{lecture[-1]}\ten\t{lang}\t{path.name}")

    manifest = raw_dir / "manifest.tsv"
    manifest.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    seed_map = root / "seedmap.yaml"
    save_seed_map(seed_map, seed_entries)
    return {
        "manifest": manifest,
        "seed_map": seed_map,
        "lectures": lectures,
        "langs": langs,
        "sentences": sentences,
    }


def toy_pairs(lang_pairs, scores, lecture_id="lecX", course_id="c0"):
    """Small TranslationPair factory for corpus-level tests."""
    from bitextmine.corpus import TranslationPair

    out = []
    for i, ((src_lang, tgt_lang), score) in enumerate(zip(lang_pairs, scores)):
        out.append(
            TranslationPair(
                src_lang=src_lang,
                tgt_lang=tgt_lang,
                src_text=f"source text {i}",
                tgt_text=f"target text {i}",
                score=score,
                lecture_id=lecture_id,
                course_id=course_id,
                src_span=(i, i),
                tgt_span=(i, i),
                align_type="1-1",
            )
        )
    return out
