"""Embedding-similarity sentence alignment by dynamic programming.

Finds the minimum-cost monotone alignment between two sentence-embedding
sequences.  Links are 1-1, 1-n or n-1 (a merged block of up to
``max_merge`` consecutive sentences on one side), and either side can
skip sentences at a per-sentence penalty.  The cost of a non-skip link is
length-weighted cosine distance between the merged-block embeddings:

    cost = (1 - cos(block(X), block(Y))) * (|X| + |Y|) / 2

Exact DP is quadratic, so large documents go through a coarse-to-fine
scheme: both sides are repeatedly halved by merging adjacent embeddings,
the coarsest level is aligned exactly, and each finer level only searches
a band around the projected coarser path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DegenerateBlock, InputTooLarge

if TYPE_CHECKING:
    from .corpus import TranslationPair
    from .segment import MonoDocument

DEGENERATE_NORM = 1e-9


@dataclass(frozen=True)
class AlignParams:
    max_merge: int = 4
    skip_cost: float = 0.35
    keep_threshold: float = 0.70
    band_width: int = 10
    exact_limit: int = 10_000
    # Optional hubness correction: subtract the mean similarity to a few
    # evenly spaced sample sentences from each candidate similarity.
    # Affects path search only; reported link scores stay raw cosines.
    margin: bool = False
    margin_samples: int = 8

    def __post_init__(self):
        if self.max_merge < 1:
            raise ValueError("max_merge must be >= 1")
        if self.max_merge > 63:
            raise ValueError("max_merge must be <= 63")
        if not self.skip_cost > 0:
            raise ValueError("skip_cost must be > 0")
        if not -1.0 <= self.keep_threshold <= 1.0:
            raise ValueError("keep_threshold must be in [-1, 1]")
        if self.band_width < 1:
            raise ValueError("band_width must be >= 1")
        if self.exact_limit < 1:
            raise ValueError("exact_limit must be >= 1")
        if self.margin_samples < 1:
            raise ValueError("margin_samples must be >= 1")


@dataclass(frozen=True)
class Link:
    """One alignment unit: a span pair, or a single-sided skip.

    Spans are inclusive (start, end) sentence-index ranges; a skip link
    has exactly one empty (None) side and no score.
    """

    src_span: tuple[int, int] | None
    tgt_span: tuple[int, int] | None
    score: float | None = None

    @property
    def is_skip(self) -> bool:
        return self.src_span is None or self.tgt_span is None

    @property
    def kind(self) -> str:
        if self.tgt_span is None:
            return "skip-src"
        if self.src_span is None:
            return "skip-tgt"
        a = self.src_span[1] - self.src_span[0] + 1
        b = self.tgt_span[1] - self.tgt_span[0] + 1
        if a == 1 and b == 1:
            return "1-1"
        return "1-n" if a == 1 else "n-1"


@dataclass
class AlignmentPath:
    links: list[Link]
    total_cost: float


def move_priority(max_merge: int) -> list[tuple[int, int]]:
    """All DP moves in deterministic tie-break order.

    Ties prefer (1,1), then smaller a+b (which puts single-sentence skips
    ahead of merges), then smaller a, then non-skip over skip.
    """
    moves = [(1, 1), (0, 1), (1, 0)]
    for k in range(2, max_merge + 1):
        moves.append((1, k))
        moves.append((k, 1))
    return moves


def _unit_rows(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.size == 0:
        return np.zeros((0, 0))
    if x.ndim == 1:
        x = x.reshape(1, -1)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms < DEGENERATE_NORM):
        raise DegenerateBlock("input contains a (near-)zero embedding")
    return x / norms


def block_embedding(vectors) -> np.ndarray:
    """Merged-block representation: componentwise sum, renormalized.

    Raises DegenerateBlock when the sum (nearly) cancels.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[0] == 0:
        raise DegenerateBlock("empty block")
    total = x.sum(axis=0)
    norm = float(np.linalg.norm(total))
    if norm < DEGENERATE_NORM:
        raise DegenerateBlock(f"block sum norm {norm} below {DEGENERATE_NORM}")
    return (total / norm).astype(np.float32)


def block_cosine(src_block, tgt_block) -> float:
    """Cosine of the two merged-block embeddings, computed in float64."""
    x = np.asarray(src_block, dtype=np.float64)
    y = np.asarray(tgt_block, dtype=np.float64)
    sx = x.sum(axis=0) if x.ndim == 2 else x
    sy = y.sum(axis=0) if y.ndim == 2 else y
    nx = float(np.linalg.norm(sx))
    ny = float(np.linalg.norm(sy))
    if nx < DEGENERATE_NORM or ny < DEGENERATE_NORM:
        raise DegenerateBlock("block sum (nearly) cancels")
    return float(np.clip(sx @ sy / (nx * ny), -1.0, 1.0))


def link_cost(src_block, tgt_block, params: AlignParams | None = None) -> float:
    """Cost of linking two nonempty sentence blocks (params unused, kept
    for signature symmetry with skip costs)."""
    x = np.asarray(src_block, dtype=np.float64)
    y = np.asarray(tgt_block, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if y.ndim == 1:
        y = y.reshape(1, -1)
    weight = (x.shape[0] + y.shape[0]) / 2.0
    return (1.0 - block_cosine(x, y)) * weight


def skip_cost(k: int, params: AlignParams) -> float:
    """Cost of leaving k consecutive sentences unlinked."""
    return k * params.skip_cost


def _block_matrices(rows: np.ndarray, max_merge: int) -> dict[int, np.ndarray]:
    """Normalized block embeddings for every block size 1..max_merge.

    Entry [a][t] is the unit-normalized sum of rows t..t+a-1.  Degenerate
    (near-cancelling) blocks become zero rows: their cosine with anything
    is 0, which prices them out against skipping without poisoning the DP.
    """
    n = rows.shape[0]
    out: dict[int, np.ndarray] = {}
    if n == 0:
        return out
    prefix = np.vstack([np.zeros((1, rows.shape[1])), np.cumsum(rows, axis=0)])
    for a in range(1, min(max_merge, n) + 1):
        sums = prefix[a:] - prefix[:-a]
        norms = np.linalg.norm(sums, axis=1, keepdims=True)
        safe = np.where(norms < DEGENERATE_NORM, 1.0, norms)
        mats = sums / safe
        mats[norms[:, 0] < DEGENERATE_NORM] = 0.0
        out[a] = mats
    return out


def _dp_banded(
    sb: dict[int, np.ndarray],
    tb: dict[int, np.ndarray],
    n: int,
    m: int,
    lo: np.ndarray,
    hi: np.ndarray,
    params: AlignParams,
) -> tuple[float, list[tuple[int, int]]]:
    """Minimum-cost monotone path restricted to the band lo[i]..hi[i].

    Returns (total cost, move list).  The band must be monotone with
    lo[0] == 0 and hi[n] == m.  Vertical moves (consuming source rows)
    are vectorized across each row; the skip-target chain within a row is
    a left-to-right scan.
    """
    all_moves = move_priority(params.max_merge)
    vertical = [(idx, a, b) for idx, (a, b) in enumerate(all_moves) if a >= 1]
    skip = params.skip_cost

    corr_s: dict[int, np.ndarray] = {}
    corr_t: dict[int, np.ndarray] = {}
    if params.margin and n >= 1 and m >= 1:
        k_t = min(params.margin_samples, m)
        k_s = min(params.margin_samples, n)
        sample_t = tb[1][np.linspace(0, m - 1, k_t).astype(int)]
        sample_s = sb[1][np.linspace(0, n - 1, k_s).astype(int)]
        for a, mat in sb.items():
            corr_s[a] = (mat @ sample_t.T).mean(axis=1)
        for b, mat in tb.items():
            corr_t[b] = (mat @ sample_s.T).mean(axis=1)

    width = int((hi - lo).max()) + 1
    dtable = np.full((n + 1, width), np.inf)
    mtable = np.full((n + 1, width), -1, dtype=np.int16)

    for i in range(n + 1):
        w_i = hi[i] - lo[i] + 1
        js = np.arange(lo[i], hi[i] + 1)
        best = np.full(w_i, np.inf)
        best_move = np.full(w_i, -1, dtype=np.int16)
        for move_idx, a, b in vertical:
            if a > i or (b > 0 and b not in tb):
                continue
            pi = i - a
            pjs = js - b
            valid = (pjs >= lo[pi]) & (pjs <= hi[pi])
            if not valid.any():
                continue
            prev = np.full(w_i, np.inf)
            prev[valid] = dtable[pi, pjs[valid] - lo[pi]]
            cand = np.full(w_i, np.inf)
            if b == 0:
                cand[valid] = prev[valid] + a * skip
            else:
                svec = sb[a][pi]
                sim = tb[b][pjs[valid]] @ svec
                if params.margin:
                    sim = sim - 0.5 * (corr_s[a][pi] + corr_t[b][pjs[valid]])
                sim = np.clip(sim, -1.0, 1.0)
                cand[valid] = prev[valid] + (1.0 - sim) * ((a + b) / 2.0)
            take = cand < best
            best[take] = cand[take]
            best_move[take] = move_idx
        # Left-to-right scan folds in the skip-target chain; on a tie it
        # wins over everything except a (1,1) link (documented tie order).
        row_d = dtable[i]
        row_m = mtable[i]
        for t in range(w_i):
            val = best[t]
            mov = best_move[t]
            if i == 0 and js[t] == 0:
                val, mov = 0.0, -1
            if t >= 1:
                h = row_d[t - 1] + skip
                if math.isfinite(h) and (h < val or (h == val and mov != 0)):
                    val, mov = h, 1
            row_d[t] = val
            row_m[t] = mov

    end_t = m - lo[n]
    total = float(dtable[n, end_t])
    if not math.isfinite(total):
        raise RuntimeError("no alignment path inside the search band")
    moves: list[tuple[int, int]] = []
    i, j = n, m
    while not (i == 0 and j == 0):
        mov = int(mtable[i, j - lo[i]])
        if mov < 0:
            raise RuntimeError("backtrace fell off the band")
        a, b = all_moves[mov]
        moves.append((a, b))
        i -= a
        j -= b
    moves.reverse()
    return total, moves


def _moves_to_links(
    moves: list[tuple[int, int]],
    sb: dict[int, np.ndarray],
    tb: dict[int, np.ndarray],
) -> list[Link]:
    links = []
    i = j = 0
    for a, b in moves:
        if b == 0:
            links.append(Link(src_span=(i, i + a - 1), tgt_span=None))
        elif a == 0:
            links.append(Link(src_span=None, tgt_span=(j, j + b - 1)))
        else:
            score = float(np.clip(sb[a][i] @ tb[b][j], -1.0, 1.0))
            links.append(Link(src_span=(i, i + a - 1), tgt_span=(j, j + b - 1), score=score))
        i += a
        j += b
    return links


def _path_nodes(moves: list[tuple[int, int]]) -> list[tuple[int, int]]:
    nodes = [(0, 0)]
    i = j = 0
    for a, b in moves:
        i += a
        j += b
        nodes.append((i, j))
    return nodes


def align_exact(src, tgt, params: AlignParams | None = None) -> AlignmentPath:
    """Optimal alignment by full dynamic programming.

    Raises InputTooLarge when n*m exceeds ``params.exact_limit``.
    """
    params = params or AlignParams()
    s = _unit_rows(src)
    t = _unit_rows(tgt)
    n, m = s.shape[0], t.shape[0]
    if n * m > params.exact_limit:
        raise InputTooLarge(f"{n}x{m} exceeds exact limit {params.exact_limit}")
    sb = _block_matrices(s, params.max_merge)
    tb = _block_matrices(t, params.max_merge)
    lo = np.zeros(n + 1, dtype=np.int64)
    hi = np.full(n + 1, m, dtype=np.int64)
    total, moves = _dp_banded(sb, tb, n, m, lo, hi, params)
    return AlignmentPath(links=_moves_to_links(moves, sb, tb), total_cost=total)


def _coarsen(rows: np.ndarray) -> np.ndarray:
    """Halve a sequence by merging adjacent embedding pairs (odd tail kept)."""
    n = rows.shape[0]
    if n <= 1:
        return rows
    sums = np.add.reduceat(rows, np.arange(0, n, 2), axis=0)
    norms = np.linalg.norm(sums, axis=1, keepdims=True)
    if np.any(norms < DEGENERATE_NORM):
        raise DegenerateBlock("adjacent embeddings cancel during coarsening")
    return sums / norms


def _band_from_nodes(
    nodes: list[tuple[int, int]], n: int, m: int, w: int
) -> tuple[np.ndarray, np.ndarray]:
    """Dilate a projected path polyline into per-row search windows."""
    jmin = np.full(n + 1, np.inf)
    jmax = np.full(n + 1, -np.inf)
    for (i0, j0), (i1, j1) in zip(nodes, nodes[1:]):
        if i1 == i0:
            jmin[i0] = min(jmin[i0], j0)
            jmax[i0] = max(jmax[i0], j1)
            continue
        for i in range(i0, i1 + 1):
            frac = (i - i0) / (i1 - i0)
            jc = j0 + frac * (j1 - j0)
            jmin[i] = min(jmin[i], math.floor(jc))
            jmax[i] = max(jmax[i], math.ceil(jc))
    lo = np.clip(jmin - w, 0, m).astype(np.int64)
    hi = np.clip(jmax + w, 0, m).astype(np.int64)
    np.maximum.accumulate(lo, out=lo)
    np.maximum.accumulate(hi, out=hi)
    lo[0] = 0
    hi[n] = m
    return lo, np.maximum(lo, hi)


def align_coarse_to_fine(src, tgt, params: AlignParams | None = None) -> AlignmentPath:
    """Alignment via recursive halving plus banded refinement.

    Inputs small enough for exact DP take zero coarsening levels and
    return exactly what ``align_exact`` returns.
    """
    params = params or AlignParams()
    s = _unit_rows(src)
    t = _unit_rows(tgt)
    levels = [(s, t)]
    while levels[-1][0].shape[0] * levels[-1][1].shape[0] > params.exact_limit:
        cs, ct = levels[-1]
        levels.append((_coarsen(cs), _coarsen(ct)))

    moves: list[tuple[int, int]] = []
    for depth in range(len(levels) - 1, -1, -1):
        ls, lt = levels[depth]
        n, m = ls.shape[0], lt.shape[0]
        sb = _block_matrices(ls, params.max_merge)
        tb = _block_matrices(lt, params.max_merge)
        if depth == len(levels) - 1:
            lo = np.zeros(n + 1, dtype=np.int64)
            hi = np.full(n + 1, m, dtype=np.int64)
        else:
            nodes = [
                (min(2 * ci, n), min(2 * cj, m)) for ci, cj in _path_nodes(moves)
            ]
            lo, hi = _band_from_nodes(nodes, n, m, params.band_width)
        total, moves = _dp_banded(sb, tb, n, m, lo, hi, params)
        if depth == 0:
            return AlignmentPath(links=_moves_to_links(moves, sb, tb), total_cost=total)
    # Single level (n or m == 0, or only the exact level): moves from loop above.
    raise AssertionError("unreachable")


def validate_path(path: AlignmentPath, n: int, m: int) -> None:
    """Assert the partition invariant: every index in exactly one link."""
    i = j = 0
    for link in path.links:
        if link.src_span is None and link.tgt_span is None:
            raise ValueError("link with both spans empty")
        if link.src_span is not None:
            if link.src_span[0] != i or link.src_span[1] < link.src_span[0]:
                raise ValueError(f"source spans not contiguous at {i}: {link}")
            i = link.src_span[1] + 1
        if link.tgt_span is not None:
            if link.tgt_span[0] != j or link.tgt_span[1] < link.tgt_span[0]:
                raise ValueError(f"target spans not contiguous at {j}: {link}")
            j = link.tgt_span[1] + 1
    if i != n or j != m:
        raise ValueError(f"path covers ({i},{j}) of ({n},{m})")


def extract_pairs(
    path: AlignmentPath,
    src_doc: "MonoDocument",
    tgt_doc: "MonoDocument",
    params: AlignParams | None = None,
) -> list["TranslationPair"]:
    """Turn the path's confident non-skip links into translation pairs.

    A link is kept when its score reaches ``params.keep_threshold``; span
    sentences are joined with single spaces.
    """
    from .corpus import TranslationPair

    params = params or AlignParams()
    meta = src_doc.meta
    pairs = []
    for link in path.links:
        if link.is_skip or link.score is None or link.score < params.keep_threshold:
            continue
        s0, s1 = link.src_span
        t0, t1 = link.tgt_span
        a = s1 - s0 + 1
        b = t1 - t0 + 1
        align_type = "1-1" if a == b == 1 else ("1-n" if a == 1 else "n-1")
        pairs.append(
            TranslationPair(
                src_lang=src_doc.language,
                tgt_lang=tgt_doc.language,
                src_text=" ".join(s.text for s in src_doc.sentences[s0 : s1 + 1]),
                tgt_text=" ".join(s.text for s in tgt_doc.sentences[t0 : t1 + 1]),
                score=link.score,
                lecture_id=meta.lecture_id,
                course_id=meta.course_id,
                src_span=(s0, s1),
                tgt_span=(t0, t1),
                align_type=align_type,
            )
        )
    return pairs
