"""Sentence-embedding providers: deterministic mock, file cache, remote HTTP.

All vectors crossing the provider boundary are float32, unit-norm and
finite.  The mock backend is fully deterministic across platforms (fixed
hash, fixed generator), which keeps the whole pipeline testable without
any model runtime.
"""

from __future__ import annotations

import hashlib
import re
import struct
import threading
import time
import unicodedata
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import requests
import yaml

from .errors import (
    CacheMiss,
    ConfigInvalid,
    CorruptEntry,
    DimensionMismatch,
    ProviderUnavailable,
)

DEFAULT_DIMENSION = 768
NORM_TOLERANCE = 1e-6

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Canonical text form used for hashing and cache keys: NFC, collapsed whitespace."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()


def unit(values: np.ndarray | Sequence[float]) -> np.ndarray:
    """Scale to unit Euclidean norm; returns float32."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite values")
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


def check_unit(vec: np.ndarray, tolerance: float = NORM_TOLERANCE) -> None:
    """Boundary assertion: vector is finite and unit-norm within tolerance."""
    v = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite values")
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > tolerance:
        raise ValueError(f"vector norm {norm} deviates from 1 by more than {tolerance}")


def stable_seed(text: str, salt: int = 0) -> int:
    """64-bit seed from text, stable across runs and platforms."""
    digest = hashlib.blake2b(
        f"{salt}\x1f{normalize_text(text)}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def mock_embed(text: str, dimension: int = DEFAULT_DIMENSION, salt: int = 0) -> np.ndarray:
    """Deterministic pseudo-random unit vector for a text.

    Seeds a PCG64 generator from a blake2b hash of the normalized text,
    draws standard normals, normalizes.  Same text, same vector, on any
    platform.
    """
    if not text.strip():
        raise ValueError("cannot embed empty text")
    rng = np.random.Generator(np.random.PCG64(stable_seed(text, salt)))
    return unit(rng.standard_normal(dimension))


def noisy_copy(vector: np.ndarray, scale: float, seed: int) -> np.ndarray:
    """Perturb a unit vector by a unit noise direction scaled by ``scale``.

    Test-harness feature: translation-pair fixtures share a base vector
    and differ by bounded noise, so cosine(pair) stays near 1 while
    unrelated texts stay near orthogonal.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    g = rng.standard_normal(len(vector))
    g /= np.linalg.norm(g)
    return unit(np.asarray(vector, dtype=np.float64) + scale * g)


@dataclass(frozen=True)
class EmbeddingBatch:
    texts: tuple[str, ...]
    language: str | None = None

    def __post_init__(self):
        if not self.texts:
            raise ValueError("batch must contain at least one text")
        for t in self.texts:
            if not t.strip():
                raise ValueError("batch contains an empty text")


@dataclass(frozen=True)
class ProviderConfig:
    backend: str = "mock"  # mock | remote | cache
    dimension: int = DEFAULT_DIMENSION
    model_id: str = "mock"
    endpoint: str | None = None
    batch_size: int = 64
    retries: int = 3
    timeout: float = 30.0
    parallelism: int = 4
    cache_path: str | None = None
    seed_map: str | None = None

    def __post_init__(self):
        if self.backend not in ("mock", "remote", "cache"):
            raise ConfigInvalid(f"unknown embedding backend {self.backend!r}")
        if self.dimension < 1:
            raise ConfigInvalid("dimension must be >= 1")
        if self.batch_size < 1:
            raise ConfigInvalid("batch_size must be >= 1")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigInvalid("remote backend requires an endpoint")
        if self.backend == "cache" and not self.cache_path:
            raise ConfigInvalid("cache backend requires cache_path")


class EmbeddingProvider:
    """Base class: order-preserving batch embedding of texts."""

    dimension: int
    model_id: str

    def embed_batch(self, texts: Sequence[str], language: str | None = None) -> np.ndarray:
        """Embed texts; returns an array of shape (len(texts), dimension).

        Output row i corresponds to input text i; every row is float32,
        finite and unit-norm (renormalized defensively on receipt).
        """
        batch = EmbeddingBatch(tuple(texts), language)
        out = self._embed(batch)
        if out.shape != (len(texts), self.dimension):
            raise DimensionMismatch(
                f"backend returned shape {out.shape}, expected ({len(texts)}, {self.dimension})"
            )
        for row in out:
            check_unit(row)
        return out

    def _embed(self, batch: EmbeddingBatch) -> np.ndarray:
        raise NotImplementedError


class MockProvider(EmbeddingProvider):
    """Hash-seeded deterministic embeddings; optional seed map for fixtures.

    A seed map assigns selected texts a shared concept key plus bounded
    noise, so that planted "translations" embed near each other.  Texts
    not in the map fall back to plain hash seeding.
    """

    def __init__(
        self,
        dimension: int = DEFAULT_DIMENSION,
        seed_map: dict[str, tuple[str, float, int]] | None = None,
        model_id: str = "mock",
    ):
        self.dimension = dimension
        self.model_id = model_id
        self._seed_map = {}
        if seed_map:
            self._seed_map = {normalize_text(k): v for k, v in seed_map.items()}

    @classmethod
    def from_config(cls, config: ProviderConfig) -> "MockProvider":
        seed_map = None
        if config.seed_map:
            seed_map = load_seed_map(config.seed_map)
        return cls(dimension=config.dimension, seed_map=seed_map, model_id=config.model_id)

    def embed_one(self, text: str) -> np.ndarray:
        spec = self._seed_map.get(normalize_text(text))
        if spec is None:
            return mock_embed(text, self.dimension)
        key, noise, salt = spec
        base = mock_embed(key, self.dimension)
        if noise == 0:
            return base
        return noisy_copy(base, noise, stable_seed(key, salt))

    def _embed(self, batch: EmbeddingBatch) -> np.ndarray:
        return np.stack([self.embed_one(t) for t in batch.texts])


def load_seed_map(path: str | Path) -> dict[str, tuple[str, float, int]]:
    """Read a fixture seed map: text -> {key, noise, salt}."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "entries" not in data:
        raise ConfigInvalid(f"seed map {path}: expected a mapping with 'entries'")
    out = {}
    for text, spec in data["entries"].items():
        out[text] = (str(spec["key"]), float(spec.get("noise", 0.0)), int(spec.get("salt", 0)))
    return out


def save_seed_map(path: str | Path, entries: dict[str, tuple[str, float, int]]) -> None:
    data = {
        "version": 1,
        "entries": {
            text: {"key": key, "noise": noise, "salt": salt}
            for text, (key, noise, salt) in entries.items()
        },
    }
    Path(path).write_text(yaml.safe_dump(data, allow_unicode=True), encoding="utf-8")


# Cache file format, version 1.
#
# Data file: a flat sequence of records, each
#     8 bytes   key   blake2b-64 of "model_id \x1f dimension \x1f normalized text"
#     4 bytes   dimension, uint32 little-endian
#     D*4 bytes vector, float32 little-endian
#     4 bytes   crc32 of the preceding key+dimension+vector bytes
#
# Index sidecar (same path + ".idx"): text lines, first line
# "v1 <model_id> <dimension>", then "<key hex> <offset>" per record.
# The sidecar is a pure accelerator: if missing or stale it is rebuilt
# by scanning the data file.
_CACHE_HEADER = struct.Struct("<8sI")
_CRC = struct.Struct("<I")


class VectorCache:
    """Append-only content-addressed store of unit embedding vectors.

    Single-writer, many-reader: concurrent ``get`` is safe; ``put`` is
    serialized by an internal lock and appends are flushed per record.
    """

    def __init__(self, path: str | Path, model_id: str, dimension: int):
        self.path = Path(path)
        self.index_path = Path(str(path) + ".idx")
        self.model_id = model_id
        self.dimension = dimension
        self._lock = threading.Lock()
        self._offsets: dict[bytes, int] = {}
        self._load_index()

    def key(self, text: str) -> bytes:
        material = f"{self.model_id}\x1f{self.dimension}\x1f{normalize_text(text)}"
        return hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest()

    def __len__(self) -> int:
        return len(self._offsets)

    def __contains__(self, text: str) -> bool:
        return self.key(text) in self._offsets

    @property
    def _record_size(self) -> int:
        return _CACHE_HEADER.size + self.dimension * 4 + _CRC.size

    def _load_index(self) -> None:
        if not self.path.exists():
            return
        size = self.path.stat().st_size
        expected_records = size // self._record_size
        if self.index_path.exists():
            lines = self.index_path.read_text(encoding="utf-8").splitlines()
            if lines and lines[0] == f"v1 {self.model_id} {self.dimension}":
                offsets = {}
                ok = True
                for line in lines[1:]:
                    try:
                        hexkey, off = line.split()
                        offset = int(off)
                    except ValueError:
                        ok = False
                        break
                    if offset >= size:
                        ok = False
                        break
                    offsets[bytes.fromhex(hexkey)] = offset
                if ok and len(offsets) == expected_records:
                    self._offsets = offsets
                    return
        self.rebuild_index()

    def rebuild_index(self) -> None:
        """Scan the data file and rewrite the sidecar."""
        self._offsets = {}
        record_head = _CACHE_HEADER.size
        with open(self.path, "rb") as fh:
            offset = 0
            while True:
                head = fh.read(record_head)
                if not head:
                    break
                if len(head) < record_head:
                    raise CorruptEntry(f"{self.path}: truncated record at {offset}")
                key, dim = _CACHE_HEADER.unpack(head)
                body = fh.read(dim * 4 + _CRC.size)
                if len(body) < dim * 4 + _CRC.size:
                    raise CorruptEntry(f"{self.path}: truncated record at {offset}")
                self._offsets[key] = offset
                offset += record_head + dim * 4 + _CRC.size
        self._write_index()

    def _write_index(self) -> None:
        lines = [f"v1 {self.model_id} {self.dimension}"]
        for key, offset in self._offsets.items():
            lines.append(f"{key.hex()} {offset}")
        self.index_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def put(self, text: str, vector: np.ndarray) -> None:
        """Store a vector under the text's content key (idempotent)."""
        vec = np.ascontiguousarray(vector, dtype=np.float32)
        if vec.shape != (self.dimension,):
            raise DimensionMismatch(
                f"cache dimension is {self.dimension}, got vector of shape {vec.shape}"
            )
        check_unit(vec)
        key = self.key(text)
        with self._lock:
            if key in self._offsets:
                return
            payload = _CACHE_HEADER.pack(key, self.dimension) + vec.tobytes()
            record = payload + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as fh:
                offset = fh.tell()
                fh.write(record)
                fh.flush()
            self._offsets[key] = offset
            if offset == 0 or not self.index_path.exists():
                self.index_path.write_text(
                    f"v1 {self.model_id} {self.dimension}\n", encoding="utf-8"
                )
            with open(self.index_path, "a", encoding="utf-8") as fh:
                fh.write(f"{key.hex()} {offset}\n")

    def get(self, text: str) -> np.ndarray:
        """Return the stored vector bit-exactly; CacheMiss if absent."""
        key = self.key(text)
        offset = self._offsets.get(key)
        if offset is None:
            raise CacheMiss(text[:80])
        with open(self.path, "rb") as fh:
            fh.seek(offset)
            head = fh.read(_CACHE_HEADER.size)
            stored_key, dim = _CACHE_HEADER.unpack(head)
            body = fh.read(dim * 4)
            crc = fh.read(_CRC.size)
        if stored_key != key:
            raise CorruptEntry(f"{self.path}: key mismatch at offset {offset}")
        if zlib.crc32(head + body) & 0xFFFFFFFF != _CRC.unpack(crc)[0]:
            raise CorruptEntry(f"{self.path}: checksum failure at offset {offset}")
        if dim != self.dimension:
            raise DimensionMismatch(f"cache record has dimension {dim}, expected {self.dimension}")
        return np.frombuffer(body, dtype="<f4").copy()

    def scan(self):
        """Iterate (key, vector) over all records in file order, verifying checksums."""
        with open(self.path, "rb") as fh:
            offset = 0
            while True:
                head = fh.read(_CACHE_HEADER.size)
                if not head:
                    break
                key, dim = _CACHE_HEADER.unpack(head)
                body = fh.read(dim * 4)
                crc = fh.read(_CRC.size)
                if zlib.crc32(head + body) & 0xFFFFFFFF != _CRC.unpack(crc)[0]:
                    raise CorruptEntry(f"{self.path}: checksum failure at offset {offset}")
                yield key, np.frombuffer(body, dtype="<f4").copy()
                offset += _CACHE_HEADER.size + dim * 4 + _CRC.size


class CacheProvider(EmbeddingProvider):
    """Serve embeddings from a VectorCache, computing misses via a fallback."""

    def __init__(self, cache: VectorCache, fallback: EmbeddingProvider | None = None):
        self.cache = cache
        self.fallback = fallback
        self.dimension = cache.dimension
        self.model_id = cache.model_id
        self.hits = 0
        self.misses = 0

    def _embed(self, batch: EmbeddingBatch) -> np.ndarray:
        out: list[np.ndarray | None] = []
        missing: list[int] = []
        for i, text in enumerate(batch.texts):
            try:
                out.append(self.cache.get(text))
                self.hits += 1
            except CacheMiss:
                if self.fallback is None:
                    raise
                out.append(None)
                missing.append(i)
        if missing:
            self.misses += len(missing)
            computed = self.fallback.embed_batch(
                [batch.texts[i] for i in missing], batch.language
            )
            for slot, vec in zip(missing, computed):
                self.cache.put(batch.texts[slot], vec)
                # Re-read so callers always see the stored (float32) bits.
                out[slot] = self.cache.get(batch.texts[slot])
        return np.stack(out)  # type: ignore[arg-type]


class RemoteProvider(EmbeddingProvider):
    """HTTP client for the embedding service (POST endpoint/embed).

    Splits requests into batches of ``batch_size``, runs at most
    ``parallelism`` batches in flight, retries each batch up to
    ``retries`` times with exponential backoff before raising
    ProviderUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        dimension: int = DEFAULT_DIMENSION,
        model_id: str | None = None,
        batch_size: int = 64,
        retries: int = 3,
        timeout: float = 30.0,
        parallelism: int = 4,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.dimension = dimension
        self.model_id = model_id or "remote"
        self.batch_size = batch_size
        self.retries = retries
        self.timeout = timeout
        self.parallelism = parallelism
        self.backoff = backoff
        self._session = requests.Session()

    def _post_batch(self, texts: Sequence[str]) -> np.ndarray:
        payload: dict = {"texts": list(texts)}
        if self.model_id != "remote":
            payload["model_id"] = self.model_id
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._session.post(
                    self.endpoint + "/embed", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if resp.status_code == 200:
                    return self._parse(resp.json(), len(texts))
                last_error = ProviderUnavailable(
                    f"{self.endpoint}/embed returned {resp.status_code}: {resp.text[:200]}"
                )
                if 400 <= resp.status_code < 500:
                    break  # client error, retrying will not help
            if attempt + 1 < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise ProviderUnavailable(f"embedding service unreachable: {last_error}")

    def _parse(self, data: dict, expected: int) -> np.ndarray:
        vectors = data.get("vectors")
        if vectors is None or len(vectors) != expected:
            raise ProviderUnavailable(
                f"service returned {0 if vectors is None else len(vectors)} vectors, expected {expected}"
            )
        dim = int(data.get("dimension", self.dimension))
        if dim != self.dimension:
            raise DimensionMismatch(f"service dimension {dim}, client expects {self.dimension}")
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.shape != (expected, self.dimension):
            raise DimensionMismatch(f"service returned shape {arr.shape}")
        # Defensive renormalization on receipt.
        return np.stack([unit(row) for row in arr])

    def _embed(self, batch: EmbeddingBatch) -> np.ndarray:
        chunks = [
            batch.texts[i : i + self.batch_size]
            for i in range(0, len(batch.texts), self.batch_size)
        ]
        if len(chunks) == 1:
            return self._post_batch(chunks[0])
        with ThreadPoolExecutor(max_workers=min(self.parallelism, len(chunks))) as pool:
            results = list(pool.map(self._post_batch, chunks))
        return np.concatenate(results, axis=0)


def get_provider(config: ProviderConfig) -> EmbeddingProvider:
    """Build the provider described by a ProviderConfig."""
    if config.backend == "mock":
        return MockProvider.from_config(config)
    if config.backend == "remote":
        return RemoteProvider(
            endpoint=config.endpoint,  # type: ignore[arg-type]
            dimension=config.dimension,
            model_id=None if config.model_id == "mock" else config.model_id,
            batch_size=config.batch_size,
            retries=config.retries,
            timeout=config.timeout,
            parallelism=config.parallelism,
        )
    cache = VectorCache(config.cache_path, config.model_id, config.dimension)  # type: ignore[arg-type]
    return CacheProvider(cache, fallback=None)


def embed_batch(
    texts: Sequence[str], config: ProviderConfig, language: str | None = None
) -> np.ndarray:
    """One-shot convenience wrapper around get_provider(...).embed_batch."""
    return get_provider(config).embed_batch(texts, language)
