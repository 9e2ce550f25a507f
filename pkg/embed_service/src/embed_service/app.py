"""HTTP embedding service.

POST /embed takes up to 256 texts and returns one unit-normalized vector
per text, in order; GET /health reports readiness, model id and
dimension.  The served model is chosen by the EMBED_MODEL environment
variable (default: a multilingual sentence-transformers model).  Model
ids of the form ``hash:<dimension>`` select a deterministic seeded-hash
stub that needs no model weights; it exists for hermetic contract tests
and carries no semantics.
"""

from __future__ import annotations

import hashlib
import logging
import os
from contextlib import asynccontextmanager
from typing import Sequence

import numpy as np
import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

log = logging.getLogger("embed-service")

DEFAULT_MODEL = "sentence-transformers/LaBSE"
MAX_BATCH = 256

# Small built-in probe set used by the semantic smoke test: each entry is
# (English sentence, translation, unrelated sentence in the same script).
PROBE_SET = [
    (
        "The integral of this function is bounded.",
        "इस फलन का समाकलन परिबद्ध है।",
        "कल बाज़ार में बहुत भीड़ थी।",
    ),
    (
        "Energy is conserved in a closed system.",
        "மூடிய அமைப்பில் ஆற்றல் பாதுகாக்கப்படுகிறது.",
        "நேற்று மழை பெய்தது.",
    ),
    (
        "The matrix has full rank.",
        "ম্যাট্রিক্সটির পূর্ণ র‍্যাঙ্ক আছে।",
        "আমি সকালে চা খাই।",
    ),
]


class HashModel:
    """Deterministic stand-in model: seeded pseudo-random unit vectors.

    No semantics whatsoever; only useful for exercising the service
    contract without model weights.
    """

    def __init__(self, dimension: int = 768):
        self.model_id = f"hash:{dimension}"
        self.dimension = dimension

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dimension), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
            out[i] = rng.standard_normal(self.dimension)
        return out


class SentenceTransformerModel:
    """Real model backend via sentence-transformers."""

    def __init__(self, model_id: str):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_id)
        self.model_id = model_id
        self.dimension = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(list(texts), convert_to_numpy=True, show_progress_bar=False),
            dtype=np.float64,
        )


def load_model(model_id: str):
    if model_id.startswith("hash:"):
        return HashModel(int(model_id.split(":", 1)[1]))
    return SentenceTransformerModel(model_id)


class EmbedRequest(BaseModel):
    texts: list[str]
    model_id: str | None = None


def _normalize_rows(raw: np.ndarray) -> list[list[float]]:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(raw)):
        raise ValueError("model produced a zero or non-finite embedding")
    return (raw / norms).tolist()


def create_app(model_id: str | None = None, defer_load: bool = False) -> FastAPI:
    """Build the service; with ``defer_load`` the model loads on startup."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.model is None:
            log.info("loading model %s", app.state.model_id)
            app.state.model = load_model(app.state.model_id)
            log.info("model ready, dimension %d", app.state.model.dimension)
        yield

    app = FastAPI(title="embed-service", lifespan=lifespan)
    app.state.model = None
    app.state.model_id = model_id or os.environ.get("EMBED_MODEL", DEFAULT_MODEL)

    if not defer_load:
        app.state.model = load_model(app.state.model_id)

    @app.exception_handler(Exception)
    async def _errors(request: Request, exc: Exception):
        log.exception("request failed")
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/health")
    def health():
        model = app.state.model
        if model is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {
            "status": "ok",
            "model_id": model.model_id,
            "dimension": model.dimension,
        }

    @app.post("/embed")
    def embed(request: EmbedRequest):
        model = app.state.model
        if model is None:
            return JSONResponse(status_code=503, content={"error": "model not ready"})
        if not request.texts:
            return JSONResponse(status_code=400, content={"error": "texts must be nonempty"})
        if len(request.texts) > MAX_BATCH:
            return JSONResponse(
                status_code=400,
                content={"error": f"batch of {len(request.texts)} exceeds {MAX_BATCH}"},
            )
        if any(not t.strip() for t in request.texts):
            return JSONResponse(status_code=400, content={"error": "texts contain an empty entry"})
        vectors = _normalize_rows(model.encode(request.texts))
        return {
            "vectors": vectors,
            "dimension": model.dimension,
            "model_id": model.model_id,
        }

    return app


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    port = int(os.environ.get("EMBED_PORT", "8090"))
    uvicorn.run(create_app(defer_load=True), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
