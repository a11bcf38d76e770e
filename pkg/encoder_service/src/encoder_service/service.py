"""HTTP embedding service.

POST /embed with {"texts": [...]} returns {"dim": D, "vectors": [...]}
in request order. Every protocol violation is HTTP 400 with
{"error": reason}; the request body is validated by hand so malformed
input never surfaces as a framework-shaped 422. Weights are read-only
once the app is built, so concurrent requests need no locking.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from encoder_service.model import MlmEncoder, embed_texts, load_checkpoint
from encoder_service.vocab import Vocab

MAX_BATCH_TEXTS = 256


def create_app(model: MlmEncoder, vocab: Vocab, max_batch: int = MAX_BATCH_TEXTS) -> FastAPI:
    app = FastAPI()

    def bad_request(reason: str) -> JSONResponse:
        return JSONResponse({"error": reason}, status_code=400)

    @app.post("/embed")
    async def embed(request: Request):
        try:
            body = await request.json()
        except Exception:
            return bad_request("body must be valid JSON")
        if not isinstance(body, dict) or "texts" not in body:
            return bad_request("body must be an object with a 'texts' field")
        texts = body["texts"]
        if not isinstance(texts, list) or not texts:
            return bad_request("'texts' must be a non-empty list")
        if len(texts) > max_batch:
            return bad_request(f"batch of {len(texts)} exceeds limit {max_batch}")
        if not all(isinstance(t, str) for t in texts):
            return bad_request("'texts' entries must all be strings")
        vectors = embed_texts(model, vocab, texts)
        return {"dim": model.config.d_model, "vectors": vectors.double().tolist()}

    return app


def app_from_checkpoint(path) -> FastAPI:
    model, vocab = load_checkpoint(path)
    return create_app(model, vocab)
