"""HTTP wire protocol for next-token logits and sentence embeddings.

Endpoints: GET /v1/model, POST /v1/logits, /v1/embed, /v1/tokenize,
/v1/detokenize. Request bodies reject unknown fields, mirroring the shared
JSON schema fixtures (additionalProperties: false); malformed bodies get 422
from validation, unknown template or model ids get 400, and requests before
the model has loaded get 503. Handlers are stateless over a read-only model,
so identical requests return identical bodies regardless of concurrency.

The model served here is deterministic and self-contained. Which checkpoint
backs the endpoints is deployment configuration, not protocol: a different
backend only has to advertise its own vocab_size/eos/dim in /v1/model.
"""

from __future__ import annotations

from contextlib import asynccontextmanager
from dataclasses import dataclass
from typing import Annotated

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel, ConfigDict, Field

from .model import TinyByteLM
from .templates import TEMPLATES, render
from .tokenizer import BOS_ID, EOS_ID, VOCAB_SIZE, decode, encode

__all__ = ["ServerConfig", "create_app"]


@dataclass(frozen=True)
class ServerConfig:
    model_id: str = "tiny-byte-lm-v1"
    seed: int = 0
    hidden_dim: int = 32


TokenId = Annotated[int, Field(ge=0)]


class DemonstrationPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")
    input: str
    output: str


class LogitsRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())
    model_id: str | None = None
    template_id: str = Field(min_length=1)
    query_text: str
    prefix_token_ids: list[TokenId]
    demonstration: DemonstrationPayload | None


class EmbedRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())
    model_id: str | None = None
    texts: list[str] = Field(min_length=1)


class TokenizeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())
    model_id: str | None = None
    text: str


class DetokenizeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())
    model_id: str | None = None
    token_ids: list[TokenId]


def create_app(config: ServerConfig = ServerConfig()) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.model = TinyByteLM(
            seed=config.seed, hidden_dim=config.hidden_dim, model_id=config.model_id
        )
        yield
        app.state.model = None

    app = FastAPI(title="mozo inference server", lifespan=lifespan)
    app.state.model = None

    def serving_model(request: Request) -> TinyByteLM:
        model = request.app.state.model
        if model is None:
            raise HTTPException(status_code=503, detail="model not ready")
        return model

    def check_model_id(model: TinyByteLM, requested: str | None) -> None:
        if requested is not None and requested != model.model_id:
            raise HTTPException(status_code=400, detail=f"unknown model {requested!r}")

    @app.get("/v1/model")
    def model_info(request: Request) -> dict:
        model = serving_model(request)
        return {
            "model_id": model.model_id,
            "vocab_size": model.vocab_size,
            "eos_token_id": EOS_ID,
            "embedding_dim": model.hidden_dim,
            "templates": sorted(TEMPLATES),
            "metadata": {
                "bos_token_id": BOS_ID,
                "tokenizer": "utf-8 bytes 0..255, bos 256, eos 257",
                "prefix_handling": (
                    "prefix_token_ids are appended verbatim after the rendered "
                    "prompt's token sequence"
                ),
                "deterministic": True,
                "parameter_seed": model.seed,
            },
        }

    @app.post("/v1/logits")
    def logits(request: Request, body: LogitsRequest) -> dict:
        model = serving_model(request)
        check_model_id(model, body.model_id)
        if body.template_id not in TEMPLATES:
            raise HTTPException(status_code=400, detail=f"unknown template {body.template_id!r}")
        if any(t >= VOCAB_SIZE for t in body.prefix_token_ids):
            raise HTTPException(
                status_code=422, detail=f"prefix token ids must be < {VOCAB_SIZE}"
            )
        demo = None if body.demonstration is None else body.demonstration.model_dump()
        prompt = render(body.template_id, demo, body.query_text)
        context = encode(prompt) + list(body.prefix_token_ids)
        return {
            "model_id": model.model_id,
            "vocab_size": model.vocab_size,
            "eos_token_id": EOS_ID,
            "logits": model.next_token_logits(context).tolist(),
        }

    @app.post("/v1/embed")
    def embed(request: Request, body: EmbedRequest) -> dict:
        model = serving_model(request)
        check_model_id(model, body.model_id)
        return {
            "model_id": model.model_id,
            "vectors": [model.embed_text(text).tolist() for text in body.texts],
            "dim": model.hidden_dim,
        }

    @app.post("/v1/tokenize")
    def tokenize(request: Request, body: TokenizeRequest) -> dict:
        model = serving_model(request)
        check_model_id(model, body.model_id)
        return {"token_ids": encode(body.text)}

    @app.post("/v1/detokenize")
    def detokenize(request: Request, body: DetokenizeRequest) -> dict:
        model = serving_model(request)
        check_model_id(model, body.model_id)
        if any(t >= VOCAB_SIZE for t in body.token_ids):
            raise HTTPException(status_code=422, detail=f"token ids must be < {VOCAB_SIZE}")
        return {"text": decode(body.token_ids)}

    return app
