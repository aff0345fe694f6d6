"""HTTP service exposing trained models to the fader UI.

One frozen VAE plus any number of conditional checkpoints (one per
attribute and controller kind) are loaded at startup; requests then
generate token sequences, measure their attributes, and export MIDI.
Every response echoes the seed that produced it, and identical requests
with the same seed return identical sequences.
"""

from __future__ import annotations

import hashlib
import threading
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict

from . import __version__
from .attributes import measure
from .checkpoint import LoadedModel, load_model
from .lcdiff import SamplerConfig
from .pipeline import generator_for
from .seqvae import SequenceVae
from .tokens import SEQ_LEN, detokenize, validate_tokens

DEFAULT_GUIDANCE = 3.0
DEFAULT_STEPS = 100
MAX_COUNT = 256
LOG_CAPACITY = 512


class GenerateRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    attribute: str | None = None
    model_id: str | None = None
    target: float = 0.0
    w: float | None = None
    steps: int | None = None
    count: int = 1
    seed: int | None = None


class AttributesRequest(BaseModel):
    tokens: list[int]


class _Registry:
    """Loaded models plus a bounded log of generated sequences."""

    def __init__(self, vae: SequenceVae, entries: dict[str, LoadedModel]):
        self.vae = vae
        self.entries = entries
        self._log: OrderedDict[str, list] = OrderedDict()
        self._lock = threading.Lock()

    def remember(self, gen_id: str, tokens: np.ndarray) -> None:
        with self._lock:
            self._log[gen_id] = tokens
            self._log.move_to_end(gen_id)
            while len(self._log) > LOG_CAPACITY:
                self._log.popitem(last=False)

    def recall(self, gen_id: str) -> np.ndarray | None:
        with self._lock:
            return self._log.get(gen_id)


def _model_entry_id(loaded: LoadedModel) -> str:
    if loaded.kind == "diffusion":
        return loaded.attribute
    return f"{loaded.attribute}.{loaded.kind}"


def create_app(
    vae_path: str | Path,
    model_paths: list[str | Path],
    allow_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    """Build the service around one VAE and >= 1 conditional checkpoints."""
    vae_loaded = load_model(vae_path)
    if vae_loaded.kind not in ("vae", "arvae"):
        raise ValueError(f"{vae_path}: expected a sequence-VAE checkpoint")
    vae: SequenceVae = vae_loaded.model
    entries: dict[str, LoadedModel] = {}
    for path in model_paths:
        loaded = load_model(path)
        if loaded.kind == "vae":
            raise ValueError(f"{path}: conditional checkpoint required")
        if loaded.attribute is None or loaded.stats is None:
            raise ValueError(f"{path}: checkpoint lacks attribute metadata")
        loaded.manifest["__path__"] = str(path)
        entries[_model_entry_id(loaded)] = loaded
    if not entries:
        raise ValueError("at least one conditional checkpoint is required")
    registry = _Registry(vae, entries)

    app = FastAPI(title="faderlab", version=__version__)
    app.state.registry = registry
    app.state.checkpoint_paths = [str(vae_path)] + [str(p) for p in model_paths]
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(allow_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        details = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": details})

    def _bad_request(field: str, message: str) -> HTTPException:
        return HTTPException(
            status_code=400, detail=[{"field": field, "message": message}]
        )

    @app.get("/api/models")
    def list_models():
        models = []
        for entry_id, loaded in sorted(registry.entries.items()):
            stats = loaded.stats
            steps = DEFAULT_STEPS
            if loaded.kind == "diffusion":
                steps = min(steps, loaded.schedule.num_steps)
            info = {
                "id": entry_id,
                "kind": loaded.kind,
                "attribute": loaded.attribute,
                "range": [0.0, stats.p99],
                "stats": stats.as_dict(),
                "defaults": {"w": DEFAULT_GUIDANCE, "steps": steps},
                "supports_guidance": loaded.kind == "diffusion",
            }
            models.append(info)
        return {"models": models, "seed": None}

    @app.get("/api/health")
    def health():
        checkpoints = [
            {"id": entry_id, "kind": loaded.kind, "attribute": loaded.attribute}
            for entry_id, loaded in sorted(registry.entries.items())
        ]
        return {
            "version": __version__,
            "checkpoints": checkpoints,
            "paths": app.state.checkpoint_paths,
            "seed": None,
        }

    @app.post("/api/generate")
    def generate(req: GenerateRequest):
        entry_id = req.model_id or req.attribute
        if entry_id is None:
            raise _bad_request("model_id", "model_id or attribute is required")
        loaded = registry.entries.get(entry_id)
        if loaded is None:
            raise HTTPException(status_code=404, detail=f"unknown model {entry_id!r}")
        if req.count < 1 or req.count > MAX_COUNT:
            raise _bad_request("count", f"count must lie in [1, {MAX_COUNT}]")
        w = DEFAULT_GUIDANCE if req.w is None else req.w
        steps = req.steps
        if steps is None:
            steps = DEFAULT_STEPS
            if loaded.kind == "diffusion":
                steps = min(steps, loaded.schedule.num_steps)
        if w < 0:
            raise _bad_request("w", "guidance must be >= 0")
        if loaded.kind == "diffusion":
            max_steps = loaded.schedule.num_steps
            if not 1 <= steps <= max_steps:
                raise _bad_request("steps", f"steps must lie in [1, {max_steps}]")
        if req.target < 0:
            raise _bad_request("target", "target must be >= 0")
        seed = req.seed
        if seed is None:
            seed = int(np.random.default_rng().integers(0, 2**31 - 1))
        sampler = SamplerConfig(steps=steps, guidance=w)
        generator = generator_for(loaded, registry.vae, sampler=sampler)
        started = time.perf_counter()
        sequences = generator(req.target, req.count, seed)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        measured = [measure(tokens).as_dict() for tokens in sequences]
        gen_ids = []
        for index, tokens in enumerate(sequences):
            digest = hashlib.sha1(
                f"{entry_id}|{seed}|{w}|{steps}|{req.target}|{index}|".encode()
                + tokens.tobytes()
            ).hexdigest()[:16]
            gen_ids.append(digest)
            registry.remember(digest, tokens)
        return {
            "model_id": entry_id,
            "attribute": loaded.attribute,
            "target": req.target,
            "w": w,
            "steps": steps,
            "seed": seed,
            "sequences": [tokens.tolist() for tokens in sequences],
            "measured_attributes": measured,
            "generation_ids": gen_ids,
            "elapsed_ms": elapsed_ms,
        }

    @app.post("/api/attributes")
    def attributes(req: AttributesRequest):
        if len(req.tokens) != SEQ_LEN:
            raise _bad_request("tokens", f"expected {SEQ_LEN} tokens, got {len(req.tokens)}")
        try:
            tokens = validate_tokens(req.tokens)
        except ValueError as exc:
            raise _bad_request("tokens", str(exc)) from exc
        return {"attributes": measure(tokens).as_dict(), "seed": None}

    @app.get("/api/generate/{gen_id}/midi")
    def download_midi(gen_id: str):
        tokens = registry.recall(gen_id)
        if tokens is None:
            raise HTTPException(status_code=404, detail=f"unknown generation {gen_id!r}")
        from .midi import encode_midi

        data = encode_midi(detokenize(tokens))
        return Response(
            content=data,
            media_type="audio/midi",
            headers={"Content-Disposition": f'attachment; filename="{gen_id}.mid"'},
        )

    return app


def run_app(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
