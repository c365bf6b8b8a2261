"""HTTP inference service: a thin FastAPI wrapper around one loaded
generator checkpoint.

The model is loaded once and never mutated; requests only read it, so
concurrent requests are safe and identical (request, seed) pairs produce
identical responses.
"""
from __future__ import annotations

import logging
import secrets
from pathlib import Path
from typing import List, Optional, Tuple

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .corpus import CorpusError, NoteToken
from .pipeline import GenBundle, generate_lines
from .training import TrainingError

logger = logging.getLogger(__name__)

MAX_COUNT = 32


class GenerateRequest(BaseModel):
    notes: List[Tuple[int, int]] = Field(..., min_length=1,
                                         description="[pitch, duration] pairs")
    theme: Optional[int] = None
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 31)
    count: int = Field(1, ge=1, le=MAX_COUNT)


class LineOut(BaseModel):
    syllables: List[str]
    aligned: bool


class GenerateResponse(BaseModel):
    lines: List[LineOut]
    model: str
    seed: int


class ThemeOut(BaseModel):
    id: int
    label: str
    top_words: List[str]


class ThemesResponse(BaseModel):
    themes: List[ThemeOut]


class HealthResponse(BaseModel):
    status: str
    checkpoint: str
    vocab_sizes: dict


def _parse_notes(pairs: List[Tuple[int, int]]) -> List[NoteToken]:
    notes = []
    for i, (pitch, duration) in enumerate(pairs):
        try:
            notes.append(NoteToken(pitch, duration))
        except CorpusError as exc:
            raise CorpusError(f"notes[{i}]: {exc}") from exc
    return notes


def create_app(bundle: GenBundle, checkpoint_name: str = "",
               frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="lyricgen", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # Field-level 400s instead of FastAPI's default 422.
        details = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": details})

    @app.exception_handler(Exception)
    async def failure_handler(request: Request, exc: Exception):
        error_id = secrets.token_hex(8)
        logger.exception("request failed [%s]", error_id)
        return JSONResponse(status_code=500,
                            content={"detail": "generation failed",
                                     "error_id": error_id})

    def bad_request(message: str) -> JSONResponse:
        return JSONResponse(status_code=400,
                            content={"detail": [{"field": "",
                                                 "message": message}]})

    @app.post("/generate", response_model=GenerateResponse,
              responses={400: {"description": "invalid request"}})
    def generate(req: GenerateRequest):
        try:
            notes = _parse_notes(req.notes)
        except CorpusError as exc:
            return bad_request(str(exc))
        seed = req.seed if req.seed is not None else secrets.randbelow(2 ** 31)
        melodies = [notes] if bundle.model.config.conditioned else None
        try:
            entries = generate_lines(bundle, melodies, req.theme, seed,
                                     count=req.count)
        except (CorpusError, TrainingError) as exc:
            return bad_request(str(exc))
        lines = [LineOut(syllables=e["syllables"],
                         aligned=(e["aligned"] if e["aligned"] is not None
                                  else len(e["syllables"]) == len(notes)))
                 for e in entries]
        return GenerateResponse(lines=lines, model=bundle.mode, seed=seed)

    @app.get("/themes", response_model=ThemesResponse)
    def themes():
        # Only list themes the served model can actually condition on;
        # clients use an empty list to hide their theme picker.
        if bundle.theme is None or not bundle.model.config.themed:
            return ThemesResponse(themes=[])
        model = bundle.theme.model
        labels = model.labels or [str(t) for t in range(model.n_topics)]
        return ThemesResponse(themes=[
            ThemeOut(id=t, label=labels[t], top_words=words)
            for t, words in enumerate(model.top_words())
        ])

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok", checkpoint=checkpoint_name,
            vocab_sizes={"syllables": bundle.vocab.n_syllables,
                         "notes": bundle.vocab.n_notes})

    if frontend_dir is not None:
        app.mount("/", StaticFiles(directory=Path(frontend_dir), html=True),
                  name="frontend")
    return app
