"""Read-only HTTP service over a trained model, embedding table, and an
optional classifier. All state is loaded once at startup and immutable, so
concurrent requests need no locking and identical requests return identical
bytes."""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .clcnn import ClcnnModel, evaluate_sliding
from .errors import DataError
from .vce import (EmbeddingTable, VceModel, load_model, load_table,
                  table_file_hash)

Z_LIMIT = 4.0


@dataclass
class ServiceState:
    model: VceModel
    table: EmbeddingTable
    classifier: ClcnnModel | None = None
    class_names: list[str] | None = None


def load_state(weights, table_path, clf_path=None) -> ServiceState:
    """Load artifacts and cross-check their charset/table hashes."""
    model, meta = load_model(weights)
    table = load_table(table_path)
    model_hash = meta.get("charset_hash")
    if model_hash and model_hash != table.charset_hash:
        raise DataError(
            f"model charset hash {model_hash[:12]}... does not match "
            f"table hash {table.charset_hash[:12]}...")
    classifier = None
    class_names = None
    if clf_path is not None:
        classifier, clf_meta = ClcnnModel.load(clf_path)
        table_hash = clf_meta.get("table_hash")
        actual = table_file_hash(table_path)
        if table_hash and table_hash != actual:
            raise DataError(
                f"classifier was trained against table {table_hash[:12]}..., "
                f"got {actual[:12]}...")
        class_names = clf_meta.get("class_names")
    return ServiceState(model, table, classifier, class_names)


class CharEntry(BaseModel):
    codepoint: int
    char: str
    mu: list[float]
    sigma: list[float]


class CharPage(BaseModel):
    total: int
    entries: list[CharEntry]


class EmbeddingResponse(BaseModel):
    char: str
    mu: list[float]
    sigma: list[float]


class DecodeRequest(BaseModel):
    z: list[float]


class NeighborsRequest(BaseModel):
    z: list[float]
    k: int = Field(default=5, ge=0)


class Neighbor(BaseModel):
    char: str
    codepoint: int
    distance: float


class NeighborsResponse(BaseModel):
    neighbors: list[Neighbor]


class SsaPreviewRequest(BaseModel):
    char: str
    dim: int
    u: float


class SsaPreviewResponse(BaseModel):
    png: str  # base64
    z: list[float]
    neighbors: list[Neighbor]


class ClassifyRequest(BaseModel):
    text: str


class WindowScore(BaseModel):
    start: int
    probs: list[float]


class ClassifyResponse(BaseModel):
    label: int
    label_name: str | None
    probs: list[float]
    windows: list[WindowScore]


class MetaResponse(BaseModel):
    latent_dim: int
    charset_size: int
    active_dims: list[int]
    classifier_loaded: bool
    z_limit: float


def _check_z(z: list[float], d: int) -> np.ndarray:
    if len(z) != d:
        raise HTTPException(400, f"z must have length {d}, got {len(z)}")
    if not all(math.isfinite(v) for v in z):
        raise HTTPException(400, "z components must be finite")
    return np.clip(np.asarray(z, dtype=np.float32), -Z_LIMIT, Z_LIMIT)


def _render_png(image: np.ndarray) -> bytes:
    u8 = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _nearest(table: EmbeddingTable, z: np.ndarray, k: int) -> list[Neighbor]:
    d2 = ((table.mu - z[None, :]) ** 2).sum(axis=1)
    order = np.argsort(d2, kind="stable")[:k]
    return [Neighbor(char=chr(table.charset.entries[i]),
                     codepoint=int(table.charset.entries[i]),
                     distance=float(np.sqrt(d2[i])))
            for i in order]


def create_app(state: ServiceState, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="glyph embedding explorer")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    table = state.table
    model = state.model
    d = table.latent_dim

    def entry(i: int) -> CharEntry:
        cp = table.charset.entries[i]
        return CharEntry(codepoint=int(cp), char=chr(cp),
                         mu=[float(v) for v in table.mu[i]],
                         sigma=[float(v) for v in table.sigma[i]])

    @app.get("/api/meta", response_model=MetaResponse)
    def meta():
        return MetaResponse(latent_dim=d, charset_size=len(table.charset),
                            active_dims=table.active_dims(),
                            classifier_loaded=state.classifier is not None,
                            z_limit=Z_LIMIT)

    @app.get("/api/chars", response_model=CharPage)
    def chars(query: str = "", offset: int = 0, limit: int = 50):
        limit = max(0, min(limit, 500))
        if query:
            hits = []
            seen = set()
            for ch in query:
                if ch in seen:
                    continue
                seen.add(ch)
                if ch in table.charset:
                    hits.append(table.charset.index_of(ch))
            return CharPage(total=len(hits),
                            entries=[entry(i) for i in hits[offset:offset + limit]])
        total = len(table.charset)
        return CharPage(total=total,
                        entries=[entry(i) for i in range(offset, min(offset + limit, total))])

    @app.get("/api/embedding/{char}", response_model=EmbeddingResponse)
    def embedding(char: str):
        if len(char) != 1:
            raise HTTPException(400, "expected a single character")
        if char not in table.charset:
            hints = "".join(table.charset.nearest_codepoints(char))
            raise HTTPException(404, f"'{char}' is not in the charset; "
                                     f"nearest codepoints: {hints}")
        i = table.charset.index_of(char)
        e = entry(i)
        return EmbeddingResponse(char=char, mu=e.mu, sigma=e.sigma)

    @app.post("/api/decode")
    def decode(req: DecodeRequest):
        z = _check_z(req.z, d)
        png = _render_png(model.decode(z))
        return Response(content=png, media_type="image/png")

    @app.post("/api/neighbors", response_model=NeighborsResponse)
    def neighbors(req: NeighborsRequest):
        z = _check_z(req.z, d)
        return NeighborsResponse(neighbors=_nearest(table, z, req.k))

    @app.post("/api/ssa_preview", response_model=SsaPreviewResponse)
    def ssa_preview(req: SsaPreviewRequest):
        if req.char not in table.charset:
            raise HTTPException(404, f"'{req.char}' is not in the charset")
        if not 0 <= req.dim < d:
            raise HTTPException(400, f"dim must be in [0, {d})")
        if abs(req.u) > Z_LIMIT:
            raise HTTPException(400, f"|u| must be <= {Z_LIMIT}")
        z = table.lookup(req.char).astype(np.float32).copy()
        z[req.dim] += req.u
        png = _render_png(model.decode(np.clip(z, -Z_LIMIT, Z_LIMIT)))
        return SsaPreviewResponse(png=base64.b64encode(png).decode("ascii"),
                                  z=[float(v) for v in z],
                                  neighbors=_nearest(table, z, 5))

    @app.post("/api/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest):
        if state.classifier is None:
            raise HTTPException(503, "no classifier loaded")
        if not req.text:
            raise HTTPException(400, "text must be non-empty")
        label, probs, records = evaluate_sliding(
            state.classifier, table, table.charset, req.text)
        name = None
        if state.class_names and label < len(state.class_names):
            name = state.class_names[label]
        return ClassifyResponse(
            label=label, label_name=name,
            probs=[float(p) for p in probs],
            windows=[WindowScore(start=r.start, probs=[float(p) for p in r.probs])
                     for r in records])

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
