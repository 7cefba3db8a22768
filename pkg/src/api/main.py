"""FastAPI application serving single-window pose predictions."""

from __future__ import annotations

import os
import time
from pathlib import Path
from typing import Annotated, List, Optional

import numpy as np
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from src.common.config import RunConfig, load_run_config
from src.common.errors import EmptySampleError, EventOrderError, EventValidationError
from src.common.logs import init_db, log_request
from src.events.io import validate_stream
from src.events.types import CameraGeometry, EventStream, EventWindow
from src.model.checkpoint import load_checkpoint
from src.model.pointnet import ModelConfig
from src.pipeline.inference import Predictor, predict_skeleton
from src.raster.rasterizer import rasterize
from src.raster.sampler import make_rng, sample_points

load_dotenv()

API = FastAPI(title="EVPC Pose API")
app = API
MODEL_PATH = Path(os.getenv("MODEL_PATH", "data/model.evpm"))
RUN_CONFIG = os.getenv("RUN_CONFIG")

init_db()

_predictor: Predictor | None = None

Timestamp = Annotated[int, Field(ge=int(np.iinfo(np.int64).min), le=int(np.iinfo(np.int64).max))]


class PredictIn(BaseModel):
    x: List[int]
    y: List[int]
    t: List[Timestamp]
    p: List[int]
    camera_id: int = 0


class PredictOut(BaseModel):
    joints: List[List[float]]
    valid: List[bool]
    n_events: int
    n_points: int
    latency_ms: float = Field(ge=0)


def _load_predictor() -> Predictor:
    """Load (once) the checkpoint and run configuration backing the API."""

    global _predictor
    if _predictor is not None:
        return _predictor

    if not MODEL_PATH.exists():
        raise RuntimeError(
            f"El modelo no está disponible. Entrena uno con 'evpc train' ({MODEL_PATH})."
        )
    params, model_cfg = load_checkpoint(MODEL_PATH)
    cfg = load_run_config(RUN_CONFIG) if RUN_CONFIG else RunConfig()
    _predictor = Predictor(params, model_cfg, cfg.raster_config(), cfg.sampler_config(), cfg.raw_features)
    return _predictor


def set_predictor(predictor: Optional[Predictor]) -> None:
    global _predictor
    _predictor = predictor


@API.get("/health")
def health() -> dict:
    return {"status": "ok", "model_loaded": _predictor is not None, "model_path": str(MODEL_PATH)}


@API.post("/predict", response_model=PredictOut)
def predict(payload: PredictIn) -> PredictOut:
    start = time.perf_counter()
    try:
        predictor = _load_predictor()
    except RuntimeError as exc:
        raise HTTPException(status_code=503, detail=str(exc))

    if not (len(payload.x) == len(payload.y) == len(payload.t) == len(payload.p)):
        raise HTTPException(status_code=422, detail="Las columnas x, y, t, p tienen longitudes distintas")
    if not payload.t:
        raise HTTPException(status_code=422, detail="La ventana no contiene eventos")

    model: ModelConfig = predictor.model
    try:
        for name, values, limit in (("x", payload.x, model.width), ("y", payload.y, model.height), ("p", payload.p, 2)):
            bad = [i for i, v in enumerate(values) if not 0 <= v < limit]
            if bad:
                raise EventValidationError(f"{name} fuera de rango en el evento {bad[0]}", index=bad[0])
        stream = EventStream(payload.x, payload.y, payload.t, payload.p)
        validate_stream(stream, CameraGeometry.default(model.width, model.height))
        window = EventWindow.of(stream, payload.camera_id)
        points = rasterize(window, predictor.raster)
        sampled = sample_points(points, predictor.sampler, make_rng(predictor.sampler.seed))
        skeleton = predict_skeleton(sampled, predictor.params, model, predictor.raw_features)
    except (EventValidationError, EventOrderError, EmptySampleError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc

    latency_ms = (time.perf_counter() - start) * 1000.0
    result = PredictOut(
        joints=skeleton.joints.tolist(),
        valid=skeleton.valid.tolist(),
        n_events=len(stream),
        n_points=len(points),
        latency_ms=latency_ms,
    )
    try:
        log_request(
            camera_id=payload.camera_id,
            n_events=len(stream),
            n_points=len(points),
            latency_ms=latency_ms,
            model=str(MODEL_PATH),
        )
    except Exception:
        pass
    return result
