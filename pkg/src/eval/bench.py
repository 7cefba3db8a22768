"""Stage-wise latency benchmark at batch size 1 with the real-time threshold report."""

from __future__ import annotations

import os
import platform
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel

from src.events.types import EventWindow, Skeleton2D
from src.geometry.triangulation import StereoRig, skeleton_to_3d
from src.labels.simdr import decode_logits
from src.model.pointnet import forward, point_features
from src.pipeline.inference import Predictor
from src.raster.rasterizer import rasterize
from src.raster.sampler import make_rng, sample_points

load_dotenv()

STAGES = ("rasterize", "sample", "forward", "decode", "triangulate")
REALTIME_THRESHOLD_US = float(os.getenv("EVPC_THRESHOLD_US", "36000"))
DEFAULT_WARMUP = int(os.getenv("EVPC_WARMUP", "10"))

Stage = Tuple[str, Callable[[Dict[str, Any]], None]]


class StageStats(BaseModel):
    stage: str
    count: int
    p50_us: Optional[float] = None
    p90_us: Optional[float] = None
    p99_us: Optional[float] = None
    mean_us: Optional[float] = None

    @classmethod
    def from_samples(cls, stage: str, samples_us: Sequence[float]) -> "StageStats":
        if not samples_us:
            return cls(stage=stage, count=0)
        values = np.asarray(samples_us, dtype=np.float64)
        p50, p90, p99 = np.percentile(values, [50, 90, 99])
        return cls(
            stage=stage,
            count=len(values),
            p50_us=float(p50),
            p90_us=float(p90),
            p99_us=float(p99),
            mean_us=float(values.mean()),
        )


class EnvironmentInfo(BaseModel):
    cpu: str
    threads: int
    platform: str
    python: str
    numpy: str

    @classmethod
    def detect(cls) -> "EnvironmentInfo":
        return cls(
            cpu=_cpu_model(),
            threads=os.cpu_count() or 1,
            platform=platform.platform(),
            python=platform.python_version(),
            numpy=np.__version__,
        )


class LatencyReport(BaseModel):
    stages: List[StageStats]
    end_to_end: StageStats
    realtime_threshold_us: float = REALTIME_THRESHOLD_US
    passed: bool
    insufficient_data: bool
    repetitions: int
    warmup: int
    discarded: int
    environment: EnvironmentInfo

    def stage(self, name: str) -> StageStats:
        for stats in self.stages:
            if stats.stage == name:
                return stats
        raise KeyError(name)


def _cpu_model() -> str:
    cpuinfo = Path("/proc/cpuinfo")
    if cpuinfo.exists():
        for line in cpuinfo.read_text(encoding="utf-8", errors="ignore").splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip()
    return platform.processor() or platform.machine() or "desconocido"


def run_stages(
    stages: Sequence[Stage],
    inputs: Sequence[Any],
    repetitions: int,
    warmup: int = DEFAULT_WARMUP,
    clock: Callable[[], int] = time.perf_counter_ns,
) -> Tuple[Dict[str, List[float]], List[float], int]:
    """Time each stage per repetition in microseconds.

    Stages run in order on a shared state dict seeded with ``{"input": item}``.
    The first ``warmup`` repetitions are not recorded. A measurement whose
    clock reading goes backwards is discarded and counted.
    """

    if warmup < 1:
        raise ValueError("Se necesita al menos una iteración de calentamiento")
    if repetitions < 0:
        raise ValueError("El número de repeticiones no puede ser negativo")
    if not inputs:
        raise ValueError("No hay entradas para el benchmark")

    samples: Dict[str, List[float]] = {name: [] for name, _ in stages}
    totals: List[float] = []
    discarded = 0
    for rep in range(warmup + repetitions):
        record = rep >= warmup
        state: Dict[str, Any] = {"input": inputs[rep % len(inputs)]}
        start = previous = clock()
        for name, stage in stages:
            stage(state)
            now = clock()
            if record:
                if now < previous:
                    discarded += 1
                else:
                    samples[name].append((now - previous) / 1000.0)
            previous = now
        if record:
            if previous < start:
                discarded += 1
            else:
                totals.append((previous - start) / 1000.0)
    return samples, totals, discarded


def build_report(
    samples: Mapping[str, Sequence[float]],
    totals: Sequence[float],
    discarded: int,
    repetitions: int,
    warmup: int,
    threshold_us: float = REALTIME_THRESHOLD_US,
) -> LatencyReport:
    end_to_end = StageStats.from_samples("end_to_end", totals)
    insufficient = end_to_end.count == 0
    return LatencyReport(
        stages=[StageStats.from_samples(name, values) for name, values in samples.items()],
        end_to_end=end_to_end,
        realtime_threshold_us=threshold_us,
        passed=bool(not insufficient and end_to_end.mean_us < threshold_us),
        insufficient_data=insufficient,
        repetitions=repetitions,
        warmup=warmup,
        discarded=discarded,
        environment=EnvironmentInfo.detect(),
    )


def pipeline_stages(predictor: Predictor, rig: Optional[StereoRig] = None) -> List[Stage]:
    """The five inference stages over a list of per-camera windows.

    Triangulation is included only with a rig and runs on the first two views.
    """

    def _rasterize(state: Dict[str, Any]) -> None:
        state["points"] = [rasterize(view, predictor.raster) for view in state["input"]]

    def _sample(state: Dict[str, Any]) -> None:
        rng = make_rng(predictor.sampler.seed)
        state["points"] = [sample_points(points, predictor.sampler, rng) for points in state["points"]]

    def _forward(state: Dict[str, Any]) -> None:
        cfg = predictor.model
        state["logits"] = [
            forward(
                point_features(points, cfg.in_channels, cfg.width, cfg.height, predictor.raw_features),
                predictor.params,
                cfg,
            )[:2]
            for points in state["points"]
        ]

    def _decode(state: Dict[str, Any]) -> None:
        state["skeletons"] = [
            Skeleton2D(decode_logits(lx, ly).astype(np.float64)) for lx, ly in state["logits"]
        ]

    def _triangulate(state: Dict[str, Any]) -> None:
        skeletons = state["skeletons"]
        state["skeleton3d"] = skeleton_to_3d(rig, skeletons[0], skeletons[1]).skeleton

    stages: List[Stage] = [
        ("rasterize", _rasterize),
        ("sample", _sample),
        ("forward", _forward),
        ("decode", _decode),
    ]
    if rig is not None:
        stages.append(("triangulate", _triangulate))
    return stages


def bench_pipeline(
    items: Sequence[Sequence[EventWindow]],
    predictor: Predictor,
    repetitions: int,
    warmup: int = DEFAULT_WARMUP,
    threshold_us: float = REALTIME_THRESHOLD_US,
    rig: Optional[StereoRig] = None,
    clock: Callable[[], int] = time.perf_counter_ns,
    stage_overrides: Optional[Mapping[str, Callable[[Dict[str, Any]], None]]] = None,
) -> LatencyReport:
    """Benchmark single-worker inference over ``items`` (each a list of views)."""

    if rig is not None and any(len(views) < 2 for views in items):
        raise ValueError("La triangulación necesita dos vistas por elemento")
    stages = [
        (name, (stage_overrides or {}).get(name, stage)) for name, stage in pipeline_stages(predictor, rig)
    ]
    samples, totals, discarded = run_stages(stages, list(items), repetitions, warmup, clock)
    return build_report(samples, totals, discarded, repetitions, warmup, threshold_us)
