"""Ablation sweeps: one train/evaluate/benchmark cell per setting, collected in a grid."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import pandas as pd

from src.common.config import RunConfig
from src.datagen.synthetic import SyntheticSceneConfig, generate_scene
from src.eval.bench import LatencyReport, bench_pipeline
from src.eval.evaluate import evaluate_samples
from src.eval.metrics import EvalReport
from src.geometry.triangulation import StereoRig
from src.model.pointnet import ModelConfig
from src.model.trainer import TrainResult, train
from src.pipeline.dataset import SceneData, build_samples, read_dataset, window_groups, window_spec_for
from src.pipeline.inference import Predictor
from src.raster.sampler import SAMPLING_NUMBERS, Split

GRID_COLUMNS = [
    "sweep",
    "setting",
    "status",
    "train_samples",
    "test_samples",
    "final_loss",
    "mpjpe2d",
    "mpjpe3d",
    "latency_mean_us",
    "error",
]
BENCH_ITEMS = 8


class Sweep(str, Enum):
    CHANNELS = "channels"
    POINTS = "points"
    SIGMA = "sigma"
    K = "k"
    LABELS = "labels"
    REPRESENTATION = "representation"
    FILTER = "filter"


SWEEPS: Dict[Sweep, List[Tuple[str, Dict[str, Any]]]] = {
    Sweep.CHANNELS: [(c, {"channels": c}) for c in ("xyt", "xytp", "xytpc")],
    Sweep.POINTS: [(str(n), {"points": n}) for n in SAMPLING_NUMBERS],
    Sweep.SIGMA: [(str(s), {"sigma": float(s)}) for s in (2, 4, 6, 8, 10)],
    Sweep.K: [(str(k), {"k": k}) for k in (1, 2, 4, 8)],
    Sweep.LABELS: [(p, {"label_policy": p}) for p in ("last", "mean")],
    Sweep.REPRESENTATION: [
        (f"{rep}-{ch}", {"representation": rep, "channels": ch})
        for rep, ch in (
            ("raw", "xyt"),
            ("raw", "xytp"),
            ("normalized", "xyt"),
            ("normalized", "xytp"),
            ("rasterized", "xyt"),
            ("rasterized", "xytp"),
            ("rasterized", "xytpc"),
        )
    ],
    Sweep.FILTER: [("with", {}), ("without", {"min_points": 0})],
}


@dataclass
class Splits:
    train: SceneData
    test: SceneData
    window_events: int


@dataclass
class CellResult:
    training: TrainResult
    model: ModelConfig
    report: EvalReport
    latency: Optional[LatencyReport]
    train_samples: int
    test_samples: int


def resolve_window_events(cfg: RunConfig, scene: SceneData) -> int:
    if cfg.window_events is not None:
        return cfg.window_events
    if scene.meta:
        fields = {k: v for k, v in scene.meta.items() if k in SyntheticSceneConfig.model_fields}
        return SyntheticSceneConfig.model_validate(fields).window_events
    raise ValueError("Indica window_events: el dataset no describe su tamaño de ventana")


def load_splits(cfg: RunConfig) -> Splits:
    """User datasets when configured, otherwise two synthetic scenes with different seeds."""

    if cfg.data:
        train_scene = read_dataset(cfg.data)
        test_scene = read_dataset(cfg.test_data) if cfg.test_data else train_scene
    else:
        _, train_scene = generate_scene(cfg.scene_config(0), cfg.train_windows)
        _, test_scene = generate_scene(cfg.scene_config(1), cfg.test_windows)
    return Splits(train_scene, test_scene, resolve_window_events(cfg, train_scene))


def scene_rig(scene: SceneData) -> Optional[StereoRig]:
    cameras = scene.cameras
    if len(cameras) < 2:
        return None
    return StereoRig(scene.geometries[cameras[0]], scene.geometries[cameras[1]])


def run_cell(
    cfg: RunConfig,
    splits: Splits,
    progress: bool = False,
    on_epoch: Optional[Callable] = None,
    bench: bool = True,
) -> CellResult:
    """Build samples for ``cfg``, train, evaluate on the test split and benchmark."""

    spec = window_spec_for(cfg.label_policy, splits.window_events, len(splits.train.cameras))
    raster, sampler = cfg.raster_config(), cfg.sampler_config()
    train_set = build_samples(
        splits.train, spec, raster, sampler, cfg.label_policy, Split.TRAIN, max_windows=cfg.train_windows
    )
    test_set = build_samples(
        splits.test, spec, raster, sampler, cfg.label_policy, Split.TEST, max_windows=cfg.test_windows
    )
    if not train_set:
        raise ValueError("No quedan muestras de entrenamiento tras el filtro de puntos")
    if not test_set:
        raise ValueError("El conjunto de prueba está vacío")

    label = train_set[0].label
    geometry = splits.train.geometries[train_set[0].camera_id]
    model_cfg = cfg.model_config_for(geometry.width, geometry.height, label.num_joints)
    codec_cfg = cfg.codec_config(geometry.width, geometry.height)
    training = train(
        train_set, model_cfg, cfg.train_config(progress), codec_cfg, val_set=test_set, on_epoch=on_epoch
    )

    rig = scene_rig(splits.test)
    report = evaluate_samples(training.params, model_cfg, test_set, rig, cfg.raw_features)

    latency = None
    if bench:
        predictor = Predictor(training.params, model_cfg, raster, sampler, cfg.raw_features)
        groups = window_groups(splits.test, spec, max_windows=BENCH_ITEMS)
        if rig is not None:
            groups = [g for g in groups if len(g) >= 2]
        if groups:
            latency = bench_pipeline(
                groups, predictor, cfg.reps, cfg.warmup, cfg.threshold_us, rig
            )
    return CellResult(training, model_cfg, report, latency, len(train_set), len(test_set))


def run_ablation(
    sweep: Sweep | str,
    base: RunConfig,
    splits: Optional[Splits] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """One row per setting of ``sweep``; a failing cell becomes a ``failed`` row.

    Every cell shares the base seed and the same generated data.
    """

    sweep = Sweep(sweep)
    splits = splits or load_splits(base)
    rows = []
    for setting, update in SWEEPS[sweep]:
        row: Dict[str, Any] = {"sweep": sweep.value, "setting": setting}
        try:
            cfg = RunConfig(**{**base.model_dump(), **update})
            result = run_cell(cfg, splits, progress)
        except Exception as exc:  # noqa: BLE001 - the sweep keeps going
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        else:
            row.update(
                status="ok",
                train_samples=result.train_samples,
                test_samples=result.test_samples,
                final_loss=result.training.final_loss,
                mpjpe2d=result.report.mpjpe2d,
                mpjpe3d=result.report.mpjpe3d,
                latency_mean_us=result.latency.end_to_end.mean_us if result.latency else None,
            )
        rows.append(row)
    return pd.DataFrame(rows, columns=GRID_COLUMNS)
