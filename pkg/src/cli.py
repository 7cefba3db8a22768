"""``evpc`` command line: convert, rasterize, gen, train, eval, bench, triangulate, ablate."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.common import logs
from src.common.config import RunConfig, load_run_config
from src.common.errors import TrainingDivergedError
from src.datagen.ablation import (
    GRID_COLUMNS,
    Sweep,
    load_splits,
    resolve_window_events,
    run_ablation,
    run_cell,
    scene_rig,
)
from src.datagen.synthetic import generate_scene
from src.eval.bench import bench_pipeline
from src.eval.evaluate import evaluate_samples
from src.events.io import read_event_stream, read_geometry, write_points
from src.events.types import EventWindow, Skeleton2D
from src.geometry.triangulation import StereoRig, skeleton_to_3d
from src.ingest.ingest import convert_events
from src.model.checkpoint import load_checkpoint, save_checkpoint, write_loss_curve
from src.pipeline.dataset import build_samples, read_dataset, window_groups, window_spec_for, write_dataset
from src.pipeline.inference import Predictor
from src.raster.rasterizer import ChannelSet, RasterConfig, Representation, rasterize
from src.raster.sampler import Split

PREDICTION_COLUMNS = ["joint", "x", "y", "valid"]
JOINTS3D_COLUMNS = ["joint", "X", "Y", "Z", "valid", "residual"]

# RunConfig keys settable from the CLI; argparse defaults stay None so the config file wins
OVERRIDE_KEYS = (
    "data",
    "test_data",
    "window_events",
    "train_windows",
    "test_windows",
    "k",
    "channels",
    "representation",
    "points",
    "min_points",
    "seed",
    "label_policy",
    "sigma",
    "round_labels",
    "widths",
    "raw_features",
    "epochs",
    "lr_schedule",
    "reps",
    "warmup",
    "threshold_us",
)


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Archivo clave=valor con la configuración de la ejecución")
    parser.add_argument("--data", help="Directorio de datos (cam*.evpc, labels.csv)")
    parser.add_argument("--test-data", help="Directorio de datos de prueba")
    parser.add_argument("--window-events", type=int, help="Eventos por ventana (todas las cámaras)")
    parser.add_argument("--train-windows", type=int, help="Ventanas de entrenamiento")
    parser.add_argument("--test-windows", type=int, help="Ventanas de prueba")
    parser.add_argument("--k", type=int, help="Número de cortes temporales K")
    parser.add_argument("--channels", choices=[c.value for c in ChannelSet], help="Canales de entrada")
    parser.add_argument(
        "--representation", choices=[r.value for r in Representation], help="Representación de puntos"
    )
    parser.add_argument("--points", type=int, help="Puntos muestreados por ventana")
    parser.add_argument("--min-points", type=int, help="Mínimo de puntos para entrenar con una ventana")
    parser.add_argument("--seed", type=int, help="Semilla maestra")
    parser.add_argument("--label-policy", choices=["mean", "last"], help="Política de etiquetas")
    parser.add_argument("--sigma", type=float, help="Sigma de los vectores de calor")
    parser.add_argument("--round-labels", action="store_true", default=None, help="Redondea etiquetas a píxel")
    parser.add_argument("--widths", help="Anchos del MLP, p. ej. 16,32,64,128")
    parser.add_argument("--raw-features", action="store_true", default=None, help="Sin escalar las entradas")
    parser.add_argument("--epochs", type=int, help="Épocas de entrenamiento")
    parser.add_argument("--lr-schedule", help="Calendario época:tasa, p. ej. 0:1e-4,15:1e-5,20:1e-6")
    parser.add_argument("--reps", type=int, help="Repeticiones medidas del benchmark")
    parser.add_argument("--warmup", type=int, help="Iteraciones de calentamiento excluidas")
    parser.add_argument("--threshold-us", type=float, help="Umbral de tiempo real en microsegundos")


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {key: getattr(args, key, None) for key in OVERRIDE_KEYS}
    return load_run_config(getattr(args, "config", None), overrides)


def _write_json(path: Optional[str], document: str) -> None:
    if path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(document, encoding="utf-8")
    print(document)


# ---------------------------------------------------------------- commands


def cmd_convert(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    target, count = convert_events(args.input, args.output, geometry_path=args.cam, camera_id=args.camera_id)
    print(f"{count} eventos escritos en {target}")
    return {}


def cmd_rasterize(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    stream, _ = read_event_stream(args.input, geometry_path=args.cam)
    if len(stream) == 0:
        raise ValueError(f"{args.input} no contiene eventos")
    cfg = RasterConfig(k=args.k, channels=args.channels, representation=args.representation)
    points = rasterize(EventWindow.of(stream), cfg)
    write_points(args.output, points, cfg.k)
    print(f"{len(stream)} eventos -> {len(points)} puntos en {args.output}")
    return {}


def cmd_gen(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    cfg = _run_config(args)
    windows = args.windows or cfg.train_windows
    _, scene = generate_scene(cfg.scene_config(args.split_offset), windows)
    write_dataset(args.output, scene)
    counts = ", ".join(f"cam{c}: {len(s)}" for c, s in scene.streams.items())
    print(f"Escena sintética escrita en {args.output} ({counts} eventos)")
    return {}


def cmd_train(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    cfg = _run_config(args)
    splits = load_splits(cfg)

    def on_epoch(point, lr: float) -> None:
        if run_id is not None:
            logs.log_epoch(run_id=run_id, epoch=point.epoch, step=point.step, loss=point.loss, mpjpe2d=point.mpjpe2d, lr=lr)

    try:
        result = run_cell(cfg, splits, progress=not args.quiet, on_epoch=on_epoch, bench=False)
    except TrainingDivergedError as exc:
        if exc.model is not None:
            saved = save_checkpoint(args.output, exc.last_good, exc.model)
            print(f"Entrenamiento abortado; último modelo válido guardado en {saved}", file=sys.stderr)
        raise
    model_path = save_checkpoint(args.output, result.training.params, result.model)
    curve_path = Path(args.curve) if args.curve else Path(args.output).with_suffix(".curve.csv")
    write_loss_curve(curve_path, result.training.curve)
    print(
        f"Modelo guardado en {model_path}; pérdida {result.training.initial_loss:.4f} -> "
        f"{result.training.final_loss:.4f}; MPJPE_2D {result.report.mpjpe2d}"
    )
    return {
        "final_loss": result.training.final_loss,
        "mpjpe2d": result.report.mpjpe2d,
        "mpjpe3d": result.report.mpjpe3d,
    }


def _test_scene(cfg: RunConfig):
    if cfg.data:
        return read_dataset(cfg.data)
    _, scene = generate_scene(cfg.scene_config(1), cfg.test_windows)
    return scene


def _check_channels(cfg: RunConfig, in_channels: int) -> None:
    if cfg.channels.in_channels != in_channels:
        raise ValueError(
            f"El modelo espera {in_channels} canales y la configuración usa '{cfg.channels.value}'"
        )


def cmd_eval(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    cfg = _run_config(args)
    params, model_cfg = load_checkpoint(args.model)
    _check_channels(cfg, model_cfg.in_channels)
    scene = _test_scene(cfg)
    spec = window_spec_for(cfg.label_policy, resolve_window_events(cfg, scene), len(scene.cameras))
    samples = build_samples(
        scene, spec, cfg.raster_config(), cfg.sampler_config(), cfg.label_policy, Split.TEST, max_windows=cfg.test_windows
    )
    report = evaluate_samples(params, model_cfg, samples, scene_rig(scene), cfg.raw_features)
    _write_json(args.report, report.model_dump_json(indent=2))
    return {"mpjpe2d": report.mpjpe2d, "mpjpe3d": report.mpjpe3d}


def cmd_bench(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    cfg = _run_config(args)
    params, model_cfg = load_checkpoint(args.model)
    _check_channels(cfg, model_cfg.in_channels)
    scene = _test_scene(cfg)
    spec = window_spec_for(cfg.label_policy, resolve_window_events(cfg, scene), len(scene.cameras))
    rig = scene_rig(scene)
    groups = window_groups(scene, spec, max_windows=cfg.test_windows)
    if rig is not None:
        groups = [g for g in groups if len(g) >= 2]
    if not groups:
        raise ValueError("No hay ventanas para el benchmark")
    predictor = Predictor(params, model_cfg, cfg.raster_config(), cfg.sampler_config(), cfg.raw_features)
    report = bench_pipeline(groups, predictor, cfg.reps, cfg.warmup, cfg.threshold_us, rig)
    if run_id is not None:
        for stats in [*report.stages, report.end_to_end]:
            logs.log_bench(
                run_id=run_id,
                stage=stats.stage,
                p50_us=stats.p50_us,
                p90_us=stats.p90_us,
                p99_us=stats.p99_us,
                mean_us=stats.mean_us,
                count=stats.count,
            )
    _write_json(args.report, report.model_dump_json(indent=2))
    verdict = "CUMPLE" if report.passed else "NO CUMPLE"
    print(f"Latencia media {report.end_to_end.mean_us} us; umbral {report.realtime_threshold_us} us: {verdict}", file=sys.stderr)
    return {"latency_mean_us": report.end_to_end.mean_us}


def read_predictions(path: str | Path) -> Skeleton2D:
    prediction_file = Path(path)
    if not prediction_file.exists():
        raise FileNotFoundError(f"No se encontró el archivo de predicciones {prediction_file}")
    frame = pd.read_csv(prediction_file)
    if list(frame.columns) != PREDICTION_COLUMNS:
        raise ValueError(f"Cabecera inesperada en {prediction_file}: se esperaba joint,x,y,valid")
    frame = frame.sort_values("joint")
    if list(frame["joint"]) != list(range(len(frame))):
        raise ValueError(f"{prediction_file} debe listar las articulaciones 0..J-1 una vez")
    return Skeleton2D(frame[["x", "y"]].to_numpy(dtype=np.float64), frame["valid"].to_numpy().astype(bool))


def cmd_triangulate(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    rig = StereoRig(read_geometry(args.cam_a), read_geometry(args.cam_b))
    result = skeleton_to_3d(rig, read_predictions(args.pred_a), read_predictions(args.pred_b))
    joints = result.skeleton.joints
    frame = pd.DataFrame(
        {
            "joint": np.arange(len(joints)),
            "X": joints[:, 0],
            "Y": joints[:, 1],
            "Z": joints[:, 2],
            "valid": result.skeleton.valid.astype(int),
            "residual": result.residuals,
        },
        columns=JOINTS3D_COLUMNS,
    )
    target = Path(args.output)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, float_format="%.17g", lineterminator="\n")
    for joint, message in sorted(result.diagnostics.items()):
        print(f"articulación {joint}: {message}", file=sys.stderr)
    print(f"{int(result.skeleton.valid.sum())}/{len(joints)} articulaciones trianguladas en {target}")
    return {}


def cmd_ablate(args: argparse.Namespace, run_id: Optional[int]) -> Dict[str, Any]:
    cfg = _run_config(args)
    grid = run_ablation(args.sweep, cfg, progress=not args.quiet)
    target = Path(args.output)
    target.parent.mkdir(parents=True, exist_ok=True)
    grid.to_csv(target, index=False, columns=GRID_COLUMNS, lineterminator="\n")
    failed = int((grid["status"] == "failed").sum())
    print(f"{len(grid)} filas escritas en {target} ({failed} fallidas)")
    return {}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evpc", description="Pose humana desde nubes de puntos de eventos")
    parser.add_argument("--no-log", action="store_true", help="No registra la ejecución en SQLite")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="Convierte eventos CSV <-> binario empaquetado")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--cam", help="Geometría de la cámara (por defecto el .cam junto al archivo)")
    p.add_argument("--camera-id", type=int, default=0)
    p.set_defaults(handler=cmd_convert)

    p = sub.add_parser("rasterize", help="Rasteriza un flujo completo como una sola ventana")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--cam")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--channels", choices=[c.value for c in ChannelSet], default="xytpc")
    p.add_argument("--representation", choices=[r.value for r in Representation], default="rasterized")
    p.set_defaults(handler=cmd_rasterize)

    p = sub.add_parser("gen", help="Genera un dataset sintético")
    _add_run_options(p)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--windows", type=int, help="Ventanas a generar")
    p.add_argument("--split-offset", type=int, default=0, help="Desplazamiento de semilla (1 para prueba)")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", help="Entrena el modelo")
    _add_run_options(p)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--curve", help="CSV de la curva de pérdida")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Evalúa un modelo (MPJPE 2D/3D)")
    _add_run_options(p)
    p.add_argument("--model", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", help="Mide la latencia por etapa")
    _add_run_options(p)
    p.add_argument("--model", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("triangulate", help="Triangula dos predicciones 2D")
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--cam-a", required=True)
    p.add_argument("--cam-b", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(handler=cmd_triangulate)

    p = sub.add_parser("ablate", help="Ejecuta un barrido de ablación")
    _add_run_options(p)
    p.add_argument("--sweep", choices=[s.value for s in Sweep], required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace, Optional[int]], Dict[str, Any]] = args.handler

    run_id = None
    if not args.no_log:
        logs.init_db()
        options = {k: v for k, v in vars(args).items() if k != "handler"}
        run_id = logs.log_run(
            command=args.command, config=json.dumps(options, default=str), seed=options.get("seed"), status="running"
        )
    started = time.perf_counter()
    try:
        metrics = handler(args, run_id)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        if run_id is not None:
            logs.update_run(run_id, status="failed", duration_s=time.perf_counter() - started)
        print(f"Error: {exc}", file=sys.stderr)
        return 1
    if run_id is not None:
        logs.update_run(run_id, status="ok", duration_s=time.perf_counter() - started, **metrics)
    return 0


if __name__ == "__main__":
    sys.exit(main())
