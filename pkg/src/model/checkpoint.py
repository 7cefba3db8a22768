"""EVPM checkpoints and loss-curve CSV files.

Checkpoint layout (little-endian): ``EVPM`` magic, version u8 = 1,
in_channels u8, joints u16, width u16, height u16, layer count u8, one u32 per
MLP width, then every parameter array in declaration order as f32.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np
import pandas as pd

from src.model.pointnet import ModelConfig, ModelParams, param_shapes
from src.model.trainer import CurvePoint

MODEL_MAGIC = b"EVPM"
MODEL_VERSION = 1
_HEADER = struct.Struct("<4sBBHHHB")
CURVE_COLUMNS = ["epoch", "step", "loss", "mpjpe2d"]


def save_checkpoint(path: str | Path, params: ModelParams, cfg: ModelConfig) -> Path:
    model_file = Path(path)
    model_file.parent.mkdir(parents=True, exist_ok=True)
    widths = cfg.widths
    shapes = param_shapes(cfg)
    with model_file.open("wb") as handle:
        handle.write(
            _HEADER.pack(
                MODEL_MAGIC, MODEL_VERSION, cfg.in_channels, cfg.num_joints, cfg.width, cfg.height, len(widths)
            )
        )
        handle.write(struct.pack(f"<{len(widths)}I", *widths))
        for name, shape in shapes.items():
            array = params[name]
            if array.shape != shape:
                raise ValueError(f"{name} tiene forma {array.shape}, se esperaba {shape}")
            handle.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return model_file


def load_checkpoint(path: str | Path) -> Tuple[ModelParams, ModelConfig]:
    model_file = Path(path)
    if not model_file.exists():
        raise FileNotFoundError(f"No se encontró el modelo {model_file}")
    data = model_file.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{model_file} es demasiado corto para ser un modelo EVPM")

    magic, version, in_channels, joints, width, height, n_layers = _HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ValueError(f"{model_file} no es un modelo EVPM (magic {magic!r})")
    if version != MODEL_VERSION:
        raise ValueError(f"Versión de modelo no soportada: {version}")
    offset = _HEADER.size
    if n_layers != 4 or len(data) < offset + 4 * n_layers:
        raise ValueError(f"{model_file} tiene una cabecera de capas inválida")
    widths = struct.unpack_from(f"<{n_layers}I", data, offset)
    offset += 4 * n_layers

    cfg = ModelConfig(
        in_channels=in_channels, mlp_widths=tuple(widths), num_joints=joints, width=width, height=height
    )
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        count = int(np.prod(shape))
        if offset + 4 * count > len(data):
            raise ValueError(f"{model_file} está truncado en {name}")
        arrays[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64).reshape(shape)
        offset += 4 * count
    if offset != len(data):
        raise ValueError(f"{model_file} tiene {len(data) - offset} bytes sobrantes")
    return ModelParams(arrays), cfg


def write_loss_curve(path: str | Path, curve: Iterable[CurvePoint]) -> Path:
    curve_file = Path(path)
    curve_file.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [(p.epoch, p.step, p.loss, p.mpjpe2d) for p in curve], columns=CURVE_COLUMNS
    )
    frame.to_csv(curve_file, index=False, lineterminator="\n")
    return curve_file


def read_loss_curve(path: str | Path) -> List[CurvePoint]:
    frame = pd.read_csv(path)
    if list(frame.columns) != CURVE_COLUMNS:
        raise ValueError(f"Cabecera inesperada en {path}: se esperaba {','.join(CURVE_COLUMNS)}")
    return [
        CurvePoint(int(row.epoch), int(row.step), float(row.loss), None if pd.isna(row.mpjpe2d) else float(row.mpjpe2d))
        for row in frame.itertuples(index=False)
    ]
