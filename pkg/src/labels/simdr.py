"""1D Gaussian heat-vector coding of joint coordinates (x over W, y over H)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.common.errors import CorruptPredictionError
from src.events.types import DEFAULT_HEIGHT, DEFAULT_WIDTH, Skeleton2D


class CodecConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(8.0, gt=0)
    width: int = Field(DEFAULT_WIDTH, ge=1)
    height: int = Field(DEFAULT_HEIGHT, ge=1)
    round_labels: bool = False


@dataclass(frozen=True)
class HeatVectorPair:
    vx: np.ndarray
    vy: np.ndarray
    joint_index: int = 0


def gaussian_density(center: float, length: int, sigma: float) -> np.ndarray:
    """Unnormalized heat-vector: the Gaussian pdf evaluated at each index."""

    d2 = (np.arange(length, dtype=np.float64) - center) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma)) / (np.sqrt(2.0 * np.pi) * sigma)


def gaussian_vector(center: float, length: int, sigma: float) -> np.ndarray:
    """Gaussian over indices 0..length-1, min-max normalized to [0, 1].

    The 1/(sqrt(2 pi) sigma) factor and the exponent offset of the nearest
    index cancel under min-max normalization; dropping them keeps the peak at
    exactly 1 and avoids underflow for small sigma.
    """

    d2 = (np.arange(length, dtype=np.float64) - center) ** 2
    v = np.exp(-(d2 - d2.min()) / (2.0 * sigma * sigma))
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.ones(length, dtype=np.float64)
    return (v - lo) / (hi - lo)


def encode(joint: Tuple[float, float], cfg: CodecConfig, joint_index: int = 0) -> HeatVectorPair:
    """Heat vectors for one joint.

    With ``round_labels`` the label snaps to the nearest pixel, half-pixel
    ties going to the lower index, which is the index ``decode`` returns for
    an unrounded tie.
    """

    x, y = float(joint[0]), float(joint[1])
    if not (0.0 <= x < cfg.width and 0.0 <= y < cfg.height):
        raise ValueError(
            f"Articulación {joint_index} fuera del sensor: ({x:.3f}, {y:.3f}) "
            f"no está en [0, {cfg.width}) x [0, {cfg.height})"
        )
    if cfg.round_labels:
        x, y = max(float(np.ceil(x - 0.5)), 0.0), max(float(np.ceil(y - 0.5)), 0.0)
        x, y = min(x, cfg.width - 1.0), min(y, cfg.height - 1.0)
    return HeatVectorPair(
        gaussian_vector(x, cfg.width, cfg.sigma),
        gaussian_vector(y, cfg.height, cfg.sigma),
        joint_index,
    )


def _argmax(vector: np.ndarray, axis_name: str) -> int:
    v = np.asarray(vector, dtype=np.float64)
    if v.size == 0:
        raise ValueError(f"Vector {axis_name} vacío")
    if np.isnan(v).any():
        raise CorruptPredictionError(f"El vector {axis_name} contiene NaN")
    # np.argmax returns the first maximum: ties go to the lowest index
    return int(np.argmax(v))


def decode(pair: HeatVectorPair) -> Tuple[int, int]:
    return _argmax(pair.vx, "x"), _argmax(pair.vy, "y")


def decode_logits(logits_x: np.ndarray, logits_y: np.ndarray) -> np.ndarray:
    """Row-wise argmax of (J, W) and (J, H) predictions into (J, 2) pixels."""

    if np.isnan(logits_x).any() or np.isnan(logits_y).any():
        raise CorruptPredictionError("La predicción contiene NaN")
    return np.stack([np.argmax(logits_x, axis=1), np.argmax(logits_y, axis=1)], axis=1)


def kl_target_prep(pair: HeatVectorPair) -> Tuple[np.ndarray, np.ndarray]:
    """Each axis divided by its sum, giving the KL target distributions."""

    return pair.vx / pair.vx.sum(), pair.vy / pair.vy.sum()


def encode_skeleton(skeleton: Skeleton2D, cfg: CodecConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Target distributions (J, W), (J, H) and the joint mask for a 2D label.

    Masked joints get all-zero rows and are excluded from the loss.
    """

    J = skeleton.num_joints
    tx = np.zeros((J, cfg.width))
    ty = np.zeros((J, cfg.height))
    mask = skeleton.valid.copy()
    for j in range(J):
        if not mask[j]:
            continue
        x, y = skeleton.joints[j]
        if not (0.0 <= x < cfg.width and 0.0 <= y < cfg.height):
            mask[j] = False
            continue
        tx[j], ty[j] = kl_target_prep(encode((x, y), cfg, j))
    return tx, ty, mask
