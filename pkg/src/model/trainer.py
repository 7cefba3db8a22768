"""Batch-size-1 training loop over labeled samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from src.common.errors import TrainingDivergedError
from src.eval.metrics import joint_errors
from src.events.types import LabeledSample, Skeleton2D
from src.labels.simdr import CodecConfig, decode_logits, encode_skeleton
from src.model.optim import LR_SCHEDULE, AdamState, adam_step, lr_at
from src.model.pointnet import (
    ModelConfig,
    ModelParams,
    backward,
    forward,
    init_params,
    kl_loss,
    point_features,
)
from src.raster.sampler import spawn_rngs


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(30, ge=1)
    lr_schedule: Dict[int, float] = Field(default_factory=lambda: dict(LR_SCHEDULE))
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    seed: int = Field(0, ge=0)
    raw_features: bool = False
    shuffle: bool = True
    progress: bool = True


@dataclass(frozen=True)
class CurvePoint:
    epoch: int
    step: int
    loss: float
    mpjpe2d: Optional[float] = None


@dataclass
class TrainResult:
    params: ModelParams
    curve: List[CurvePoint] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.curve[0].loss

    @property
    def final_loss(self) -> float:
        return self.curve[-1].loss

    @property
    def final_mpjpe2d(self) -> Optional[float]:
        return self.curve[-1].mpjpe2d


@dataclass(frozen=True)
class PreparedSample:
    features: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray
    mask: np.ndarray
    label: Skeleton2D


def prepare_samples(
    samples: Sequence[LabeledSample],
    model_cfg: ModelConfig,
    codec_cfg: CodecConfig,
    raw_features: bool = False,
) -> List[PreparedSample]:
    """Model inputs and KL targets, computed once per sample."""

    if (codec_cfg.width, codec_cfg.height) != (model_cfg.width, model_cfg.height):
        raise ValueError(
            f"El codificador ({codec_cfg.width}x{codec_cfg.height}) y las cabezas del modelo "
            f"({model_cfg.width}x{model_cfg.height}) no coinciden"
        )
    prepared = []
    for sample in samples:
        if sample.label.num_joints != model_cfg.num_joints:
            raise ValueError(
                f"La muestra tiene {sample.label.num_joints} articulaciones; el modelo espera {model_cfg.num_joints}"
            )
        target_x, target_y, mask = encode_skeleton(sample.label, codec_cfg)
        features = point_features(
            sample.points, model_cfg.in_channels, model_cfg.width, model_cfg.height, raw_features
        )
        prepared.append(PreparedSample(features, target_x, target_y, mask, sample.label))
    return prepared


def mean_loss(params: ModelParams, prepared: Sequence[PreparedSample], cfg: ModelConfig) -> float:
    losses = []
    for item in prepared:
        logits_x, logits_y, _ = forward(item.features, params, cfg)
        loss, _, _ = kl_loss(logits_x, logits_y, item.target_x, item.target_y, item.mask)
        losses.append(loss)
    return float(np.mean(losses))


def validation_mpjpe(
    params: ModelParams, prepared: Sequence[PreparedSample], cfg: ModelConfig
) -> Optional[float]:
    if not prepared:
        return None
    preds = []
    for item in prepared:
        logits_x, logits_y, _ = forward(item.features, params, cfg)
        preds.append(Skeleton2D(decode_logits(logits_x, logits_y).astype(np.float64)))
    return joint_errors(preds, [item.label for item in prepared]).mpjpe


def train(
    train_set: Sequence[LabeledSample],
    model_cfg: ModelConfig,
    train_cfg: Optional[TrainConfig] = None,
    codec_cfg: Optional[CodecConfig] = None,
    val_set: Optional[Sequence[LabeledSample]] = None,
    params: Optional[ModelParams] = None,
    on_epoch: Optional[Callable[[CurvePoint, float], None]] = None,
) -> TrainResult:
    """Train with Adam at batch size 1; deterministic for a fixed seed.

    The first curve row (epoch 0, step 0) is the loss of the initial
    parameters over the training set; each later row is one epoch's mean
    training loss and the validation MPJPE_2D after that epoch. Epoch ``e``
    (1-based) trains at ``lr_at(e - 1)``.
    """

    train_cfg = train_cfg or TrainConfig()
    codec_cfg = codec_cfg or CodecConfig(width=model_cfg.width, height=model_cfg.height)
    if not train_set:
        raise ValueError("El conjunto de entrenamiento está vacío")

    prepared = prepare_samples(train_set, model_cfg, codec_cfg, train_cfg.raw_features)
    prepared_val = prepare_samples(val_set or [], model_cfg, codec_cfg, train_cfg.raw_features)
    params = params if params is not None else init_params(model_cfg, train_cfg.seed)
    shuffle_rng = spawn_rngs(train_cfg.seed, 1)[0]

    result = TrainResult(params)
    result.curve.append(
        CurvePoint(0, 0, mean_loss(params, prepared, model_cfg), validation_mpjpe(params, prepared_val, model_cfg))
    )

    state = AdamState(train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    step = 0
    epochs = tqdm(range(1, train_cfg.epochs + 1), desc="Entrenando", disable=not train_cfg.progress)
    for epoch in epochs:
        lr = lr_at(epoch - 1, train_cfg.lr_schedule)
        order = shuffle_rng.permutation(len(prepared)) if train_cfg.shuffle else np.arange(len(prepared))
        total = 0.0
        for index in order:
            item = prepared[index]
            logits_x, logits_y, cache = forward(item.features, params, model_cfg)
            loss, grad_x, grad_y = kl_loss(logits_x, logits_y, item.target_x, item.target_y, item.mask)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"Pérdida no finita en la época {epoch}, paso {step}",
                    last_good=params,
                    epoch=epoch,
                    step=step,
                    model=model_cfg,
                )
            grads = backward(cache, grad_x, grad_y, params)
            params, state = adam_step(params, grads, state, lr)
            step += 1
            total += loss

        point = CurvePoint(
            epoch, step, total / len(prepared), validation_mpjpe(params, prepared_val, model_cfg)
        )
        result.params = params
        result.curve.append(point)
        epochs.set_postfix(loss=f"{point.loss:.4f}")
        if on_epoch is not None:
            on_epoch(point, lr)
    return result
