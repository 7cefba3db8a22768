"""Flat key=value run configuration shared by every CLI subcommand.

Files use the same syntax as ``.env`` files and are parsed with
``dotenv_values``; keys mirror the CLI flags. Precedence is field defaults,
then the file, then explicit CLI values.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.datagen.synthetic import SyntheticSceneConfig
from src.labels.labeling import LabelPolicy
from src.labels.simdr import CodecConfig
from src.model.optim import LR_SCHEDULE, parse_schedule
from src.model.pointnet import DESK_SCALE, ModelConfig
from src.model.trainer import TrainConfig
from src.raster.rasterizer import ChannelSet, RasterConfig, Representation
from src.raster.sampler import SamplerConfig


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # data
    data: Optional[str] = None
    test_data: Optional[str] = None
    window_events: Optional[int] = Field(None, ge=1)
    train_windows: int = Field(250, ge=1)
    test_windows: int = Field(50, ge=1)

    # rasterization and sampling
    k: int = Field(4, ge=1)
    channels: ChannelSet = ChannelSet.XYTPC
    representation: Representation = Representation.RASTERIZED
    points: int = Field(2048, ge=1)
    min_points: int = Field(1024, ge=0)
    seed: int = Field(0, ge=0)

    # labels
    label_policy: LabelPolicy = LabelPolicy.MEAN
    sigma: float = Field(8.0, gt=0)
    round_labels: bool = False

    # model and training
    widths: Optional[Tuple[int, int, int, int]] = None
    width_scale: float = Field(DESK_SCALE, gt=0, le=1)
    raw_features: bool = False
    epochs: int = Field(30, ge=1)
    lr_schedule: Dict[int, float] = Field(default_factory=lambda: dict(LR_SCHEDULE))

    # synthetic scene
    amplitude_px: float = Field(5.0, ge=0)
    edge_rate: float = Field(20.0, ge=0)
    noise_rate: float = Field(0.0, ge=0)
    window_ms: float = Field(30.0, gt=0)
    label_period_ms: float = Field(10.0, gt=0)
    segment_ms: float = Field(60.0, gt=0)

    # benchmark
    reps: int = Field(100, ge=0)
    warmup: int = Field(10, ge=1)
    threshold_us: float = Field(36000.0, gt=0)

    @field_validator("widths", mode="before")
    @classmethod
    def _parse_widths(cls, value: Any) -> Any:
        if isinstance(value, str):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            if len(parts) != 4:
                raise ValueError("widths necesita cuatro anchos separados por comas")
            return tuple(int(p) for p in parts)
        return value

    @field_validator("lr_schedule", mode="before")
    @classmethod
    def _parse_schedule(cls, value: Any) -> Any:
        return parse_schedule(value) if isinstance(value, str) else value

    def scene_config(self, split_offset: int = 0) -> SyntheticSceneConfig:
        return SyntheticSceneConfig(
            amplitude_px=self.amplitude_px,
            edge_rate=self.edge_rate,
            noise_rate=self.noise_rate,
            window_ms=self.window_ms,
            label_period_ms=self.label_period_ms,
            segment_ms=self.segment_ms,
            seed=self.seed + split_offset,
        )

    def raster_config(self) -> RasterConfig:
        return RasterConfig(k=self.k, channels=self.channels, representation=self.representation)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(target_count=self.points, seed=self.seed, min_points=self.min_points)

    def model_config_for(self, width: int, height: int, num_joints: int) -> ModelConfig:
        return ModelConfig(
            in_channels=self.channels.in_channels,
            mlp_widths=self.widths,
            width_scale=self.width_scale,
            num_joints=num_joints,
            width=width,
            height=height,
        )

    def codec_config(self, width: int, height: int) -> CodecConfig:
        return CodecConfig(sigma=self.sigma, width=width, height=height, round_labels=self.round_labels)

    def train_config(self, progress: bool = True) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr_schedule=self.lr_schedule,
            seed=self.seed,
            raw_features=self.raw_features,
            progress=progress,
        )


def load_run_config(path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Merge a config file and CLI overrides (``None`` values are ignored)."""

    values: Dict[str, Any] = {}
    if path is not None:
        config_file = Path(path)
        if not config_file.exists():
            raise FileNotFoundError(f"No se encontró el archivo de configuración {config_file}")
        values.update({k: v for k, v in dotenv_values(config_file).items() if v is not None and v != ""})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        raise ValueError(f"Configuración inválida: {exc}") from exc
