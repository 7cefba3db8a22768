"""Single-window inference: rasterize, sample, forward, decode (and triangulate)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from src.events.types import EventWindow, RasterizedPoints, Skeleton2D, Skeleton3D
from src.geometry.triangulation import StereoRig, skeleton_to_3d
from src.labels.simdr import decode_logits
from src.model.pointnet import ModelConfig, ModelParams, forward, point_features
from src.raster.rasterizer import RasterConfig, rasterize
from src.raster.sampler import SamplerConfig, make_rng, sample_points


def predict_logits(
    points: RasterizedPoints, params: ModelParams, cfg: ModelConfig, raw_features: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    features = point_features(points, cfg.in_channels, cfg.width, cfg.height, raw_features)
    logits_x, logits_y, _ = forward(features, params, cfg)
    return logits_x, logits_y


def predict_skeleton(
    points: RasterizedPoints, params: ModelParams, cfg: ModelConfig, raw_features: bool = False
) -> Skeleton2D:
    logits_x, logits_y = predict_logits(points, params, cfg, raw_features)
    return Skeleton2D(decode_logits(logits_x, logits_y).astype(np.float64))


@dataclass
class Predictor:
    """Full per-window path with fixed configuration, batch size 1."""

    params: ModelParams
    model: ModelConfig
    raster: RasterConfig
    sampler: SamplerConfig
    raw_features: bool = False

    def points(self, window: EventWindow, rng: Optional[np.random.Generator] = None) -> RasterizedPoints:
        rasterized = rasterize(window, self.raster)
        return sample_points(rasterized, self.sampler, rng if rng is not None else make_rng(self.sampler.seed))

    def predict_window(self, window: EventWindow, rng: Optional[np.random.Generator] = None) -> Skeleton2D:
        return predict_skeleton(self.points(window, rng), self.params, self.model, self.raw_features)

    def predict_views(self, views: Dict[int, EventWindow]) -> Dict[int, Skeleton2D]:
        return {camera_id: self.predict_window(window) for camera_id, window in views.items()}

    def predict_3d(
        self, rig: StereoRig, view_a: EventWindow, view_b: EventWindow
    ) -> tuple[Skeleton3D, np.ndarray]:
        skeleton_a = self.predict_window(view_a)
        skeleton_b = self.predict_window(view_b)
        result = skeleton_to_3d(rig, skeleton_a, skeleton_b)
        return result.skeleton, result.residuals
