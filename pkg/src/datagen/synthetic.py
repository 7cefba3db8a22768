"""Synthetic stick-figure scenes: multi-camera event streams with a 3D label track.

A 13-joint figure moves with piecewise-linear joint trajectories in front of a
ring of pinhole cameras. Every bone emits events at a Poisson rate from
points drawn uniformly along the bone at uniformly drawn timestamps; optional
background noise is spread uniformly over the sensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.events.types import DEFAULT_HEIGHT, DEFAULT_WIDTH, CameraGeometry, EventStream, LabeledSample, Skeleton3D
from src.geometry.triangulation import StereoRig, look_at_camera
from src.labels.labeling import LabelPolicy, LabelTrack
from src.pipeline.dataset import SceneData, build_samples, window_spec_for
from src.raster.rasterizer import RasterConfig
from src.raster.sampler import SamplerConfig, Split

JOINT_NAMES = (
    "head",
    "shoulder_right",
    "shoulder_left",
    "elbow_right",
    "elbow_left",
    "hip_left",
    "hip_right",
    "hand_right",
    "hand_left",
    "knee_right",
    "knee_left",
    "foot_right",
    "foot_left",
)

# millimeters, z up, figure facing -y
REST_POSE_MM = np.array(
    [
        [0.0, 0.0, 1650.0],
        [-200.0, 0.0, 1450.0],
        [200.0, 0.0, 1450.0],
        [-250.0, 0.0, 1150.0],
        [250.0, 0.0, 1150.0],
        [120.0, 0.0, 950.0],
        [-120.0, 0.0, 950.0],
        [-280.0, 0.0, 880.0],
        [280.0, 0.0, 880.0],
        [-130.0, 0.0, 500.0],
        [130.0, 0.0, 500.0],
        [-140.0, 0.0, 80.0],
        [140.0, 0.0, 80.0],
    ]
)

BONES = np.array(
    [
        (0, 1),
        (0, 2),
        (1, 2),
        (1, 3),
        (3, 7),
        (2, 4),
        (4, 8),
        (1, 6),
        (2, 5),
        (5, 6),
        (6, 9),
        (9, 11),
        (5, 10),
        (10, 12),
    ]
)

SCENE_TARGET_MM = (0.0, 0.0, 865.0)


class SyntheticSceneConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = Field(DEFAULT_WIDTH, ge=1)
    height: int = Field(DEFAULT_HEIGHT, ge=1)
    amplitude_px: float = Field(5.0, ge=0)
    edge_rate: float = Field(20.0, ge=0, description="eventos/ms por hueso y cámara")
    noise_rate: float = Field(0.0, ge=0, description="eventos/ms de ruido por cámara")
    window_ms: float = Field(30.0, gt=0)
    label_period_ms: float = Field(10.0, gt=0)
    segment_ms: float = Field(60.0, gt=0)
    focal: float = Field(300.0, gt=0)
    camera_distance_mm: float = Field(3500.0, gt=0)
    camera_angles_deg: Tuple[float, ...] = (-30.0, 30.0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_amplitude(self) -> "SyntheticSceneConfig":
        limit = min(self.width, self.height) / 4.0
        if self.amplitude_px >= limit:
            raise ValueError(f"amplitude_px debe ser < min(W, H)/4 = {limit}")
        if len(self.camera_angles_deg) < 1:
            raise ValueError("La escena necesita al menos una cámara")
        return self

    @property
    def num_joints(self) -> int:
        return len(JOINT_NAMES)

    @property
    def amplitude_mm(self) -> float:
        return self.amplitude_px * self.camera_distance_mm / self.focal

    @property
    def window_events(self) -> int:
        """Expected events per merged window across all cameras."""

        per_camera = self.window_ms * (self.edge_rate * len(BONES) + self.noise_rate)
        return int(round(per_camera * len(self.camera_angles_deg)))

    def cameras(self) -> Dict[int, CameraGeometry]:
        target = np.asarray(SCENE_TARGET_MM)
        out = {}
        for camera_id, angle in enumerate(self.camera_angles_deg):
            a = math.radians(angle)
            center = target + self.camera_distance_mm * np.array([math.sin(a), -math.cos(a), 0.0])
            out[camera_id] = look_at_camera(center, target, self.focal, self.width, self.height)
        return out

    def rig(self) -> StereoRig:
        cameras = self.cameras()
        if len(cameras) < 2:
            raise ValueError("Un rig estéreo necesita dos cámaras")
        return StereoRig(cameras[0], cameras[1])


@dataclass(frozen=True)
class SyntheticScene:
    """Keyframed motion: pose(t) interpolates linearly between keyframes."""

    keyframe_us: np.ndarray
    keyframes: np.ndarray

    @classmethod
    def random(cls, cfg: SyntheticSceneConfig, duration_us: int, rng: np.random.Generator) -> "SyntheticScene":
        segment_us = int(round(cfg.segment_ms * 1000))
        count = max(2, int(math.ceil(duration_us / segment_us)) + 1)
        times = np.arange(count, dtype=np.int64) * segment_us
        offsets = rng.uniform(-1.0, 1.0, size=(count, cfg.num_joints, 3)) * cfg.amplitude_mm / math.sqrt(3.0)
        return cls(times, REST_POSE_MM[None] + offsets)

    def pose_at(self, t) -> np.ndarray:
        """Pose (J, 3) for a scalar time, (n, J, 3) for an array of times."""

        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        segment = np.clip(np.searchsorted(self.keyframe_us, t_arr, side="right") - 1, 0, len(self.keyframe_us) - 2)
        start = self.keyframe_us[segment].astype(np.float64)
        end = self.keyframe_us[segment + 1].astype(np.float64)
        alpha = ((t_arr - start) / (end - start))[:, None, None]
        # start + alpha * delta keeps a static segment bit-exact
        poses = self.keyframes[segment] + alpha * (self.keyframes[segment + 1] - self.keyframes[segment])
        return poses[0] if np.ndim(t) == 0 else poses


def emit_events(
    scene: SyntheticScene,
    camera: CameraGeometry,
    cfg: SyntheticSceneConfig,
    t0_us: int,
    t1_us: int,
    rng: np.random.Generator,
) -> EventStream:
    """Events of one camera in [t0_us, t1_us), sorted by timestamp."""

    span_us = t1_us - t0_us
    span_ms = span_us / 1000.0
    counts = rng.poisson(cfg.edge_rate * span_ms, size=len(BONES))
    bone = np.repeat(np.arange(len(BONES)), counts)
    t = t0_us + np.floor(rng.random(len(bone)) * span_us).astype(np.int64)
    along = rng.random(len(bone))[:, None]

    poses = scene.pose_at(t) if len(t) else np.empty((0, cfg.num_joints, 3))
    rows = np.arange(len(bone))
    a = poses[rows, BONES[bone, 0]]
    b = poses[rows, BONES[bone, 1]]
    uv, w = camera.project(a + along * (b - a))
    pixels = np.floor(uv)
    keep = (w > 0) & camera.contains(pixels)

    n_noise = rng.poisson(cfg.noise_rate * span_ms)
    x = np.concatenate([pixels[keep, 0].astype(np.int64), rng.integers(0, cfg.width, n_noise)])
    y = np.concatenate([pixels[keep, 1].astype(np.int64), rng.integers(0, cfg.height, n_noise)])
    ts = np.concatenate([t[keep], t0_us + rng.integers(0, span_us, n_noise)])
    p = rng.integers(0, 2, len(ts))

    order = np.argsort(ts, kind="stable")
    return EventStream(x[order], y[order], ts[order], p[order])


def _concat(parts: List[EventStream]) -> EventStream:
    if not parts:
        return EventStream.empty()
    return EventStream(
        np.concatenate([s.x for s in parts]),
        np.concatenate([s.y for s in parts]),
        np.concatenate([s.t for s in parts]),
        np.concatenate([s.p for s in parts]),
    )


@dataclass
class SyntheticDataset:
    scene: SyntheticScene
    data: SceneData
    samples: List[LabeledSample]
    truth: List[Skeleton3D]


def generate_scene(cfg: SyntheticSceneConfig, num_windows: int) -> Tuple[SyntheticScene, SceneData]:
    """Streams and label track long enough for ``num_windows`` merged windows."""

    if num_windows < 1:
        raise ValueError("Se necesita al menos una ventana")
    per_window = cfg.window_events
    if per_window < 1:
        raise ValueError("Con tasas nulas la escena no emite eventos")

    chunk_us = int(round(cfg.window_ms * 1000))
    max_chunks = 4 * num_windows + 10
    motion_rng, *camera_rngs = [
        np.random.Generator(np.random.Philox(child))
        for child in np.random.SeedSequence(cfg.seed).spawn(1 + len(cfg.camera_angles_deg))
    ]
    scene = SyntheticScene.random(cfg, max_chunks * chunk_us, motion_rng)
    cameras = cfg.cameras()

    parts: Dict[int, List[EventStream]] = {camera_id: [] for camera_id in cameras}
    total = 0
    chunk = 0
    while total < num_windows * per_window:
        if chunk >= max_chunks:
            raise ValueError("La escena no generó eventos suficientes para las ventanas pedidas")
        t0, t1 = chunk * chunk_us, (chunk + 1) * chunk_us
        for camera_id, rng in zip(cameras, camera_rngs):
            events = emit_events(scene, cameras[camera_id], cfg, t0, t1, rng)
            parts[camera_id].append(events)
            total += len(events)
        chunk += 1

    period_us = int(round(cfg.label_period_ms * 1000))
    label_times = np.arange(0, chunk * chunk_us + 1, period_us, dtype=np.int64)
    track = LabelTrack(label_times, scene.pose_at(label_times), period_us=period_us)
    meta = {**cfg.model_dump(mode="json"), "num_joints": cfg.num_joints, "joint_names": list(JOINT_NAMES)}
    data = SceneData({c: _concat(p) for c, p in parts.items()}, cameras, track, meta)
    return scene, data


def gen_synthetic(
    cfg: SyntheticSceneConfig,
    num_windows: int,
    raster: Optional[RasterConfig] = None,
    sampler: Optional[SamplerConfig] = None,
    policy: LabelPolicy | str = LabelPolicy.MEAN,
    split: Split | str = Split.TRAIN,
) -> SyntheticDataset:
    """Generate a scene and cut it into ``num_windows`` labeled windows per camera.

    Mean Label windows hold ``cfg.window_events`` events across all cameras
    and yield one sample per camera; Last Label windows count each camera on
    its own. ``truth`` holds the analytic pose at the midpoint of each
    sample's window.
    """

    scene, data = generate_scene(cfg, num_windows)
    samples = build_samples(
        data,
        window_spec_for(policy, cfg.window_events, len(data.cameras)),
        raster or RasterConfig(),
        sampler or SamplerConfig(),
        policy,
        split,
        max_windows=num_windows,
    )
    truth = [Skeleton3D(scene.pose_at((s.t_min + s.t_max) / 2.0)) for s in samples]
    return SyntheticDataset(scene, data, samples, truth)
