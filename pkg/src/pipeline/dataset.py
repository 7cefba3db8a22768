"""From multi-camera streams and a label track to labeled, sampled point sets.

Dataset directories hold ``cam{i}.evpc`` streams with ``cam{i}.cam``
geometry sidecars, the ``labels.csv`` track and an optional ``scene.json``
describing how the data was generated.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from src.common.errors import EmptySampleError
from src.events.io import merge_streams, read_event_stream, write_event_stream
from src.events.types import CameraGeometry, EventStream, EventWindow, LabeledSample
from src.events.windows import WindowSpec, slice_windows
from src.labels.labeling import LabelPolicy, LabelTrack, label_window, project_to_2d, read_label_track, write_label_track
from src.raster.rasterizer import RasterConfig, rasterize
from src.raster.sampler import SamplerConfig, Split, filter_undersized, sample_points, spawn_rngs

LABELS_FILE = "labels.csv"
SCENE_FILE = "scene.json"
_STREAM_NAME = re.compile(r"^cam(\d+)\.evpc$")


@dataclass
class SceneData:
    streams: Dict[int, EventStream]
    geometries: Dict[int, CameraGeometry]
    track: LabelTrack
    meta: dict = field(default_factory=dict)

    @property
    def cameras(self) -> List[int]:
        return sorted(self.streams)


def build_sample(
    window: EventWindow,
    track: LabelTrack,
    geometry: CameraGeometry,
    raster: RasterConfig,
    sampler: SamplerConfig,
    policy: LabelPolicy | str,
    rng=None,
) -> LabeledSample:
    label3d = label_window(window, track, policy)
    rasterized = rasterize(window, raster)
    return LabeledSample(
        points=sample_points(rasterized, sampler, rng),
        label=project_to_2d(label3d, geometry),
        camera_id=window.camera_id,
        t_min=window.t_min,
        t_max=window.t_max,
        raw_event_count=len(window),
        raw_point_count=len(rasterized),
        window_index=window.index,
        label3d=label3d,
    )


def window_spec_for(policy: LabelPolicy | str, window_events: int, num_cameras: int) -> WindowSpec:
    """Windowing that matches a label policy.

    Mean Label labels merged windows of ``window_events`` events over every
    camera. Last Label counts each camera on its own, with the same share of
    events per camera; views of the same index are paired for 3D.
    """

    if num_cameras < 1:
        raise ValueError("Se necesita al menos una cámara")
    if LabelPolicy(policy) is LabelPolicy.LAST:
        return WindowSpec.count_per_camera(max(1, window_events // num_cameras))
    return WindowSpec.count_total(window_events)


def build_samples(
    scene: SceneData,
    spec: WindowSpec,
    raster: RasterConfig,
    sampler: SamplerConfig,
    policy: LabelPolicy | str = LabelPolicy.MEAN,
    split: Split | str = Split.TRAIN,
    cameras: Optional[Sequence[int]] = None,
    max_windows: Optional[int] = None,
) -> List[LabeledSample]:
    """Window the merged stream, label, rasterize and sample every camera view.

    Each view gets its own generator spawned from ``sampler.seed``; the
    min_points filter applies to the training split only.
    """

    selected = sorted(cameras) if cameras is not None else scene.cameras
    missing = [c for c in selected if c not in scene.geometries]
    if missing:
        raise ValueError(f"Faltan geometrías para las cámaras {missing}")
    merged = merge_streams({c: scene.streams[c] for c in selected})
    windows = slice_windows(merged, spec, selected)
    if max_windows is not None:
        windows = [w for w in windows if w.index < max_windows]

    rngs = spawn_rngs(sampler.seed, len(windows))
    samples = []
    for window, rng in zip(windows, rngs):
        try:
            samples.append(
                build_sample(window, scene.track, scene.geometries[window.camera_id], raster, sampler, policy, rng)
            )
        except EmptySampleError:
            continue
    return filter_undersized(samples, sampler.min_points, split)


def window_groups(
    scene: SceneData,
    spec: WindowSpec,
    cameras: Optional[Sequence[int]] = None,
    max_windows: Optional[int] = None,
) -> List[List[EventWindow]]:
    """Views sharing a window index, in camera order."""

    selected = sorted(cameras) if cameras is not None else scene.cameras
    merged = merge_streams({c: scene.streams[c] for c in selected})
    groups: Dict[int, List[EventWindow]] = {}
    for window in slice_windows(merged, spec, selected):
        if max_windows is not None and window.index >= max_windows:
            continue
        groups.setdefault(window.index, []).append(window)
    return [groups[index] for index in sorted(groups)]


def write_dataset(directory: str | Path, scene: SceneData) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for camera_id in scene.cameras:
        write_event_stream(root / f"cam{camera_id}.evpc", scene.streams[camera_id], scene.geometries[camera_id])
    write_label_track(root / LABELS_FILE, scene.track)
    if scene.meta:
        (root / SCENE_FILE).write_text(json.dumps(scene.meta, indent=2), encoding="utf-8")
    return root


def read_dataset(directory: str | Path) -> SceneData:
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"No se encontró el directorio de datos {root}")
    stream_files = sorted(p for p in root.iterdir() if _STREAM_NAME.match(p.name))
    label_file = root / LABELS_FILE
    missing = [str(p) for p in (label_file,) if not p.exists()]
    if not stream_files:
        missing.append(str(root / "cam*.evpc"))
    if missing:
        raise FileNotFoundError(f"Dataset incompleto en {root}: faltan {', '.join(missing)}")

    streams: Dict[int, EventStream] = {}
    geometries: Dict[int, CameraGeometry] = {}
    for stream_file in stream_files:
        camera_id = int(_STREAM_NAME.match(stream_file.name).group(1))
        streams[camera_id], geometries[camera_id] = read_event_stream(stream_file, camera_id=camera_id)

    meta_file = root / SCENE_FILE
    meta = json.loads(meta_file.read_text(encoding="utf-8")) if meta_file.exists() else {}
    return SceneData(streams, geometries, read_label_track(label_file, meta.get("num_joints")), meta)
