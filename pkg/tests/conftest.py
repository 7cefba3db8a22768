import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

# keep the run log of imported modules out of the working tree
os.environ.setdefault("EVPC_LOG_DB", str(Path(tempfile.mkdtemp(prefix="evpc-")) / "runs.db"))

from src.common import logs  # noqa: E402
from src.datagen.synthetic import SyntheticSceneConfig, generate_scene  # noqa: E402
from src.events.types import EventStream, LabeledSample, RasterizedPoints, Skeleton2D  # noqa: E402
from src.model.pointnet import ModelConfig  # noqa: E402

# 64x48 sensors, two cameras, ~560 events per merged window
TINY_SCENE = SyntheticSceneConfig(
    width=64,
    height=48,
    amplitude_px=3.0,
    edge_rate=2.0,
    window_ms=10.0,
    label_period_ms=5.0,
    segment_ms=20.0,
    focal=60.0,
    seed=0,
)


@pytest.fixture(autouse=True)
def run_db(tmp_path, monkeypatch):
    path = tmp_path / "runs.db"
    monkeypatch.setattr(logs, "_DB_PATH", path)
    return path


@pytest.fixture
def scene_cfg() -> SyntheticSceneConfig:
    return TINY_SCENE


@pytest.fixture
def rig(scene_cfg):
    return scene_cfg.rig()


@pytest.fixture(scope="session")
def tiny_scene():
    _, data = generate_scene(TINY_SCENE, 6)
    return data


@pytest.fixture
def tiny_model() -> ModelConfig:
    return ModelConfig(in_channels=5, mlp_widths=(4, 8, 8, 16), num_joints=2, width=10, height=10)


def make_stream(t, x=None, y=None, p=None, camera=None) -> EventStream:
    n = len(t)
    return EventStream(
        np.asarray(x if x is not None else np.arange(n) % 7),
        np.asarray(y if y is not None else np.arange(n) % 5),
        np.asarray(t),
        np.asarray(p if p is not None else np.arange(n) % 2),
        None if camera is None else np.asarray(camera),
    )


def make_points(n: int, width: int, height: int, seed: int = 0) -> RasterizedPoints:
    rng = np.random.default_rng(seed)
    return RasterizedPoints(
        x=rng.integers(0, width, n),
        y=rng.integers(0, height, n),
        t_avg=rng.random(n),
        p_acc=rng.integers(-3, 4, n),
        e_cnt=rng.integers(1, 5, n),
        slice_index=rng.integers(0, 4, n),
    )


def make_sample(points: RasterizedPoints, joints, camera_id: int = 0, raw_point_count=None) -> LabeledSample:
    return LabeledSample(
        points=points,
        label=Skeleton2D(np.asarray(joints, dtype=np.float64)),
        camera_id=camera_id,
        t_min=0,
        t_max=1000,
        raw_event_count=len(points),
        raw_point_count=len(points) if raw_point_count is None else raw_point_count,
    )
