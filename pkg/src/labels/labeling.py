"""Mean Label / Last Label generation from a low-rate 3D label track."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from src.events.types import CameraGeometry, EventWindow, Skeleton2D, Skeleton3D

TRACK_COLUMNS = ["t", "joint", "X", "Y", "Z"]


class LabelPolicy(str, Enum):
    MEAN = "mean"
    LAST = "last"


@dataclass(frozen=True)
class LabelTrack:
    """3D skeletons (mm) at strictly increasing microsecond timestamps."""

    timestamps: np.ndarray
    joints: np.ndarray
    valid: np.ndarray = None  # type: ignore[assignment]
    period_us: Optional[int] = None

    def __post_init__(self) -> None:
        timestamps = np.array(self.timestamps, dtype=np.int64).reshape(-1)
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 3 or joints.shape[0] != len(timestamps) or joints.shape[2] != 3:
            raise ValueError("La pista de etiquetas debe tener forma (T, J, 3) con un esqueleto por instante")
        if len(timestamps) > 1 and np.any(np.diff(timestamps) <= 0):
            raise ValueError("Las marcas de tiempo de la pista deben ser estrictamente crecientes")
        valid = (
            np.ones(joints.shape[:2], dtype=bool)
            if self.valid is None
            else np.array(self.valid, dtype=bool).reshape(joints.shape[:2])
        )
        period = self.period_us
        if period is None and len(timestamps) > 1:
            period = int(np.median(np.diff(timestamps)))
        for name, value in (("timestamps", timestamps), ("joints", joints), ("valid", valid)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        object.__setattr__(self, "period_us", period)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def num_joints(self) -> int:
        return self.joints.shape[1]

    def skeleton(self, i: int) -> Skeleton3D:
        return Skeleton3D(self.joints[i], self.valid[i])


def _nearest_index(timestamps: np.ndarray, t: float) -> int:
    """Index of the timestamp closest to ``t``; equidistant ties go to the later one."""

    right = int(np.searchsorted(timestamps, t, side="left"))
    if right >= len(timestamps):
        return len(timestamps) - 1
    if right == 0:
        return 0
    left = right - 1
    return left if (t - timestamps[left]) < (timestamps[right] - t) else right


def label_span(window: EventWindow, track: LabelTrack) -> tuple[int, int]:
    """[lo, hi) range of track indices with first_t <= T <= last_t."""

    lo = int(np.searchsorted(track.timestamps, window.t_min, side="left"))
    hi = int(np.searchsorted(track.timestamps, window.t_max, side="right"))
    return lo, hi


def mean_label(window: EventWindow, track: LabelTrack) -> Skeleton3D:
    """Per-joint mean of every label between the window's first and last event.

    Split windows carry the merged bounds, so all views of one merged window
    get the same label. Without any label inside the window, the label nearest
    to the window midpoint is returned with ``fallback`` set.
    """

    if len(track) == 0:
        raise ValueError("La pista de etiquetas está vacía")
    lo, hi = label_span(window, track)
    if hi <= lo:
        midpoint = (window.t_min + window.t_max) / 2.0
        nearest = track.skeleton(_nearest_index(track.timestamps, midpoint))
        return Skeleton3D(nearest.joints, nearest.valid, fallback=True)

    joints = track.joints[lo:hi]
    valid = track.valid[lo:hi]
    counts = valid.sum(axis=0)
    # averaging offsets from a reference label keeps identical labels exact
    first = np.argmax(valid, axis=0)
    reference = joints[first, np.arange(joints.shape[1])]
    offsets = np.where(valid[:, :, None], joints - reference[None], 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = reference + offsets / counts[:, None]
    out_valid = counts > 0
    return Skeleton3D(np.where(out_valid[:, None], mean, 0.0), out_valid)


def last_label(window: EventWindow, track: LabelTrack) -> Skeleton3D:
    """Label nearest to the window's last event (ties toward the later label)."""

    if len(track) == 0:
        raise ValueError("La pista de etiquetas está vacía")
    return track.skeleton(_nearest_index(track.timestamps, window.last_event_t))


def label_window(window: EventWindow, track: LabelTrack, policy: LabelPolicy | str) -> Skeleton3D:
    policy = LabelPolicy(policy)
    return mean_label(window, track) if policy is LabelPolicy.MEAN else last_label(window, track)


def project_to_2d(skeleton: Skeleton3D, cam: CameraGeometry) -> Skeleton2D:
    """Pinhole projection; joints behind the camera or off-sensor are masked."""

    uv, w = cam.project(skeleton.joints)
    finite = np.all(np.isfinite(uv), axis=1)
    valid = skeleton.valid & (w > 0) & finite
    valid &= np.where(finite, cam.contains(np.where(finite[:, None], uv, -1.0)), False)
    return Skeleton2D(np.where(finite[:, None], uv, np.nan), valid)


# ---------------------------------------------------------------- track files


def read_label_track(path: str | Path, num_joints: Optional[int] = None) -> LabelTrack:
    track_file = Path(path)
    if not track_file.exists():
        raise FileNotFoundError(f"No se encontró la pista de etiquetas {track_file}")

    frame = pd.read_csv(track_file)
    if list(frame.columns) != TRACK_COLUMNS:
        raise ValueError(f"Cabecera inesperada en {track_file}: se esperaba t,joint,X,Y,Z")
    if frame.empty:
        return LabelTrack(np.empty(0, np.int64), np.empty((0, num_joints or 0, 3)))

    frame = frame.dropna(subset=["t", "joint"])
    timestamps = np.unique(frame["t"].to_numpy(dtype=np.int64))
    joints_count = num_joints or int(frame["joint"].max()) + 1
    joints = np.zeros((len(timestamps), joints_count, 3))
    valid = np.zeros((len(timestamps), joints_count), dtype=bool)

    rows = np.searchsorted(timestamps, frame["t"].to_numpy(dtype=np.int64))
    cols = frame["joint"].to_numpy(dtype=np.int64)
    coords = frame[["X", "Y", "Z"]].to_numpy(dtype=np.float64)
    finite = np.all(np.isfinite(coords), axis=1) & (cols >= 0) & (cols < joints_count)
    joints[rows[finite], cols[finite]] = coords[finite]
    valid[rows[finite], cols[finite]] = True
    return LabelTrack(timestamps, joints, valid)


def write_label_track(path: str | Path, track: LabelTrack) -> Path:
    track_file = Path(path)
    track_file.parent.mkdir(parents=True, exist_ok=True)
    t_idx, j_idx = np.nonzero(track.valid)
    frame = pd.DataFrame(
        {
            "t": track.timestamps[t_idx],
            "joint": j_idx,
            "X": track.joints[t_idx, j_idx, 0],
            "Y": track.joints[t_idx, j_idx, 1],
            "Z": track.joints[t_idx, j_idx, 2],
        }
    )
    frame.to_csv(track_file, index=False, float_format="%.17g", lineterminator="\n")
    return track_file
