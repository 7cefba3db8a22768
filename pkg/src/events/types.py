"""Value types for events, windows, skeletons, cameras and labeled samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

DEFAULT_WIDTH = 346
DEFAULT_HEIGHT = 260
DEFAULT_JOINTS = 13
ALL_CAMERAS = -1


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(array, dtype=dtype)
    if out is array:
        out = out.copy()
    out.flags.writeable = False
    return out


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class EventStream:
    """Column store of events; polarity kept as {0, 1} like the sensor."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    camera: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = len(self.x)
        camera = self.camera if self.camera is not None else np.zeros(n, dtype=np.int16)
        object.__setattr__(self, "x", _frozen(self.x, np.uint16))
        object.__setattr__(self, "y", _frozen(self.y, np.uint16))
        object.__setattr__(self, "t", _frozen(self.t, np.int64))
        object.__setattr__(self, "p", _frozen(self.p, np.uint8))
        object.__setattr__(self, "camera", _frozen(camera, np.int16))
        if not all(len(column) == n for column in (self.y, self.t, self.p, self.camera)):
            raise ValueError("Las columnas del flujo de eventos tienen longitudes distintas")

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(
            np.empty(0, np.uint16),
            np.empty(0, np.uint16),
            np.empty(0, np.int64),
            np.empty(0, np.uint8),
        )

    @classmethod
    def from_events(cls, events: Sequence[Event], camera_id: int = 0) -> "EventStream":
        if not events:
            return cls.empty()
        data = np.asarray(events, dtype=np.int64).reshape(-1, 4)
        return cls(
            data[:, 0],
            data[:, 1],
            data[:, 2],
            data[:, 3],
            np.full(len(data), camera_id, dtype=np.int16),
        )

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def take(self, index) -> "EventStream":
        return EventStream(
            self.x[index], self.y[index], self.t[index], self.p[index], self.camera[index]
        )

    def with_camera(self, camera_id: int) -> "EventStream":
        return EventStream(
            self.x, self.y, self.t, self.p, np.full(len(self), camera_id, dtype=np.int16)
        )

    def cameras(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.camera))


@dataclass(frozen=True)
class EventWindow:
    """Constant-count window; for merged windows ``camera_id`` is ALL_CAMERAS.

    Per-camera windows split out of a merged window keep the merged bounds so
    that every view of the same window shares one time normalization.
    """

    events: EventStream
    camera_id: int
    t_min: int
    t_max: int
    index: int = 0

    def __post_init__(self) -> None:
        if len(self.events) == 0:
            raise ValueError("Una ventana de eventos no puede estar vacía")
        t = self.events.t
        if t[0] < self.t_min or t[-1] > self.t_max:
            raise ValueError(
                f"Eventos fuera de los límites de la ventana [{self.t_min}, {self.t_max}]"
            )
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("Los eventos de la ventana no están ordenados por tiempo")

    @classmethod
    def of(cls, events: EventStream, camera_id: int = 0, index: int = 0) -> "EventWindow":
        return cls(events, camera_id, int(events.t[0]), int(events.t[-1]), index)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def first_event_t(self) -> int:
        return int(self.events.t[0])

    @property
    def last_event_t(self) -> int:
        return int(self.events.t[-1])

    @property
    def duration(self) -> int:
        return self.t_max - self.t_min

    def split_by_camera(self) -> dict[int, "EventWindow"]:
        out: dict[int, EventWindow] = {}
        for camera_id in self.events.cameras():
            mask = self.events.camera == camera_id
            out[camera_id] = EventWindow(
                self.events.take(mask), camera_id, self.t_min, self.t_max, self.index
            )
        return out


class RasterizedPoint(NamedTuple):
    x: int
    y: int
    t_avg: float
    p_acc: int
    e_cnt: int
    slice_index: int


CHANNEL_COLUMNS = ("x", "y", "t_avg", "p_acc", "e_cnt")


@dataclass(frozen=True)
class RasterizedPoints:
    """Aggregated point cloud, one entry per occupied (x, y, slice) cell.

    ``channels`` records the channel set chosen at rasterization time; it only
    masks :meth:`feature_view`, the stored fields stay complete.
    """

    x: np.ndarray
    y: np.ndarray
    t_avg: np.ndarray
    p_acc: np.ndarray
    e_cnt: np.ndarray
    slice_index: np.ndarray
    channels: str = "xytpc"

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _frozen(self.x, np.int64))
        object.__setattr__(self, "y", _frozen(self.y, np.int64))
        object.__setattr__(self, "t_avg", _frozen(self.t_avg, np.float64))
        object.__setattr__(self, "p_acc", _frozen(self.p_acc, np.int64))
        object.__setattr__(self, "e_cnt", _frozen(self.e_cnt, np.int64))
        object.__setattr__(self, "slice_index", _frozen(self.slice_index, np.int64))

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i: int) -> RasterizedPoint:
        return RasterizedPoint(
            int(self.x[i]),
            int(self.y[i]),
            float(self.t_avg[i]),
            int(self.p_acc[i]),
            int(self.e_cnt[i]),
            int(self.slice_index[i]),
        )

    def __iter__(self) -> Iterator[RasterizedPoint]:
        for i in range(len(self)):
            yield self[i]

    def take(self, index) -> "RasterizedPoints":
        return RasterizedPoints(
            self.x[index],
            self.y[index],
            self.t_avg[index],
            self.p_acc[index],
            self.e_cnt[index],
            self.slice_index[index],
            self.channels,
        )

    def matrix(self) -> np.ndarray:
        """All five channels as an (N, 5) float matrix."""

        return np.column_stack(
            [self.x, self.y, self.t_avg, self.p_acc, self.e_cnt]
        ).astype(np.float64)

    def feature_view(self) -> np.ndarray:
        """Five channels with the fields outside ``channels`` zeroed."""

        view = self.matrix()
        if self.channels == "xyt":
            view[:, 3:] = 0.0
        elif self.channels == "xytp":
            view[:, 4] = 0.0
        return view


@dataclass(frozen=True)
class Skeleton2D:
    joints: np.ndarray
    valid: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 2)
        valid = (
            np.ones(len(joints), dtype=bool)
            if self.valid is None
            else np.asarray(self.valid, dtype=bool).reshape(-1)
        )
        if len(valid) != len(joints):
            raise ValueError("La máscara de validez no coincide con el número de articulaciones")
        object.__setattr__(self, "joints", _frozen(joints, np.float64))
        object.__setattr__(self, "valid", _frozen(valid, bool))

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    def within(self, width: int, height: int) -> bool:
        pts = self.joints[self.valid]
        return bool(
            np.all((pts[:, 0] >= 0) & (pts[:, 0] < width) & (pts[:, 1] >= 0) & (pts[:, 1] < height))
        )


@dataclass(frozen=True)
class Skeleton3D:
    """Joints in millimeters; ``fallback`` flags labels from the nearest-label rule."""

    joints: np.ndarray
    valid: np.ndarray = None  # type: ignore[assignment]
    fallback: bool = False

    def __post_init__(self) -> None:
        joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        valid = (
            np.ones(len(joints), dtype=bool)
            if self.valid is None
            else np.asarray(self.valid, dtype=bool).reshape(-1)
        )
        if len(valid) != len(joints):
            raise ValueError("La máscara de validez no coincide con el número de articulaciones")
        if not np.all(np.isfinite(joints[valid])):
            raise ValueError("Las articulaciones válidas deben tener coordenadas finitas")
        object.__setattr__(self, "joints", _frozen(joints, np.float64))
        object.__setattr__(self, "valid", _frozen(valid, bool))

    @property
    def num_joints(self) -> int:
        return len(self.joints)


@dataclass(frozen=True)
class CameraGeometry:
    P: np.ndarray
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=np.float64)
        if P.shape != (3, 4):
            raise ValueError(f"La matriz de proyección debe ser 3x4, no {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError("La matriz de proyección contiene valores no finitos")
        if abs(np.linalg.det(P[:, :3])) <= 1e-12 * max(1.0, np.abs(P[:, :3]).max() ** 3):
            raise ValueError("El bloque 3x3 de la matriz de proyección es singular")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("Las dimensiones del sensor deben ser positivas")
        object.__setattr__(self, "P", _frozen(P, np.float64))

    @classmethod
    def default(cls, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT) -> "CameraGeometry":
        focal = float(max(width, height))
        P = np.array(
            [
                [focal, 0.0, width / 2.0, 0.0],
                [0.0, focal, height / 2.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ]
        )
        return cls(P, width, height)

    @property
    def center(self) -> np.ndarray:
        return -np.linalg.solve(self.P[:, :3], self.P[:, 3])

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project (M, 3) points; returns pixel coordinates and the depth term w."""

        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        homogeneous = np.hstack([pts, np.ones((len(pts), 1))]) @ self.P.T
        w = homogeneous[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = homogeneous[:, :2] / w[:, None]
        return uv, w

    def contains(self, uv: np.ndarray) -> np.ndarray:
        return (
            (uv[:, 0] >= 0) & (uv[:, 0] < self.width) & (uv[:, 1] >= 0) & (uv[:, 1] < self.height)
        )


@dataclass
class LabeledSample:
    """Fixed-size point set with its 2D label and window metadata."""

    points: RasterizedPoints
    label: Skeleton2D
    camera_id: int
    t_min: int
    t_max: int
    raw_event_count: int
    raw_point_count: int
    window_index: int = 0
    label3d: Skeleton3D | None = None
    meta: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return bool(self.label3d is not None and self.label3d.fallback)
