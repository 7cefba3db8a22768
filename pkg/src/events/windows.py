"""Constant-count windowing of (merged) event streams."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional

import numpy as np

from src.events.types import ALL_CAMERAS, EventStream, EventWindow


class WindowMode(str, Enum):
    COUNT_PER_CAMERA = "count_per_camera"
    COUNT_TOTAL = "count_total"


@dataclass(frozen=True)
class WindowSpec:
    mode: WindowMode
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("El tamaño de ventana debe ser >= 1")

    @classmethod
    def count_total(cls, n: int) -> "WindowSpec":
        return cls(WindowMode.COUNT_TOTAL, n)

    @classmethod
    def count_per_camera(cls, n: int) -> "WindowSpec":
        return cls(WindowMode.COUNT_PER_CAMERA, n)


def _chunks(stream: EventStream, n: int) -> Iterable[EventStream]:
    full = len(stream) // n
    for i in range(full):
        yield stream.take(slice(i * n, (i + 1) * n))


def slice_windows(
    stream: EventStream,
    spec: WindowSpec,
    cameras: Optional[Iterable[int]] = None,
    *,
    split: bool = True,
) -> List[EventWindow]:
    """Cut ``stream`` into windows of exactly ``spec.n`` events.

    ``count_total`` counts events across all selected cameras; with ``split``
    each merged window is returned as its per-camera parts, which keep the
    merged bounds and window index. ``count_per_camera`` counts each camera on
    its own. The trailing partial window is dropped in both modes.
    """

    selected = sorted(set(cameras)) if cameras is not None else stream.cameras()
    if len(stream) == 0 or not selected:
        return []

    windows: List[EventWindow] = []
    if spec.mode is WindowMode.COUNT_TOTAL:
        subset = stream.take(np.isin(stream.camera, selected))
        for index, chunk in enumerate(_chunks(subset, spec.n)):
            merged = EventWindow(chunk, ALL_CAMERAS, int(chunk.t[0]), int(chunk.t[-1]), index)
            if split:
                windows.extend(merged.split_by_camera().values())
            else:
                windows.append(merged)
        return windows

    for camera_id in selected:
        own = stream.take(stream.camera == camera_id)
        for index, chunk in enumerate(_chunks(own, spec.n)):
            windows.append(EventWindow.of(chunk, camera_id, index))
    return windows


def dropped_tail(stream: EventStream, spec: WindowSpec, cameras: Optional[Iterable[int]] = None) -> EventStream:
    """Events that ``slice_windows`` leaves out as the incomplete last window."""

    selected = sorted(set(cameras)) if cameras is not None else stream.cameras()
    if spec.mode is WindowMode.COUNT_TOTAL:
        subset = stream.take(np.isin(stream.camera, selected))
        return subset.take(slice((len(subset) // spec.n) * spec.n, None))
    parts = []
    for camera_id in selected:
        own = stream.take(stream.camera == camera_id)
        parts.append(own.take(slice((len(own) // spec.n) * spec.n, None)))
    if not parts:
        return EventStream.empty()
    return EventStream(
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.t for p in parts]),
        np.concatenate([p.p for p in parts]),
        np.concatenate([p.camera for p in parts]),
    )
