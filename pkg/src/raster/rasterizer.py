"""Rasterized event point cloud: K time slices, one point per occupied pixel."""

from __future__ import annotations

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.events.types import EventStream, EventWindow, RasterizedPoints


class ChannelSet(str, Enum):
    XYT = "xyt"
    XYTP = "xytp"
    XYTPC = "xytpc"

    @property
    def in_channels(self) -> int:
        return len(self.value)


class Representation(str, Enum):
    RAW = "raw"
    NORMALIZED = "normalized"
    RASTERIZED = "rasterized"


class RasterConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(4, ge=1)
    channels: ChannelSet = ChannelSet.XYTPC
    representation: Representation = Representation.RASTERIZED


def normalize_timestamps(window: EventWindow) -> np.ndarray:
    """Affine map of [t_min, t_max] onto [0, 1]; zero-length windows map to 0."""

    span = window.t_max - window.t_min
    t = window.events.t
    if span == 0:
        return np.zeros(len(t), dtype=np.float64)
    return (t - window.t_min).astype(np.float64) / float(span)


def slice_indices(window: EventWindow, k: int) -> np.ndarray:
    """Slice of each event: [j/K, (j+1)/K) half-open, t_norm = 1 goes to K-1.

    Computed in integer arithmetic on raw timestamps so that boundary events
    never depend on floating-point rounding.
    """

    span = window.t_max - window.t_min
    if span == 0:
        return np.zeros(len(window), dtype=np.int64)
    offsets = window.events.t - window.t_min
    return np.minimum((offsets * k) // span, k - 1)


def rasterize(window: EventWindow, cfg: Optional[RasterConfig] = None) -> RasterizedPoints:
    """Aggregate same-pixel events per slice into (x, y, t_avg, p_acc, e_cnt).

    Output is sorted by (slice, y, x).
    """

    cfg = cfg or RasterConfig()
    if cfg.representation is not Representation.RASTERIZED:
        return event_points(window, cfg)

    events = window.events
    x = events.x.astype(np.int64)
    y = events.y.astype(np.int64)
    t_norm = normalize_timestamps(window)
    polarity = events.p.astype(np.int64) * 2 - 1
    slices = slice_indices(window, cfg.k)

    stride_x = int(x.max()) + 1
    stride_y = int(y.max()) + 1
    keys = (slices * stride_y + y) * stride_x + x
    cells, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)

    t_sum = np.bincount(inverse, weights=t_norm, minlength=len(cells))
    p_acc = np.bincount(inverse, weights=polarity, minlength=len(cells))

    return RasterizedPoints(
        x=cells % stride_x,
        y=(cells // stride_x) % stride_y,
        t_avg=np.clip(t_sum / counts, 0.0, 1.0),
        p_acc=np.rint(p_acc).astype(np.int64),
        e_cnt=counts,
        slice_index=cells // (stride_x * stride_y),
        channels=cfg.channels.value,
    )


def event_points(window: EventWindow, cfg: RasterConfig) -> RasterizedPoints:
    """One point per event, without aggregation.

    ``raw`` keeps microseconds since the window start and {0, 1} polarity,
    ``normalized`` uses t_norm and +-1 polarity. Both report e_cnt = 1.
    """

    events = window.events
    n = len(events)
    if cfg.representation is Representation.RAW:
        t = (events.t - window.t_min).astype(np.float64)
        polarity = events.p.astype(np.int64)
    else:
        t = normalize_timestamps(window)
        polarity = events.p.astype(np.int64) * 2 - 1
    return RasterizedPoints(
        x=events.x,
        y=events.y,
        t_avg=t,
        p_acc=polarity,
        e_cnt=np.ones(n, dtype=np.int64),
        slice_index=np.zeros(n, dtype=np.int64),
        channels=cfg.channels.value,
    )


class StreamingRasterizer:
    """Per-camera accumulation buffer refreshed as event chunks arrive.

    Holds the events of the last ``window_us`` microseconds; :meth:`snapshot`
    rasterizes them with the buffer bounds as the window. Single writer.
    """

    def __init__(self, window_us: int, cfg: Optional[RasterConfig] = None, camera_id: int = 0):
        if window_us <= 0:
            raise ValueError("La longitud de ventana debe ser positiva")
        self.window_us = int(window_us)
        self.cfg = cfg or RasterConfig()
        self.camera_id = camera_id
        self._buffer = EventStream.empty()

    def __len__(self) -> int:
        return len(self._buffer)

    def push(self, chunk: EventStream) -> None:
        if len(chunk) == 0:
            return
        if len(self._buffer) and chunk.t[0] < self._buffer.t[-1]:
            raise ValueError("Los bloques de eventos deben llegar en orden temporal")
        merged = EventStream(
            np.concatenate([self._buffer.x, chunk.x]),
            np.concatenate([self._buffer.y, chunk.y]),
            np.concatenate([self._buffer.t, chunk.t]),
            np.concatenate([self._buffer.p, chunk.p]),
            np.full(len(self._buffer) + len(chunk), self.camera_id, dtype=np.int16),
        )
        horizon = int(merged.t[-1]) - self.window_us
        start = int(np.searchsorted(merged.t, horizon, side="left"))
        self._buffer = merged.take(slice(start, None))

    def window(self) -> Optional[EventWindow]:
        if len(self._buffer) == 0:
            return None
        return EventWindow.of(self._buffer, self.camera_id)

    def snapshot(self) -> Optional[RasterizedPoints]:
        window = self.window()
        return rasterize(window, self.cfg) if window is not None else None
