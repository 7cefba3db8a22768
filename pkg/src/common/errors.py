"""Exception types raised across the pose pipeline."""

from __future__ import annotations

from typing import Any


class EventParseError(ValueError):
    """A record in an event file could not be parsed."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        super().__init__(message)
        self.line = line
        self.offset = offset


class EventValidationError(ValueError):
    """An event violates the sensor bounds of its camera."""

    def __init__(self, message: str, *, index: int):
        super().__init__(message)
        self.index = index


class EventOrderError(ValueError):
    """Timestamps decrease inside a stream."""

    def __init__(self, message: str, *, index: int):
        super().__init__(message)
        self.index = index


class EmptySampleError(ValueError):
    """A point set is empty and cannot be sampled."""


class ShapeError(ValueError):
    """Array dimensions do not match the layer that consumes them."""

    def __init__(self, message: str, *, layer: str):
        super().__init__(message)
        self.layer = layer


class StaleCacheError(RuntimeError):
    """A forward cache no longer matches the parameters it was built with."""


class CorruptPredictionError(ValueError):
    """A predicted heat-vector contains NaN entries."""


class DegenerateGeometryError(RuntimeError):
    """The triangulation system is rank deficient."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss.

    ``last_good`` holds the parameters in use before the failing step and
    ``model`` the configuration needed to save them.
    """

    def __init__(self, message: str, *, last_good: Any, epoch: int, step: int, model: Any = None):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch
        self.step = step
        self.model = model
