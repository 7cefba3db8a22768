"""Random point sampling to a fixed count and the training-set size filter.

Randomness comes from numpy's Philox counter-based bit generator, which gives
the same stream on every platform for a given seed. Per-sample seeds are
derived with ``numpy.random.SeedSequence(seed).spawn(n)``.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.common.errors import EmptySampleError
from src.events.types import LabeledSample, RasterizedPoints

SAMPLING_NUMBERS = (1024, 2048, 4096, 7500)


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class SamplerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_count: int = Field(2048, ge=1)
    seed: int = Field(0, ge=0)
    min_points: int = Field(1024, ge=0)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, n: int) -> List[np.random.Generator]:
    """Independent generators for ``n`` samples derived from one master seed."""

    return [np.random.Generator(np.random.Philox(child)) for child in np.random.SeedSequence(seed).spawn(n)]


def sample_indices(n: int, target_count: int, rng: np.random.Generator) -> np.ndarray:
    """Without replacement when ``n >= target_count``, otherwise with replacement."""

    if n <= 0:
        raise EmptySampleError("No hay puntos que muestrear: la muestra no es utilizable")
    if n >= target_count:
        return rng.choice(n, size=target_count, replace=False)
    return rng.integers(0, n, size=target_count)


def sample_points(
    points: RasterizedPoints,
    cfg: SamplerConfig,
    rng: Optional[np.random.Generator] = None,
) -> RasterizedPoints:
    rng = rng if rng is not None else make_rng(cfg.seed)
    return points.take(sample_indices(len(points), cfg.target_count, rng))


def filter_undersized(
    dataset: Iterable[LabeledSample],
    min_points: int,
    split: Split | str,
) -> List[LabeledSample]:
    """Drop training samples whose pre-sampling point count is below ``min_points``.

    The test split keeps every sample.
    """

    split = Split(split)
    samples: Sequence[LabeledSample] = list(dataset)
    if split is Split.TEST or min_points <= 0:
        return list(samples)
    return [sample for sample in samples if sample.raw_point_count >= min_points]
