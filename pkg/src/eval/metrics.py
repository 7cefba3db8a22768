"""MPJPE over 2D (pixels) or 3D (millimeters) skeleton sequences."""

from __future__ import annotations

from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, computed_field

from src.events.types import Skeleton2D, Skeleton3D

Skeleton = Union[Skeleton2D, Skeleton3D]


class ErrorTable(BaseModel):
    """Errors of one dimensionality.

    ``mpjpe`` is the mean of the non-null ``per_sample`` entries; each sample
    value is the mean joint error over joints valid in both prediction and
    ground truth. ``per_joint`` averages each joint over the samples where it
    is valid in both.
    """

    dims: int
    mpjpe: Optional[float]
    per_joint: List[Optional[float]]
    per_sample: List[Optional[float]]
    sample_count: int
    excluded_samples: int
    masked_joints: int


class EvalReport(BaseModel):
    two_d: Optional[ErrorTable] = None
    three_d: Optional[ErrorTable] = None
    flagged_samples: int = 0

    @computed_field  # type: ignore[misc]
    @property
    def mpjpe2d(self) -> Optional[float]:
        return self.two_d.mpjpe if self.two_d else None

    @computed_field  # type: ignore[misc]
    @property
    def mpjpe3d(self) -> Optional[float]:
        return self.three_d.mpjpe if self.three_d else None

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(
            two_d=self.two_d or other.two_d,
            three_d=self.three_d or other.three_d,
            flagged_samples=max(self.flagged_samples, other.flagged_samples),
        )


def _stack(skeletons: Sequence[Skeleton], name: str) -> tuple[np.ndarray, np.ndarray]:
    dims = {s.joints.shape[1] for s in skeletons}
    joints = {s.num_joints for s in skeletons}
    if len(dims) != 1:
        raise ValueError(f"Las {name} mezclan esqueletos 2D y 3D")
    if len(joints) != 1:
        raise ValueError(f"Las {name} tienen distinto número de articulaciones")
    return np.stack([s.joints for s in skeletons]), np.stack([s.valid for s in skeletons])


def joint_errors(preds: Sequence[Skeleton], gts: Sequence[Skeleton]) -> ErrorTable:
    if len(preds) == 0 or len(gts) == 0:
        raise ValueError("MPJPE sobre una secuencia vacía")
    if len(preds) != len(gts):
        raise ValueError(f"Longitudes distintas: {len(preds)} predicciones, {len(gts)} referencias")
    pred, pred_valid = _stack(preds, "predicciones")
    gt, gt_valid = _stack(gts, "referencias")
    if pred.shape != gt.shape:
        raise ValueError(f"Formas distintas: predicciones {pred.shape}, referencias {gt.shape}")

    both = pred_valid & gt_valid
    with np.errstate(invalid="ignore"):
        errors = np.where(both, np.linalg.norm(pred - gt, axis=2), 0.0)
    per_sample_count = both.sum(axis=1)
    per_joint_count = both.sum(axis=0)
    included = per_sample_count > 0

    per_sample = np.full(len(pred), np.nan)
    per_sample[included] = errors[included].sum(axis=1) / per_sample_count[included]
    per_joint = np.full(pred.shape[1], np.nan)
    has_joint = per_joint_count > 0
    per_joint[has_joint] = errors[:, has_joint].sum(axis=0) / per_joint_count[has_joint]

    return ErrorTable(
        dims=pred.shape[2],
        mpjpe=float(per_sample[included].mean()) if included.any() else None,
        per_joint=[None if np.isnan(v) else float(v) for v in per_joint],
        per_sample=[None if np.isnan(v) else float(v) for v in per_sample],
        sample_count=int(included.sum()),
        excluded_samples=int((~included).sum()),
        masked_joints=int(both.size - both.sum()),
    )


def mpjpe(preds: Sequence[Skeleton], gts: Sequence[Skeleton]) -> EvalReport:
    table = joint_errors(preds, gts)
    return EvalReport(two_d=table) if table.dims == 2 else EvalReport(three_d=table)
