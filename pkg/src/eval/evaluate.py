"""Offline evaluation of a trained model over labeled samples (2D and 3D MPJPE)."""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, List, Optional, Sequence

from src.eval.metrics import EvalReport, joint_errors
from src.events.types import LabeledSample, Skeleton2D, Skeleton3D
from src.geometry.triangulation import StereoRig, skeleton_to_3d
from src.model.pointnet import ModelConfig, ModelParams
from src.pipeline.inference import predict_skeleton


def predict_samples(
    params: ModelParams, cfg: ModelConfig, samples: Sequence[LabeledSample], raw_features: bool = False
) -> List[Skeleton2D]:
    return [predict_skeleton(sample.points, params, cfg, raw_features) for sample in samples]


def paired_views(
    samples: Sequence[LabeledSample], predictions: Sequence[Skeleton2D], cameras: Sequence[int] = (0, 1)
) -> List[tuple[LabeledSample, Skeleton2D, Skeleton2D]]:
    """Windows seen by both cameras: (sample of camera a, prediction a, prediction b)."""

    by_window: Dict[int, Dict[int, tuple[LabeledSample, Skeleton2D]]] = defaultdict(dict)
    for sample, prediction in zip(samples, predictions):
        by_window[sample.window_index][sample.camera_id] = (sample, prediction)
    cam_a, cam_b = cameras
    pairs = []
    for index in sorted(by_window):
        views = by_window[index]
        if cam_a in views and cam_b in views:
            pairs.append((views[cam_a][0], views[cam_a][1], views[cam_b][1]))
    return pairs


def evaluate_samples(
    params: ModelParams,
    cfg: ModelConfig,
    samples: Sequence[LabeledSample],
    rig: Optional[StereoRig] = None,
    raw_features: bool = False,
    cameras: Sequence[int] = (0, 1),
) -> EvalReport:
    """MPJPE_2D over every sample and, with a rig, MPJPE_3D over paired views.

    The 3D reference is the 3D label of the first camera's view.
    """

    if not samples:
        raise ValueError("No hay muestras que evaluar")
    predictions = predict_samples(params, cfg, samples, raw_features)
    report = EvalReport(
        two_d=joint_errors(predictions, [s.label for s in samples]),
        flagged_samples=sum(1 for s in samples if s.flagged),
    )
    if rig is None:
        return report

    preds3d: List[Skeleton3D] = []
    gts3d: List[Skeleton3D] = []
    for sample, pred_a, pred_b in paired_views(samples, predictions, cameras):
        if sample.label3d is None:
            continue
        preds3d.append(skeleton_to_3d(rig, pred_a, pred_b).skeleton)
        gts3d.append(sample.label3d)
    if preds3d:
        report = report.merge(EvalReport(three_d=joint_errors(preds3d, gts3d)))
    return report
