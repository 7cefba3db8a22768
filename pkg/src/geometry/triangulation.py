"""Two-view DLT triangulation, reprojection and synthetic rig helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Sequence

import numpy as np

from src.common.errors import DegenerateGeometryError
from src.events.types import DEFAULT_HEIGHT, DEFAULT_WIDTH, CameraGeometry, Skeleton2D, Skeleton3D

RANK_TOLERANCE = 1e-10


class Triangulation(NamedTuple):
    point: np.ndarray
    residual: float


@dataclass(frozen=True)
class StereoRig:
    cam_a: CameraGeometry
    cam_b: CameraGeometry

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.cam_a.center - self.cam_b.center))

    def check(self) -> None:
        scale = max(1.0, float(np.abs(self.cam_a.center).max()), float(np.abs(self.cam_b.center).max()))
        if self.baseline <= RANK_TOLERANCE * scale:
            raise DegenerateGeometryError("Los centros de las dos cámaras coinciden (línea base nula)")

    def swapped(self) -> "StereoRig":
        return StereoRig(self.cam_b, self.cam_a)


def _conditioning(rig: StereoRig) -> np.ndarray:
    """World-from-conditioned transform: origin at the baseline midpoint, unit half-baseline."""

    midpoint = (rig.cam_a.center + rig.cam_b.center) / 2.0
    scale = rig.baseline / 2.0
    T = np.eye(4)
    T[:3, :3] *= scale
    T[:3, 3] = midpoint
    return T


def dlt_system(rig: StereoRig, pa: Sequence[float], pb: Sequence[float], T: np.ndarray) -> np.ndarray:
    """4x4 DLT rows x*P3 - P1, y*P3 - P2 per view, each scaled to unit norm."""

    rows = []
    for cam, (x, y) in ((rig.cam_a, pa), (rig.cam_b, pb)):
        P = cam.P @ T
        rows.append(x * P[2] - P[0])
        rows.append(y * P[2] - P[1])
    A = np.stack(rows)
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def reprojection_residual(rig: StereoRig, point: np.ndarray, pa: Sequence[float], pb: Sequence[float]) -> float:
    """RMS pixel distance between the reprojected point and both observations."""

    squared = 0.0
    for cam, observed in ((rig.cam_a, pa), (rig.cam_b, pb)):
        uv, _ = cam.project(point)
        squared += float(np.sum((uv[0] - np.asarray(observed, dtype=np.float64)) ** 2))
    return float(np.sqrt(squared / 2.0))


def triangulate(rig: StereoRig, pa: Sequence[float], pb: Sequence[float]) -> Triangulation:
    """Homogeneous least-squares point from two pixel observations, solved by SVD.

    The system is conditioned by moving the origin to the baseline midpoint
    and scaling by the half-baseline; it is degenerate when the second
    smallest singular value falls below ``RANK_TOLERANCE`` times the largest,
    or when the solution lies at infinity (parallel rays).
    """

    rig.check()
    if not (np.all(np.isfinite(pa)) and np.all(np.isfinite(pb))):
        raise ValueError("Las observaciones deben ser finitas")
    T = _conditioning(rig)
    A = dlt_system(rig, pa, pb, T)
    _, singular, vt = np.linalg.svd(A)
    if singular[-2] <= RANK_TOLERANCE * singular[0]:
        raise DegenerateGeometryError("Sistema DLT con rango deficiente: los rayos son paralelos")
    solution = T @ vt[-1]
    if abs(vt[-1][3]) <= RANK_TOLERANCE * np.linalg.norm(vt[-1]):
        raise DegenerateGeometryError("El punto triangulado está en el infinito")
    point = solution[:3] / solution[3]
    return Triangulation(point, reprojection_residual(rig, point, pa, pb))


@dataclass
class TriangulatedSkeleton:
    skeleton: Skeleton3D
    residuals: np.ndarray
    diagnostics: Dict[int, str] = field(default_factory=dict)


def skeleton_to_3d(rig: StereoRig, sa: Skeleton2D, sb: Skeleton2D) -> TriangulatedSkeleton:
    """Joint-wise triangulation; failures are masked and described, never raised."""

    if sa.num_joints != sb.num_joints:
        raise ValueError(
            f"Las vistas tienen distinto número de articulaciones ({sa.num_joints} y {sb.num_joints})"
        )
    J = sa.num_joints
    joints = np.zeros((J, 3))
    valid = np.zeros(J, dtype=bool)
    residuals = np.full(J, np.nan)
    diagnostics: Dict[int, str] = {}
    for j in range(J):
        if not (sa.valid[j] and sb.valid[j]):
            diagnostics[j] = "articulación no válida en alguna vista"
            continue
        try:
            point, residual = triangulate(rig, sa.joints[j], sb.joints[j])
        except (DegenerateGeometryError, ValueError) as exc:
            diagnostics[j] = str(exc)
            continue
        joints[j], residuals[j], valid[j] = point, residual, True
    return TriangulatedSkeleton(Skeleton3D(joints, valid), residuals, diagnostics)


def look_at_camera(
    center: Sequence[float],
    target: Sequence[float],
    focal: float,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    up: Sequence[float] = (0.0, 0.0, 1.0),
) -> CameraGeometry:
    """Pinhole P = K [R | -R c] looking from ``center`` at ``target``; image y points down."""

    c = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - c
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("La dirección de la cámara es paralela al vector vertical")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    K = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
    return CameraGeometry(K @ np.hstack([R, (-R @ c)[:, None]]), width, height)


def noise_study(
    rig: StereoRig, points: np.ndarray, sigma_px: float = 1.0, seed: int = 0
) -> np.ndarray:
    """3D error (mm) per point after isotropic Gaussian pixel noise on both views."""

    rng = np.random.Generator(np.random.Philox(seed))
    errors = []
    for point in np.asarray(points, dtype=np.float64).reshape(-1, 3):
        pa = rig.cam_a.project(point)[0][0] + rng.normal(0.0, sigma_px, 2)
        pb = rig.cam_b.project(point)[0][0] + rng.normal(0.0, sigma_px, 2)
        errors.append(np.linalg.norm(triangulate(rig, pa, pb).point - point))
    return np.asarray(errors)
