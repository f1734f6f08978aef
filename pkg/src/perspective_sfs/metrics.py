"""Relative surface and image errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import CameraIntrinsics, ScalarField, image_grid


@dataclass
class ErrorReport:
    rse: float
    rie: float
    error_map: ScalarField


def _check_shapes(a: ScalarField, b: ScalarField):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def _points(z: np.ndarray, k: CameraIntrinsics):
    x, y = image_grid(k, z.shape[1], z.shape[0])
    return np.stack([z * x / k.focal, z * y / k.focal, -z])


def surface_distances(z: ScalarField, z_gt: ScalarField, k: CameraIntrinsics):
    """Per-pixel ``|S - S_gt|`` and ``|S_gt|``."""
    _check_shapes(z, z_gt)
    s = _points(z.data, k)
    s_gt = _points(z_gt.data, k)
    return np.linalg.norm(s - s_gt, axis=0), np.linalg.norm(s_gt, axis=0)


def relative_surface_error(z: ScalarField, z_gt: ScalarField, k: CameraIntrinsics, mask=None) -> float:
    dist, norm = surface_distances(z, z_gt, k)
    if mask is not None:
        m = np.asarray(mask.data if isinstance(mask, ScalarField) else mask) > 0
        dist, norm = dist[m], norm[m]
    return float(dist.sum() / norm.sum())


def relative_image_error(i: ScalarField, i_gt: ScalarField, mask=None) -> float:
    _check_shapes(i, i_gt)
    diff = np.abs(i.data - i_gt.data)
    ref = np.abs(i_gt.data)
    if mask is not None:
        m = np.asarray(mask.data if isinstance(mask, ScalarField) else mask) > 0
        diff, ref = diff[m], ref[m]
    total = ref.sum()
    if not total > 0:
        raise ValueError("ground-truth image has zero total brightness")
    return float(diff.sum() / total)


def surface_error_map(z: ScalarField, z_gt: ScalarField, k: CameraIntrinsics, threshold: float = 0.01):
    """Per-pixel surface distance relative to the mean ground-truth norm.

    Returns ``(error_map, mask)`` where ``mask`` flags values above ``threshold``.
    """
    dist, norm = surface_distances(z, z_gt, k)
    emap = dist / norm.mean()
    return ScalarField(emap), emap > threshold


def evaluate(z, z_gt, reprojection, image_gt, k: CameraIntrinsics) -> ErrorReport:
    dist, norm = surface_distances(z, z_gt, k)
    return ErrorReport(
        rse=float(dist.sum() / norm.sum()),
        rie=relative_image_error(reprojection, image_gt),
        error_map=ScalarField(dist),
    )
