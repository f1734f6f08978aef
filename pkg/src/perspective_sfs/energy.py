"""Discrete variational energy: photometric data term plus Hessian smoothness.

The energy is the pixel sum of ``c * D + alpha * S`` times the cell area
``hx * hy``. The data term ``D`` uses upwind first differences (direction
frozen from a reference depth), ``S`` the penalised squared Frobenius norm
of the central-difference Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import discretisation as fd
from .field import CameraIntrinsics, ScalarField, image_grid
from .geometry import conversion_factor


class NonPositiveDepthError(ValueError):
    """Depth must be strictly positive wherever the model is evaluated."""


@dataclass(frozen=True)
class Penaliser:
    """Either the quadratic ``s^2`` or Charbonnier ``2 lam^2 sqrt(1 + s^2/lam^2)``."""

    kind: str = "charbonnier"
    lam: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("quadratic", "charbonnier"):
            raise ValueError(f"unknown penaliser {self.kind!r}")
        if self.kind == "charbonnier" and not self.lam > 0:
            raise ValueError(f"charbonnier lambda must be positive, got {self.lam}")

    @classmethod
    def quadratic(cls) -> "Penaliser":
        return cls("quadratic", 0.0)

    @classmethod
    def charbonnier(cls, lam: float) -> "Penaliser":
        return cls("charbonnier", lam)

    def value(self, s_sq):
        if self.kind == "quadratic":
            return np.asarray(s_sq, dtype=float) * 1.0
        lam2 = self.lam * self.lam
        return 2.0 * lam2 * np.sqrt(1.0 + s_sq / lam2)

    def derivative(self, s_sq):
        if self.kind == "quadratic":
            return np.ones_like(np.asarray(s_sq, dtype=float))
        return 1.0 / np.sqrt(1.0 + s_sq / (self.lam * self.lam))


def penalise(s_sq, kind: Penaliser):
    """Return ``(Psi(s_sq), Psi'(s_sq))``."""
    return kind.value(s_sq), kind.derivative(s_sq)


@dataclass(frozen=True)
class EnergySettings:
    alpha: float
    penaliser: Penaliser
    confidence: ScalarField
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        c = self.confidence.data
        if c.min() < 0 or c.max() > 1:
            raise ValueError("confidence must lie in [0, 1]")


def brightness_denominator(x, z, grad_z, focal: float):
    """``W = sqrt(f^2 |grad z|^2 + (grad z . x + z)^2)``."""
    px, py = x
    zx, zy = grad_z
    u = zx * px + zy * py + z
    return np.sqrt(focal * focal * (zx * zx + zy * zy) + u * u)


def model_irradiance(x, z, grad_z, focal: float):
    """Irradiance ``Q^3 / (z W)`` predicted for depth ``z`` with slope ``grad_z``."""
    q = conversion_factor(x, focal)
    return q**3 / (z * brightness_denominator(x, z, grad_z, focal))


def data_residual(x, z, grad_z, i_val, focal: float):
    """Squared reprojection error ``(I - Q^3/(z W))^2`` at a single point."""
    if np.any(np.asarray(z) <= 0):
        raise NonPositiveDepthError("data term needs z > 0")
    w = brightness_denominator(x, z, grad_z, focal)
    if np.any(w == 0):
        raise ZeroDivisionError("W vanished")
    q = conversion_factor(x, focal)
    return (i_val - q**3 / (z * w)) ** 2


def smoothness_density(hess, kind: Penaliser):
    zxx, zxy, zyy = hess
    return kind.value(zxx * zxx + 2.0 * zxy * zxy + zyy * zyy)


class DataTerms(NamedTuple):
    """Pointwise quantities of the data term on a grid."""

    residual: np.ndarray  # I - Q^3/(z W)
    model: np.ndarray  # Q^3/(z W)
    w: np.ndarray
    u: np.ndarray  # grad z . x + z
    zx: np.ndarray
    zy: np.ndarray


class Grid:
    """Per-level constants: image coordinates and ``Q^3`` on every pixel."""

    def __init__(self, k: CameraIntrinsics, width: int, height: int):
        self.intrinsics = k
        self.x, self.y = image_grid(k, width, height)
        self.q3 = conversion_factor((self.x, self.y), k.focal) ** 3
        self.shape = (height, width)

    @property
    def hx(self):
        return self.intrinsics.hx

    @property
    def hy(self):
        return self.intrinsics.hy

    @property
    def cell_area(self):
        return self.intrinsics.hx * self.intrinsics.hy


def data_terms(z: np.ndarray, image: np.ndarray, grid: Grid, dirs: fd.UpwindDirections) -> DataTerms:
    zx, zy = fd.upwind_gradient(z, dirs, grid.hx, grid.hy)
    u = zx * grid.x + zy * grid.y + z
    f = grid.intrinsics.focal
    w = np.sqrt(f * f * (zx * zx + zy * zy) + u * u)
    model = grid.q3 / (z * w)
    return DataTerms(image - model, model, w, u, zx, zy)


def check_depth(z: np.ndarray):
    if not np.all(z > 0):
        raise NonPositiveDepthError(f"depth must be positive, min is {z.min()}")


def energy_array(
    z: np.ndarray,
    image: np.ndarray,
    confidence: np.ndarray,
    grid: Grid,
    alpha: float,
    penaliser: Penaliser,
    dirs: fd.UpwindDirections | None = None,
) -> float:
    check_depth(z)
    if dirs is None:
        dirs = fd.upwind_directions(z, grid.hx, grid.hy)
    terms = data_terms(z, image, grid, dirs)
    data = confidence * terms.residual**2
    zxx, zxy, zyy = fd.hessian(z, grid.hx, grid.hy)
    smooth = penaliser.value(zxx * zxx + 2.0 * zxy * zxy + zyy * zyy)
    return float(np.sum(data + alpha * smooth) * grid.cell_area)


def total_energy(
    z: ScalarField,
    i: ScalarField,
    s: EnergySettings,
    dirs: fd.UpwindDirections | None = None,
) -> float:
    """Discrete energy of ``z`` for image ``i``.

    ``dirs`` freezes the upwind directions; by default they are derived
    from ``z`` itself.
    """
    if z.shape != i.shape or z.shape != s.confidence.shape:
        raise ValueError(f"shape mismatch: depth {z.shape}, image {i.shape}, confidence {s.confidence.shape}")
    grid = Grid(s.intrinsics, z.width, z.height)
    return energy_array(z.data, i.data, s.confidence.data, grid, s.alpha, s.penaliser, dirs)
