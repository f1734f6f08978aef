"""Image formation: Lambertian shading under a light at the optical centre."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretisation import central_gradient
from .energy import NonPositiveDepthError, brightness_denominator
from .field import CameraIntrinsics, ScalarField, image_grid
from .geometry import conversion_factor

SCENES = ("sombrero", "plane", "hemisphere")


@dataclass(frozen=True)
class SceneSpec:
    """Procedural depth map. ``params`` keys: plane ``z0``; hemisphere ``z0``, ``radius``."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENES:
            raise ValueError(f"unknown scene {self.kind!r}, expected one of {SCENES}")


def _shade_with_gradient(z, zx, zy, x, y, focal):
    q = conversion_factor((x, y), focal)
    return q**3 / (z * brightness_denominator((x, y), z, (zx, zy), focal))


def shade(z: ScalarField, k: CameraIntrinsics) -> ScalarField:
    """Render irradiance ``Q^3 / (z W)``; ``grad z`` by central differences."""
    if not np.all(z.data > 0):
        raise NonPositiveDepthError("cannot shade non-positive depth")
    x, y = image_grid(k, z.width, z.height)
    zx, zy = central_gradient(z.data, k.hx, k.hy)
    return ScalarField(_shade_with_gradient(z.data, zx, zy, x, y, k.focal))


def shade_analytic(z, zx, zy, k: CameraIntrinsics) -> ScalarField:
    """Render from a depth map and its exact image-plane derivatives."""
    z = np.asarray(z.data if isinstance(z, ScalarField) else z, dtype=float)
    if not np.all(z > 0):
        raise NonPositiveDepthError("cannot shade non-positive depth")
    x, y = image_grid(k, z.shape[1], z.shape[0])
    return ScalarField(_shade_with_gradient(z, zx, zy, x, y, k.focal))


def sombrero(x, y):
    """Depth ``0.5 sin(r)/r + 1.7`` with ``r = 10 |x|`` and its derivatives in x and y."""
    r = 10.0 * np.hypot(x, y)
    sinc = np.sinc(r / np.pi)
    z = 0.5 * sinc + 1.7
    # d(sin r / r)/dr = (r cos r - sin r) / r^2, which is -r/3 + O(r^3) near 0
    small = r < 1e-4
    rs = np.where(small, 1.0, r)
    dsinc = np.where(small, -r / 3.0, (rs * np.cos(rs) - np.sin(rs)) / (rs * rs))
    # dr/dx = 100 x / r; the product dsinc * dr/dx stays bounded at r = 0
    factor = np.where(small, -100.0 / 3.0, 100.0 * dsinc / rs)
    return z, 0.5 * factor * x, 0.5 * factor * y


def _hemisphere(x, y, z0, radius):
    rho2 = x * x + y * y
    cap = np.sqrt(np.clip(radius * radius - rho2, 0.0, None))
    z = z0 - cap
    inside = rho2 < radius * radius
    safe = np.where(inside & (cap > 0), cap, 1.0)
    zx = np.where(inside & (cap > 0), x / safe, 0.0)
    zy = np.where(inside & (cap > 0), y / safe, 0.0)
    return z, zx, zy


def scene_depth(spec: SceneSpec, k: CameraIntrinsics, width: int, height: int):
    """Depth and its exact image-plane gradient ``(z, z_x, z_y)`` as arrays."""
    x, y = image_grid(k, width, height)
    if spec.kind == "sombrero":
        z, zx, zy = sombrero(x, y)
    elif spec.kind == "plane":
        z0 = float(spec.params.get("z0", 2.0))
        z = np.full((height, width), z0)
        zx = np.zeros_like(z)
        zy = np.zeros_like(z)
    else:
        z, zx, zy = _hemisphere(
            x, y, float(spec.params.get("z0", 2.0)), float(spec.params.get("radius", 0.5))
        )
    return z, zx, zy


def generate_scene(spec: SceneSpec, k: CameraIntrinsics, width: int, height: int) -> ScalarField:
    if width < 8 or height < 8:
        raise ValueError("scenes need at least 8x8 pixels")
    z, _, _ = scene_depth(spec, k, width, height)
    if not np.all(z > 0):
        raise ValueError(f"scene {spec.kind} has non-positive depth (min {z.min()})")
    return ScalarField(z)


def quantise_8bit(i: ScalarField):
    """Scale so the brightest pixel is 255, round, and map back.

    Returns ``(dequantised irradiance, scale)`` where ``level = round(I * scale)``.
    """
    peak = i.data.max()
    if not peak > 0:
        raise ValueError("cannot quantise an image without positive values")
    if np.any(i.data < 0):
        raise ValueError("irradiance must be non-negative")
    scale = float(255.0 / peak)
    levels = np.floor(i.data * scale + 0.5)
    return ScalarField(levels / scale), scale


def to_levels(i: ScalarField, scale: float) -> np.ndarray:
    """Integer grey levels of an irradiance field, clipped to 0..255."""
    return np.clip(np.floor(i.data * scale + 0.5), 0, 255).astype(np.uint8)


def levels_to_irradiance(levels, scale: float, floor_level: float = 1.0) -> ScalarField:
    """Physical irradiance from grey levels; zero levels are raised to ``floor_level``."""
    lv = np.asarray(levels.data if isinstance(levels, ScalarField) else levels, dtype=float)
    return ScalarField(np.maximum(lv, floor_level) / scale)


def gaussian_noise(shape, sigma: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, sigma, size=shape)


def add_gaussian_noise(i: ScalarField, sigma: float, seed: int) -> ScalarField:
    """Add seeded zero-mean Gaussian noise in grey-level units and clamp to [0, 255]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return i
    noisy = i.data + gaussian_noise(i.shape, sigma, seed)
    return ScalarField(np.clip(noisy, 0.0, 255.0))
