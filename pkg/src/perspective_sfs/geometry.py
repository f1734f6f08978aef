"""Closed-form perspective geometry for a Cartesian depth map.

All functions broadcast over numpy arrays, so ``x`` may be a pair of grids.
Normals are returned unnormalised; the brightness computation normalises.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class DegenerateTangentError(ValueError):
    """An appendix tangent vector is undefined because ``z + z_x x`` or ``z + z_y y`` vanishes."""


class SurfacePoint(NamedTuple):
    X: float
    Y: float
    Z: float


class NormalVector(NamedTuple):
    nx: float
    ny: float
    nz: float


def conversion_factor(x, focal: float):
    """Ratio ``Q = f / sqrt(|x|^2 + f^2)`` between Cartesian and radial depth."""
    px, py = x
    return focal / np.sqrt(np.square(px) + np.square(py) + focal * focal)


def radial_to_cartesian(u, x, focal: float):
    """Cartesian depth of a point at radial distance ``u * focal`` along the ray through ``x``."""
    return conversion_factor(x, focal) * u * focal


def cartesian_to_radial(z, x, focal: float):
    return z / (conversion_factor(x, focal) * focal)


def surface_point(x, z, focal: float) -> SurfacePoint:
    px, py = x
    return SurfacePoint(z * px / focal, z * py / focal, -z)


def surface_normal(x, z, grad_z, focal: float) -> NormalVector:
    """Cross product of the surface tangents along the image axes."""
    px, py = x
    zx, zy = grad_z
    return NormalVector(
        zx * z / focal,
        zy * z / focal,
        z * (zx * px + zy * py + z) / (focal * focal),
    )


def _tangent_denominators(x, z, grad_z):
    px, py = x
    zx, zy = grad_z
    den_x = z + zx * px
    den_y = z + zy * py
    if np.any(den_x == 0) or np.any(den_y == 0):
        raise DegenerateTangentError("z + z_x x or z + z_y y is zero")
    return den_x, den_y


def world_tangents(x, z, grad_z, focal: float):
    """Tangents of the surface differentiated along world ``X`` and ``Y``."""
    px, py = x
    zx, zy = grad_z
    den_x, den_y = _tangent_denominators(x, z, grad_z)
    one = np.ones_like(np.asarray(den_x, dtype=float))
    s_x = (one, zx * py / den_x, -zx * focal / den_x)
    s_y = (zy * px / den_y, one, -zy * focal / den_y)
    return s_x, s_y


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def surface_normal_alt(x, z, grad_z, focal: float) -> NormalVector:
    """Normal from the world-coordinate tangents; parallel to :func:`surface_normal`."""
    s_x, s_y = world_tangents(x, z, grad_z, focal)
    return NormalVector(*_cross(s_x, s_y))


def surface_normal_ortho_mixed(x, z, grad_z, focal: float) -> NormalVector:
    """Orthographic normal ``(-Z_X, -Z_Y, 1)`` fed with perspective slopes.

    Drops the cross derivatives dX/dY and dY/dX, so it is wrong off-axis
    whenever both depth slopes are non-zero. Kept for comparison only.
    """
    s_x, s_y = world_tangents(x, z, grad_z, focal)
    z_X = s_x[2]
    z_Y = s_y[2]
    return NormalVector(-z_X, -z_Y, np.ones_like(z_X))


def light_direction(x, focal: float):
    """Unit vector from the surface point towards a light at the optical centre."""
    px, py = x
    norm = np.sqrt(np.square(px) + np.square(py) + focal * focal)
    return (-px / norm, -py / norm, focal / norm)


def lambertian_brightness(x, z, grad_z, focal: float):
    """Irradiance from normal, light direction and inverse-square falloff.

    Equivalent to the closed form ``Q^3 / (z W)`` used by the renderer and
    the data term; this route goes through the vectors explicitly.
    """
    n = surface_normal(x, z, grad_z, focal)
    light = light_direction(x, focal)
    n_norm = np.sqrt(n.nx**2 + n.ny**2 + n.nz**2)
    cos_theta = (n.nx * light[0] + n.ny * light[1] + n.nz * light[2]) / n_norm
    q = conversion_factor(x, focal)
    return q * q / (z * z) * cos_theta
