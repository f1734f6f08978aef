"""Finite-difference stencils shared by the energy and its gradient.

The data term uses upwind first differences whose direction is chosen per
pixel and then frozen; the smoothness term uses central second differences
on an edge-padded (Neumann) grid. Every linear operator here comes with its
exact adjoint so gradients of the discrete energy are exact.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

BACKWARD = -1
NONE = 0
FORWARD = 1


class UpwindDirections(NamedTuple):
    """Per-pixel direction codes (-1 backward, 0 none, +1 forward) for each axis."""

    x: np.ndarray
    y: np.ndarray


def _select(d_minus: np.ndarray, d_plus: np.ndarray) -> np.ndarray:
    # max(D-, -D+, 0); ties between D- and -D+ go to the backward difference.
    backward = (d_minus >= -d_plus) & (d_minus > 0)
    forward = (-d_plus > d_minus) & (-d_plus > 0)
    out = np.zeros(d_minus.shape, dtype=np.int8)
    out[backward] = BACKWARD
    out[forward] = FORWARD
    return out


def _one_sided(z: np.ndarray, axis: int, h: float):
    # Differences against edge-replicated ghosts: zero across the border.
    diff = np.diff(z, axis=axis) / h
    pad_lo = [(0, 0), (0, 0)]
    pad_hi = [(0, 0), (0, 0)]
    pad_lo[axis] = (1, 0)
    pad_hi[axis] = (0, 1)
    d_minus = np.pad(diff, pad_lo)
    d_plus = np.pad(diff, pad_hi)
    return d_minus, d_plus


def upwind_directions(z: np.ndarray, hx: float, hy: float) -> UpwindDirections:
    dmx, dpx = _one_sided(z, 1, hx)
    dmy, dpy = _one_sided(z, 0, hy)
    return UpwindDirections(_select(dmx, dpx), _select(dmy, dpy))


def upwind_gradient(z: np.ndarray, dirs: UpwindDirections, hx: float, hy: float):
    """Signed upwind derivatives ``(z_x, z_y)`` under fixed directions."""
    dmx, dpx = _one_sided(z, 1, hx)
    dmy, dpy = _one_sided(z, 0, hy)
    zx = np.where(dirs.x == BACKWARD, dmx, np.where(dirs.x == FORWARD, dpx, 0.0))
    zy = np.where(dirs.y == BACKWARD, dmy, np.where(dirs.y == FORWARD, dpy, 0.0))
    return zx, zy


def upwind_adjoint(px: np.ndarray, py: np.ndarray, dirs: UpwindDirections, hx: float, hy: float):
    """Apply the transpose of the frozen upwind difference operators.

    Returns ``Dx^T px + Dy^T py``, i.e. the derivative of ``sum(px*z_x + py*z_y)``
    with respect to every depth value.
    """
    out = np.zeros_like(px)
    b = np.where(dirs.x == BACKWARD, px, 0.0) / hx
    f = np.where(dirs.x == FORWARD, px, 0.0) / hx
    out += b - f
    out[:, :-1] -= b[:, 1:]
    out[:, 1:] += f[:, :-1]
    b = np.where(dirs.y == BACKWARD, py, 0.0) / hy
    f = np.where(dirs.y == FORWARD, py, 0.0) / hy
    out += b - f
    out[:-1, :] -= b[1:, :]
    out[1:, :] += f[:-1, :]
    return out


def central_gradient(z: np.ndarray, hx: float, hy: float):
    """Central differences inside, one-sided at the borders."""
    zx = np.gradient(z, hx, axis=1, edge_order=1) if z.shape[1] > 1 else np.zeros_like(z)
    zy = np.gradient(z, hy, axis=0, edge_order=1) if z.shape[0] > 1 else np.zeros_like(z)
    return zx, zy


def hessian(z: np.ndarray, hx: float, hy: float):
    """Second derivatives ``(z_xx, z_xy, z_yy)`` with edge-replicated ghost cells."""
    p = np.pad(z, 1, mode="edge")
    c = p[1:-1, 1:-1]
    zxx = (p[1:-1, 2:] - 2.0 * c + p[1:-1, :-2]) / (hx * hx)
    zyy = (p[2:, 1:-1] - 2.0 * c + p[:-2, 1:-1]) / (hy * hy)
    zxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * hx * hy)
    return zxx, zxy, zyy


def hessian_adjoint(gxx: np.ndarray, gxy: np.ndarray, gyy: np.ndarray, hx: float, hy: float):
    """Transpose of :func:`hessian`: scatter onto the padded grid, fold ghosts back."""
    h, w = gxx.shape
    p = np.zeros((h + 2, w + 2))
    cx = gxx / (hx * hx)
    cy = gyy / (hy * hy)
    cxy = gxy / (4.0 * hx * hy)
    p[1:-1, 2:] += cx
    p[1:-1, :-2] += cx
    p[1:-1, 1:-1] -= 2.0 * cx
    p[2:, 1:-1] += cy
    p[:-2, 1:-1] += cy
    p[1:-1, 1:-1] -= 2.0 * cy
    p[2:, 2:] += cxy
    p[:-2, :-2] += cxy
    p[2:, :-2] -= cxy
    p[:-2, 2:] -= cxy
    p[1, :] += p[0, :]
    p[-2, :] += p[-1, :]
    p[:, 1] += p[:, 0]
    p[:, -2] += p[:, -1]
    return p[1:-1, 1:-1]
