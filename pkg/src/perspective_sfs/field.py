"""Grid containers, camera intrinsics and pixel/image coordinate transforms."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Rectangular grid of finite reals, stored row-major as ``data[row, column]``.

    Rows run along the pixel coordinate ``b`` (image ``y``), columns along
    ``a`` (image ``x``). Pixel centres sit at integer coordinates.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"ScalarField needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ScalarField values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def constant(cls, width: int, height: int, value: float) -> "ScalarField":
        return cls(np.full((height, width), float(value)))

    def flat(self) -> np.ndarray:
        """Row-major copy of the values, length ``width * height``."""
        return self.data.ravel().copy()

    def __repr__(self):
        return f"ScalarField({self.width}x{self.height})"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Calibration of a pinhole camera with the image plane at distance ``focal``.

    ``hx``/``hy`` are the pixel pitch in image-plane units and ``(cx, cy)``
    the principal point in pixel coordinates.
    """

    focal: float
    hx: float
    hy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("focal", "hx", "hy"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.focal / self.hx, 0.0, self.cx],
                [0.0, self.focal / self.hy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )


def pixel_to_image(a, k: CameraIntrinsics):
    """Map pixel coordinates ``(a, b)`` to image-plane coordinates ``(x, y)``."""
    pa, pb = a
    return (k.hx * pa - k.hx * k.cx, k.hy * pb - k.hy * k.cy)


def image_to_pixel(x, k: CameraIntrinsics):
    px, py = x
    return (px / k.hx + k.cx, py / k.hy + k.cy)


def image_grid(k: CameraIntrinsics, width: int, height: int):
    """Image-plane coordinates of every pixel centre as two (height, width) arrays."""
    a = np.arange(width, dtype=np.float64)
    b = np.arange(height, dtype=np.float64)
    x, y = pixel_to_image((a, b), k)
    return np.broadcast_to(x, (height, width)), np.broadcast_to(y[:, None], (height, width))


def scale_intrinsics(k: CameraIntrinsics, level: int, eta: float) -> CameraIntrinsics:
    """Intrinsics of pyramid level ``level`` for downsampling factor ``eta``."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    if level == 0:
        return k
    up = eta ** (-level)
    down = eta**level
    return replace(k, hx=k.hx * up, hy=k.hy * up, cx=k.cx * down, cy=k.cy * down)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    # Output cell j covers [j, j+1) * n_in / n_out on the input axis.
    ratio = n_in / n_out
    edges_out = np.arange(n_out + 1) * ratio
    lo = np.maximum(edges_out[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges_out[1:, None], np.arange(1, n_in + 1)[None, :])
    w = np.clip(hi - lo, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def downsample(f: ScalarField, eta: float) -> ScalarField:
    """Shrink by ``eta`` with area-weighted averaging of the covered input cells."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    # never collapse an axis; a single row stays a single row
    new_w = max(1, int(round(f.width * eta)))
    new_h = max(1, int(round(f.height * eta)))
    return resize_area(f, new_w, new_h)


def resize_area(f: ScalarField, new_width: int, new_height: int) -> ScalarField:
    if new_width < 1 or new_height < 1:
        raise ValueError(f"output size {new_width}x{new_height} is empty")
    if new_width > f.width or new_height > f.height:
        raise ValueError("area resampling only shrinks")
    wx = _area_weights(f.width, new_width)
    wy = _area_weights(f.height, new_height)
    return ScalarField(wy @ f.data @ wx.T)


def _bilinear_axis(n_in: int, n_out: int):
    # Pixel-centre aligned source positions, clamped to the valid range.
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    return i0, i1, t


def upsample(f: ScalarField, new_width: int, new_height: int) -> ScalarField:
    """Bilinear interpolation to a larger grid with clamped borders."""
    if new_width < f.width or new_height < f.height:
        raise ValueError(
            f"upsample cannot shrink {f.width}x{f.height} to {new_width}x{new_height}"
        )
    x0, x1, tx = _bilinear_axis(f.width, new_width)
    y0, y1, ty = _bilinear_axis(f.height, new_height)
    d = f.data
    rows = d[y0] + ty[:, None] * (d[y1] - d[y0])
    out = rows[:, x0] + tx * (rows[:, x1] - rows[:, x0])
    return ScalarField(out)
