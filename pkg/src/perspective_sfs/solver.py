"""Explicit gradient-descent schemes and the coarse-to-fine driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import discretisation as fd
from .energy import (
    EnergySettings,
    Grid,
    NonPositiveDepthError,
    Penaliser,
    check_depth,
    data_terms,
    energy_array,
)
from .field import (
    CameraIntrinsics,
    ScalarField,
    image_grid,
    resize_area,
    scale_intrinsics,
    upsample,
)
from .forward_model import shade
from .geometry import conversion_factor

log = logging.getLogger(__name__)

Z_FLOOR = 1e-6
SCHEMES = ("full", "simplified", "alternating")
BACKENDS = ("auto", "numpy", "numba")


class SolverDivergence(RuntimeError):
    """Non-finite values appeared during the iteration."""

    def __init__(self, message, level=None, iteration=None):
        super().__init__(message)
        self.level = level
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 7.5e-5
    tau: float = 1e-2
    iterations: int = 1000
    eta: float = 0.8
    lam: float = 1e-3
    scheme: str = "alternating"
    penaliser: str = "charbonnier"
    min_level_size: int = 8
    tau_full: float | None = None  # default: tau * min(hx, hy)^2 on each level
    backend: str = "auto"  # compiled kernels when numba is importable
    threads: int | None = None  # compiled backend only; results do not depend on it

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.5 < self.eta < 1:
            raise ValueError("eta must lie in (0.5, 1)")
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.min_level_size < 1:
            raise ValueError("min_level_size must be >= 1")
        if self.tau_full is not None and not self.tau_full > 0:
            raise ValueError("tau_full must be > 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.backend == "numba" and not _kernels.AVAILABLE:
            raise ValueError("numba backend requested but numba is not installed")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")
        self.make_penaliser()

    def make_penaliser(self) -> Penaliser:
        if self.penaliser == "quadratic":
            return Penaliser.quadratic()
        return Penaliser(self.penaliser, self.lam)

    @property
    def compiled(self) -> bool:
        return self.backend == "numba" or (self.backend == "auto" and _kernels.AVAILABLE)


@dataclass
class ReconstructionResult:
    depth: ScalarField
    reprojection: ScalarField
    energy_trace: list = field(default_factory=list)  # per level: [(iteration, energy), ...]
    levels: int = 0


def upwind_gradient(z: ScalarField, pixel, h):
    """Upwind ``(z_x, z_y)`` at ``pixel = (a, b)`` with spacing ``h = (hx, hy)``."""
    a, b = pixel
    hx, hy = h
    dirs = fd.upwind_directions(z.data, hx, hy)
    zx, zy = fd.upwind_gradient(z.data, dirs, hx, hy)
    return float(zx[b, a]), float(zy[b, a])


def _gradient(z, image, conf, grid: Grid, alpha, penaliser: Penaliser, dirs, full: bool):
    """Exact gradient of :func:`energy_array` under frozen directions."""
    t = data_terms(z, image, grid, dirs)
    cr = conf * 2.0 * t.residual * t.model
    g = cr * (1.0 / z + t.u / (t.w * t.w))
    if full:
        common = cr / (t.w * t.w)
        f2 = grid.intrinsics.focal ** 2
        px = common * (f2 * t.zx + t.u * grid.x)
        py = common * (f2 * t.zy + t.u * grid.y)
        g += fd.upwind_adjoint(px, py, dirs, grid.hx, grid.hy)
    if alpha > 0:
        zxx, zxy, zyy = fd.hessian(z, grid.hx, grid.hy)
        d = penaliser.derivative(zxx * zxx + 2.0 * zxy * zxy + zyy * zyy)
        g += alpha * fd.hessian_adjoint(2.0 * d * zxx, 4.0 * d * zxy, 2.0 * d * zyy, grid.hx, grid.hy)
    return g * grid.cell_area


def data_flux_divergence(z, image, conf, grid: Grid, dirs):
    """Contribution of the depth-gradient dependence of the data term."""
    t = data_terms(z, image, grid, dirs)
    common = conf * 2.0 * t.residual * t.model / (t.w * t.w)
    f2 = grid.intrinsics.focal ** 2
    px = common * (f2 * t.zx + t.u * grid.x)
    py = common * (f2 * t.zy + t.u * grid.y)
    return fd.upwind_adjoint(px, py, dirs, grid.hx, grid.hy) * grid.cell_area


def _unpack(z: ScalarField, i: ScalarField, s: EnergySettings):
    if z.shape != i.shape or z.shape != s.confidence.shape:
        raise ValueError("depth, image and confidence must share a shape")
    check_depth(z.data)
    return z.data, i.data, s.confidence.data, Grid(s.intrinsics, z.width, z.height)


def el_gradient_full(z: ScalarField, i: ScalarField, s: EnergySettings, dirs=None) -> ScalarField:
    """Gradient of :func:`~perspective_sfs.energy.total_energy` with respect to every depth value."""
    zd, img, conf, grid = _unpack(z, i, s)
    if dirs is None:
        dirs = fd.upwind_directions(zd, grid.hx, grid.hy)
    return ScalarField(_gradient(zd, img, conf, grid, s.alpha, s.penaliser, dirs, True))


def el_gradient_simplified(z: ScalarField, i: ScalarField, s: EnergySettings, dirs=None) -> ScalarField:
    """Like :func:`el_gradient_full` but without the flux of the data term through ``grad z``."""
    zd, img, conf, grid = _unpack(z, i, s)
    if dirs is None:
        dirs = fd.upwind_directions(zd, grid.hx, grid.hy)
    return ScalarField(_gradient(zd, img, conf, grid, s.alpha, s.penaliser, dirs, False))


def explicit_step(z: ScalarField, gradient: ScalarField, tau: float) -> ScalarField:
    if not tau > 0:
        raise ValueError("tau must be > 0")
    return ScalarField(np.maximum(z.data - tau * gradient.data, Z_FLOOR))


def initialise(i: ScalarField, k: CameraIntrinsics) -> ScalarField:
    """Depth that zeroes the data term of a fronto-parallel patch: ``sqrt(Q^3 / I)``."""
    if not np.all(i.data > 0):
        raise ValueError("initialisation needs strictly positive irradiance")
    x, y = image_grid(k, i.width, i.height)
    q = conversion_factor((x, y), k.focal)
    return ScalarField(np.sqrt(q**3 / i.data))


def _phases(cfg: SolverConfig, grid: Grid):
    n = cfg.iterations
    tau_full = cfg.tau_full if cfg.tau_full is not None else cfg.tau * min(grid.hx, grid.hy) ** 2
    if cfg.scheme == "simplified":
        return [(False, n, cfg.tau)]
    if cfg.scheme == "full":
        return [(True, n, tau_full)]
    return [(False, n // 2, cfg.tau), (True, n - n // 2, tau_full)]


def _iterate(z, image, conf, grid, alpha, penaliser, full, n, tau, trace, start, sample_every, level, compiled):
    area = grid.cell_area
    done = start
    while done < start + n:
        if compiled:
            # run up to the next sampling point in one compiled call
            chunk = min(sample_every - done % sample_every, start + n - done)
            z, bad = _kernels.run(z, image, conf, grid, alpha, penaliser, full, chunk, tau, Z_FLOOR)
            failed_at = done + bad + 1 if bad >= 0 else None
        else:
            chunk = 1
            dirs = fd.upwind_directions(z, grid.hx, grid.hy)
            g = _gradient(z, image, conf, grid, alpha, penaliser, dirs, full)
            z = np.maximum(z - (tau / area) * g, Z_FLOOR)
            failed_at = None if np.all(np.isfinite(z)) else done + 1
        if failed_at is not None:
            raise SolverDivergence(
                f"non-finite depth at level {level}, iteration {failed_at}",
                level=level,
                iteration=failed_at,
            )
        done += chunk
        if trace is not None and done % sample_every == 0:
            trace.append((done, energy_array(z, image, conf, grid, alpha, penaliser)))
    return z


def run_level(
    z0: ScalarField,
    i: ScalarField,
    s: EnergySettings,
    cfg: SolverConfig,
    trace: list | None = None,
    level: int = 0,
) -> ScalarField:
    """Run ``cfg.iterations`` explicit steps of the configured scheme on one grid.

    The simplified phase steps with ``tau``; the full phase with
    ``tau * min(hx, hy)^2``. Each step uses the gradient of the discrete energy
    divided by the cell area, so ``tau`` is a time step of the continuous flow.
    """
    z, img, conf, grid = _unpack(z0, i, s)
    z = z.copy()
    sample_every = max(1, cfg.iterations // 100)
    if trace is not None:
        trace.append((0, energy_array(z, img, conf, grid, s.alpha, s.penaliser)))
    done = 0
    for full, n, tau in _phases(cfg, grid):
        z = _iterate(
            z, img, conf, grid, s.alpha, s.penaliser, full, n, tau, trace, done, sample_every, level, cfg.compiled
        )
        done += n
    return ScalarField(z)


def pyramid_sizes(width: int, height: int, eta: float, min_size: int):
    """Grid sizes from finest (level 0) to coarsest with both sides >= ``min_size``."""
    sizes = [(width, height)]
    level = 1
    while True:
        w = int(round(width * eta**level))
        h = int(round(height * eta**level))
        if min(w, h) < min_size:
            break
        sizes.append((w, h))
        level += 1
    return sizes


def level_alpha(alpha: float, eta: float, level: int) -> float:
    return alpha * eta ** (-4 * level)


def _coarse_level(i: ScalarField, confidence: ScalarField, w: int, h: int):
    # Confidence-weighted averaging keeps masked pixels out of the coarse images;
    # cells without any trusted pixel fall back to the plain average.
    c = resize_area(confidence, w, h).data
    weighted = resize_area(ScalarField(confidence.data * i.data), w, h).data
    plain = resize_area(i, w, h).data
    ok = c > 1e-12
    img = np.where(ok, weighted / np.where(ok, c, 1.0), plain)
    return ScalarField(img), ScalarField(np.clip(c, 0.0, 1.0))


def reconstruct(
    i: ScalarField,
    k: CameraIntrinsics,
    confidence: ScalarField | None,
    cfg: SolverConfig,
    initial: float | None = None,
) -> ReconstructionResult:
    """Coarse-to-fine reconstruction of Cartesian depth from a single image.

    ``initial`` replaces the pointwise initialisation at the coarsest level
    by a fronto-parallel plane at that depth.
    """
    if confidence is None:
        confidence = ScalarField.constant(i.width, i.height, 1.0)
    if confidence.shape != i.shape:
        raise ValueError("confidence must match the image size")
    penaliser = cfg.make_penaliser()
    if cfg.compiled:
        _kernels.set_threads(cfg.threads)
    sizes = pyramid_sizes(i.width, i.height, cfg.eta, cfg.min_level_size)
    traces = []
    z = None
    for level in range(len(sizes) - 1, -1, -1):
        w, h = sizes[level]
        if level == 0:
            img, conf = i, confidence
        else:
            img, conf = _coarse_level(i, confidence, w, h)
        k_level = scale_intrinsics(k, level, cfg.eta)
        if z is None:
            if initial is None:
                z = initialise(img, k_level)
            else:
                z = ScalarField.constant(w, h, initial)
        else:
            z = upsample(z, w, h)
        settings = EnergySettings(level_alpha(cfg.alpha, cfg.eta, level), penaliser, conf, k_level)
        trace = []
        try:
            z = run_level(z, img, settings, cfg, trace=trace, level=level)
        except NonPositiveDepthError as exc:
            raise SolverDivergence(f"level {level}: {exc}", level=level) from exc
        log.debug("level %d (%dx%d) energy %s", level, w, h, trace[-1][1] if trace else None)
        traces.append((level, trace))
    return ReconstructionResult(
        depth=z,
        reprojection=shade(z, k),
        energy_trace=traces,
        levels=len(sizes),
    )
