"""Compiled explicit iterations (numba).

Same discretisation as :mod:`perspective_sfs.discretisation`, fused into two
passes per iteration. The second pass gathers every output pixel from its
3x3 neighbourhood, so rows can be processed in parallel and the result does
not depend on the thread count.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    # the bundled TBB is often too old; prefer OpenMP and fall back quietly
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    from numba import njit, prange

    AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    AVAILABLE = False


if AVAILABLE:

    @njit(cache=True, inline="always")
    def _code(dm, dp):
        if dm >= -dp and dm > 0.0:
            return -1
        if -dp > dm and -dp > 0.0:
            return 1
        return 0

    @njit(cache=True, inline="always")
    def _clamp(i, n):
        if i < 0:
            return 0
        if i > n - 1:
            return n - 1
        return i

    @njit(cache=True, parallel=True)
    def _pointwise(z, image, conf, x, y, q3, f, hx, hy, alpha, charb, lam, full, g0, bx, fx, by, fy, gxx, gxy, gyy):
        h, w = z.shape
        f2 = f * f
        lam2 = lam * lam
        for i in prange(h):
            for j in range(w):
                zc = z[i, j]
                dm = (zc - z[i, j - 1]) / hx if j > 0 else 0.0
                dp = (z[i, j + 1] - zc) / hx if j < w - 1 else 0.0
                cx = _code(dm, dp)
                zx = dm if cx == -1 else (dp if cx == 1 else 0.0)
                dm = (zc - z[i - 1, j]) / hy if i > 0 else 0.0
                dp = (z[i + 1, j] - zc) / hy if i < h - 1 else 0.0
                cy = _code(dm, dp)
                zy = dm if cy == -1 else (dp if cy == 1 else 0.0)

                u = zx * x[i, j] + zy * y[i, j] + zc
                ww = np.sqrt(f2 * (zx * zx + zy * zy) + u * u)
                model = q3[i, j] / (zc * ww)
                cr = conf[i, j] * 2.0 * (image[i, j] - model) * model
                g0[i, j] = cr * (1.0 / zc + u / (ww * ww))
                bx[i, j] = 0.0
                fx[i, j] = 0.0
                by[i, j] = 0.0
                fy[i, j] = 0.0
                if full:
                    common = cr / (ww * ww)
                    px = common * (f2 * zx + u * x[i, j])
                    py = common * (f2 * zy + u * y[i, j])
                    if cx == -1:
                        bx[i, j] = px / hx
                    elif cx == 1:
                        fx[i, j] = px / hx
                    if cy == -1:
                        by[i, j] = py / hy
                    elif cy == 1:
                        fy[i, j] = py / hy

                if alpha > 0.0:
                    jl = _clamp(j - 1, w)
                    jr = _clamp(j + 1, w)
                    iu = _clamp(i - 1, h)
                    idn = _clamp(i + 1, h)
                    zxx = (z[i, jr] - 2.0 * zc + z[i, jl]) / (hx * hx)
                    zyy = (z[idn, j] - 2.0 * zc + z[iu, j]) / (hy * hy)
                    zxy = (z[idn, jr] - z[idn, jl] - z[iu, jr] + z[iu, jl]) / (4.0 * hx * hy)
                    s2 = zxx * zxx + 2.0 * zxy * zxy + zyy * zyy
                    d = 1.0 / np.sqrt(1.0 + s2 / lam2) if charb else 1.0
                    gxx[i, j] = 2.0 * d * zxx / (hx * hx)
                    gxy[i, j] = 4.0 * d * zxy / (4.0 * hx * hy)
                    gyy[i, j] = 2.0 * d * zyy / (hy * hy)

    @njit(cache=True, parallel=True)
    def _update(z, g0, bx, fx, by, fy, gxx, gxy, gyy, alpha, full, step, area, floor, out):
        h, w = z.shape
        for a in prange(h):
            for b in range(w):
                acc = g0[a, b]
                if full:
                    t = bx[a, b] - fx[a, b]
                    if b < w - 1:
                        t -= bx[a, b + 1]
                    if b > 0:
                        t += fx[a, b - 1]
                    t += by[a, b] - fy[a, b]
                    if a < h - 1:
                        t -= by[a + 1, b]
                    if a > 0:
                        t += fy[a - 1, b]
                    acc += t
                if alpha > 0.0 and 1 < a < h - 2 and 1 < b < w - 2:
                    s = gxx[a, b - 1] - 2.0 * gxx[a, b] + gxx[a, b + 1]
                    s += gyy[a - 1, b] - 2.0 * gyy[a, b] + gyy[a + 1, b]
                    s += gxy[a - 1, b - 1] - gxy[a - 1, b + 1] - gxy[a + 1, b - 1] + gxy[a + 1, b + 1]
                    acc += alpha * s
                elif alpha > 0.0:
                    s = 0.0
                    for i in range(max(a - 1, 0), min(a + 2, h)):
                        for j in range(max(b - 1, 0), min(b + 2, w)):
                            # weight of z[a, b] in the stencils centred at (i, j)
                            if i == a:
                                cxx = (_clamp(j + 1, w) == b) - 2.0 * (j == b) + (_clamp(j - 1, w) == b)
                                s += cxx * gxx[i, j]
                            if j == b:
                                cyy = (_clamp(i + 1, h) == a) - 2.0 * (i == a) + (_clamp(i - 1, h) == a)
                                s += cyy * gyy[i, j]
                            ip = _clamp(i + 1, h) == a
                            im = _clamp(i - 1, h) == a
                            jp = _clamp(j + 1, w) == b
                            jm = _clamp(j - 1, w) == b
                            cxy = (ip and jp) - (ip and jm) - (im and jp) + (im and jm)
                            if cxy != 0:
                                s += cxy * gxy[i, j]
                    acc += alpha * s
                v = z[a, b] - step * (acc * area)
                out[a, b] = v if v > floor else floor

    @njit(cache=True)
    def _run(z, image, conf, x, y, q3, f, hx, hy, alpha, charb, lam, full, n, tau, floor):
        """``n`` explicit steps; returns ``(z, k)`` where ``k`` is the first non-finite step or -1."""
        h, w = z.shape
        g0 = np.empty((h, w))
        bx = np.empty((h, w))
        fx = np.empty((h, w))
        by = np.empty((h, w))
        fy = np.empty((h, w))
        gxx = np.zeros((h, w))
        gxy = np.zeros((h, w))
        gyy = np.zeros((h, w))
        cur = z.copy()
        nxt = np.empty((h, w))
        area = hx * hy
        step = tau / area
        for k in range(n):
            _pointwise(cur, image, conf, x, y, q3, f, hx, hy, alpha, charb, lam, full, g0, bx, fx, by, fy, gxx, gxy, gyy)
            _update(cur, g0, bx, fx, by, fy, gxx, gxy, gyy, alpha, full, step, area, floor, nxt)
            if not np.all(np.isfinite(nxt)):
                return nxt, k
            cur, nxt = nxt, cur
        return cur, -1


def run(z, image, conf, grid, alpha, penaliser, full, n, tau, floor):
    """Run ``n`` compiled explicit steps. Returns ``(z, bad)``, ``bad`` = -1 when all finite."""
    return _run(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(image, dtype=np.float64),
        np.ascontiguousarray(conf, dtype=np.float64),
        np.ascontiguousarray(grid.x, dtype=np.float64),
        np.ascontiguousarray(grid.y, dtype=np.float64),
        np.ascontiguousarray(grid.q3, dtype=np.float64),
        float(grid.intrinsics.focal),
        float(grid.hx),
        float(grid.hy),
        float(alpha),
        penaliser.kind == "charbonnier",
        float(penaliser.lam) if penaliser.kind == "charbonnier" else 1.0,
        bool(full),
        int(n),
        float(tau),
        float(floor),
    )


def set_threads(threads):
    if AVAILABLE and threads is not None:
        numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
