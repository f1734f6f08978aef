import numpy as np
import pytest

from perspective_sfs import _kernels
from perspective_sfs import discretisation as fd
from perspective_sfs import solver
from perspective_sfs.energy import EnergySettings, Grid, Penaliser, total_energy
from perspective_sfs.field import CameraIntrinsics, ScalarField
from perspective_sfs.forward_model import SceneSpec, generate_scene, quantise_8bit, shade
from perspective_sfs.metrics import relative_surface_error
from perspective_sfs.solver import (
    SolverConfig,
    SolverDivergence,
    el_gradient_full,
    el_gradient_simplified,
    explicit_step,
    initialise,
    level_alpha,
    pyramid_sizes,
    reconstruct,
    run_level,
)

BACKENDS = ["numpy"] + (["numba"] if _kernels.AVAILABLE else [])


def _random_instance(seed, n=16, alpha=7.5e-5, kind="charbonnier", conf=None):
    rng = np.random.default_rng(seed)
    k = CameraIntrinsics(1.0, 1 / n, 1 / n, n / 2, n / 2)
    z = ScalarField(rng.uniform(1.0, 2.0, (n, n)))
    img = ScalarField(rng.uniform(0.1, 0.6, (n, n)))
    c = ScalarField(rng.uniform(0, 1, (n, n)) if conf is None else np.full((n, n), conf))
    pen = Penaliser.quadratic() if kind == "quadratic" else Penaliser.charbonnier(1e-3)
    return z, img, EnergySettings(alpha, pen, c, k)


def _desk_instance(n=32):
    k = CameraIntrinsics(1.0, 1.28 / n, 1.28 / n, n / 2, n / 2)
    z_gt = generate_scene(SceneSpec("sombrero"), k, n, n)
    img, _ = quantise_8bit(shade(z_gt, k))
    return z_gt, img, k


def _fd_gradient(z, img, s, dirs):
    step = 1e-6 * np.abs(z.data).max()
    out = np.empty(z.shape)
    for idx in np.ndindex(z.shape):
        plus = z.data.copy()
        minus = z.data.copy()
        plus[idx] += step
        minus[idx] -= step
        out[idx] = (total_energy(ScalarField(plus), img, s, dirs) - total_energy(ScalarField(minus), img, s, dirs)) / (
            2 * step
        )
    return out


@pytest.mark.parametrize("kind", ["quadratic", "charbonnier"])
@pytest.mark.parametrize("alpha", [0.0, 7.5e-5, 1.0])
def test_gradient_matches_finite_differences(kind, alpha):
    z, img, s = _random_instance(11, n=10, alpha=alpha, kind=kind)
    dirs = fd.upwind_directions(z.data, s.intrinsics.hx, s.intrinsics.hy)
    g = el_gradient_full(z, img, s, dirs).data
    num = _fd_gradient(z, img, s, dirs)
    assert np.abs(g - num).max() / np.abs(num).max() < 1e-6


def _flux_divergence_loop(z, img, conf, k):
    """Data-term dependence on grad z, assembled by explicit per-pixel scatter."""
    h, w = z.shape
    hx, hy, f = k.hx, k.hy, k.focal
    out = np.zeros((h, w))
    for b in range(h):
        for a in range(w):
            x = (a - k.cx) * hx
            y = (b - k.cy) * hy
            neighbours = {}
            for axis, step, (lo, hi) in (("x", hx, (a - 1, a + 1)), ("y", hy, (b - 1, b + 1))):
                here = z[b, a]
                left = z[b, lo] if axis == "x" and lo >= 0 else (z[lo, a] if axis == "y" and lo >= 0 else here)
                right = z[b, hi] if axis == "x" and hi < w else (z[hi, a] if axis == "y" and hi < h else here)
                dm = (here - left) / step
                dp = (right - here) / step
                if dm >= -dp and dm > 0:
                    neighbours[axis] = (dm, -1)
                elif -dp > dm and -dp > 0:
                    neighbours[axis] = (dp, +1)
                else:
                    neighbours[axis] = (0.0, 0)
            zx, dx = neighbours["x"]
            zy, dy = neighbours["y"]
            zc = z[b, a]
            u = zx * x + zy * y + zc
            wv = np.sqrt(f * f * (zx * zx + zy * zy) + u * u)
            q3 = (f / np.sqrt(x * x + y * y + f * f)) ** 3
            model = q3 / (zc * wv)
            common = conf[b, a] * 2 * (img[b, a] - model) * model / (wv * wv)
            px = common * (f * f * zx + u * x)
            py = common * (f * f * zy + u * y)
            # d(zx)/dz: backward -> (+1 at a, -1 at a-1)/hx; forward -> (-1 at a, +1 at a+1)/hx
            if dx == -1:
                out[b, a] += px / hx
                out[b, a - 1] -= px / hx
            elif dx == 1:
                out[b, a] -= px / hx
                out[b, a + 1] += px / hx
            if dy == -1:
                out[b, a] += py / hy
                out[b - 1, a] -= py / hy
            elif dy == 1:
                out[b, a] -= py / hy
                out[b + 1, a] += py / hy
    return out * hx * hy


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_omitted_terms_identity(seed):
    z, img, s = _random_instance(seed, n=12, alpha=0.3)
    diff = el_gradient_full(z, img, s).data - el_gradient_simplified(z, img, s).data
    expected = _flux_divergence_loop(z.data, img.data, s.confidence.data, s.intrinsics)
    assert np.abs(diff - expected).max() <= 1e-10 * max(1.0, np.abs(expected).max())


class TestStationarity:
    def test_plane_exact_image(self):
        k = CameraIntrinsics(1.0, 0.02, 0.02, 8, 8)
        z = generate_scene(SceneSpec("plane", {"z0": 2.0}), k, 16, 16)
        s = EnergySettings(0.0, Penaliser.charbonnier(1e-3), ScalarField.constant(16, 16, 1.0), k)
        img = shade(z, k)
        for grad in (el_gradient_full, el_gradient_simplified):
            assert np.abs(grad(z, img, s).data).max() < 1e-15

    def test_plane_smoothness_interior(self):
        k = CameraIntrinsics(1.0, 0.02, 0.02, 8, 8)
        z = generate_scene(SceneSpec("plane", {"z0": 2.0}), k, 16, 16)
        s = EnergySettings(1.0, Penaliser.quadratic(), ScalarField.constant(16, 16, 0.0), k)
        np.testing.assert_array_equal(el_gradient_full(z, ScalarField.constant(16, 16, 0.3), s).data, 0.0)


class TestExplicitStep:
    def test_identity(self):
        z = ScalarField.constant(3, 3, 1.3)
        assert np.array_equal(explicit_step(z, ScalarField.constant(3, 3, 0.0), 0.1).data, z.data)

    def test_arithmetic(self):
        out = explicit_step(ScalarField.constant(1, 1, 2.0), ScalarField.constant(1, 1, 1.0), 0.5)
        assert out.data[0, 0] == 1.5

    def test_clamp(self):
        out = explicit_step(ScalarField.constant(1, 1, 2.0), ScalarField.constant(1, 1, 10.0), 1.0)
        assert out.data[0, 0] == solver.Z_FLOOR

    def test_tau_positive(self):
        with pytest.raises(ValueError):
            explicit_step(ScalarField.constant(1, 1, 2.0), ScalarField.constant(1, 1, 1.0), 0.0)


class TestInitialise:
    def test_axis(self):
        k = CameraIntrinsics(1.0, 0.1, 0.1, 0, 0)
        assert initialise(ScalarField.constant(1, 1, 0.25), k).data[0, 0] == pytest.approx(2.0)

    def test_off_axis(self):
        # Q = 0.8 at x = (0.75, 0) for f = 1
        k = CameraIntrinsics(1.0, 0.75, 0.75, 0, 0)
        z = initialise(ScalarField(np.array([[1.0, 1.0]])), k)
        assert z.data[0, 1] == pytest.approx(np.sqrt(0.512), rel=1e-12)

    def test_plane_exact(self):
        k = CameraIntrinsics(1.0, 1 / 200, 1 / 200, 32, 32)
        z = generate_scene(SceneSpec("plane", {"z0": 2.0}), k, 64, 64)
        np.testing.assert_allclose(initialise(shade(z, k), k).data, 2.0, rtol=1e-13)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            initialise(ScalarField.constant(2, 2, 0.0), CameraIntrinsics(1, 1, 1, 0, 0))


class TestRunLevel:
    @pytest.mark.parametrize("backend", BACKENDS)
    def test_zero_iterations(self, backend):
        z, img, s = _random_instance(3)
        out = run_level(z, img, s, SolverConfig(iterations=0, backend=backend))
        assert np.array_equal(out.data, z.data)

    def test_simplified_step_descends(self):
        z_gt, img, k = _desk_instance()
        s = EnergySettings(7.5e-5, Penaliser.charbonnier(1e-3), ScalarField.constant(32, 32, 1.0), k)
        for z0 in (initialise(img, k), ScalarField.constant(32, 32, 1.5)):
            dirs = fd.upwind_directions(z0.data, k.hx, k.hy)
            g = el_gradient_simplified(z0, img, s, dirs)
            for tau in (1e-6, 1e-7):
                z1 = explicit_step(z0, g, tau)
                assert total_energy(z1, img, s, dirs) <= total_energy(z0, img, s, dirs)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_alternating_is_composition(self, backend):
        z, img, s = _random_instance(5, alpha=1e-3)
        n = 7
        alt = run_level(z, img, s, SolverConfig(iterations=n, tau=1e-4, scheme="alternating", backend=backend))
        half = run_level(z, img, s, SolverConfig(iterations=n // 2, tau=1e-4, scheme="simplified", backend=backend))
        both = run_level(half, img, s, SolverConfig(iterations=n - n // 2, tau=1e-4, scheme="full", backend=backend))
        assert np.array_equal(alt.data, both.data)

    @pytest.mark.parametrize("scheme", solver.SCHEMES)
    def test_backends_agree(self, scheme):
        if not _kernels.AVAILABLE:
            pytest.skip("numba missing")
        z, img, s = _random_instance(9, alpha=0.5)
        cfg = dict(iterations=3, tau=1e-4, scheme=scheme)
        a = run_level(z, img, s, SolverConfig(backend="numpy", **cfg)).data
        b = run_level(z, img, s, SolverConfig(backend="numba", **cfg)).data
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_trace_sampling(self):
        z, img, s = _random_instance(4)
        trace = []
        run_level(z, img, s, SolverConfig(iterations=250, tau=1e-5), trace=trace)
        its = [it for it, _ in trace]
        assert its[0] == 0 and its[-1] == 250 and np.all(np.diff(its) == 2)

    def test_divergence_reported(self, monkeypatch):
        z, img, s = _random_instance(4)
        monkeypatch.setattr(solver, "_gradient", lambda *a, **k: np.full(z.shape, np.nan))
        with pytest.raises(SolverDivergence) as info:
            run_level(z, img, s, SolverConfig(iterations=5, backend="numpy"), level=3)
        assert info.value.level == 3 and info.value.iteration == 1


class TestConfig:
    def test_level_alpha(self):
        assert level_alpha(1e-4, 0.8, 1) == pytest.approx(2.44140625e-4, rel=1e-14)
        assert level_alpha(1e-4, 0.8, 0) == 1e-4

    @pytest.mark.parametrize(
        "kw", [{"eta": 0.5}, {"eta": 1.0}, {"tau": 0}, {"scheme": "implicit"}, {"alpha": -1}, {"threads": 0}]
    )
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_pyramid_sizes(self):
        sizes = pyramid_sizes(128, 128, 0.8, 8)
        assert sizes[0] == (128, 128)
        assert min(sizes[-1]) >= 8 and round(128 * 0.8 ** len(sizes)) < 8
        assert len(sizes) == 13


def test_plane_reconstruction():
    k = CameraIntrinsics(1.0, 1 / 200, 1 / 200, 16, 16)
    z = generate_scene(SceneSpec("plane", {"z0": 2.0}), k, 32, 32)
    res = reconstruct(shade(z, k), k, None, SolverConfig(alpha=1e-6, iterations=100))
    assert relative_surface_error(res.depth, z, k) < 1e-3
    assert res.depth.data.min() >= solver.Z_FLOOR


def test_thread_count_does_not_change_result():
    if not _kernels.AVAILABLE:
        pytest.skip("numba missing")
    _, img, k = _desk_instance()
    runs = [
        reconstruct(img, k, None, SolverConfig(iterations=20, threads=t, backend="numba")).depth.data
        for t in (1, None)
    ]
    assert np.array_equal(runs[0], runs[1])


def test_all_ones_confidence_is_neutral():
    _, img, k = _desk_instance()
    cfg = SolverConfig(iterations=20)
    a = reconstruct(img, k, None, cfg).depth.data
    b = reconstruct(img, k, ScalarField.constant(32, 32, 1.0), cfg).depth.data
    assert np.array_equal(a, b)


class TestCoarseLevel:
    def test_masked_pixels_do_not_leak(self):
        rng = np.random.default_rng(3)
        img = np.full((16, 16), 0.4)
        holes = rng.random((16, 16)) < 0.3
        conf = np.where(holes, 0.0, 1.0)
        dirty = np.where(holes, 1e-3, img)
        coarse, c = solver._coarse_level(ScalarField(dirty), ScalarField(conf), 8, 8)
        np.testing.assert_allclose(coarse.data, 0.4, rtol=1e-12)
        assert c.data.min() >= 0 and c.data.max() <= 1

    def test_unit_confidence_matches_plain_average(self):
        img = ScalarField(np.random.default_rng(4).uniform(0.1, 1, (20, 12)))
        coarse, c = solver._coarse_level(img, ScalarField.constant(12, 20, 1.0), 10, 16)
        np.testing.assert_allclose(coarse.data, solver.resize_area(img, 10, 16).data, rtol=1e-12)
        np.testing.assert_allclose(c.data, 1.0, rtol=1e-12)

    def test_fully_masked_cell_falls_back(self):
        img = ScalarField(np.arange(16.0).reshape(4, 4) + 1)
        coarse, c = solver._coarse_level(img, ScalarField.constant(4, 4, 0.0), 2, 2)
        np.testing.assert_allclose(coarse.data, solver.resize_area(img, 2, 2).data)
        assert not c.data.any()
