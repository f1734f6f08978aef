import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perspective_sfs.field import CameraIntrinsics, ScalarField
from perspective_sfs.metrics import (
    evaluate,
    relative_image_error,
    relative_surface_error,
    surface_error_map,
)

K = CameraIntrinsics(1.0, 0.01, 0.01, 8, 8)
seeds = st.integers(0, 2**32 - 1)


def _rand(seed, lo=0.5, hi=3.0, shape=(16, 16)):
    return ScalarField(np.random.default_rng(seed).uniform(lo, hi, shape))


class TestRSE:
    def test_identical(self):
        z = _rand(0)
        assert relative_surface_error(z, z, K) == 0.0

    @given(st.floats(0.1, 10))
    def test_scaled_plane(self, c):
        gt = ScalarField.constant(16, 16, 2.0)
        z = ScalarField.constant(16, 16, 2.0 * c)
        assert relative_surface_error(z, gt, K) == pytest.approx(abs(c - 1), rel=1e-12, abs=1e-15)

    @given(seeds, st.floats(1e-3, 1e3))
    @settings(max_examples=30)
    def test_joint_scale_invariance(self, seed, c):
        z, gt = _rand(seed), _rand(seed + 1)
        a = relative_surface_error(z, gt, K)
        b = relative_surface_error(ScalarField(c * z.data), ScalarField(c * gt.data), K)
        assert b == pytest.approx(a, rel=1e-12)

    @given(seeds)
    @settings(max_examples=30)
    def test_positive_when_different(self, seed):
        z, gt = _rand(seed), _rand(seed + 1)
        assert relative_surface_error(z, gt, K) > 0

    def test_mask(self):
        gt = ScalarField.constant(16, 16, 2.0)
        z = gt.data.copy()
        z[0, 0] = 5.0
        mask = np.ones((16, 16))
        mask[0, 0] = 0
        assert relative_surface_error(ScalarField(z), gt, K, mask=mask) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_surface_error(ScalarField.constant(3, 3, 1), ScalarField.constant(3, 4, 1), K)


class TestRIE:
    def test_identical(self):
        i = _rand(1)
        assert relative_image_error(i, i) == 0.0

    def test_uniform_scaling(self):
        i = _rand(2)
        assert relative_image_error(ScalarField(1.1 * i.data), i) == pytest.approx(0.1, rel=1e-12)

    def test_hand_value(self):
        gt = ScalarField.constant(4, 2, 2.0)
        i = np.ones((2, 4))
        i[1] = 3.0
        assert relative_image_error(ScalarField(i), gt) == 0.5

    @given(seeds, st.floats(1e-3, 1e3))
    @settings(max_examples=30)
    def test_joint_scale_invariance(self, seed, c):
        i, gt = _rand(seed), _rand(seed + 1)
        a = relative_image_error(i, gt)
        assert relative_image_error(ScalarField(c * i.data), ScalarField(c * gt.data)) == pytest.approx(a, rel=1e-12)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            relative_image_error(ScalarField.constant(2, 2, 1), ScalarField.constant(2, 2, 0))


class TestErrorMap:
    def test_identical(self):
        z = _rand(3)
        emap, mask = surface_error_map(z, z, K)
        assert not emap.data.any() and not mask.any()

    def test_single_pixel(self):
        gt = ScalarField.constant(16, 16, 2.0)
        z = gt.data.copy()
        z[4, 7] = 2.1
        emap, mask = surface_error_map(ScalarField(z), gt, K, threshold=0.01)
        assert mask.sum() == 1 and mask[4, 7]

    def test_infinite_threshold(self):
        _, mask = surface_error_map(_rand(4), _rand(5), K, threshold=np.inf)
        assert not mask.any()


def test_evaluate_bundle():
    z, gt = _rand(6), _rand(7)
    i, igt = _rand(8), _rand(9)
    rep = evaluate(z, gt, i, igt, K)
    assert rep.rse == relative_surface_error(z, gt, K)
    assert rep.rie == relative_image_error(i, igt)
    assert rep.error_map.shape == z.shape
