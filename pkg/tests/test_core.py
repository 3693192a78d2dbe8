"""Core types and the small geometric operations."""

import numpy as np
import pytest

from patternflow.core import (DisparityMap, EstimatorParams, GrayImage,
                              Pattern, Point2, disparity_from_correspondence,
                              estimator_predict, sample_bilinear)


def test_disparity_from_correspondence_examples():
    assert disparity_from_correspondence(Point2(100.0, 50.0), Point2(60.0, 50.0)) == 40.0
    assert disparity_from_correspondence(Point2(10.0, 7.0), Point2(10.0, 7.0)) == 0.0
    assert disparity_from_correspondence(Point2(33.25, 12.0), Point2(30.5, 12.0)) == 2.75


def test_disparity_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = Point2(float(rng.uniform(0, 200)), float(rng.uniform(0, 200)))
        u = Point2(float(rng.uniform(0, 200)), x.y)
        assert disparity_from_correspondence(x, u) + u.x == pytest.approx(
            x.x, abs=1e-12)


class TestSampleBilinear:
    def test_exact_on_lattice(self):
        rng = np.random.default_rng(1)
        img = GrayImage(rng.random((6, 7)))
        for (y, x) in [(0, 0), (4, 3), (5, 6), (0, 6), (5, 0)]:
            val, ok = sample_bilinear(img, Point2(float(x), float(y)))
            assert ok
            assert val == pytest.approx(img.data[y, x], abs=1e-12)

    def test_midpoint(self):
        data = np.zeros((3, 3))
        data[1, 1] = 0.0
        data[1, 2] = 1.0
        val, ok = sample_bilinear(GrayImage(data), Point2(1.5, 1.0))
        assert ok and val == pytest.approx(0.5)

    def test_out_of_bounds(self):
        img = GrayImage(np.ones((4, 4)))
        for p in [Point2(-0.01, 1.0), Point2(1.0, -0.5), Point2(3.01, 1.0),
                  Point2(1.0, 3.5)]:
            val, ok = sample_bilinear(img, p)
            assert not ok and val == 0.0

    def test_linear_along_each_axis(self):
        rng = np.random.default_rng(2)
        img = GrayImage(rng.random((5, 5)))
        for _ in range(20):
            x0 = int(rng.integers(0, 4))
            y = int(rng.integers(0, 5))
            f0, _ = sample_bilinear(img, Point2(float(x0), float(y)))
            f1, _ = sample_bilinear(img, Point2(float(x0 + 1), float(y)))
            t = float(rng.uniform())
            ft, _ = sample_bilinear(img, Point2(x0 + t, float(y)))
            assert ft == pytest.approx((1 - t) * f0 + t * f1, abs=1e-12)
            y0 = int(rng.integers(0, 4))
            x = int(rng.integers(0, 5))
            g0, _ = sample_bilinear(img, Point2(float(x), float(y0)))
            g1, _ = sample_bilinear(img, Point2(float(x), float(y0 + 1)))
            gt_ = sample_bilinear(img, Point2(float(x), y0 + t))[0]
            assert gt_ == pytest.approx((1 - t) * g0 + t * g1, abs=1e-12)


class TestEstimatorPredict:
    def test_constant_grid(self):
        params = EstimatorParams(grid=np.full((8, 9), 30.0))
        disp = estimator_predict(params)
        assert disp.valid.all()
        assert (disp.values == 30.0).all()

    def test_readout_is_a_copy(self):
        params = EstimatorParams(grid=np.full((4, 4), 25.0))
        disp = estimator_predict(params)
        disp.values[0, 0] = 99.0
        assert params.grid[0, 0] == 25.0


class TestValidation:
    def test_gray_image_range(self):
        with pytest.raises(ValueError):
            GrayImage(np.array([[0.0, 1.2]]))
        with pytest.raises(ValueError):
            GrayImage(np.array([[-0.1, 0.5]]))
        with pytest.raises(ValueError):
            GrayImage(np.array([[np.nan, 0.5]]))

    def test_gray_image_shape(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros(5))

    def test_pattern_dots_in_bounds(self):
        img = GrayImage(np.zeros((10, 10)))
        Pattern(image=img, dots=np.array([[0.0, 0.0], [9.0, 9.0]]))
        with pytest.raises(ValueError):
            Pattern(image=img, dots=np.array([[9.5, 3.0]]))

    def test_disparity_map_checks(self):
        with pytest.raises(ValueError):
            DisparityMap(values=np.zeros((3, 3)), valid=np.ones((3, 4), bool))
        bad = np.zeros((3, 3))
        bad[1, 1] = np.inf
        with pytest.raises(ValueError):
            DisparityMap(values=bad, valid=np.ones((3, 3), bool))
        # non-finite values behind an invalid mask are fine
        DisparityMap(values=bad, valid=np.zeros((3, 3), bool))

    def test_estimator_params_finite(self):
        with pytest.raises(ValueError):
            EstimatorParams(grid=np.array([[1.0, np.nan]]))
