"""Scalar Kalman filtering and trajectory-to-pattern matching."""

import math

import numpy as np
import pytest

from patternflow.core import DisparityMap, GrayImage, Pattern, Point2
from patternflow.matcher import (KalmanState, MatcherConfig, dump_matches,
                                 kf_update, match_pattern, measure,
                                 Correspondence)


class TestMeasure:
    def test_basic_warp(self):
        disp = DisparityMap(values=np.full((20, 60), 30.0),
                            valid=np.ones((20, 60), bool))
        z = measure(Point2(50.0, 10.0), disp)
        assert z == pytest.approx(20.0)

    def test_invalid_support_returns_none(self):
        valid = np.ones((20, 60), bool)
        valid[10, 50] = False
        disp = DisparityMap(values=np.full((20, 60), 30.0), valid=valid)
        assert measure(Point2(50.2, 10.2), disp) is None
        assert measure(Point2(30.0, 5.0), disp) is not None

    def test_out_of_bounds(self):
        disp = DisparityMap(values=np.full((8, 8), 3.0), valid=np.ones((8, 8), bool))
        assert measure(Point2(-1.0, 2.0), disp) is None
        assert measure(Point2(7.5, 2.0), disp) is None

    def test_gt_estimator_recovers_projector_coordinate(self, pattern,
                                                        static_bundle):
        # with the estimator at ground truth, z lands on the dot's u_x
        disp = static_bundle.disparity[0]
        errors = []
        for dot_id, pts in static_bundle.flows.items():
            t, x, y = pts[0]
            z = measure(Point2(x, y), disp)
            if z is not None:
                errors.append(abs(z - pattern.dots[dot_id, 0]))
        assert len(errors) > 100
        assert max(errors) <= 0.5


class TestKalman:
    def test_closed_form_three_measurements(self):
        st = KalmanState()
        for z in (10.0, 12.0, 11.0):
            st = kf_update(st, z, q=0.0, r=1.0)
        assert st.mu == pytest.approx(11.0, abs=1e-12)
        assert st.var == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert st.n_meas == 3

    def test_first_measurement_initializes(self):
        st = kf_update(KalmanState(), 42.0, q=0.0, r=2.5)
        assert st.mu == 42.0 and st.var == 2.5 and st.n_meas == 1

    def test_zero_innovation_shrinks_variance(self):
        st = kf_update(KalmanState(), 5.0, q=0.0, r=1.0)
        st2 = kf_update(st, 5.0, q=0.0, r=1.0)
        assert st2.mu == 5.0
        assert st2.var < st.var

    def test_running_mean_property(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            zs = rng.uniform(0, 100, n)
            st = KalmanState()
            for z in zs:
                st = kf_update(st, float(z), q=0.0, r=1.0)
            assert abs(st.mu - zs.mean()) < 1e-9
            assert abs(st.var - 1.0 / n) < 1e-9

    def test_nonfinite_rejected(self):
        st = kf_update(KalmanState(), 10.0, q=0.0, r=1.0)
        assert kf_update(st, float("nan"), q=0.0, r=1.0) is st
        assert kf_update(st, float("inf"), q=0.0, r=1.0) is st

    def test_process_noise_inflates(self):
        st = kf_update(KalmanState(), 10.0, q=0.0, r=1.0)
        st_q = kf_update(st, 10.0, q=0.5, r=1.0)
        st_0 = kf_update(st, 10.0, q=0.0, r=1.0)
        assert st_q.var > st_0.var

    def test_bad_params(self):
        with pytest.raises(ValueError):
            kf_update(KalmanState(), 1.0, q=-0.1, r=1.0)
        with pytest.raises(ValueError):
            kf_update(KalmanState(), 1.0, q=0.0, r=0.0)
        with pytest.raises(ValueError):
            MatcherConfig(measurement_noise=0.0)


def _toy_pattern(dot_list):
    img = GrayImage(np.zeros((64, 64)))
    return Pattern(image=img, dots=np.asarray(dot_list, dtype=float))


class TestMatchPattern:
    def test_exact_hit(self):
        pat = _toy_pattern([(10.0, 5.0), (30.0, 5.0), (20.0, 40.0)])
        st = kf_update(KalmanState(), 30.0, q=0.0, r=1.0)
        c = match_pattern(st, row=5.0, pattern=pat, row_tol=1.5, traj_id=7)
        assert c is not None and c.dot_id == 1 and c.traj_id == 7
        assert c.mu == 30.0 and c.n_meas == 1

    def test_midway_rejected(self):
        pat = _toy_pattern([(10.0, 5.0), (30.0, 5.0)])
        st = kf_update(KalmanState(), 20.0, q=0.0, r=1.0)
        assert match_pattern(st, 5.0, pat, 1.5) is None

    def test_row_incompatibility(self):
        pat = _toy_pattern([(10.0, 40.0)])
        st = kf_update(KalmanState(), 10.0, q=0.0, r=1.0)
        assert match_pattern(st, 5.0, pat, 1.5) is None

    def test_single_row_dot_has_no_gap_limit(self):
        pat = _toy_pattern([(10.0, 5.0), (20.0, 40.0)])
        st = kf_update(KalmanState(), 17.0, q=0.0, r=1.0)
        c = match_pattern(st, 5.0, pat, 1.5)
        assert c is not None and c.dot_id == 0

    def test_order_invariance_with_zero_process_noise(self):
        pat = _toy_pattern([(10.0, 5.0), (30.0, 5.0)])
        zs = [29.0, 30.5, 30.2, 29.8]
        ids = set()
        for perm in ([0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]):
            st = KalmanState()
            for i in perm:
                st = kf_update(st, zs[i], q=0.0, r=1.0)
            ids.add(match_pattern(st, 5.0, pat, 1.5).dot_id)
        assert ids == {1}

    def test_requires_measurement(self):
        pat = _toy_pattern([(10.0, 5.0)])
        with pytest.raises(ValueError):
            match_pattern(KalmanState(), 5.0, pat, 1.5)


def test_dump_matches(tmp_path):
    rows = [Correspondence(traj_id=2, dot_id=5, mu=12.5, sigma=0.25, n_meas=4),
            Correspondence(traj_id=1, dot_id=3, mu=7.0, sigma=1.0, n_meas=2)]
    path = tmp_path / "m.csv"
    dump_matches(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "traj_id,dot_id,mu,sigma,n_meas"
    assert lines[1].startswith("1,3,7,")
    assert lines[2].startswith("2,5,12.5,")
