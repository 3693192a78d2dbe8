"""Backend parity: the compiled kernels must match the NumPy reference."""

import numpy as np
import pytest

from patternflow.kernels import available_backends, get_backend

BACKENDS = available_backends()
PAIRS = pytest.mark.skipif(len(BACKENDS) < 2,
                           reason="compiled backend not built")


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(42)
    h, w = 23, 31
    img = rng.random((h, w))
    disp = rng.uniform(-3.0, 8.0, (h, w))
    disp_valid = rng.random((h, w)) > 0.1
    n = 400
    xs = rng.uniform(-3.0, w + 2.0, n)
    ys = rng.uniform(-3.0, h + 2.0, n)
    target = rng.uniform(0.0, 10.0, n)
    weight = rng.uniform(0.0, 1.0, n)
    return dict(img=img, disp=disp, disp_valid=disp_valid, xs=xs, ys=ys,
                target=target, weight=weight)


@PAIRS
class TestParity:
    def setup_method(self):
        self.np_k = get_backend("numpy")
        self.nat = get_backend("native")

    def test_bilinear_sample(self, data):
        v1, ok1 = self.np_k.bilinear_sample(data["img"], data["xs"], data["ys"])
        v2, ok2 = self.nat.bilinear_sample(data["img"], data["xs"], data["ys"])
        assert np.array_equal(ok1, ok2)
        np.testing.assert_allclose(v1, v2, rtol=0, atol=1e-14)

    def test_warp_pattern(self, data):
        o1, k1 = self.np_k.warp_pattern(data["img"], data["disp"], data["disp_valid"])
        o2, k2 = self.nat.warp_pattern(data["img"], data["disp"], data["disp_valid"])
        assert np.array_equal(k1, k2)
        np.testing.assert_allclose(o1, o2, rtol=0, atol=1e-14)

    def test_photometric_term(self, data):
        rng = np.random.default_rng(7)
        frame = rng.random(data["img"].shape)
        s1, n1, g1 = self.np_k.photometric_term(frame, data["img"],
                                                data["disp"], data["disp_valid"])
        s2, n2, g2 = self.nat.photometric_term(frame, data["img"],
                                               data["disp"], data["disp_valid"])
        assert n1 == n2
        assert s1 == pytest.approx(s2, rel=1e-12)
        np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-14)

    def test_sparse_l1_term(self, data):
        grid = np.random.default_rng(8).uniform(0, 10, data["img"].shape)
        a1 = self.np_k.sparse_l1_term(grid, data["xs"], data["ys"],
                                      data["target"], data["weight"])
        a2 = self.nat.sparse_l1_term(grid, data["xs"], data["ys"],
                                     data["target"], data["weight"])
        assert a1[0] == pytest.approx(a2[0], rel=1e-12)
        assert a1[1] == pytest.approx(a2[1], rel=1e-12)
        np.testing.assert_allclose(a1[2], a2[2], rtol=0, atol=1e-12)
        assert np.array_equal(a1[3], a2[3])

    def test_tv_and_quad_terms(self, data):
        grid = np.random.default_rng(9).uniform(0, 10, (17, 13))
        for name in ("tv_term", "quad_smooth_term"):
            s1, n1, g1 = getattr(self.np_k, name)(grid)
            s2, n2, g2 = getattr(self.nat, name)(grid)
            assert n1 == n2
            assert s1 == pytest.approx(s2, rel=1e-12)
            np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-12)

    def test_splat_add(self):
        rng = np.random.default_rng(10)
        xs = rng.uniform(0, 30, 20)
        ys = rng.uniform(0, 20, 20)
        img1 = np.zeros((20, 30))
        img2 = np.zeros((20, 30))
        self.np_k.splat_add(img1, xs, ys, 1.0, 1.2, 4.8)
        self.nat.splat_add(img2, xs, ys, 1.0, 1.2, 4.8)
        np.testing.assert_allclose(img1, img2, rtol=0, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
class TestSemantics:
    def test_edge_inclusive(self, backend):
        k = get_backend(backend)
        img = np.arange(12, dtype=float).reshape(3, 4)
        vals, ok = k.bilinear_sample(img, np.array([3.0, 3.0001]),
                                     np.array([2.0, 1.0]))
        assert ok[0] and not ok[1]
        assert vals[0] == pytest.approx(11.0)

    def test_warp_identity_on_zero_disparity(self, backend):
        k = get_backend(backend)
        rng = np.random.default_rng(3)
        img = rng.random((8, 9))
        out, valid = k.warp_pattern(img, np.zeros((8, 9)), np.ones((8, 9), bool))
        assert valid.all()
        np.testing.assert_allclose(out, img, atol=1e-14)

    def test_tv_zero_on_flat(self, backend):
        k = get_backend(backend)
        s, n, g = k.tv_term(np.full((5, 6), 3.7))
        assert s == 0.0 and n == 5 * 5 + 4 * 6
        assert (g == 0).all()
