import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cropseg import kernels
from cropseg._accel import NUMBA_AVAILABLE
from oracles import brute_force_fill

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def random_polygon(rng, n_max=9, size=40):
    n = int(rng.integers(3, n_max + 1))
    xs = rng.uniform(-5, size + 5, n)
    ys = rng.uniform(-5, size + 5, n)
    return xs, ys


@needs_numba
def test_fill_polygon_backends_agree():
    rng = np.random.default_rng(0)
    for _ in range(200):
        xs, ys = random_polygon(rng)
        a = kernels.fill_polygon_numba(xs, ys, 40, 40)
        b = kernels.fill_polygon_numpy(xs, ys, 40, 40)
        np.testing.assert_array_equal(a, b)


@needs_numba
def test_fill_polygon_backends_agree_on_grid_aligned_vertices():
    # vertices on pixel edges and centers hit the tie-breaking paths
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(3, 8))
        xs = rng.integers(0, 33, n) / 2.0
        ys = rng.integers(0, 33, n) / 2.0
        a = kernels.fill_polygon_numba(xs, ys, 16, 16)
        b = kernels.fill_polygon_numpy(xs, ys, 16, 16)
        np.testing.assert_array_equal(a, b)


def test_fill_polygon_matches_point_in_polygon():
    rng = np.random.default_rng(2)
    for _ in range(40):
        xs, ys = random_polygon(rng, size=20)
        got = kernels.fill_polygon(xs, ys, 20, 20)
        np.testing.assert_array_equal(got, brute_force_fill(list(zip(xs, ys)), 20, 20))


@needs_numba
def test_sample_bilinear_backends_agree():
    rng = np.random.default_rng(3)
    img = rng.random((23, 31, 3))
    for _ in range(50):
        x0, y0 = rng.uniform(-20, 40, 2)
        step = rng.uniform(0.1, 3.0)
        a = kernels.sample_bilinear_numba(img, x0, y0, step, 17, 13)
        b = kernels.sample_bilinear_numpy(img, x0, y0, step, 17, 13)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_sample_bilinear_identity_and_constant():
    rng = np.random.default_rng(4)
    img = rng.random((12, 12, 3))
    np.testing.assert_allclose(kernels.sample_bilinear(img, 0, 0, 1.0, 12), img, atol=1e-15)
    flat = np.full((5, 7, 3), 0.3)
    out = kernels.sample_bilinear(flat, -10, -10, 2.5, 9)
    np.testing.assert_allclose(out, 0.3, atol=1e-15)


def test_sample_bilinear_interpolates_linear_ramp():
    # bilinear interpolation reproduces an affine function exactly inside the image
    w = 20
    ramp = np.tile(np.arange(w, dtype=float)[None, :, None], (10, 1, 3))
    out = kernels.sample_bilinear(ramp, 2.0, 2.0, 0.5, 8)
    expected = 2.0 + (np.arange(8) + 0.5) * 0.5 - 0.5
    np.testing.assert_allclose(out[0, :, 0], expected, atol=1e-12)


def test_sample_nearest_identity():
    m = (np.random.default_rng(5).random((9, 11)) > 0.5).astype(np.uint8)
    np.testing.assert_array_equal(kernels.sample_nearest(m, 0, 0, 1.0, 9, 11), m)


@needs_numba
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_mask_moments_backends_agree(h, w, seed):
    m = (np.random.default_rng(seed).random((h, w)) > 0.6).astype(np.uint8)
    a = kernels.mask_moments_numba(m)
    b = kernels.mask_moments_numpy(m)
    assert a[0] == b[0]
    assert a[1] == pytest.approx(b[1], abs=1e-9)
    assert a[2] == pytest.approx(b[2], abs=1e-9)


def test_mask_moments_values():
    m = np.zeros((4, 4), np.uint8)
    m[1, 2] = 1
    m[3, 0] = 1
    assert kernels.mask_moments(m) == (2, 2.5 + 0.5, 1.5 + 3.5)
