"""Pixel-level hot loops.

Every kernel exists twice: a ``*_numba`` version compiled with ``@njit`` and a
``*_numpy`` version that is vectorized numpy. The public name is bound to one
of them at import time according to :mod:`cropseg._accel`. Both versions must
produce identical results; the test-suite checks that.

Coordinate convention used throughout the package: continuous image
coordinates with origin at the top-left corner, pixel ``(row i, col j)``
covering ``[j, j+1) x [i, i+1)`` with its center at ``(j + 0.5, i + 0.5)``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# even-odd polygon fill on pixel centers
# --------------------------------------------------------------------------

def _fill_polygon_py(xs, ys, height, width):
    out = np.zeros((height, width), dtype=np.uint8)
    n = xs.shape[0]
    crossings = np.empty(n, dtype=np.float64)
    ymin = ys.min()
    ymax = ys.max()
    i_lo = max(int(math.floor(ymin - 0.5)), 0)
    i_hi = min(int(math.ceil(ymax - 0.5)) + 1, height)
    for i in range(i_lo, i_hi):
        yc = i + 0.5
        m = 0
        k = n - 1
        for e in range(n):
            xi = xs[e]
            yi = ys[e]
            xj = xs[k]
            yj = ys[k]
            if (yi > yc) != (yj > yc):
                crossings[m] = (xj - xi) * (yc - yi) / (yj - yi) + xi
                m += 1
            k = e
        if m == 0:
            continue
        row = np.sort(crossings[:m])
        for a in range(0, m - 1, 2):
            # odd number of crossings strictly right of the center
            # <=> row[a] <= j + 0.5 < row[a + 1]
            j0 = int(math.ceil(row[a] - 0.5))
            j1 = int(math.ceil(row[a + 1] - 0.5))
            if j0 < 0:
                j0 = 0
            if j1 > width:
                j1 = width
            for j in range(j0, j1):
                out[i, j] ^= 1
    return out


fill_polygon_numba = njit(_fill_polygon_py)


def fill_polygon_numpy(xs, ys, height, width):
    out = np.zeros((height, width), dtype=np.uint8)
    i_lo = max(int(math.floor(ys.min() - 0.5)), 0)
    i_hi = min(int(math.ceil(ys.max() - 0.5)) + 1, height)
    if i_hi <= i_lo:
        return out
    yc = (np.arange(i_lo, i_hi, dtype=np.float64) + 0.5)[:, None]
    xc = (np.arange(width, dtype=np.float64) + 0.5)[None, :]
    inside = np.zeros((i_hi - i_lo, width), dtype=bool)
    n = xs.shape[0]
    k = n - 1
    for e in range(n):
        xi, yi, xj, yj = xs[e], ys[e], xs[k], ys[k]
        k = e
        if yi == yj:
            continue
        straddle = (yi > yc) != (yj > yc)
        xint = (xj - xi) * (yc - yi) / (yj - yi) + xi
        inside ^= straddle & (xc < xint)
    out[i_lo:i_hi] = inside
    return out


# --------------------------------------------------------------------------
# bilinear sampling of a square window with edge replication
# --------------------------------------------------------------------------

def _axis_taps(origin, step, n_out, n_src):
    # source sample position for each output pixel center, in pixel-index units
    pos = origin + (np.arange(n_out, dtype=np.float64) + 0.5) * step - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64)
    hi = lo + 1
    return np.clip(lo, 0, n_src - 1), np.clip(hi, 0, n_src - 1), frac


def _sample_bilinear_py(img, x0, y0, step, n_rows, n_cols):
    h = img.shape[0]
    w = img.shape[1]
    c = img.shape[2]
    out = np.empty((n_rows, n_cols, c), dtype=np.float64)
    cx0 = np.empty(n_cols, dtype=np.int64)
    cx1 = np.empty(n_cols, dtype=np.int64)
    fx = np.empty(n_cols, dtype=np.float64)
    for u in range(n_cols):
        p = x0 + (u + 0.5) * step - 0.5
        f = math.floor(p)
        fx[u] = p - f
        a = int(f)
        b = a + 1
        cx0[u] = min(max(a, 0), w - 1)
        cx1[u] = min(max(b, 0), w - 1)
    for v in range(n_rows):
        p = y0 + (v + 0.5) * step - 0.5
        f = math.floor(p)
        fy = p - f
        a = int(f)
        r0 = min(max(a, 0), h - 1)
        r1 = min(max(a + 1, 0), h - 1)
        for u in range(n_cols):
            wx = fx[u]
            for ch in range(c):
                top = img[r0, cx0[u], ch] * (1.0 - wx) + img[r0, cx1[u], ch] * wx
                bot = img[r1, cx0[u], ch] * (1.0 - wx) + img[r1, cx1[u], ch] * wx
                out[v, u, ch] = top * (1.0 - fy) + bot * fy
    return out


sample_bilinear_numba = njit(_sample_bilinear_py)


def sample_bilinear_numpy(img, x0, y0, step, n_rows, n_cols):
    h, w = img.shape[:2]
    c0, c1, wx = _axis_taps(x0, step, n_cols, w)
    r0, r1, wy = _axis_taps(y0, step, n_rows, h)
    wx = wx[None, :, None]
    top = img[r0][:, c0] * (1.0 - wx) + img[r0][:, c1] * wx
    bot = img[r1][:, c0] * (1.0 - wx) + img[r1][:, c1] * wx
    wy = wy[:, None, None]
    return top * (1.0 - wy) + bot * wy


# --------------------------------------------------------------------------
# foreground moments of a binary mask
# --------------------------------------------------------------------------

def _mask_moments_py(mask):
    n = 0
    sx = 0.0
    sy = 0.0
    for i in range(mask.shape[0]):
        for j in range(mask.shape[1]):
            if mask[i, j]:
                n += 1
                sx += j + 0.5
                sy += i + 0.5
    return n, sx, sy


mask_moments_numba = njit(_mask_moments_py)


def mask_moments_numpy(mask):
    rows, cols = np.nonzero(mask)
    n = rows.size
    return n, float(np.sum(cols + 0.5)), float(np.sum(rows + 0.5))


if USE_NUMBA:
    _fill = fill_polygon_numba
    _sample = sample_bilinear_numba
    _moments = mask_moments_numba
else:
    _fill = fill_polygon_numpy
    _sample = sample_bilinear_numpy
    _moments = mask_moments_numpy


def fill_polygon(xs, ys, height, width):
    """Even-odd fill: 1 on pixels whose centers are inside the polygon."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    return _fill(xs, ys, int(height), int(width))


def sample_bilinear(img, x0, y0, step, n_rows, n_cols=None):
    """Resample ``[x0, x0 + step*n_cols) x [y0, y0 + step*n_rows)`` onto an output grid.

    ``img`` is ``(H, W, C)``; the result is float64 ``(n_rows, n_cols, C)``.
    Samples outside the image replicate the nearest edge pixel.
    """
    if n_cols is None:
        n_cols = n_rows
    img = np.ascontiguousarray(img, dtype=np.float64)
    return _sample(img, float(x0), float(y0), float(step), int(n_rows), int(n_cols))


def sample_nearest(arr, x0, y0, step, n_rows, n_cols=None):
    """Nearest-neighbour counterpart of :func:`sample_bilinear` for label maps."""
    if n_cols is None:
        n_cols = n_rows
    h, w = arr.shape[:2]
    cols = np.floor(x0 + (np.arange(n_cols) + 0.5) * step).astype(np.int64)
    rows = np.floor(y0 + (np.arange(n_rows) + 0.5) * step).astype(np.int64)
    return arr[np.clip(rows, 0, h - 1)][:, np.clip(cols, 0, w - 1)]


def mask_moments(mask):
    """Return ``(count, sum_x, sum_y)`` of foreground pixel centers."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    n, sx, sy = _moments(mask)
    return int(n), float(sx), float(sy)
