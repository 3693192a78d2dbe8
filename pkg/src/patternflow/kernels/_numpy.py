"""Pure-NumPy implementations of the per-pixel hot kernels.

This is the reference backend; `_native.pyx` mirrors it operation for
operation.  Both must agree to float64 round-off on the same inputs, which
`tests/test_kernels.py` enforces.

Conventions shared by every kernel:
  * images and grids are (H, W) float64 arrays,
  * a sample point is in-bounds iff 0 <= x <= W-1 and 0 <= y <= H-1,
  * bilinear cells are clamped so lattice points on the far edge still
    interpolate exactly,
  * sign(0) = 0 wherever an L1 subgradient is taken.
"""

from __future__ import annotations

import numpy as np


def _cell(coord: np.ndarray, n: int):
    """Clamped bilinear cell (lower index, upper index, fraction) on one axis."""
    i0 = np.floor(coord).astype(np.int64)
    np.clip(i0, 0, max(n - 2, 0), out=i0)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, coord - i0


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Sample `img` at subpixel points. Out-of-bounds points give (0.0, False)."""
    img = np.asarray(img, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = img.shape
    valid = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)
    xq = np.where(valid, xs, 0.0)
    yq = np.where(valid, ys, 0.0)
    x0, x1, fx = _cell(xq, w)
    y0, y1, fy = _cell(yq, h)
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    vals = (1.0 - fy) * top + fy * bot
    return np.where(valid, vals, 0.0), valid


def warp_pattern(pattern: np.ndarray, disp: np.ndarray, disp_valid: np.ndarray):
    """Warp the projector pattern into camera space through a disparity field.

    out(x, y) = pattern(x - disp(x, y), y).  Pixels with invalid disparity or
    an out-of-bounds source sample come back as (0.0, False).
    """
    pattern = np.asarray(pattern, dtype=np.float64)
    disp = np.asarray(disp, dtype=np.float64)
    h, w = disp.shape
    ys, xs = np.mgrid[0:h, 0:w]
    sx = xs.astype(np.float64) - disp
    vals, ok = bilinear_sample(pattern, sx.ravel(), ys.astype(np.float64).ravel())
    valid = ok.reshape(h, w) & np.asarray(disp_valid, dtype=bool)
    out = np.where(valid, vals.reshape(h, w), 0.0)
    return out, valid


def photometric_term(frame: np.ndarray, pattern: np.ndarray, disp: np.ndarray,
                     disp_valid: np.ndarray):
    """L1 photometric residual of one frame against the warped pattern.

    Returns (sum of |frame - warped| over valid pixels, valid count,
    unnormalized per-pixel gradient d(sum)/d(disp)).  The gradient at a valid
    pixel is sign(frame - warped) times the horizontal slope of the bilinear
    pattern interpolant at the sampled location; callers divide by the valid
    count to differentiate the mean.
    """
    frame = np.asarray(frame, dtype=np.float64)
    pattern = np.asarray(pattern, dtype=np.float64)
    disp = np.asarray(disp, dtype=np.float64)
    h, w = disp.shape
    ph, pw = pattern.shape
    ys, xs = np.mgrid[0:h, 0:w]
    sx = xs.astype(np.float64) - disp
    sy = ys.astype(np.float64)
    valid = (sx >= 0.0) & (sx <= pw - 1.0) & (sy <= ph - 1.0)
    valid &= np.asarray(disp_valid, dtype=bool)
    sxq = np.where(valid, sx, 0.0)
    syq = np.where(valid, sy, 0.0)
    x0, x1, fx = _cell(sxq.ravel(), pw)
    y0, y1, fy = _cell(syq.ravel(), ph)
    top = (1.0 - fx) * pattern[y0, x0] + fx * pattern[y0, x1]
    bot = (1.0 - fx) * pattern[y1, x0] + fx * pattern[y1, x1]
    warped = ((1.0 - fy) * top + fy * bot).reshape(h, w)
    slope = ((1.0 - fy) * (pattern[y0, x1] - pattern[y0, x0])
             + fy * (pattern[y1, x1] - pattern[y1, x0])).reshape(h, w)
    r = frame - warped
    r = np.where(valid, r, 0.0)
    grad = np.where(valid, np.sign(r) * slope, 0.0)
    return float(np.abs(r).sum()), int(valid.sum()), grad


def sparse_l1_term(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                   target: np.ndarray, weight: np.ndarray):
    """Weighted L1 residual of bilinear grid samples against sparse targets.

    Returns (sum of w*|grid(x,y) - target|, sum of w, unnormalized gradient
    scattered onto the four support pixels of each point, per-point used
    mask).  Points sampling outside the grid are skipped entirely.
    """
    grid = np.asarray(grid, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    h, w = grid.shape
    used = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)
    grad = np.zeros_like(grid)
    if not used.any():
        return 0.0, 0.0, grad, used
    x = xs[used]
    y = ys[used]
    t = target[used]
    wt = weight[used]
    x0, x1, fx = _cell(x, w)
    y0, y1, fy = _cell(y, h)
    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx
    est = (w00 * grid[y0, x0] + w01 * grid[y0, x1]
           + w10 * grid[y1, x0] + w11 * grid[y1, x1])
    r = est - t
    s = wt * np.sign(r)
    np.add.at(grad, (y0, x0), s * w00)
    np.add.at(grad, (y0, x1), s * w01)
    np.add.at(grad, (y1, x0), s * w10)
    np.add.at(grad, (y1, x1), s * w11)
    return float((wt * np.abs(r)).sum()), float(wt.sum()), grad, used


def tv_term(grid: np.ndarray):
    """Anisotropic total variation: sum of |horizontal| + |vertical| diffs.

    Returns (sum, number of difference terms, unnormalized subgradient).
    """
    grid = np.asarray(grid, dtype=np.float64)
    dh = grid[:, 1:] - grid[:, :-1]
    dv = grid[1:, :] - grid[:-1, :]
    total = float(np.abs(dh).sum() + np.abs(dv).sum())
    n_terms = dh.size + dv.size
    grad = np.zeros_like(grid)
    sh = np.sign(dh)
    sv = np.sign(dv)
    grad[:, 1:] += sh
    grad[:, :-1] -= sh
    grad[1:, :] += sv
    grad[:-1, :] -= sv
    return total, int(n_terms), grad


def quad_smooth_term(grid: np.ndarray):
    """Quadratic smoothness: sum of squared forward differences.

    Returns (sum, number of difference terms, unnormalized gradient).  The
    gradient is a discrete Laplacian, so minimizing this term diffuses
    values across flat regions (unlike the TV subgradient, which cannot
    move a flat wall).
    """
    grid = np.asarray(grid, dtype=np.float64)
    dh = grid[:, 1:] - grid[:, :-1]
    dv = grid[1:, :] - grid[:-1, :]
    total = float((dh * dh).sum() + (dv * dv).sum())
    n_terms = dh.size + dv.size
    grad = np.zeros_like(grid)
    grad[:, 1:] += 2.0 * dh
    grad[:, :-1] -= 2.0 * dh
    grad[1:, :] += 2.0 * dv
    grad[:-1, :] -= 2.0 * dv
    return total, int(n_terms), grad


def splat_add(img: np.ndarray, xs: np.ndarray, ys: np.ndarray,
              amplitude: float, sigma: float, trunc_radius: float):
    """Add truncated Gaussian splats, in place, at subpixel centers."""
    h, w = img.shape
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    for x, y in zip(np.asarray(xs, float), np.asarray(ys, float)):
        gx0 = max(int(np.ceil(x - trunc_radius)), 0)
        gx1 = min(int(np.floor(x + trunc_radius)), w - 1)
        gy0 = max(int(np.ceil(y - trunc_radius)), 0)
        gy1 = min(int(np.floor(y + trunc_radius)), h - 1)
        if gx0 > gx1 or gy0 > gy1:
            continue
        gy, gx = np.mgrid[gy0:gy1 + 1, gx0:gx1 + 1]
        r2 = (gx - x) ** 2 + (gy - y) ** 2
        patch = amplitude * np.exp(-r2 * inv2s2)
        patch[r2 > trunc_radius * trunc_radius] = 0.0
        img[gy0:gy1 + 1, gx0:gx1 + 1] += patch
