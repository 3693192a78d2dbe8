# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled mirror of the NumPy kernel backend (`_numpy.py`).

Same functions, same semantics, same float64 arithmetic; only the loops are
typed C.  Keep any behavioral change in both files.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor, sqrt

cnp.import_array()


cdef inline double _sign(double x) nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef inline void _cell1d(double coord, Py_ssize_t n, Py_ssize_t* i0,
                         Py_ssize_t* i1, double* frac) nogil:
    cdef Py_ssize_t lo = <Py_ssize_t>floor(coord)
    cdef Py_ssize_t cap = n - 2
    if cap < 0:
        cap = 0
    if lo < 0:
        lo = 0
    elif lo > cap:
        lo = cap
    i0[0] = lo
    i1[0] = lo + 1 if lo + 1 < n else n - 1
    frac[0] = coord - lo


def bilinear_sample(img, xs, ys):
    """Sample `img` at subpixel points. Out-of-bounds points give (0.0, False)."""
    cdef double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    cdef double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    vals = np.zeros(n, dtype=np.float64)
    valid = np.zeros(n, dtype=bool)
    cdef double[::1] out = vals
    cdef cnp.uint8_t[::1] ok = valid.view(np.uint8)
    cdef Py_ssize_t i, x0, x1, y0, y1
    cdef double fx, fy, top, bot
    with nogil:
        for i in range(n):
            if x[i] < 0.0 or x[i] > w - 1.0 or y[i] < 0.0 or y[i] > h - 1.0:
                continue
            _cell1d(x[i], w, &x0, &x1, &fx)
            _cell1d(y[i], h, &y0, &y1, &fy)
            top = (1.0 - fx) * im[y0, x0] + fx * im[y0, x1]
            bot = (1.0 - fx) * im[y1, x0] + fx * im[y1, x1]
            out[i] = (1.0 - fy) * top + fy * bot
            ok[i] = 1
    return vals, valid


def warp_pattern(pattern, disp, disp_valid):
    """out(x, y) = pattern(x - disp(x, y), y); invalid pixels flagged False."""
    cdef double[:, ::1] pat = np.ascontiguousarray(pattern, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(disp, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] dv = np.ascontiguousarray(disp_valid, dtype=np.uint8)
    cdef Py_ssize_t h = d.shape[0], w = d.shape[1]
    cdef Py_ssize_t ph = pat.shape[0], pw = pat.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    valid_arr = np.zeros((h, w), dtype=bool)
    cdef double[:, ::1] out = out_arr
    cdef cnp.uint8_t[:, ::1] ok = valid_arr.view(np.uint8)
    cdef Py_ssize_t yy, xx, x0, x1, y0, y1
    cdef double sx, fx, fy, top, bot
    with nogil:
        for yy in range(h):
            for xx in range(w):
                if not dv[yy, xx]:
                    continue
                sx = xx - d[yy, xx]
                if sx < 0.0 or sx > pw - 1.0 or yy > ph - 1:
                    continue
                _cell1d(sx, pw, &x0, &x1, &fx)
                _cell1d(<double>yy, ph, &y0, &y1, &fy)
                top = (1.0 - fx) * pat[y0, x0] + fx * pat[y0, x1]
                bot = (1.0 - fx) * pat[y1, x0] + fx * pat[y1, x1]
                out[yy, xx] = (1.0 - fy) * top + fy * bot
                ok[yy, xx] = 1
    return out_arr, valid_arr


def photometric_term(frame, pattern, disp, disp_valid):
    """(sum |frame - warped| over valid, valid count, unnormalized gradient)."""
    cdef double[:, ::1] fr = np.ascontiguousarray(frame, dtype=np.float64)
    cdef double[:, ::1] pat = np.ascontiguousarray(pattern, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(disp, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] dv = np.ascontiguousarray(disp_valid, dtype=np.uint8)
    cdef Py_ssize_t h = d.shape[0], w = d.shape[1]
    cdef Py_ssize_t ph = pat.shape[0], pw = pat.shape[1]
    grad_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double total = 0.0
    cdef Py_ssize_t count = 0
    cdef Py_ssize_t yy, xx, x0, x1, y0, y1
    cdef double sx, fx, fy, top, bot, warped, slope, r
    with nogil:
        for yy in range(h):
            for xx in range(w):
                if not dv[yy, xx]:
                    continue
                sx = xx - d[yy, xx]
                if sx < 0.0 or sx > pw - 1.0 or yy > ph - 1:
                    continue
                _cell1d(sx, pw, &x0, &x1, &fx)
                _cell1d(<double>yy, ph, &y0, &y1, &fy)
                top = (1.0 - fx) * pat[y0, x0] + fx * pat[y0, x1]
                bot = (1.0 - fx) * pat[y1, x0] + fx * pat[y1, x1]
                warped = (1.0 - fy) * top + fy * bot
                slope = ((1.0 - fy) * (pat[y0, x1] - pat[y0, x0])
                         + fy * (pat[y1, x1] - pat[y1, x0]))
                r = fr[yy, xx] - warped
                total += r if r >= 0.0 else -r
                count += 1
                grad[yy, xx] = _sign(r) * slope
    return float(total), int(count), grad_arr


def sparse_l1_term(grid, xs, ys, target, weight):
    """Weighted L1 of bilinear grid samples vs sparse targets, plus gradient."""
    cdef double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(target, dtype=np.float64)
    cdef double[::1] wt = np.ascontiguousarray(weight, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t h = g.shape[0], w = g.shape[1]
    grad_arr = np.zeros((h, w), dtype=np.float64)
    used_arr = np.zeros(n, dtype=bool)
    cdef double[:, ::1] grad = grad_arr
    cdef cnp.uint8_t[::1] used = used_arr.view(np.uint8)
    cdef double wabs = 0.0, wsum = 0.0
    cdef Py_ssize_t i, x0, x1, y0, y1
    cdef double fx, fy, w00, w01, w10, w11, est, r, s
    with nogil:
        for i in range(n):
            if x[i] < 0.0 or x[i] > w - 1.0 or y[i] < 0.0 or y[i] > h - 1.0:
                continue
            used[i] = 1
            _cell1d(x[i], w, &x0, &x1, &fx)
            _cell1d(y[i], h, &y0, &y1, &fy)
            w00 = (1.0 - fy) * (1.0 - fx)
            w01 = (1.0 - fy) * fx
            w10 = fy * (1.0 - fx)
            w11 = fy * fx
            est = (w00 * g[y0, x0] + w01 * g[y0, x1]
                   + w10 * g[y1, x0] + w11 * g[y1, x1])
            r = est - t[i]
            wabs += wt[i] * (r if r >= 0.0 else -r)
            wsum += wt[i]
            s = wt[i] * _sign(r)
            grad[y0, x0] += s * w00
            grad[y0, x1] += s * w01
            grad[y1, x0] += s * w10
            grad[y1, x1] += s * w11
    return float(wabs), float(wsum), grad_arr, used_arr


def tv_term(grid):
    """Anisotropic TV: (sum of |diffs|, term count, subgradient)."""
    cdef double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t h = g.shape[0], w = g.shape[1]
    grad_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double total = 0.0
    cdef Py_ssize_t yy, xx
    cdef double dif, s
    with nogil:
        for yy in range(h):
            for xx in range(w - 1):
                dif = g[yy, xx + 1] - g[yy, xx]
                total += dif if dif >= 0.0 else -dif
                s = _sign(dif)
                grad[yy, xx + 1] += s
                grad[yy, xx] -= s
        for yy in range(h - 1):
            for xx in range(w):
                dif = g[yy + 1, xx] - g[yy, xx]
                total += dif if dif >= 0.0 else -dif
                s = _sign(dif)
                grad[yy + 1, xx] += s
                grad[yy, xx] -= s
    return float(total), int(h * (w - 1) + (h - 1) * w), grad_arr


def quad_smooth_term(grid):
    """Quadratic smoothness: (sum of squared diffs, term count, Laplacian grad)."""
    cdef double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t h = g.shape[0], w = g.shape[1]
    grad_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double total = 0.0
    cdef Py_ssize_t yy, xx
    cdef double dif
    with nogil:
        for yy in range(h):
            for xx in range(w - 1):
                dif = g[yy, xx + 1] - g[yy, xx]
                total += dif * dif
                grad[yy, xx + 1] += 2.0 * dif
                grad[yy, xx] -= 2.0 * dif
        for yy in range(h - 1):
            for xx in range(w):
                dif = g[yy + 1, xx] - g[yy, xx]
                total += dif * dif
                grad[yy + 1, xx] += 2.0 * dif
                grad[yy, xx] -= 2.0 * dif
    return float(total), int(h * (w - 1) + (h - 1) * w), grad_arr


def splat_add(img, xs, ys, double amplitude, double sigma, double trunc_radius):
    """Add truncated Gaussian splats, in place, at subpixel centers."""
    cdef double[:, ::1] im = img  # must be the caller's buffer: in-place
    cdef double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef double r2max = trunc_radius * trunc_radius
    cdef Py_ssize_t i, gx0, gx1, gy0, gy1, gx, gy
    cdef double r2
    with nogil:
        for i in range(n):
            gx0 = <Py_ssize_t>ceil(x[i] - trunc_radius)
            gx1 = <Py_ssize_t>floor(x[i] + trunc_radius)
            gy0 = <Py_ssize_t>ceil(y[i] - trunc_radius)
            gy1 = <Py_ssize_t>floor(y[i] + trunc_radius)
            if gx0 < 0:
                gx0 = 0
            if gy0 < 0:
                gy0 = 0
            if gx1 > w - 1:
                gx1 = w - 1
            if gy1 > h - 1:
                gy1 = h - 1
            for gy in range(gy0, gy1 + 1):
                for gx in range(gx0, gx1 + 1):
                    r2 = (gx - x[i]) * (gx - x[i]) + (gy - y[i]) * (gy - y[i])
                    if r2 <= r2max:
                        im[gy, gx] += amplitude * exp(-r2 * inv2s2)
