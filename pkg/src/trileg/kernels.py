"""Hot numeric kernels, numba-compiled when available.

Each kernel is written once as a plain-Python loop and compiled with
``numba.njit`` unless compilation is disabled.  Set ``TRILEG_NUMBA=0`` to
force the interpreted fallback (same source, so results are bit-identical,
just slower).  ``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("TRILEG_NUMBA", "1") != "0"


def _maybe_njit(func):
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# Safety projection, batched
# ---------------------------------------------------------------------------


def _project_batch(prev, dv, v_max, dv_max, out):
    n = prev.shape[0]
    for i in range(n):
        for j in range(3):
            d = dv[i, j]
            if d > dv_max:
                d = dv_max
            elif d < -dv_max:
                d = -dv_max
            v = prev[i, j] + d
            if v > v_max:
                v = v_max
            elif v < -v_max:
                v = -v_max
            out[i, j] = v
    return out


project_batch_py = _project_batch
project_batch_jit = _maybe_njit(_project_batch) if NUMBA_ENABLED else None
_project_dispatch = project_batch_jit if NUMBA_ENABLED else project_batch_py


def project_batch(prev: np.ndarray, dv: np.ndarray, v_max: float, dv_max: float) -> np.ndarray:
    """Two-stage clamp (rate then magnitude) applied row-wise to (n, 3) arrays."""
    prev = np.ascontiguousarray(prev, dtype=np.float64)
    dv = np.ascontiguousarray(dv, dtype=np.float64)
    out = np.empty_like(prev)
    return _project_dispatch(prev, dv, float(v_max), float(dv_max), out)


# ---------------------------------------------------------------------------
# Piecewise-linear curve evaluation with constant extrapolation
# ---------------------------------------------------------------------------


def _interp_clamped(xs, ys, v):
    n = xs.shape[0]
    if v <= xs[0]:
        return ys[0]
    if v >= xs[n - 1]:
        return ys[n - 1]
    lo = 0
    for k in range(1, n):
        if v < xs[k]:
            lo = k - 1
            break
    x0 = xs[lo]
    x1 = xs[lo + 1]
    y0 = ys[lo]
    y1 = ys[lo + 1]
    return y0 + (y1 - y0) * (v - x0) / (x1 - x0)


interp_clamped_py = _interp_clamped
interp_clamped_jit = _maybe_njit(_interp_clamped) if NUMBA_ENABLED else None
interp_clamped = interp_clamped_jit if NUMBA_ENABLED else interp_clamped_py


# ---------------------------------------------------------------------------
# Rasterization primitives (pixel-center sampling, clipped to a rect)
# ---------------------------------------------------------------------------


def _fill_triangle(buf, x0, y0, x1, y1, x2, y2, r, g, b, cx0, cy0, cx1, cy1):
    # Signed doubled area; orient edge tests by its sign so vertex order
    # does not matter.
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if area == 0.0:
        return
    sign = 1.0 if area > 0.0 else -1.0
    xmin = int(max(min(x0, min(x1, x2)), float(cx0)))
    xmax = int(min(max(x0, max(x1, x2)), float(cx1 - 1)) + 1.0)
    ymin = int(max(min(y0, min(y1, y2)), float(cy0)))
    ymax = int(min(max(y0, max(y1, y2)), float(cy1 - 1)) + 1.0)
    for py in range(ymin, ymax):
        sy = py + 0.5
        for px in range(xmin, xmax):
            sx = px + 0.5
            w0 = ((x1 - x0) * (sy - y0) - (sx - x0) * (y1 - y0)) * sign
            w1 = ((x2 - x1) * (sy - y1) - (sx - x1) * (y2 - y1)) * sign
            w2 = ((x0 - x2) * (sy - y2) - (sx - x2) * (y0 - y2)) * sign
            if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                buf[py, px, 0] = r
                buf[py, px, 1] = g
                buf[py, px, 2] = b


fill_triangle_py = _fill_triangle
fill_triangle_jit = _maybe_njit(_fill_triangle) if NUMBA_ENABLED else None
fill_triangle = fill_triangle_jit if NUMBA_ENABLED else fill_triangle_py


def _count_triangle_pixels(x0, y0, x1, y1, x2, y2, cx0, cy0, cx1, cy1):
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if area == 0.0:
        return 0
    sign = 1.0 if area > 0.0 else -1.0
    xmin = int(max(min(x0, min(x1, x2)), float(cx0)))
    xmax = int(min(max(x0, max(x1, x2)), float(cx1 - 1)) + 1.0)
    ymin = int(max(min(y0, min(y1, y2)), float(cy0)))
    ymax = int(min(max(y0, max(y1, y2)), float(cy1 - 1)) + 1.0)
    count = 0
    for py in range(ymin, ymax):
        sy = py + 0.5
        for px in range(xmin, xmax):
            sx = px + 0.5
            w0 = ((x1 - x0) * (sy - y0) - (sx - x0) * (y1 - y0)) * sign
            w1 = ((x2 - x1) * (sy - y1) - (sx - x1) * (y2 - y1)) * sign
            w2 = ((x0 - x2) * (sy - y2) - (sx - x2) * (y0 - y2)) * sign
            if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                count += 1
    return count


count_triangle_pixels_py = _count_triangle_pixels
count_triangle_pixels_jit = _maybe_njit(_count_triangle_pixels) if NUMBA_ENABLED else None
count_triangle_pixels = count_triangle_pixels_jit if NUMBA_ENABLED else count_triangle_pixels_py


def _draw_disk(buf, cx, cy, radius, r, g, b, cx0, cy0, cx1, cy1):
    r2 = radius * radius
    xmin = int(max(cx - radius, float(cx0)))
    xmax = int(min(cx + radius, float(cx1 - 1)) + 1.0)
    ymin = int(max(cy - radius, float(cy0)))
    ymax = int(min(cy + radius, float(cy1 - 1)) + 1.0)
    for py in range(ymin, ymax):
        dy = py + 0.5 - cy
        for px in range(xmin, xmax):
            dx = px + 0.5 - cx
            if dx * dx + dy * dy <= r2:
                buf[py, px, 0] = r
                buf[py, px, 1] = g
                buf[py, px, 2] = b


draw_disk_py = _draw_disk
draw_disk_jit = _maybe_njit(_draw_disk) if NUMBA_ENABLED else None
draw_disk = draw_disk_jit if NUMBA_ENABLED else draw_disk_py


def _draw_ring(buf, cx, cy, r_out, r_in, r, g, b, cx0, cy0, cx1, cy1):
    ro2 = r_out * r_out
    ri2 = r_in * r_in
    xmin = int(max(cx - r_out, float(cx0)))
    xmax = int(min(cx + r_out, float(cx1 - 1)) + 1.0)
    ymin = int(max(cy - r_out, float(cy0)))
    ymax = int(min(cy + r_out, float(cy1 - 1)) + 1.0)
    for py in range(ymin, ymax):
        dy = py + 0.5 - cy
        for px in range(xmin, xmax):
            dx = px + 0.5 - cx
            d2 = dx * dx + dy * dy
            if ri2 <= d2 <= ro2:
                buf[py, px, 0] = r
                buf[py, px, 1] = g
                buf[py, px, 2] = b


draw_ring_py = _draw_ring
draw_ring_jit = _maybe_njit(_draw_ring) if NUMBA_ENABLED else None
draw_ring = draw_ring_jit if NUMBA_ENABLED else draw_ring_py
