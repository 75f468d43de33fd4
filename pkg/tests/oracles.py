"""Independent reference implementations used to freeze expected test values.

These deliberately avoid the library's own code paths: IoU by point-in-polygon
counting on a fine grid, gradients by per-pixel python loops, and the scalar
filter recursion written out directly.
"""

from __future__ import annotations

import math

import numpy as np


def point_in_convex_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorized membership test against a convex CCW polygon (boundary counts)."""
    inside = np.ones(np.shape(px), dtype=bool)
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside &= cross >= -1e-12
    return inside


def rasterized_iou(poly_a: np.ndarray, poly_b: np.ndarray, step: float = 0.1) -> float:
    """IoU by counting grid points at `step` resolution inside each polygon."""
    all_pts = np.vstack([poly_a, poly_b])
    x0, y0 = all_pts.min(axis=0) - step
    x1, y1 = all_pts.max(axis=0) + step
    xs = np.arange(x0, x1 + step, step)
    ys = np.arange(y0, y1 + step, step)
    gx, gy = np.meshgrid(xs, ys)
    in_a = point_in_convex_polygon(gx, gy, poly_a)
    in_b = point_in_convex_polygon(gx, gy, poly_b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def loop_gradients(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel central/one-sided differences written as explicit loops."""
    h, w = pixels.shape
    dx = np.zeros((h, w))
    dy = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            if x == 0:
                dx[y, x] = pixels[y, 1] - pixels[y, 0]
            elif x == w - 1:
                dx[y, x] = pixels[y, w - 1] - pixels[y, w - 2]
            else:
                dx[y, x] = 0.5 * (pixels[y, x + 1] - pixels[y, x - 1])
            if y == 0:
                dy[y, x] = pixels[1, x] - pixels[0, x]
            elif y == h - 1:
                dy[y, x] = pixels[h - 1, x] - pixels[h - 2, x]
            else:
                dy[y, x] = 0.5 * (pixels[y + 1, x] - pixels[y - 1, x])
    return dx, dy


def scalar_filter_reference(observations, tau0=0.0, p0=0.1, q=0.001, r=0.01, alpha=1.0, beta=1.0):
    """Direct transcription of the threshold filter recursion."""
    tau, p = tau0, p0
    taus = []
    for d in observations:
        k = (p + q) / (p + q + r)
        tau = alpha * tau + k * (d - alpha * beta * tau)
        p = (1.0 - k) * (p + q)
        taus.append(tau)
    return taus, p


def rotate_point(x: float, y: float, deg: float) -> tuple[float, float]:
    rad = math.radians(deg)
    return (
        x * math.cos(rad) - y * math.sin(rad),
        x * math.sin(rad) + y * math.cos(rad),
    )
