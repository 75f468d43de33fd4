"""Dense optical flow, flow statistics, motion boundaries, and map file I/O.

Flow is estimated with coarse-to-fine iterative Lucas-Kanade (7x7 windows,
3 warp iterations per pyramid level). High-fidelity precomputed flow can be
ingested from Middlebury .flo files instead; edge/motion-boundary maps use a
small EMAP container with the same bit-exact contract.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import RotatedBox, box_mask
from .imaging import Image, bilinear_sample, finite_differences, resize_array

FLO_MAGIC = 202021.25
EMAP_MAGIC = b"EMAP"

_LK_WINDOW = 7
_LK_ITERATIONS = 3
_MIN_EIG = 1e-6


class FlowFormatError(Exception):
    """Raised for unreadable .flo or EMAP files."""


@dataclass
class FlowField:
    """Per-pixel displacement (u, v) in pixels, frame t-1 to frame t."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("flow components must be matching 2-D arrays")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("flow contains non-finite values")

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass
class EdgeMap:
    """Non-negative per-pixel edge or motion-boundary strength."""

    response: np.ndarray

    def __post_init__(self) -> None:
        self.response = np.asarray(self.response, dtype=np.float64)
        if self.response.ndim != 2:
            raise ValueError("edge map must be 2-D")
        if not np.all(np.isfinite(self.response)):
            raise ValueError("edge map contains non-finite values")
        if self.response.size and self.response.min() < 0.0:
            raise ValueError("edge map response must be non-negative")

    @property
    def width(self) -> int:
        return self.response.shape[1]

    @property
    def height(self) -> int:
        return self.response.shape[0]


def _blur_and_halve(arr: np.ndarray) -> np.ndarray:
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    sm = ndimage.correlate1d(arr, kernel, axis=0, mode="nearest")
    sm = ndimage.correlate1d(sm, kernel, axis=1, mode="nearest")
    return sm[::2, ::2]


def default_levels(width: int, height: int) -> int:
    """Pyramid depth so the coarsest level is roughly 16 pixels on its short side."""
    return max(0, int(math.floor(math.log2(min(width, height) / 16.0))))


def compute_flow(prev: Image, cur: Image, levels: int | None = None) -> FlowField:
    """Coarse-to-fine Lucas-Kanade flow from prev to cur."""
    if (prev.width, prev.height) != (cur.width, cur.height):
        raise ValueError("frames must have identical dimensions")
    if prev.width < 32 or prev.height < 32:
        raise ValueError("frames must be at least 32x32 for flow estimation")
    if levels is None:
        levels = default_levels(prev.width, prev.height)
    pyr_prev = [prev.pixels]
    pyr_cur = [cur.pixels]
    for _ in range(levels):
        if min(pyr_prev[-1].shape) < 8:
            break
        pyr_prev.append(_blur_and_halve(pyr_prev[-1]))
        pyr_cur.append(_blur_and_halve(pyr_cur[-1]))

    u = np.zeros_like(pyr_prev[-1])
    v = np.zeros_like(pyr_prev[-1])
    win_sum = float(_LK_WINDOW * _LK_WINDOW)
    max_step = 0.5 * _LK_WINDOW
    for level in range(len(pyr_prev) - 1, -1, -1):
        a = pyr_prev[level]
        b = pyr_cur[level]
        h, w = a.shape
        if u.shape != a.shape:
            u = 2.0 * resize_array(u, w, h)
            v = 2.0 * resize_array(v, w, h)
        ix, iy = finite_differences(a)
        a11 = ndimage.uniform_filter(ix * ix, _LK_WINDOW, mode="constant") * win_sum
        a12 = ndimage.uniform_filter(ix * iy, _LK_WINDOW, mode="constant") * win_sum
        a22 = ndimage.uniform_filter(iy * iy, _LK_WINDOW, mode="constant") * win_sum
        trace = a11 + a22
        min_eig = 0.5 * (trace - np.sqrt((a11 - a22) ** 2 + 4.0 * a12 * a12))
        det = a11 * a22 - a12 * a12
        solvable = (min_eig > _MIN_EIG) & (det > 0.0)
        safe_det = np.where(solvable, det, 1.0)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        for _ in range(_LK_ITERATIONS):
            px = xs + u
            py = ys + v
            warped = bilinear_sample(b, px, py)
            inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
            it = np.where(inside, warped - a, 0.0)
            b1 = ndimage.uniform_filter(ix * it, _LK_WINDOW, mode="constant") * win_sum
            b2 = ndimage.uniform_filter(iy * it, _LK_WINDOW, mode="constant") * win_sum
            du = -(a22 * b1 - a12 * b2) / safe_det
            dv = -(a11 * b2 - a12 * b1) / safe_det
            du = np.clip(np.where(solvable, du, 0.0), -max_step, max_step)
            dv = np.clip(np.where(solvable, dv, 0.0), -max_step, max_step)
            u = u + du
            v = v + dv
    return FlowField(u=u, v=v)


def write_flo(flow: FlowField, path) -> None:
    """Write Middlebury .flo: magic float, int32 w/h, interleaved float32 (u, v)."""
    path = Path(path)
    interleaved = np.empty((flow.height, flow.width, 2), dtype="<f4")
    interleaved[..., 0] = flow.u
    interleaved[..., 1] = flow.v
    with path.open("wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", flow.width, flow.height))
        fh.write(interleaved.tobytes())


def read_flo(path) -> FlowField:
    """Bit-faithful load of a Middlebury .flo file."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FlowFormatError(f"{path}: too short for a .flo header")
    (magic,) = struct.unpack_from("<f", raw, 0)
    if magic != FLO_MAGIC:
        raise FlowFormatError(f"{path}: bad .flo magic {magic!r}")
    width, height = struct.unpack_from("<ii", raw, 4)
    if width <= 0 or height <= 0:
        raise FlowFormatError(f"{path}: bad .flo dimensions {width}x{height}")
    expected = width * height * 2 * 4
    payload = raw[12 : 12 + expected]
    if len(payload) < expected:
        raise FlowFormatError(f"{path}: truncated .flo payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2)
    return FlowField(u=data[..., 0].astype(np.float64), v=data[..., 1].astype(np.float64))


def write_emap(edge: EdgeMap, path) -> None:
    """Write an EMAP file: b'EMAP', int32 w/h, row-major float32, little-endian."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(EMAP_MAGIC)
        fh.write(struct.pack("<ii", edge.width, edge.height))
        fh.write(edge.response.astype("<f4").tobytes())


def read_emap(path) -> EdgeMap:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != EMAP_MAGIC:
        raise FlowFormatError(f"{path}: not an EMAP file")
    width, height = struct.unpack_from("<ii", raw, 4)
    if width <= 0 or height <= 0:
        raise FlowFormatError(f"{path}: bad EMAP dimensions {width}x{height}")
    expected = width * height * 4
    payload = raw[12 : 12 + expected]
    if len(payload) < expected:
        raise FlowFormatError(f"{path}: truncated EMAP payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    return EdgeMap(response=data.astype(np.float64))


def mean_flow_magnitude(flow: FlowField, box: RotatedBox) -> float:
    """Mean sqrt(u^2 + v^2) over pixels whose centers fall inside the box."""
    mask = box_mask(box, flow.width, flow.height)
    if not mask.any():
        raise ValueError("no flow pixels inside the box")
    return float(np.mean(flow.magnitude()[mask]))


def motion_boundary_map(flow: FlowField) -> EdgeMap:
    """sqrt(|grad u|^2 + |grad v|^2), the flow-gradient motion boundary strength."""
    ux, uy = finite_differences(flow.u)
    vx, vy = finite_differences(flow.v)
    return EdgeMap(response=np.sqrt(ux * ux + uy * uy + vx * vx + vy * vy))
