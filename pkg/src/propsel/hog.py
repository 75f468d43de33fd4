"""Dense 31-channel HOG descriptors on a fixed cell grid.

Channel layout, per cell (this is the exact contract relied on everywhere):

  0..17   signed orientation bins; bin b collects gradient magnitude for
          pixels whose gradient direction atan2(dy, dx), taken in [0, 360),
          falls in [20*b, 20*(b+1)) degrees
  18..26  unsigned bins: u[b] = signed[b] + signed[b + 9]
  27..30  normalization energy features, one per enclosing 2x2 cell block in
          the order upper-left, upper-right, lower-left, lower-right

Pixels are assigned to the cell containing them (hard 8x8 binning, no spatial
interpolation). Cell energy is the sum of squared unsigned bins; each cell is
normalized by the four 2x2 blocks that contain it (neighbor indices clamped
at the template border), every normalized value is truncated at 0.2, and the
orientation channels average the four normalizations so they stay in
[0, 0.2]. The energy channels are 0.2357 times the sum of the 18 truncated
signed values under the corresponding block normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import Image, bilinear_sample, finite_differences

CELL_SIZE = 8
CHANNELS = 31
_ORIENT_BINS = 18
_TRUNCATION = 0.2
_ENERGY_SCALE = 0.2357  # ~1/sqrt(18), following the usual texture-energy scaling
_EPS = 1e-9


@dataclass(frozen=True)
class HogTemplate:
    """Cell grid geometry; descriptor length is cells_x * cells_y * 31."""

    cells_x: int
    cells_y: int
    cell_size: int = CELL_SIZE
    channels: int = CHANNELS

    def __post_init__(self) -> None:
        if self.cells_x < 3 or self.cells_y < 3:
            raise ValueError("template needs at least 3x3 cells")

    @property
    def pixel_w(self) -> int:
        return self.cells_x * self.cell_size

    @property
    def pixel_h(self) -> int:
        return self.cells_y * self.cell_size

    @property
    def length(self) -> int:
        return self.cells_x * self.cells_y * self.channels


@dataclass
class HogDescriptor:
    template: HogTemplate
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.template.length:
            raise ValueError(
                f"descriptor length {self.values.size} != template length {self.template.length}"
            )


def make_template(box_w: float, box_h: float) -> HogTemplate:
    """Template for a box: longer side gets 8 cells, shorter side proportional.

    The shorter side's cell count is rounded and clamped to at least 3 so the
    descriptor dimension stays fixed across scales.
    """
    if box_w <= 0 or box_h <= 0:
        raise ValueError("box sides must be positive")
    long_side = max(box_w, box_h)
    cx = 8 if box_w == long_side else max(3, min(8, round(8 * box_w / long_side)))
    cy = 8 if box_h == long_side else max(3, min(8, round(8 * box_h / long_side)))
    return HogTemplate(cells_x=int(cx), cells_y=int(cy))


def sample_windows(pixels: np.ndarray, windows: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resample axis-aligned windows (n, 4) as (cx, cy, w, h) to (n, out_h, out_w).

    Output texel (i, j) samples the input at the center of the window's
    (i, j)-th subdivision; samples outside the image read as 0.
    """
    windows = np.asarray(windows, dtype=np.float64).reshape(-1, 4)
    n = windows.shape[0]
    gx = (np.arange(out_w, dtype=np.float64) + 0.5) / out_w  # in (0, 1)
    gy = (np.arange(out_h, dtype=np.float64) + 0.5) / out_h
    cx, cy, w, h = windows[:, 0], windows[:, 1], windows[:, 2], windows[:, 3]
    xs = cx[:, None, None] - 0.5 * w[:, None, None] + gx[None, None, :] * w[:, None, None]
    ys = cy[:, None, None] - 0.5 * h[:, None, None] + gy[None, :, None] * h[:, None, None]
    xs = np.broadcast_to(xs, (n, out_h, out_w))
    ys = np.broadcast_to(ys, (n, out_h, out_w))
    return bilinear_sample(pixels, xs, ys)


def orientation_bins(patch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel signed orientation bin (0..17) and gradient magnitude.

    Works on a single patch (h, w) or a batch (n, h, w); differences are taken
    per patch along the last two axes.
    """
    if patch.ndim == 2:
        dx, dy = finite_differences(patch)
    else:
        dx = np.empty_like(patch)
        dy = np.empty_like(patch)
        dx[..., :, 1:-1] = 0.5 * (patch[..., :, 2:] - patch[..., :, :-2])
        dx[..., :, 0] = patch[..., :, 1] - patch[..., :, 0]
        dx[..., :, -1] = patch[..., :, -1] - patch[..., :, -2]
        dy[..., 1:-1, :] = 0.5 * (patch[..., 2:, :] - patch[..., :-2, :])
        dy[..., 0, :] = patch[..., 1, :] - patch[..., 0, :]
        dy[..., -1, :] = patch[..., -1, :] - patch[..., -2, :]
    mag = np.hypot(dx, dy)
    ang = np.degrees(np.arctan2(dy, dx)) % 360.0
    bins = np.minimum((ang / 20.0).astype(np.int64), _ORIENT_BINS - 1)
    return bins, mag


def cell_histograms(bins: np.ndarray, mag: np.ndarray, cells_y: int, cells_x: int) -> np.ndarray:
    """Hard-binned per-cell signed histograms, shape (..., cells_y, cells_x, 18)."""
    cell = CELL_SIZE
    single = bins.ndim == 2
    if single:
        bins = bins[None]
        mag = mag[None]
    n = bins.shape[0]
    # Flat index (window, cell_y, cell_x, bin) accumulated in one bincount pass.
    py = np.arange(cells_y * cell) // cell
    px = np.arange(cells_x * cell) // cell
    cell_idx = (py[:, None] * cells_x + px[None, :]).astype(np.int64)
    win_idx = np.arange(n, dtype=np.int64)[:, None, None]
    flat = (win_idx * (cells_y * cells_x) + cell_idx[None]) * _ORIENT_BINS + bins
    hist = np.bincount(
        flat.ravel(), weights=mag.ravel(), minlength=n * cells_y * cells_x * _ORIENT_BINS
    )
    hist = hist.reshape(n, cells_y, cells_x, _ORIENT_BINS)
    return hist[0] if single else hist


def features_from_histograms(hist: np.ndarray) -> np.ndarray:
    """Normalize signed histograms (..., cy, cx, 18) into 31-channel features."""
    unsigned = hist[..., :9] + hist[..., 9:]
    energy = np.sum(unsigned**2, axis=-1)
    pad = [(0, 0)] * (energy.ndim - 2) + [(1, 1), (1, 1)]
    epad = np.pad(energy, pad, mode="edge")
    # blocks[..., i, j] is the 2x2 block whose cells are {i-1, i} x {j-1, j},
    # with indices clamped at the border by the edge padding
    blocks = (
        epad[..., :-1, :-1] + epad[..., :-1, 1:] + epad[..., 1:, :-1] + epad[..., 1:, 1:]
    )
    inv = 1.0 / np.sqrt(blocks + _EPS)
    norms = (
        inv[..., :-1, :-1],  # upper-left block
        inv[..., :-1, 1:],  # upper-right
        inv[..., 1:, :-1],  # lower-left
        inv[..., 1:, 1:],  # lower-right
    )
    signed_out = np.zeros_like(hist)
    unsigned_out = np.zeros_like(unsigned)
    energies = []
    for nk in norms:
        hs = np.minimum(hist * nk[..., None], _TRUNCATION)
        signed_out += hs
        unsigned_out += np.minimum(unsigned * nk[..., None], _TRUNCATION)
        energies.append(_ENERGY_SCALE * hs.sum(axis=-1))
    signed_out *= 0.25
    unsigned_out *= 0.25
    return np.concatenate(
        [signed_out, unsigned_out, np.stack(energies, axis=-1)], axis=-1
    )


def descriptors_for_windows(
    pixels: np.ndarray, windows: np.ndarray, tmpl: HogTemplate
) -> np.ndarray:
    """Descriptors (n, length) for axis-aligned windows (n, 4) of (cx, cy, w, h)."""
    windows = np.asarray(windows, dtype=np.float64).reshape(-1, 4)
    if np.any(windows[:, 2] <= 0) or np.any(windows[:, 3] <= 0):
        raise ValueError("degenerate window: zero or negative size")
    patches = sample_windows(pixels, windows, tmpl.pixel_w, tmpl.pixel_h)
    bins, mag = orientation_bins(patches)
    hist = cell_histograms(bins, mag, tmpl.cells_y, tmpl.cells_x)
    feats = features_from_histograms(hist)
    return feats.reshape(windows.shape[0], tmpl.length)


def compute_hog(
    img: Image, window: tuple[float, float, float, float], tmpl: HogTemplate
) -> HogDescriptor:
    """Descriptor for one axis-aligned window given as (cx, cy, w, h).

    Windows partially outside the image are padded with zeros.
    """
    values = descriptors_for_windows(img.pixels, np.array([window]), tmpl)[0]
    return HogDescriptor(template=tmpl, values=values)
