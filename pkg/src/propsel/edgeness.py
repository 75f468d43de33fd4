"""Objectness scoring from edge and motion-boundary maps.

A box's edgeness is the summed response of in-box pixels whose contour stays
clear of the box boundary, normalized by box area. Contours crossing the
boundary band are wholly discarded, so a box that cleanly encloses an object
outscores one that cuts through it. A 5-frame temporal gate keeps the cue
from firing while its scores are unstable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .flow import EdgeMap
from .geometry import RotatedBox, box_mask
from .imaging import Image, gradients

GATE_EPS = 1e-6
HISTORY_LEN = 5

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class EdgenessConfig:
    theta_edge: float = 0.1
    ring_px: float = 2.0
    normalize_percentile: float = 99.0


@dataclass
class ContourMap:
    """Per-pixel contour id (0 = background), 8-connected components."""

    labels: np.ndarray
    count: int


def edge_map(img: Image, percentile: float = 99.0) -> EdgeMap:
    """Gradient-magnitude edge strength normalized to [0, 1] by a high percentile."""
    mag = gradients(img).magnitude
    scale = float(np.percentile(mag, percentile))
    if scale <= 0.0:
        return EdgeMap(response=np.zeros_like(mag))
    return EdgeMap(response=np.clip(mag / scale, 0.0, 1.0))


def label_contours(edges: EdgeMap, theta_edge: float) -> ContourMap:
    """Connected components (8-connectivity) of pixels with response >= theta."""
    if theta_edge < 0:
        raise ValueError("edge threshold must be non-negative")
    labels, count = ndimage.label(edges.response >= theta_edge, structure=_EIGHT_CONNECTED)
    return ContourMap(labels=labels, count=int(count))


def _grown_box(box: RotatedBox, delta: float) -> RotatedBox | None:
    w = box.w + 2.0 * delta
    h = box.h + 2.0 * delta
    if w <= 0.0 or h <= 0.0:
        return None
    return RotatedBox(box.cx, box.cy, w, h, box.angle)


def edgeness_score(
    edges: EdgeMap, contours: ContourMap, box: RotatedBox, ring_px: float = 2.0
) -> float:
    """Area-normalized response inside the box from boundary-free contours."""
    inside = box_mask(box, edges.width, edges.height)
    if not inside.any():
        raise ValueError("box does not overlap the edge map")
    outer = _grown_box(box, +ring_px)
    inner = _grown_box(box, -ring_px)
    ring = box_mask(outer, edges.width, edges.height)
    if inner is not None:
        ring &= ~box_mask(inner, edges.width, edges.height)
    banned = np.unique(contours.labels[ring])
    labels = contours.labels
    contributing = inside & (labels > 0) & ~np.isin(labels, banned[banned > 0])
    return float(edges.response[contributing].sum() / box.area)


class CueHistory:
    """Ring buffer of the winner's edgeness over the last 5 frames."""

    def __init__(self) -> None:
        self._values: deque[float] = deque(maxlen=HISTORY_LEN)

    def push(self, score: float) -> None:
        self._values.append(float(score))

    def __len__(self) -> int:
        return len(self._values)

    def mean(self) -> float:
        return float(np.mean(self._values)) if self._values else 0.0

    def variance(self) -> float:
        return float(np.var(self._values)) if self._values else 0.0

    def values(self) -> list[float]:
        return list(self._values)


def temporal_gate(hist: CueHistory, best_candidate_score: float) -> bool:
    """True when the cue is warmed up and the best score matches recent history.

    The deviation must be under twice the (population) variance; the epsilon
    keeps a zero-variance history from rejecting an identical score.
    """
    if len(hist) < HISTORY_LEN:
        return False
    return abs(best_candidate_score - hist.mean()) < 2.0 * hist.variance() + GATE_EPS


def normalize_over_region(
    edges: EdgeMap, region: tuple[float, float, float, float], percentile: float = 99.0
) -> EdgeMap:
    """Rescale responses so the region's high percentile maps to 1 (clamped)."""
    x0, y0, x1, y1 = region
    xi0 = max(0, int(np.floor(x0)))
    yi0 = max(0, int(np.floor(y0)))
    xi1 = min(edges.width, int(np.ceil(x1)) + 1)
    yi1 = min(edges.height, int(np.ceil(y1)) + 1)
    if xi0 >= xi1 or yi0 >= yi1:
        return EdgeMap(response=edges.response.copy())
    scale = float(np.percentile(edges.response[yi0:yi1, xi0:xi1], percentile))
    if scale <= 0.0:
        return EdgeMap(response=np.zeros_like(edges.response))
    return EdgeMap(response=np.clip(edges.response / scale, 0.0, 1.0))
