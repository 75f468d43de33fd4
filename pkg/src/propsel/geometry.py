"""Rotated boxes, 4-parameter similarity transforms, and rotated-box IoU.

Angles are degrees throughout, normalized to (-180, 180]. Coordinates follow
the math convention (positive rotation is counter-clockwise for y-up axes);
box corner polygons are counter-clockwise in that convention.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np


class RegionFormatError(ValueError):
    """A region line is not a valid 4-number rect or 8-number polygon."""


def normalize_angle(deg: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    a = float(deg) % 360.0
    if a > 180.0:
        a -= 360.0
    if a <= -180.0:
        a += 360.0
    return a


def angle_difference(a: float, b: float) -> float:
    """Magnitude of the wrapped difference between two angles in degrees."""
    return abs(normalize_angle(a - b))


@dataclass
class RotatedBox:
    """Center, side lengths and rotation angle; axis-aligned iff angle == 0."""

    cx: float
    cy: float
    w: float
    h: float
    angle: float = 0.0

    def __post_init__(self) -> None:
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValueError(f"box sides must be positive, got {self.w}x{self.h}")
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h, self.angle)):
            raise ValueError("box parameters must be finite")
        self.angle = normalize_angle(self.angle)

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def corners(self) -> np.ndarray:
        """Corner polygon (4, 2), counter-clockwise starting at (-w/2, -h/2)."""
        rad = math.radians(self.angle)
        ca, sa = math.cos(rad), math.sin(rad)
        hw, hh = 0.5 * self.w, 0.5 * self.h
        offsets = np.array([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])
        rot = np.array([[ca, -sa], [sa, ca]])
        return offsets @ rot.T + np.array([self.cx, self.cy])


@dataclass
class Similarity:
    """Maps p to s * R(theta) * p + (tx, ty); theta in degrees."""

    s: float
    theta: float
    tx: float
    ty: float

    def __post_init__(self) -> None:
        if not self.s > 0.0:
            raise ValueError(f"scale must be positive, got {self.s}")
        self.theta = normalize_angle(self.theta)

    @classmethod
    def identity(cls) -> "Similarity":
        return cls(1.0, 0.0, 0.0, 0.0)

    def as_complex(self) -> tuple[complex, complex]:
        """(c, d) with the transform acting as z -> c*z + d on x+iy points."""
        c = self.s * cmath.exp(1j * math.radians(self.theta))
        return c, complex(self.tx, self.ty)

    def apply_point(self, x: float, y: float) -> tuple[float, float]:
        c, d = self.as_complex()
        z = c * complex(x, y) + d
        return (z.real, z.imag)

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        c, d = self.as_complex()
        z = c * (pts[:, 0] + 1j * pts[:, 1]) + d
        return np.stack([z.real, z.imag], axis=1)

    def inverse(self) -> "Similarity":
        c, d = self.as_complex()
        ci = 1.0 / c
        di = -ci * d
        return Similarity(abs(ci), math.degrees(cmath.phase(ci)), di.real, di.imag)


def compose(second: Similarity, first: Similarity) -> Similarity:
    """Transform equivalent to applying `first`, then `second`."""
    c2, d2 = second.as_complex()
    c1, d1 = first.as_complex()
    c = c2 * c1
    d = c2 * d1 + d2
    return Similarity(abs(c), math.degrees(cmath.phase(c)), d.real, d.imag)


@dataclass
class Correspondence:
    """A point in frame t-1 and its matched position in frame t."""

    px: float
    py: float
    qx: float
    qy: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.px, self.py, self.qx, self.qy)):
            raise ValueError("correspondence points must be finite")

    @property
    def p(self) -> complex:
        return complex(self.px, self.py)

    @property
    def q(self) -> complex:
        return complex(self.qx, self.qy)


def similarity_from_pair(a: Correspondence, b: Correspondence) -> Similarity:
    """Closed-form similarity from two correspondences (exact interpolation).

    Treating points as complex numbers: c = (b.q - a.q) / (b.p - a.p),
    translation d = a.q - c * a.p. Source points must be distinct.
    """
    denom = b.p - a.p
    if abs(denom) < 1e-12:
        raise ValueError("coincident source points: similarity is underdetermined")
    c = (b.q - a.q) / denom
    if abs(c) < 1e-12:
        raise ValueError("coincident target points: zero-scale transform rejected")
    d = a.q - c * a.p
    return Similarity(abs(c), math.degrees(cmath.phase(c)), d.real, d.imag)


def apply_similarity(t: Similarity, box: RotatedBox) -> RotatedBox:
    """Map a box through a similarity: center moved, sides scaled, angle shifted."""
    cx, cy = t.apply_point(box.cx, box.cy)
    return RotatedBox(cx, cy, box.w * t.s, box.h * t.s, box.angle + t.theta)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise polygons)."""
    if len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of `subject` by a convex CCW polygon `clip`."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = output
        output = []
        prev = inp[-1]
        prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
        for cur in inp:
            cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    output.append(_edge_intersection(prev, cur, prev_side, cur_side))
                output.append(cur)
            elif prev_side >= 0.0:
                output.append(_edge_intersection(prev, cur, prev_side, cur_side))
            prev, prev_side = cur, cur_side
    return np.array(output).reshape(-1, 2)


def _edge_intersection(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def polygon_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Intersection over union of the two corner polygons, in [0, 1]."""
    pa = a.corners()
    pb = b.corners()
    inter_poly = clip_polygon(pa, pb)
    inter = max(0.0, abs(polygon_area(inter_poly))) if len(inter_poly) >= 3 else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def fraction_inside_frame(box: RotatedBox, width: int, height: int) -> float:
    """Fraction of the box's area that lies inside a width x height frame."""
    frame_poly = np.array(
        [(-0.5, -0.5), (width - 0.5, -0.5), (width - 0.5, height - 0.5), (-0.5, height - 0.5)]
    )
    inter = clip_polygon(box.corners(), frame_poly)
    if len(inter) < 3:
        return 0.0
    return abs(polygon_area(inter)) / box.area


def box_mask(box: RotatedBox, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centers fall inside the box."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xs - box.cx
    dy = ys - box.cy
    if box.angle != 0.0:
        rad = math.radians(box.angle)
        ca, sa = math.cos(rad), math.sin(rad)
        dx, dy = ca * dx + sa * dy, -sa * dx + ca * dy
    return (np.abs(dx) <= 0.5 * box.w) & (np.abs(dy) <= 0.5 * box.h)


def _rotate_minus90(v: np.ndarray) -> np.ndarray:
    return np.array([v[1], -v[0]])


def box_from_polygon(corners: np.ndarray) -> RotatedBox:
    """Fit a rotated rectangle to 4 polygon corners (exact for true rectangles).

    Edge directions are averaged (height edges rotated onto the width axis) to
    estimate the angle; side lengths are the mean lengths of opposite edges.
    """
    corners = np.asarray(corners, dtype=np.float64).reshape(4, 2)
    c = corners.mean(axis=0)
    e_top = corners[1] - corners[0]
    e_bottom = corners[2] - corners[3]
    e_right = corners[2] - corners[1]
    e_left = corners[3] - corners[0]
    direction = e_top + e_bottom + _rotate_minus90(e_right) + _rotate_minus90(e_left)
    if np.hypot(*direction) < 1e-12:
        raise RegionFormatError("degenerate polygon: cannot determine orientation")
    angle = math.degrees(math.atan2(direction[1], direction[0]))
    w = 0.5 * (np.hypot(*e_top) + np.hypot(*e_bottom))
    h = 0.5 * (np.hypot(*e_right) + np.hypot(*e_left))
    if w <= 0.0 or h <= 0.0:
        raise RegionFormatError("degenerate polygon: zero side length")
    return RotatedBox(float(c[0]), float(c[1]), float(w), float(h), angle)


def parse_region(line: str) -> RotatedBox:
    """Parse a region line: 'x,y,w,h' (axis-aligned) or 'x1,y1,...,x4,y4' polygon."""
    parts = [p for p in line.replace(",", " ").split() if p]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise RegionFormatError(f"non-numeric region line: {line!r}") from exc
    if len(values) == 4:
        x, y, w, h = values
        if w <= 0.0 or h <= 0.0:
            raise RegionFormatError(f"non-positive rect size in {line!r}")
        return RotatedBox(x + 0.5 * w, y + 0.5 * h, w, h, 0.0)
    if len(values) == 8:
        return box_from_polygon(np.array(values).reshape(4, 2))
    raise RegionFormatError(f"expected 4 or 8 numbers, got {len(values)}: {line!r}")


def format_polygon(box: RotatedBox, decimals: int = 4) -> str:
    """Serialize a box as the 8-number polygon line 'x1,y1,...,x4,y4'."""
    return ",".join(f"{v:.{decimals}f}" for v in box.corners().ravel())


def format_rect(box: RotatedBox, decimals: int = 4) -> str:
    """Serialize an axis-aligned box as 'x,y,w,h' (top-left corner plus size)."""
    if box.angle != 0.0:
        raise RegionFormatError("rect format requires an axis-aligned box")
    vals = (box.cx - 0.5 * box.w, box.cy - 0.5 * box.h, box.w, box.h)
    return ",".join(f"{v:.{decimals}f}" for v in vals)
