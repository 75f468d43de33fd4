"""Grayscale image container, file I/O, gradients, rotation rectification, resampling.

All intensities are normalized to [0, 1] at load time; every threshold in the
rest of the package is defined in this normalized space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(Exception):
    """Base error for files that cannot be decoded into an Image."""


class UnsupportedImageFormat(ImageFormatError):
    """The file is not an 8-bit binary PGM or an 8-bit grayscale/RGB PNG."""


class TruncatedImage(ImageFormatError):
    """The file header promises more payload than the file contains."""


@dataclass
class Image:
    """Single-channel intensity raster, row-major float64 values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ValueError("image data must be two-dimensional")
        if self.pixels.size == 0:
            raise ValueError("image must contain at least one pixel")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("image contains non-finite values")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image values outside [0, 1]: min={lo}, max={hi}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class GradientField:
    """Per-pixel gradient magnitude and unsigned orientation in [0, 180) degrees."""

    magnitude: np.ndarray
    orientation: np.ndarray


def load_image(path) -> Image:
    """Load an 8-bit binary PGM (P5) or 8-bit grayscale/RGB PNG as an Image."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"P5":
        return _decode_pgm(raw, path)
    if raw[: len(_PNG_MAGIC)] == _PNG_MAGIC:
        return _decode_png(path)
    raise UnsupportedImageFormat(f"{path}: not a P5 PGM or PNG file")


def save_image(img: Image, path) -> None:
    """Write an Image as binary PGM (.pgm) or 8-bit grayscale PNG (.png)."""
    path = Path(path)
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    if path.suffix.lower() == ".pgm":
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + data.tobytes())
    elif path.suffix.lower() == ".png":
        from PIL import Image as PilImage

        PilImage.fromarray(data, mode="L").save(path)
    else:
        raise UnsupportedImageFormat(f"cannot write format: {path.suffix}")


def _decode_pgm(raw: bytes, path: Path) -> Image:
    # Header is ASCII tokens (magic, width, height, maxval) with '#' comments,
    # followed by a single whitespace byte and the binary payload.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedImage(f"{path}: incomplete PGM header")
        token = raw[start:pos]
        if not token.isdigit():
            raise UnsupportedImageFormat(f"{path}: bad PGM header token {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedImageFormat(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    if width <= 0 or height <= 0:
        raise UnsupportedImageFormat(f"{path}: degenerate PGM dimensions {width}x{height}")
    pos += 1  # single whitespace separator before the payload
    payload = raw[pos : pos + width * height]
    if len(payload) < width * height:
        raise TruncatedImage(
            f"{path}: PGM payload has {len(payload)} bytes, expected {width * height}"
        )
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Image(data.astype(np.float64) / 255.0)


def _decode_png(path: Path) -> Image:
    from PIL import Image as PilImage

    try:
        with PilImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode == "L":
                data = np.asarray(pil, dtype=np.float64)
            elif mode == "RGB":
                rgb = np.asarray(pil, dtype=np.float64)
                data = (
                    LUMA_WEIGHTS[0] * rgb[..., 0]
                    + LUMA_WEIGHTS[1] * rgb[..., 1]
                    + LUMA_WEIGHTS[2] * rgb[..., 2]
                )
            else:
                raise UnsupportedImageFormat(
                    f"{path}: PNG mode {mode!r} not supported (need 8-bit L or RGB)"
                )
    except UnsupportedImageFormat:
        raise
    except OSError as exc:
        if "truncated" in str(exc).lower():
            raise TruncatedImage(f"{path}: truncated PNG payload") from exc
        raise UnsupportedImageFormat(f"{path}: undecodable PNG ({exc})") from exc
    return Image(np.clip(data / 255.0, 0.0, 1.0))


def finite_differences(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d/dx, d/dy) of a 2-D array: central differences inside, one-sided at borders."""
    arr = np.asarray(arr, dtype=np.float64)
    dx = np.empty_like(arr)
    dy = np.empty_like(arr)
    dx[:, 1:-1] = 0.5 * (arr[:, 2:] - arr[:, :-2])
    dx[:, 0] = arr[:, 1] - arr[:, 0]
    dx[:, -1] = arr[:, -1] - arr[:, -2]
    dy[1:-1, :] = 0.5 * (arr[2:, :] - arr[:-2, :])
    dy[0, :] = arr[1, :] - arr[0, :]
    dy[-1, :] = arr[-1, :] - arr[-2, :]
    return dx, dy


def gradients(img: Image) -> GradientField:
    """Gradient magnitude and orientation folded to [0, 180) degrees."""
    if img.width < 3 or img.height < 3:
        raise ValueError("image too small for gradients (need at least 3x3)")
    dx, dy = finite_differences(img.pixels)
    magnitude = np.hypot(dx, dy)
    orientation = np.degrees(np.arctan2(dy, dx)) % 180.0
    return GradientField(magnitude=magnitude, orientation=orientation)


def bilinear_sample(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample arr at float coordinates (pixel centers at integers); outside is 0."""
    h, w = arr.shape
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    fx = xs - x0f
    fy = ys - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    out = np.zeros(np.shape(xs), dtype=np.float64)
    for dy_off, wy in ((0, 1.0 - fy), (1, fy)):
        yi = y0 + dy_off
        for dx_off, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx_off
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = np.zeros(np.shape(xs), dtype=np.float64)
            vals[valid] = arr[yi[valid], xi[valid]]
            out += wx * wy * vals
    return out


def rectify(img: Image, angle: float, center: tuple[float, float]) -> Image:
    """Rotate image content by -angle degrees about center, same output size.

    Each output pixel p samples the input at p rotated by -angle about center,
    with bilinear interpolation; samples outside the input are 0.
    """
    if not -180.0 < angle <= 180.0:
        raise ValueError(f"angle must be in (-180, 180], got {angle}")
    if angle == 0.0:
        return Image(img.pixels.copy())
    cx, cy = center
    rad = math.radians(angle)
    ca, sa = math.cos(rad), math.sin(rad)
    ys, xs = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    dx = xs - cx
    dy = ys - cy
    # R(-angle) applied to the output coordinate
    qx = cx + ca * dx + sa * dy
    qy = cy - sa * dx + ca * dy
    sampled = bilinear_sample(img.pixels, qx, qy)
    return Image(np.clip(sampled, 0.0, 1.0))


def resize_array(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize of a raw 2-D array to (out_h, out_w), centers aligned."""
    h, w = arr.shape
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    # Clamp instead of zero-fill: resizing should not darken the border.
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    return bilinear_sample(arr, *np.meshgrid(xs, ys))


def resample(img: Image, scale: float) -> Image:
    """Bilinear resampling to (round(w*scale), round(h*scale))."""
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    out_w = int(round(img.width * scale))
    out_h = int(round(img.height * scale))
    if out_w < 1 or out_h < 1:
        raise ValueError(f"degenerate output size {out_w}x{out_h} at scale {scale}")
    if scale == 1.0:
        return Image(img.pixels.copy())
    return Image(np.clip(resize_array(img.pixels, out_w, out_h), 0.0, 1.0))
