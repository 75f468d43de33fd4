from __future__ import annotations

import numpy as np
import pytest

from conftest import textured_image
from oracles import loop_gradients, rotate_point
from propsel.imaging import (
    Image,
    TruncatedImage,
    UnsupportedImageFormat,
    gradients,
    load_image,
    rectify,
    resample,
    save_image,
)


def test_image_invariants_enforced():
    with pytest.raises(ValueError):
        Image(np.array([[0.0, 2.0]]))
    with pytest.raises(ValueError):
        Image(np.array([[0.0, np.nan]]))
    with pytest.raises(ValueError):
        Image(np.zeros(4))


def test_load_pgm_scales_bytes(tmp_path):
    path = tmp_path / "tiny.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(path)
    assert img.width == 2 and img.height == 2
    expected = np.array([[0.0, 1.0], [128 / 255, 64 / 255]])
    np.testing.assert_allclose(img.pixels, expected)


def test_load_solid_white_png(tmp_path):
    from PIL import Image as PilImage

    path = tmp_path / "white.png"
    PilImage.fromarray(np.full((8, 8), 255, dtype=np.uint8), mode="L").save(path)
    img = load_image(path)
    assert np.all(img.pixels == 1.0)


def test_load_rgb_png_uses_luma(tmp_path):
    from PIL import Image as PilImage

    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[..., 0] = 200
    rgb[..., 1] = 100
    rgb[..., 2] = 50
    path = tmp_path / "rgb.png"
    PilImage.fromarray(rgb, mode="RGB").save(path)
    img = load_image(path)
    expected = (0.299 * 200 + 0.587 * 100 + 0.114 * 50) / 255.0
    np.testing.assert_allclose(img.pixels, expected, atol=1e-9)


def test_truncated_pgm_reports_distinct_error(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(8))
    with pytest.raises(TruncatedImage):
        load_image(path)


def test_unsupported_format_and_missing_file(tmp_path):
    path = tmp_path / "odd.pgm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(UnsupportedImageFormat):
        load_image(path)
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.pgm")


def test_pgm_round_trip_exact(tmp_path):
    img = textured_image(13, 9, seed=3)
    quantized = Image(np.rint(img.pixels * 255.0) / 255.0)
    path = tmp_path / "rt.pgm"
    save_image(quantized, path)
    again = load_image(path)
    np.testing.assert_array_equal(again.pixels, quantized.pixels)


def test_gradients_constant_image_zero():
    field = gradients(Image(np.full((6, 7), 0.4)))
    assert np.all(field.magnitude == 0.0)


def test_gradients_too_small():
    with pytest.raises(ValueError):
        gradients(Image(np.zeros((2, 5))))


def test_gradients_vertical_step_edge():
    pixels = np.zeros((8, 8))
    pixels[:, 4:] = 1.0
    field = gradients(Image(pixels))
    nonzero_cols = np.unique(np.nonzero(field.magnitude)[1])
    assert set(nonzero_cols) <= {3, 4}
    assert np.all(field.orientation[field.magnitude > 0] == 0.0)


def test_gradients_ramp_matches_loop_oracle():
    w, h = 16, 12
    pixels = np.tile(np.arange(w) / w, (h, 1))
    field = gradients(Image(pixels))
    dx_ref, dy_ref = loop_gradients(pixels)
    np.testing.assert_allclose(field.magnitude, np.hypot(dx_ref, dy_ref), atol=1e-12)
    interior = field.magnitude[1:-1, 1:-1]
    np.testing.assert_allclose(interior, 1.0 / w, atol=1e-12)


def test_gradient_magnitude_offset_invariant():
    img = textured_image(12, 10, seed=5)
    base = gradients(Image(img.pixels * 0.5))
    offset = gradients(Image(img.pixels * 0.5 + 0.25))
    np.testing.assert_allclose(base.magnitude, offset.magnitude, atol=1e-12)


def test_rectify_zero_angle_identity():
    img = textured_image(15, 11, seed=2)
    out = rectify(img, 0.0, (7.0, 5.0))
    np.testing.assert_array_equal(out.pixels, img.pixels)


def test_rectify_90_moves_bright_pixel():
    pixels = np.zeros((21, 21))
    cx, cy, d = 10, 10, 5
    pixels[cy, cx + d] = 1.0
    out = rectify(Image(pixels), 90.0, (float(cx), float(cy)))
    # expected location: center + offset rotated by +90 degrees
    ex, ey = rotate_point(d, 0, 90.0)
    ty, tx = np.unravel_index(np.argmax(out.pixels), out.pixels.shape)
    assert np.hypot(tx - (cx + ex), ty - (cy + ey)) <= 1.0
    assert out.pixels[ty, tx] > 0.5


def test_rectify_double_180_round_trip():
    img = textured_image(24, 24, seed=9, smooth=2.5)
    once = rectify(img, 180.0, (11.5, 11.5))
    twice = rectify(once, 180.0, (11.5, 11.5))
    assert np.max(np.abs(twice.pixels - img.pixels)) <= 0.02


def test_resample_identity_and_constant():
    img = textured_image(10, 8, seed=1)
    np.testing.assert_array_equal(resample(img, 1.0).pixels, img.pixels)
    const = Image(np.full((9, 9), 0.3))
    out = resample(const, 1.7)
    assert out.width == round(9 * 1.7) and out.height == round(9 * 1.7)
    np.testing.assert_allclose(out.pixels, 0.3, atol=1e-12)


def test_resample_round_trip_smooth():
    img = textured_image(20, 20, seed=4, smooth=3.0)
    up = resample(img, 2.0)
    down = resample(up, 0.5)
    assert down.width == img.width and down.height == img.height
    assert np.max(np.abs(down.pixels - img.pixels)) <= 0.02


def test_resample_degenerate_size():
    img = textured_image(10, 10, seed=0)
    with pytest.raises(ValueError):
        resample(img, 0.01)
    with pytest.raises(ValueError):
        resample(img, -1.0)
