import numpy as np
import pytest

from docforge.inpaint import (
    MODE_FULL_BOX,
    MODE_TEXT_ONLY,
    build_text_mask_sauvola,
    harmonic_fill,
    inpaint,
)
from docforge.render import render_text


class FixedRng:
    """Minimal rng stub driving the mode choice."""

    def __init__(self, value):
        self.value = value

    def random(self):
        return self.value


def test_text_mask_empty_on_white():
    crop = np.full((12, 20, 3), 255, dtype=np.uint8)
    assert not build_text_mask_sauvola(crop).any()


def test_text_mask_overlaps_glyphs():
    bg = np.full((30, 90, 3), 250, dtype=np.uint8)
    patch = render_text("HI", "plain-5x7", (0, 0, 0), bg)
    mask = build_text_mask_sauvola(patch.pixels)
    inter = (mask & patch.glyph_mask).sum()
    union = (mask | patch.glyph_mask).sum()
    assert inter / union >= 0.8


def test_text_mask_inverted_polarity_selects_background():
    bg = np.zeros((30, 90, 3), dtype=np.uint8)
    patch = render_text("HI", "plain-5x7", (255, 255, 255), bg)
    mask = build_text_mask_sauvola(patch.pixels)
    # dark-side selection: on light-on-dark crops the mask covers background
    assert (mask & ~patch.glyph_mask).sum() > (mask & patch.glyph_mask).sum()


def test_harmonic_single_pixel():
    crop = np.full((7, 7, 3), 120, dtype=np.uint8)
    crop[3, 3] = 0
    mask = np.zeros((7, 7), dtype=bool)
    mask[3, 3] = True
    out = harmonic_fill(crop, mask)
    assert tuple(out[3, 3]) == (120, 120, 120)


def test_harmonic_disk_on_gradient():
    h, w = 41, 41
    xs = np.linspace(40, 220, w)
    crop = np.repeat(xs[None, :], h, axis=0)
    crop = np.stack([crop] * 3, axis=-1).astype(np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    mask = (yy - 20) ** 2 + (xx - 20) ** 2 <= 8 ** 2
    out = harmonic_fill(crop, mask)
    # harmonic interpolation of linear boundary data is the linear function
    assert abs(int(out[20, 20, 0]) - int(crop[20, 20, 0])) <= 3


def test_harmonic_satisfies_averaging_fixed_point():
    rng = np.random.default_rng(12)
    crop = rng.integers(0, 256, size=(16, 22, 3)).astype(np.uint8)
    mask = np.zeros((16, 22), dtype=bool)
    mask[5:11, 7:15] = True
    out = harmonic_fill(crop, mask).astype(np.float64)
    for y in range(6, 10):
        for x in range(8, 14):
            nbrs = (out[y - 1, x] + out[y + 1, x] + out[y, x - 1] + out[y, x + 1]) / 4
            assert np.abs(out[y, x] - nbrs).max() <= 1.0  # rounding to uint8


def test_inpaint_empty_mask_is_identity():
    crop = np.full((10, 14, 3), 255, dtype=np.uint8)
    res = inpaint(crop, FixedRng(0.9))  # text_only on a blank crop
    assert res.mode == MODE_TEXT_ONLY
    np.testing.assert_array_equal(res.filled, crop)
    assert not res.changed.any()


def test_inpaint_full_box_uses_border_ring_mean():
    crop = np.full((10, 14, 3), 200, dtype=np.uint8)
    crop[4:7, 5:9] = 0  # interior ink only; ring stays 200
    res = inpaint(crop, FixedRng(0.1))
    assert res.mode == MODE_FULL_BOX
    assert (res.filled == 200).all()
    np.testing.assert_array_equal(res.changed, (crop != 200).any(axis=2))


def test_inpaint_changed_equals_pixel_diff():
    bg = np.full((26, 70, 3), 245, dtype=np.uint8)
    patch = render_text("GO", "plain-5x7", (10, 10, 10), bg)
    res = inpaint(patch.pixels, FixedRng(0.9))
    diff = (res.filled != patch.pixels).any(axis=2)
    np.testing.assert_array_equal(res.changed, diff)


def test_inpaint_removes_text():
    bg = np.full((26, 70, 3), 245, dtype=np.uint8)
    patch = render_text("GO", "plain-5x7", (0, 0, 0), bg)
    res = inpaint(patch.pixels, FixedRng(0.9))
    assert res.filled[patch.glyph_mask].mean() > 200


def test_inpaint_empty_crop_raises():
    with pytest.raises(ValueError):
        inpaint(np.zeros((0, 0, 3), dtype=np.uint8), FixedRng(0.1))
