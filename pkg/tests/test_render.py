import numpy as np
import pytest

from docforge.render import (
    BUILTIN_FONTS,
    FontSpec,
    default_margins,
    fit_text_scale,
    get_font,
    measure_text,
    render_text,
)


def fit_scan_oracle(text, font_id, w, h, margin_x, margin_y):
    """Exhaustive linear scan over the 0.01 scale grid."""
    font = get_font(font_id)
    uw, uh = font.text_units(text)
    vis_w, vis_h = w - 2 * margin_x, h - 2 * margin_y
    best = None
    n = 1
    while True:
        ew = -(-uw * n // 100)
        eh = -(-uh * n // 100)
        if ew <= vis_w and eh <= vis_h:
            best = n
            n += 1
        else:
            break
    return None if best is None else best / 100


def test_fit_matches_scan_oracle():
    rng = np.random.default_rng(5)
    for _ in range(60):
        w = int(rng.integers(15, 200))
        h = int(rng.integers(12, 80))
        text = "HELLO"[: int(rng.integers(1, 6))]
        font = BUILTIN_FONTS[int(rng.integers(0, 2))]
        mx, my = 2, 2
        want = fit_scan_oracle(text, font, w, h, mx, my)
        if want is None:
            with pytest.raises(ValueError):
                fit_text_scale(text, font, w, h, mx, my)
        else:
            spec = fit_text_scale(text, font, w, h, mx, my)
            assert spec.scale == pytest.approx(want)


def test_fit_result_fits_and_next_overflows():
    spec = fit_text_scale("ABC", "plain-5x7", 120, 40, 4, 4)
    ew, eh = measure_text("ABC", spec)
    assert ew <= 120 - 8 and eh <= 40 - 8
    bigger = FontSpec(spec.font_id, spec.scale + 0.01, spec.stroke)
    ew2, eh2 = measure_text("ABC", bigger)
    assert ew2 > 120 - 8 or eh2 > 40 - 8


def test_fit_monotone_in_region():
    s1 = fit_text_scale("WORD", "plain-5x7", 60, 30, 2, 2).scale
    s2 = fit_text_scale("WORD", "plain-5x7", 120, 60, 2, 2).scale
    assert s2 >= 2 * s1 - 0.011


def test_fit_infeasible_region_raises():
    # margins consume the whole box: no visible region left
    with pytest.raises(ValueError, match="feasible"):
        fit_text_scale("A", "plain-5x7", 6, 6, 3, 3)
    # region too narrow even at the minimum scale
    with pytest.raises(ValueError, match="feasible"):
        fit_text_scale("A" * 40, "plain-5x7", 4, 20, 1, 1)


def test_fit_stroke_tracks_scale():
    spec = fit_text_scale("A", "plain-5x7", 100, 100, 2, 2)
    assert spec.stroke == max(1, round(spec.scale))


def test_default_margins_are_tenth_of_height():
    assert default_margins(40) == (4, 4)


def test_render_centered_and_masked():
    bg = np.full((30, 80, 3), 240, dtype=np.uint8)
    patch = render_text("A", "plain-5x7", (0, 0, 0), bg)
    assert patch.glyph_mask.any()
    ys, xs = np.nonzero(patch.glyph_mask)
    cx = (xs.min() + xs.max() + 1) / 2
    cy = (ys.min() + ys.max() + 1) / 2
    assert abs(cx - 40) <= max(2, 0.1 * 80)
    assert abs(cy - 15) <= max(2, 0.1 * 30)


def test_render_background_preserved_outside_mask():
    rng = np.random.default_rng(3)
    bg = rng.integers(0, 256, size=(24, 60, 3)).astype(np.uint8)
    patch = render_text("XY", "bold-5x7", (255, 0, 0), bg)
    outside = ~patch.glyph_mask
    np.testing.assert_array_equal(patch.pixels[outside], bg[outside])


def test_render_color_contract():
    bg = np.full((24, 60, 3), 255, dtype=np.uint8)
    patch = render_text("Z", "plain-5x7", (0, 0, 0), bg)
    assert (patch.pixels[patch.glyph_mask] == 0).all()


def test_render_deterministic():
    bg = np.full((20, 70, 3), 250, dtype=np.uint8)
    a = render_text("AB1", "plain-5x7", (10, 20, 30), bg)
    b = render_text("AB1", "plain-5x7", (10, 20, 30), bg)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    np.testing.assert_array_equal(a.glyph_mask, b.glyph_mask)


def test_unknown_font_raises():
    with pytest.raises(KeyError):
        get_font("nope")


def test_caseless_and_fallback_glyphs():
    f = get_font("plain-5x7")
    np.testing.assert_array_equal(f.glyph("a"), f.glyph("A"))
    assert f.glyph("é").any()  # unknown renders as the fallback box
