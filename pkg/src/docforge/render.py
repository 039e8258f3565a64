"""Deterministic text rasterization with embedded bitmap fonts.

The font backend is a small set of embedded 5x7 raster faces with a closed-
form measurement function (extent is linear in scale, computed in exact
integer arithmetic), so fitting and rendering are bit-stable across
platforms and runs. The face list is pluggable through configuration, but
everything ships self-contained.

Scale fitting searches the largest scale on a 0.01 grid whose measured
extent fits the visible region (box minus margins); glyphs are drawn by
nearest-neighbor sampling of the bitmap, leaving the background untouched
outside the stroke mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .util import iround

SCALE_STEP = 100  # scales live on a 1/100 grid
GLYPH_W = 5
GLYPH_H = 7
ADVANCE = GLYPH_W + 1  # one blank column between glyphs

# Rows are 5-bit integers, bit 4 = leftmost pixel, 7 rows per glyph.
_GLYPHS = {
    " ": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00),
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0E),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
    "+": (0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00),
    "-": (0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00),
    ".": (0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C),
    ",": (0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08),
    ":": (0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00),
    ";": (0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x04, 0x08),
    "!": (0x04, 0x04, 0x04, 0x04, 0x04, 0x00, 0x04),
    "?": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04),
    "'": (0x04, 0x04, 0x08, 0x00, 0x00, 0x00, 0x00),
    '"': (0x0A, 0x0A, 0x00, 0x00, 0x00, 0x00, 0x00),
    "(": (0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02),
    ")": (0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08),
    "/": (0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10),
    "\\": (0x10, 0x10, 0x08, 0x04, 0x02, 0x01, 0x01),
    "=": (0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00),
    "*": (0x00, 0x0A, 0x04, 0x1F, 0x04, 0x0A, 0x00),
    "#": (0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A),
    "$": (0x04, 0x0F, 0x14, 0x0E, 0x05, 0x1E, 0x04),
    "%": (0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13),
    "&": (0x0C, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0D),
    "@": (0x0E, 0x11, 0x01, 0x0D, 0x15, 0x15, 0x0E),
    "<": (0x02, 0x04, 0x08, 0x10, 0x08, 0x04, 0x02),
    ">": (0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08),
    "[": (0x0E, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0E),
    "]": (0x0E, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0E),
    "_": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F),
}
_FALLBACK = (0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F)


def _glyph_bitmap(rows: tuple[int, ...]) -> np.ndarray:
    bits = np.zeros((GLYPH_H, GLYPH_W), dtype=bool)
    for r, row in enumerate(rows):
        for c in range(GLYPH_W):
            bits[r, c] = bool(row & (1 << (GLYPH_W - 1 - c)))
    return bits


def _embolden(bits: np.ndarray) -> np.ndarray:
    out = bits.copy()
    out[:, 1:] |= bits[:, :-1]
    return out


class EmbeddedFont:
    """A fixed-cell bitmap face. Lookup is caseless; unknown characters
    render as a box glyph."""

    def __init__(self, font_id: str, bold: bool = False):
        self.font_id = font_id
        self._cache: dict[str, np.ndarray] = {}
        self._bold = bold

    def glyph(self, ch: str) -> np.ndarray:
        key = ch if ch in _GLYPHS else ch.upper()
        if key not in self._cache:
            bits = _glyph_bitmap(_GLYPHS.get(key, _FALLBACK))
            if self._bold:
                bits = _embolden(bits)
            self._cache[key] = bits
        return self._cache[key]

    def text_units(self, text: str) -> tuple[int, int]:
        """Unscaled extent of `text` in glyph-grid units."""
        if not text:
            raise ValueError("empty text")
        return (ADVANCE * len(text) - 1, GLYPH_H)


BUILTIN_FONTS = ("plain-5x7", "bold-5x7")


def get_font(font_id: str) -> EmbeddedFont:
    if font_id == "plain-5x7":
        return EmbeddedFont(font_id, bold=False)
    if font_id == "bold-5x7":
        return EmbeddedFont(font_id, bold=True)
    raise KeyError(f"unknown font {font_id!r}")


@dataclass(frozen=True)
class FontSpec:
    """A fitted font choice: face, scale (on the 0.01 grid), stroke width."""

    font_id: str
    scale: float
    stroke: int


@dataclass
class RenderedPatch:
    """Rendered text over a background crop plus its stroke-coverage mask."""

    pixels: np.ndarray
    glyph_mask: np.ndarray


def _extent_at(units_w: int, units_h: int, n: int) -> tuple[int, int]:
    """Pixel extent at scale n/100, exact integer ceil."""
    return ((units_w * n + SCALE_STEP - 1) // SCALE_STEP,
            (units_h * n + SCALE_STEP - 1) // SCALE_STEP)


def default_margins(region_h: int) -> tuple[int, int]:
    """Fixed margins, 10% of box height per side."""
    m = iround(0.1 * region_h)
    return m, m


def fit_text_scale(text: str, font_id: str, region_w: int, region_h: int,
                   margin_x: int | None = None, margin_y: int | None = None) -> FontSpec:
    """Largest 0.01-grid scale whose text extent fits the visible region.

    The visible region is the box shrunk by the margins. Raises ValueError
    when no feasible scale exists. The result always fits, and scale + 0.01
    overflows in at least one dimension.
    """
    font = get_font(font_id)
    uw, uh = font.text_units(text)
    if margin_x is None or margin_y is None:
        mx, my = default_margins(region_h)
        margin_x = mx if margin_x is None else margin_x
        margin_y = my if margin_y is None else margin_y
    vis_w = region_w - 2 * margin_x
    vis_h = region_h - 2 * margin_y

    def fits(n: int) -> bool:
        ew, eh = _extent_at(uw, uh, n)
        return ew <= vis_w and eh <= vis_h

    if vis_w < 1 or vis_h < 1 or not fits(1):
        raise ValueError(
            f"no feasible scale: text {text!r} cannot fit {vis_w}x{vis_h}")
    hi = 1
    while fits(hi * 2):
        hi *= 2
    lo = hi  # lo always feasible
    hi = hi * 2  # hi infeasible
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    scale = lo / SCALE_STEP
    return FontSpec(font_id=font_id, scale=scale, stroke=max(1, iround(scale)))


def measure_text(text: str, spec: FontSpec) -> tuple[int, int]:
    """Pixel extent of `text` at the fitted scale."""
    font = get_font(spec.font_id)
    uw, uh = font.text_units(text)
    return _extent_at(uw, uh, iround(spec.scale * SCALE_STEP))


def render_text(text: str, font_id: str, color: tuple[int, int, int],
                background: np.ndarray, margin_x: int | None = None,
                margin_y: int | None = None,
                spec: FontSpec | None = None) -> RenderedPatch:
    """Rasterize `text` centered over a copy of `background`.

    The background is preserved exactly outside the stroke mask; stroke
    pixels are set to `color`. Deterministic: equal inputs give
    byte-identical patches.
    """
    h, w = background.shape[:2]
    if spec is None:
        spec = fit_text_scale(text, font_id, w, h, margin_x, margin_y)
    font = get_font(spec.font_id)
    n = iround(spec.scale * SCALE_STEP)
    uw, uh = font.text_units(text)
    ew, eh = _extent_at(uw, uh, n)
    ox = (w - ew) // 2
    oy = (h - eh) // 2

    # nearest-neighbor sample of the glyph grid, exact integer arithmetic
    px = np.arange(ew)
    py = np.arange(eh)
    u = (px * SCALE_STEP) // n
    v = (py * SCALE_STEP) // n
    u = np.clip(u, 0, uw - 1)
    v = np.clip(v, 0, uh - 1)
    glyph_idx = u // ADVANCE
    col = u % ADVANCE

    mask = np.zeros((h, w), dtype=bool)
    region = np.zeros((eh, ew), dtype=bool)
    for gi in range(len(text)):
        cols = np.nonzero((glyph_idx == gi) & (col < GLYPH_W))[0]
        if cols.size == 0:
            continue
        bits = font.glyph(text[gi])
        region[:, cols] = bits[v][:, col[cols]]
    mask[oy:oy + eh, ox:ox + ew] = region

    pixels = background.copy()
    pixels[mask] = np.asarray(color, dtype=np.uint8)
    return RenderedPatch(pixels=pixels, glyph_mask=mask)
