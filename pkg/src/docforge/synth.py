"""Synthetic document pages with known character geometry.

Pages are rendered with the embedded bitmap fonts on a light background;
every character gets a box with a 2 px inner margin, so OCR geometry is
exact by construction. Useful for demos, smoke runs, and as the fixture
corpus for the test suite.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ocr import CharBox
from .render import GLYPH_H, GLYPH_W, get_font
from .util import save_image

CHARSET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
PAD = 2  # inner margin between glyph ink and its character box


def char_cell(scale: int) -> tuple[int, int]:
    """Character box size at an integer glyph scale."""
    return (GLYPH_W * scale + 2 * PAD, GLYPH_H * scale + 2 * PAD)


def draw_char(image: np.ndarray, ch: str, x: int, y: int, scale: int,
              color: tuple[int, int, int], font_id: str = "plain-5x7") -> None:
    """Stamp one glyph with its inner margin at box position (x, y)."""
    bits = get_font(font_id).glyph(ch)
    big = np.kron(bits, np.ones((scale, scale), dtype=bool))
    region = image[y + PAD: y + PAD + big.shape[0], x + PAD: x + PAD + big.shape[1]]
    region[big] = np.asarray(color, dtype=np.uint8)


def make_page(rng: np.random.Generator, width: int = 480, height: int = 360,
              n_lines: tuple[int, int] = (3, 5),
              line_len: tuple[int, int] = (3, 8),
              scale: int = 2,
              background: int | None = None,
              ink: tuple[int, int, int] | None = None,
              font_id: str = "plain-5x7",
              ) -> tuple[np.ndarray, list[CharBox]]:
    """Render one page; returns (image, character boxes)."""
    bg = int(rng.integers(242, 256)) if background is None else background
    image = np.full((height, width, 3), bg, dtype=np.uint8)
    cw, chh = char_cell(scale)
    chars: list[CharBox] = []

    n = int(rng.integers(n_lines[0], n_lines[1] + 1))
    line_gap = chh + 8
    max_lines = max(1, (height - 20) // line_gap)
    n = min(n, max_lines)
    for li in range(n):
        k = int(rng.integers(line_len[0], line_len[1] + 1))
        k = min(k, max(1, (width - 20) // cw))
        x = int(rng.integers(4, max(5, width - k * cw - 4)))
        y = 10 + li * line_gap
        color = ink if ink is not None else tuple(int(v) for v in rng.integers(0, 70, size=3))
        for j in range(k):
            ch = CHARSET[int(rng.integers(0, len(CHARSET)))]
            cx = x + j * cw
            draw_char(image, ch, cx, y, scale, color, font_id=font_id)
            chars.append(CharBox(text=ch, x=cx, y=y, w=cw, h=chh))
    return image, chars


def build_corpus(out_dir: str | Path, n_docs: int, seed: int = 0,
                 prefix: str = "doc", **page_kwargs) -> Path:
    """Write a synthetic corpus (PNGs plus manifest) and return the manifest
    path."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "corpus.jsonl"
    rng = np.random.default_rng(seed)
    with open(manifest, "w", encoding="utf-8") as f:
        for i in range(n_docs):
            doc_id = f"{prefix}{i:04d}"
            image, chars = make_page(rng, **page_kwargs)
            rel = f"images/{doc_id}.png"
            save_image(out_dir / rel, image)
            entry = {
                "doc_id": doc_id,
                "image": rel,
                "chars": [c.as_dict() for c in chars],
            }
            f.write(json.dumps(entry) + "\n")
    return manifest
