import numpy as np
import pytest

from docforge.ocr import CharBox, DocumentRecord
from docforge.synth import build_corpus, char_cell, draw_char, make_page


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """10-document synthetic corpus on disk, shared across tests."""
    root = tmp_path_factory.mktemp("corpus10")
    manifest = build_corpus(root, n_docs=10, seed=42)
    return manifest


def make_doc(chars, width=480, height=360, doc_id="mem", image_path="unused.png"):
    """In-memory DocumentRecord for geometry-only tests."""
    return DocumentRecord(doc_id=doc_id, image_path=image_path,
                          width=width, height=height, chars=tuple(chars))


def grid_chars(texts, x0=10, y0=10, scale=2, line_gap=None):
    """Character boxes laid out on a monospace grid, one string per line."""
    cw, ch = char_cell(scale)
    if line_gap is None:
        line_gap = ch + 8
    chars = []
    for li, text in enumerate(texts):
        for j, t in enumerate(text):
            chars.append(CharBox(text=t, x=x0 + j * cw, y=y0 + li * line_gap,
                                 w=cw, h=ch))
    return chars


def page_with_text(texts, width=480, height=360, x0=10, y0=10, scale=2,
                   bg=255, ink=(20, 20, 20)):
    """Render lines of text onto a page; returns (image, chars)."""
    image = np.full((height, width, 3), bg, dtype=np.uint8)
    chars = grid_chars(texts, x0=x0, y0=y0, scale=scale)
    for c in chars:
        draw_char(image, c.text, c.x, c.y, scale, ink)
    return image, chars
