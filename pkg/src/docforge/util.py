"""Shared low-level helpers: hashing, rounding, RNG derivation, image I/O."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _U64
    return h


def fnv1a64_batch(rows: np.ndarray) -> np.ndarray:
    """64-bit FNV-1a of each row of a uint8 array, vectorized across rows."""
    rows = np.ascontiguousarray(rows, dtype=np.uint64)
    h = np.full(rows.shape[0], FNV64_OFFSET, dtype=np.uint64)
    prime = np.uint64(FNV64_PRIME)
    with np.errstate(over="ignore"):
        for j in range(rows.shape[1]):
            h = (h ^ rows[:, j]) * prime
    return h


def crop_id_for(doc_id: str, x: int, y: int, w: int, h: int) -> int:
    """Stable 64-bit identifier for a crop, derived from its document and box."""
    return fnv1a64(f"{doc_id}|{x}|{y}|{w}|{h}".encode("utf-8"))


def iround(x: float) -> int:
    """Round half away from zero (bit-stable, unlike Python's banker rounding)."""
    if x >= 0:
        return int(np.floor(x + 0.5))
    return -int(np.floor(-x + 0.5))


def derive_rng(seed: int, *tokens) -> np.random.Generator:
    """Deterministic per-item RNG from a global seed plus string/int tokens.

    Used so work split across documents (or anchors) produces identical
    output regardless of worker count or scheduling order.
    """
    keys = [seed & _U64]
    for t in tokens:
        if isinstance(t, str):
            keys.append(fnv1a64(t.encode("utf-8")))
        else:
            keys.append(int(t) & _U64)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma with integer weights, rounding half away from zero.

    Pure integer arithmetic so the result is bit-stable across platforms.
    """
    if rgb.ndim == 2:
        return rgb.astype(np.uint8)
    r = rgb[..., 0].astype(np.int64)
    g = rgb[..., 1].astype(np.int64)
    b = rgb[..., 2].astype(np.int64)
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and half-away-from-zero rounding.

    This exact filter is part of the export format contract: crops referenced
    by (doc_id, box) are resized with it before any pixel comparison, so
    producers and consumers agree byte-for-byte.
    """
    if width < 1 or height < 1:
        raise ValueError("target size must be >= 1x1")
    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (width, height):
        return img.copy()
    arr = img.astype(np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]

    sx = (np.arange(width) + 0.5) * (src_w / width) - 0.5
    sy = (np.arange(height) + 0.5) * (src_h / height) - 0.5
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, src_w - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    top = arr[y0][:, x0] * (1 - fx)[None, :, None] + arr[y0][:, x1] * fx[None, :, None]
    bot = arr[y1][:, x0] * (1 - fx)[None, :, None] + arr[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    out = np.floor(out + 0.5)
    out = np.clip(out, 0, 255).astype(np.uint8)
    if img.ndim == 2:
        return out[:, :, 0]
    return out


def load_image_rgb(path: str | Path) -> np.ndarray:
    """Load a PNG/JPEG as an HxWx3 uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(path: str | Path, arr: np.ndarray) -> None:
    """Write an image atomically (temp file + rename) as PNG."""
    path = Path(path)
    if arr.ndim == 2:
        im = Image.fromarray(arr, mode="L")
    else:
        im = Image.fromarray(arr, mode="RGB")
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            im.save(f, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def boxes_overlap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    """Open-interval rectangle intersection for (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah
