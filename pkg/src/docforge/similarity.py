"""Crop similarity: dual-head embeddings and their comparison rule.

Every crop is described by two unit vectors: a background head (texture,
color, blur/noise statistics of non-ink pixels) and a foreground head (ink
color, coverage, stroke geometry, alignment). Two text crops compare as the
average of the two heads' cosines; as soon as either crop is blank only the
background head is meaningful, so the comparison routes through it alone.

Two interchangeable backends produce embeddings: the classical extractor
below (self-contained, 16 statistics per head) and an external store of
model-produced vectors loaded from disk. Selection logic downstream depends
only on the similarity ordering, so the backends are drop-in replacements.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .binarize import connected_components, sauvola_threshold_map
from .util import atomic_write_bytes, to_grayscale

FEMB_MAGIC = b"FEMB"
CLASSICAL_DIM = 16


@dataclass(frozen=True)
class CropEmbedding:
    """Unit-normalized background and foreground descriptor halves."""

    bg: np.ndarray
    fg: np.ndarray

    @property
    def dim(self) -> int:
        return self.bg.shape[0]


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.where(np.isfinite(v), v, 0.0)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero vector cannot be normalized")
    return v / n


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Plain cosine; errors on dimension mismatch or zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("zero vector")
    return float(np.dot(u, v) / (nu * nv))


def crop_similarity(a: CropEmbedding, b: CropEmbedding, either_blank: bool) -> float:
    """Similarity of two crops: average of both heads, or background-only
    when either crop is blank."""
    if a.dim != b.dim:
        raise ValueError(f"dim mismatch: {a.dim} vs {b.dim}")
    s_bg = cosine_similarity(a.bg, b.bg)
    if either_blank:
        return s_bg
    return 0.5 * s_bg + 0.5 * cosine_similarity(a.fg, b.fg)


# ---------------------------------------------------------------------------
# classical feature extractor
# ---------------------------------------------------------------------------

def classical_features(crop: np.ndarray, is_blank: bool) -> CropEmbedding:
    """Hand-rolled 16-feature background and foreground descriptors.

    Foreground/background pixels are split by the Sauvola threshold map
    (darker-than-threshold = ink). The component order below is part of the
    store format contract; change it and every persisted embedding goes
    stale.

    Background half: mean/std RGB of background pixels, local contrast
    energy, Laplacian-variance blur proxy, high-pass noise proxy, global
    gray mean/std, background fraction, vertical and horizontal luminance
    tilt, block-structure energy, constant bias.

    Foreground half: mean/std RGB of ink pixels, ink fraction, stroke-width
    proxy (area/perimeter), ink-centroid offsets, ink gray mean, component
    density, ink bbox height/width ratios, per-row ink variability, constant
    bias. Blank crops carry a constant sentinel (never compared).
    """
    crop = np.asarray(crop)
    if crop.size == 0:
        raise ValueError("empty crop")
    if crop.ndim == 2:
        crop = np.stack([crop] * 3, axis=-1)
    h, w = crop.shape[:2]
    gray = to_grayscale(crop)
    grayf = gray.astype(np.float64)
    rgb = crop.reshape(-1, 3).astype(np.float64)

    tmap = sauvola_threshold_map(gray)
    ink = gray < tmap
    bg_mask = ~ink

    # -- background half -----------------------------------------------
    if bg_mask.any():
        bg_pix = crop[bg_mask].reshape(-1, 3).astype(np.float64)
    else:
        bg_pix = rgb
    bg_mean = bg_pix.mean(axis=0) / 255.0
    bg_std = bg_pix.std(axis=0) / 255.0

    gx = np.abs(np.diff(grayf, axis=1)).mean() if w > 1 else 0.0
    gy = np.abs(np.diff(grayf, axis=0)).mean() if h > 1 else 0.0
    contrast = (gx + gy) / 255.0

    lap = ndimage.convolve(grayf, np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64),
                           mode="nearest")
    blur_proxy = lap.var() / (255.0 ** 2)
    noise_proxy = (grayf - ndimage.uniform_filter(grayf, size=3, mode="nearest")).std() / 255.0

    top = grayf[: h // 2].mean() if h >= 2 else grayf.mean()
    botm = grayf[h - h // 2:].mean() if h >= 2 else grayf.mean()
    left = grayf[:, : w // 2].mean() if w >= 2 else grayf.mean()
    right = grayf[:, w - w // 2:].mean() if w >= 2 else grayf.mean()
    v_tilt = (top - botm) / 255.0
    h_tilt = (left - right) / 255.0

    by = max(1, h // 4)
    bx = max(1, w // 4)
    blocks = grayf[: (h // by) * by, : (w // bx) * bx]
    if blocks.size:
        block_means = blocks.reshape(h // by, by, w // bx, bx).mean(axis=(1, 3))
        block_energy = block_means.std() / 255.0
    else:
        block_energy = 0.0

    bg_vec = np.array([
        bg_mean[0], bg_mean[1], bg_mean[2],
        bg_std[0], bg_std[1], bg_std[2],
        contrast, blur_proxy, noise_proxy,
        grayf.mean() / 255.0, grayf.std() / 255.0,
        bg_mask.mean(),
        v_tilt, h_tilt, block_energy,
        1.0,
    ])

    # -- foreground half -------------------------------------------------
    if is_blank or not ink.any():
        fg_vec = np.ones(CLASSICAL_DIM)
    else:
        fg_pix = crop[ink].reshape(-1, 3).astype(np.float64)
        fg_mean = fg_pix.mean(axis=0) / 255.0
        fg_std = fg_pix.std(axis=0) / 255.0
        ink_ratio = ink.mean()

        shifted = (
            np.pad(ink, 1)[:-2, 1:-1] & np.pad(ink, 1)[2:, 1:-1]
            & np.pad(ink, 1)[1:-1, :-2] & np.pad(ink, 1)[1:-1, 2:]
        )
        perimeter = int(ink.sum() - shifted.sum())
        stroke_proxy = ink.sum() / max(1, perimeter) / 8.0

        ys, xs = np.nonzero(ink)
        cy_off = (ys.mean() + 0.5) / h - 0.5
        cx_off = (xs.mean() + 0.5) / w - 0.5
        fg_gray = grayf[ink].mean() / 255.0

        comps = connected_components(ink)
        density = len(comps) / max(1.0, w / 8.0)
        bbox_h = (ys.max() - ys.min() + 1) / h
        bbox_w = (xs.max() - xs.min() + 1) / w
        row_ink = ink.mean(axis=1)
        row_var = row_ink.std()

        fg_vec = np.array([
            fg_mean[0], fg_mean[1], fg_mean[2],
            fg_std[0], fg_std[1], fg_std[2],
            ink_ratio, stroke_proxy,
            cy_off, cx_off, fg_gray,
            density, bbox_h, bbox_w, row_var,
            1.0,
        ])

    return CropEmbedding(bg=_unit(bg_vec), fg=_unit(fg_vec))


# ---------------------------------------------------------------------------
# embedding store (binary, little-endian, sorted by crop_id)
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingStore:
    """Immutable crop_id -> CropEmbedding map with a fixed per-head dim."""

    dim: int
    entries: dict[int, CropEmbedding]

    def __contains__(self, crop_id: int) -> bool:
        return crop_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, crop_id: int) -> CropEmbedding:
        try:
            return self.entries[crop_id]
        except KeyError:
            raise KeyError(f"no embedding for crop_id {crop_id}") from None


def save_embedding_store(path, entries: dict[int, CropEmbedding], dim: int) -> None:
    """Write: magic, u32 per-head dim, u64 count, (u64 id, f32*dim bg,
    f32*dim fg)*, ids ascending."""
    blob = bytearray(FEMB_MAGIC)
    blob += struct.pack("<IQ", dim, len(entries))
    for cid in sorted(entries):
        emb = entries[cid]
        if emb.bg.shape != (dim,) or emb.fg.shape != (dim,):
            raise ValueError(f"crop_id {cid}: head dim mismatch")
        blob += struct.pack("<Q", cid)
        blob += np.asarray(emb.bg, dtype="<f4").tobytes()
        blob += np.asarray(emb.fg, dtype="<f4").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_embedding_store(path) -> EmbeddingStore:
    """Load and validate a store; halves are re-normalized to unit length."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != FEMB_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    dim, count = struct.unpack_from("<IQ", data, 4)
    rec = 8 + 8 * dim
    expected = 16 + count * rec
    if len(data) != expected:
        raise ValueError(f"{path}: truncated store ({len(data)} bytes, expected {expected})")
    entries: dict[int, CropEmbedding] = {}
    off = 16
    for _ in range(count):
        (cid,) = struct.unpack_from("<Q", data, off)
        off += 8
        vec = np.frombuffer(data, dtype="<f4", count=2 * dim, offset=off).astype(np.float64)
        off += 8 * dim
        if cid in entries:
            raise ValueError(f"{path}: duplicate crop_id {cid}")
        if not np.isfinite(vec).all():
            raise ValueError(f"{path}: non-finite embedding for crop_id {cid}")
        bg, fg = vec[:dim], vec[dim:]
        if np.linalg.norm(bg) == 0 or np.linalg.norm(fg) == 0:
            raise ValueError(f"{path}: zero-norm embedding for crop_id {cid}")
        entries[cid] = CropEmbedding(bg=_unit(bg), fg=_unit(fg))
    return EmbeddingStore(dim=dim, entries=entries)
