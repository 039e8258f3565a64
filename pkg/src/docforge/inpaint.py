"""Background-aware text removal.

Missing pixels are reconstructed by a harmonic boundary fill: each filled
pixel equals the average of its 4-neighbors, with known pixels acting as
boundary conditions. The fixed point of that averaging is solved directly
as a sparse Laplace system, which is equivalent to iterating the averaging
to convergence but orders of magnitude faster on large masks. When the mask
covers the whole crop (no boundary exists) the fill degrades to the mean of
the crop's outer pixel ring.

Two mask modes mirror common manual edits: `full_box` erases the whole crop,
`text_only` removes just the stroke pixels found by Sauvola thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .binarize import DEFAULT_SAUVOLA_K, DEFAULT_SAUVOLA_WINDOW, sauvola_threshold_map
from .util import to_grayscale

MODE_FULL_BOX = "full_box"
MODE_TEXT_ONLY = "text_only"


@dataclass
class InpaintResult:
    filled: np.ndarray
    changed: np.ndarray  # boolean, exactly the pixels that differ from input
    mode: str


def build_text_mask_sauvola(crop: np.ndarray,
                            window: int = DEFAULT_SAUVOLA_WINDOW,
                            k: float = DEFAULT_SAUVOLA_K) -> np.ndarray:
    """Stroke mask: pixels strictly darker than their local threshold.

    Polarity note: on inverted (light-on-dark) crops this selects the
    background instead; callers pick the mask mode accordingly.
    """
    gray = to_grayscale(crop)
    return gray < sauvola_threshold_map(gray, window=window, k=k)


def _border_ring_mean(crop: np.ndarray) -> np.ndarray:
    h, w = crop.shape[:2]
    if h <= 2 or w <= 2:
        ring = crop.reshape(-1, crop.shape[-1])
    else:
        ring = np.concatenate([
            crop[0].reshape(-1, crop.shape[-1]),
            crop[-1].reshape(-1, crop.shape[-1]),
            crop[1:-1, 0].reshape(-1, crop.shape[-1]),
            crop[1:-1, -1].reshape(-1, crop.shape[-1]),
        ])
    return ring.mean(axis=0)


def harmonic_fill(crop: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill masked pixels so each equals the mean of its in-crop 4-neighbors.

    Known pixels are Dirichlet boundary data. If no known pixel exists the
    whole crop is set to its border-ring mean.
    """
    crop = np.asarray(crop)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return crop.copy()
    single = crop.ndim == 2
    work = crop[:, :, None] if single else crop
    h, w, ch = work.shape

    if mask.all():
        fill = _border_ring_mean(work)
        out = np.empty_like(work, dtype=np.float64)
        out[:] = fill
        out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
        return out[:, :, 0] if single else out

    idx = -np.ones((h, w), dtype=np.int64)
    ys, xs = np.nonzero(mask)
    n = ys.size
    idx[ys, xs] = np.arange(n)

    rows, cols, vals = [], [], []
    rhs = np.zeros((n, ch), dtype=np.float64)
    deg = np.zeros(n, dtype=np.float64)
    vals_img = work.astype(np.float64)
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = ys + dy, xs + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        deg += ok
        which = np.nonzero(ok)[0]
        nbr = idx[ny[which], nx[which]]
        unknown = nbr >= 0
        u_rows = which[unknown]
        rows.extend(u_rows.tolist())
        cols.extend(nbr[unknown].tolist())
        vals.extend([-1.0] * int(unknown.sum()))
        k_rows = which[~unknown]
        rhs[k_rows] += vals_img[ny[k_rows], nx[k_rows]]
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(deg.tolist())

    lap = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    out = work.astype(np.float64).copy()
    for c in range(ch):
        sol = spsolve(lap, rhs[:, c])
        out[ys, xs, c] = sol
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out[:, :, 0] if single else out


def inpaint(crop: np.ndarray, rng: np.random.Generator,
            window: int = DEFAULT_SAUVOLA_WINDOW,
            k: float = DEFAULT_SAUVOLA_K) -> InpaintResult:
    """Erase content from a crop, choosing full-box or text-only mode with
    probability 1/2 each, and report exactly which pixels changed."""
    if crop.size == 0:
        raise ValueError("empty crop")
    mode = MODE_FULL_BOX if rng.random() < 0.5 else MODE_TEXT_ONLY
    if mode == MODE_FULL_BOX:
        mask = np.ones(crop.shape[:2], dtype=bool)
    else:
        mask = build_text_mask_sauvola(crop, window=window, k=k)
    filled = harmonic_fill(crop, mask)
    if crop.ndim == 3:
        changed = (filled != crop).any(axis=2)
    else:
        changed = filled != crop
    return InpaintResult(filled=filled, changed=changed, mode=mode)
