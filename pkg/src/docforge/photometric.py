"""Photometric crop transformations used to synthesize hard negatives.

Each op takes (crop, rng) and returns a new uint8 crop of the same shape.
Parameter ranges are deliberately mild: hard negatives should look like the
anchor while differing in exactly the cues (color, blur, alignment) the
similarity model must become sensitive to.
"""

from __future__ import annotations

import numpy as np

from .util import to_grayscale

BRIGHTNESS_LIMIT = 0.2
CONTRAST_LIMIT = 0.2
HUE_SHIFT_DEG = 20.0
SAT_SHIFT = 30.0
VAL_SHIFT = 20.0
RGB_SHIFT = 20.0
MOTION_KERNELS = (3, 5, 7)
TEXT_COLOR_LUMA_THRESHOLD = 40


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB [0,255] -> HSV with h in [0,1), s,v in [0,1]."""
    arr = rgb.astype(np.float64) / 255.0
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    maxc = arr.max(axis=-1)
    minc = arr.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.maximum(maxc, 1e-12), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rc = np.where(delta > 0, (maxc - r) / np.maximum(delta, 1e-12), 0.0)
        gc = np.where(delta > 0, (maxc - g) / np.maximum(delta, 1e-12), 0.0)
        bc = np.where(delta > 0, (maxc - b) / np.maximum(delta, 1e-12), 0.0)
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = (h / 6.0) % 1.0
    h = np.where(delta > 0, h, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse of rgb_to_hsv, back to uint8."""
    h, s, v = hsv[..., 0] % 1.0, np.clip(hsv[..., 1], 0, 1), np.clip(hsv[..., 2], 0, 1)
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    out = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(out * 255.0 + 0.5), 0, 255).astype(np.uint8)


def brightness_contrast(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    alpha = 1.0 + rng.uniform(-CONTRAST_LIMIT, CONTRAST_LIMIT)
    beta = rng.uniform(-BRIGHTNESS_LIMIT, BRIGHTNESS_LIMIT) * 255.0
    out = crop.astype(np.float64) * alpha + beta
    return np.clip(out, 0, 255).astype(np.uint8)


def hue_saturation_value(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    hsv = rgb_to_hsv(crop)
    hsv[..., 0] = (hsv[..., 0] + rng.uniform(-HUE_SHIFT_DEG, HUE_SHIFT_DEG) / 360.0) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] + rng.uniform(-SAT_SHIFT, SAT_SHIFT) / 255.0, 0, 1)
    hsv[..., 2] = np.clip(hsv[..., 2] + rng.uniform(-VAL_SHIFT, VAL_SHIFT) / 255.0, 0, 1)
    return hsv_to_rgb(hsv)


def motion_blur(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    k = int(MOTION_KERNELS[rng.integers(0, len(MOTION_KERNELS))])
    direction = int(rng.integers(0, 4))  # horizontal, vertical, two diagonals
    kernel = np.zeros((k, k), dtype=np.float64)
    if direction == 0:
        kernel[k // 2, :] = 1.0
    elif direction == 1:
        kernel[:, k // 2] = 1.0
    elif direction == 2:
        np.fill_diagonal(kernel, 1.0)
    else:
        np.fill_diagonal(np.fliplr(kernel), 1.0)
    kernel /= kernel.sum()
    from scipy import ndimage

    out = np.empty_like(crop, dtype=np.float64)
    for c in range(crop.shape[2]):
        out[..., c] = ndimage.convolve(crop[..., c].astype(np.float64), kernel,
                                       mode="nearest")
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def rgb_shift(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    shifts = rng.uniform(-RGB_SHIFT, RGB_SHIFT, size=3)
    out = crop.astype(np.float64) + shifts[None, None, :]
    return np.clip(out, 0, 255).astype(np.uint8)


def channel_shuffle(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    perm = rng.permutation(3)
    return crop[..., perm]


def color_jitter(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = brightness_contrast(crop, rng)
    hsv = rgb_to_hsv(out)
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 + rng.uniform(-0.2, 0.2)), 0, 1)
    hsv[..., 0] = (hsv[..., 0] + rng.uniform(-0.05, 0.05)) % 1.0
    return hsv_to_rgb(hsv)


def text_color_perturb(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Brighten low-luminance (ink-like) pixels to vary the text color."""
    gray = to_grayscale(crop)
    mask = gray < TEXT_COLOR_LUMA_THRESHOLD
    out = crop.astype(np.float64)
    delta = rng.uniform(30.0, 130.0, size=3)
    out[mask] += delta
    return np.clip(out, 0, 255).astype(np.uint8)


AUGMENTATION_POOL = (
    brightness_contrast,
    hue_saturation_value,
    motion_blur,
    rgb_shift,
    channel_shuffle,
    color_jitter,
    text_color_perturb,
)


def sample_op_count(rng: np.random.Generator, pool_size: int | None = None) -> int:
    """Number of ops to compose: Pr(k) proportional to 1/k."""
    if pool_size is None:
        pool_size = len(AUGMENTATION_POOL)
    weights = 1.0 / np.arange(1, pool_size + 1)
    weights /= weights.sum()
    return int(rng.choice(np.arange(1, pool_size + 1), p=weights))


def compose_photometric(crop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply a 1/k-weighted count of distinct pool ops in random order."""
    k = sample_op_count(rng)
    order = rng.permutation(len(AUGMENTATION_POOL))[:k]
    out = crop
    for idx in order:
        out = AUGMENTATION_POOL[int(idx)](out, rng)
    return out
