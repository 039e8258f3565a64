"""Classical thresholding and connected-component analysis.

Otsu's threshold is computed in exact integer arithmetic so the argmax (and
its lowest-threshold tie-break) is bit-stable. Sauvola's local threshold map
uses integer integral images over an edge-replicated padding, making the
per-pixel mean/std identical to a naive windowed computation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .util import to_grayscale

SAUVOLA_R = 128.0
DEFAULT_SAUVOLA_WINDOW = 25
DEFAULT_SAUVOLA_K = 0.2

_CONN8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ComponentStats:
    """Bounding box and pixel count of one foreground component."""

    x: int
    y: int
    w: int
    h: int
    area: int


def otsu_threshold(gray: np.ndarray) -> int:
    """Threshold maximizing between-class variance of the 256-bin histogram.

    Ties are broken toward the lowest threshold. A constant image returns
    its constant value (both classes on one side; callers must handle it).
    """
    gray = np.asarray(gray)
    if gray.size == 0:
        raise ValueError("empty image")
    hist = np.bincount(gray.ravel().astype(np.uint8), minlength=256)
    return otsu_from_histogram(hist)


def otsu_from_histogram(hist: np.ndarray) -> int:
    """Otsu's threshold from a 256-bin histogram, exact integer arithmetic.

    Between-class variance at threshold t is proportional to
    (S0*T - S*W0)^2 / (W0*(T - W0)) with W0/S0 the count/intensity-sum of
    bins <= t and T/S the totals; fractions are compared by cross
    multiplication so no floating-point rounding can flip the argmax.
    """
    hist = [int(v) for v in hist]
    if len(hist) != 256:
        raise ValueError("expected a 256-bin histogram")
    total = sum(hist)
    if total == 0:
        raise ValueError("empty histogram")
    nonzero = [i for i, v in enumerate(hist) if v]
    if len(nonzero) == 1:
        return nonzero[0]
    s_total = sum(i * v for i, v in enumerate(hist))

    best_t = 0
    best_num = -1  # numerator of best variance fraction
    best_den = 1
    w0 = 0
    s0 = 0
    for t in range(256):
        w0 += hist[t]
        s0 += t * hist[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        num = (s0 * total - s_total * w0) ** 2
        den = w0 * w1
        # strict > keeps the lowest threshold among exact ties
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t
    return best_t


def binarize(gray: np.ndarray, threshold: int, invert: bool = False) -> np.ndarray:
    """Threshold to a boolean foreground mask.

    invert=False: foreground is pixel > threshold (light-on-dark text);
    invert=True: foreground is pixel <= threshold (dark-on-light text).
    """
    if invert:
        return gray <= threshold
    return gray > threshold


def _window_sums(padded: np.ndarray, window: int) -> np.ndarray:
    """Sliding-window sums via an integral image (exact int64)."""
    ii = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    return (
        ii[window:, window:] - ii[:-window, window:]
        - ii[window:, :-window] + ii[:-window, :-window]
    )


def sauvola_threshold_map(gray: np.ndarray, window: int = DEFAULT_SAUVOLA_WINDOW,
                          k: float = DEFAULT_SAUVOLA_K) -> np.ndarray:
    """Per-pixel Sauvola threshold: T = m * (1 + k*(s/R - 1)), R = 128.

    m and s are the mean and standard deviation over an odd `window`
    centered at each pixel, with out-of-image samples replicated from the
    nearest edge pixel.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not (0.0 < k < 1.0):
        raise ValueError("k must be in (0, 1)")
    gray = np.asarray(gray, dtype=np.int64)
    half = window // 2
    padded = np.pad(gray, half, mode="edge")
    n = float(window * window)
    s1 = _window_sums(padded, window)
    s2 = _window_sums(padded * padded, window)
    m = s1 / n
    var = np.maximum(0.0, s2 / n - m * m)
    s = np.sqrt(var)
    return m * (1.0 + k * (s / SAUVOLA_R - 1.0))


def connected_components(mask: np.ndarray) -> list[ComponentStats]:
    """8-connected foreground components with exact bounding boxes and areas."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0 or not mask.any():
        return []
    labels, count = ndimage.label(mask, structure=_CONN8)
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    out = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = sl
        out.append(ComponentStats(
            x=int(xs.start), y=int(ys.start),
            w=int(xs.stop - xs.start), h=int(ys.stop - ys.start),
            area=int(areas[i]),
        ))
    return out


def estimate_foreground_color(crop: np.ndarray, window: int = DEFAULT_SAUVOLA_WINDOW,
                              k: float = DEFAULT_SAUVOLA_K) -> tuple[float, float, float]:
    """Mean RGB over pixels darker than their local Sauvola threshold.

    Blank crops (no pixel below threshold) fall back to the mean of the
    darkest 5% of pixels, so the result is always defined.
    """
    crop = np.asarray(crop)
    if crop.size == 0:
        raise ValueError("empty crop")
    if crop.ndim == 2:
        crop = np.stack([crop] * 3, axis=-1)
    gray = to_grayscale(crop)
    tmap = sauvola_threshold_map(gray, window=window, k=k)
    fg = gray < tmap
    if not fg.any():
        flat = gray.ravel()
        count = max(1, int(round(0.05 * flat.size)))
        idx = np.argsort(flat, kind="stable")[:count]
        pix = crop.reshape(-1, 3)[idx]
        mean = pix.mean(axis=0)
    else:
        mean = crop[fg].reshape(-1, 3).mean(axis=0)
    return (float(mean[0]), float(mean[1]), float(mean[2]))
