"""Leakage filter: exact 64x64 patch hashing between corpora.

Every stride-stepped 64x64 grayscale patch of an image is hashed with
64-bit FNV-1a over its row-major bytes. A training image is removed when
any of its patch hashes collides with any evaluation image's patch hash,
so full or partial pixel-exact copies at patch granularity are caught.
With stride > 1 copies at non-stride-aligned offsets can be missed; the
default stride of 64 (non-overlapping) keeps the pass linear.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .util import fnv1a64_batch, load_image_rgb, to_grayscale

log = logging.getLogger(__name__)

PATCH = 64
DEFAULT_STRIDE = 64


@dataclass
class PatchHashSet:
    hashes: set[int]
    stride: int
    patch: int = PATCH


def patch_hashes(image: np.ndarray, stride: int = DEFAULT_STRIDE,
                 grayscale: bool = True) -> PatchHashSet:
    """Hash all stride-stepped 64x64 patches of an image.

    Images smaller than 64 pixels in either dimension are zero-padded and
    contribute their single top-left patch.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if image.ndim == 3 and grayscale:
        plane = to_grayscale(image)
    elif image.ndim == 3:
        plane = image.reshape(image.shape[0], image.shape[1] * image.shape[2])
    else:
        plane = image
    h, w = plane.shape[0], plane.shape[1]
    unit = 1 if grayscale or image.ndim == 2 else 3
    pw = PATCH * unit
    if h < PATCH or w < pw:
        padded = np.zeros((max(h, PATCH), max(w, pw)), dtype=np.uint8)
        padded[:h, :w] = plane
        plane = padded[:PATCH, :pw]
        h, w = PATCH, pw

    rows = []
    for y in range(0, h - PATCH + 1, stride):
        for x in range(0, (w - pw) // unit + 1, stride):
            rows.append(plane[y:y + PATCH, x * unit:x * unit + pw].reshape(-1))
    hashes = fnv1a64_batch(np.stack(rows))
    return PatchHashSet(hashes=set(int(v) for v in hashes), stride=stride)


@dataclass
class LeakageReport:
    retained: list[str]
    removed: list[tuple[str, str]]  # (train doc_id, first colliding eval doc_id)
    errors: list[tuple[str, str]]   # (doc_id, reason)


def filter_leakage(train: Iterable[tuple[str, str]], evals: Iterable[tuple[str, str]],
                   stride: int = DEFAULT_STRIDE, grayscale: bool = True) -> LeakageReport:
    """Drop train images whose patch hashes intersect the eval hash union.

    `train` and `evals` are (doc_id, image_path) pairs. Unreadable images
    are counted and skipped with a warning (eval side: its hashes are
    simply unavailable; train side: the image is left out of the retained
    list and reported under errors). Decisions are order-independent and
    the pass is idempotent.
    """
    eval_hashes: dict[int, str] = {}
    errors: list[tuple[str, str]] = []
    for doc_id, path in sorted(evals):
        try:
            image = load_image_rgb(path)
        except Exception as e:  # unreadable image: warn and continue
            log.warning("eval image %s unreadable: %s", doc_id, e)
            errors.append((doc_id, f"eval unreadable: {e}"))
            continue
        for hv in patch_hashes(image, stride=stride, grayscale=grayscale).hashes:
            eval_hashes.setdefault(hv, doc_id)

    retained: list[str] = []
    removed: list[tuple[str, str]] = []
    for doc_id, path in train:
        try:
            image = load_image_rgb(path)
        except Exception as e:
            log.warning("train image %s unreadable: %s", doc_id, e)
            errors.append((doc_id, f"train unreadable: {e}"))
            continue
        hs = patch_hashes(image, stride=stride, grayscale=grayscale).hashes
        hit = None
        for hv in sorted(hs):
            if hv in eval_hashes:
                hit = eval_hashes[hv]
                break
        if hit is None:
            retained.append(doc_id)
        else:
            removed.append((doc_id, hit))
    return LeakageReport(retained=retained, removed=removed, errors=errors)
