"""Crop quality: does a bounding box tightly enclose its characters?

The core primitive is a border-integrity test: binarize, find connected
components, and flag any sufficiently large foreground component that
touches the box boundary without being fully inside it (one-pixel
tolerance). It runs in two modes: `global_mode` pads the box by a margin and
works on the full image (so characters straddling the box edge are seen),
while local mode inspects the crop alone.

A crop is labeled by running the test in both polarities (dark-on-light and
light-on-dark foreground) and both modes. Ill-defined means all four runs
flag contact; if any local run disagrees with its global counterpart the
crop is discarded as ambiguous; anything else is well-defined, with
`fg_darker` recording which polarity passed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .binarize import binarize, connected_components, otsu_threshold
from .util import to_grayscale

BORDER_TOL = 1
DEFAULT_MIN_COMPONENT_AREA = 4
DEFAULT_STRIPE_THICKNESS = 9

GSCR_MAGIC = b"GSCR"


class CropLabel(Enum):
    WELL = "well"
    ILL = "ill"
    DISCARD = "discard"


@dataclass(frozen=True)
class StripeInputs:
    """Edge-neighborhood strips around a crop.

    tb stacks the vertically-flipped top strip over the bottom strip
    ((t_top + t_bottom) x w); lr places the horizontally-flipped left strip
    beside the right strip (h x (t_left + t_right)). In every strip, index 0
    along the thickness axis is the row/column adjacent to the crop border.
    Strips are truncated at the image edge and may have zero thickness.
    """

    tb: np.ndarray
    lr: np.ndarray
    thickness: int


@dataclass(frozen=True)
class QualityRecord:
    """One labeled crop for the quality dataset."""

    doc_id: str
    box: tuple[int, int, int, int]  # (x0, y0, x1, y1)
    label: int  # 1 = well-defined, 0 = ill-defined
    origin: str  # natural_ill | perturbed_ill | well
    fg_darker: bool | None


def extract_stripes(image: np.ndarray, box: tuple[int, int, int, int],
                    t: int = DEFAULT_STRIPE_THICKNESS) -> StripeInputs:
    """Extract the four edge strips of thickness `t` around `box`.

    The top strip is flipped vertically and the left strip horizontally so
    that index 0 along the thickness axis always sits next to the crop
    border; top/bottom are then stacked into `tb` and left/right into `lr`.
    """
    if t < 1:
        raise ValueError("stripe thickness must be >= 1")
    x0, y0, x1, y1 = box
    h_img, w_img = image.shape[:2]
    top = image[max(0, y0 - t):y0, x0:x1]
    bottom = image[y1:min(h_img, y1 + t), x0:x1]
    left = image[y0:y1, max(0, x0 - t):x0]
    right = image[y0:y1, x1:min(w_img, x1 + t)]
    tb = np.concatenate([top[::-1], bottom], axis=0)
    lr = np.concatenate([left[:, ::-1], right], axis=1)
    return StripeInputs(tb=tb.copy(), lr=lr.copy(), thickness=t)


def border_integrity_test(image: np.ndarray,
                          box: tuple[int, int, int, int] | None = None,
                          global_mode: bool = True,
                          invert_mask: bool = True,
                          min_component_area: int = DEFAULT_MIN_COMPONENT_AREA) -> bool:
    """True iff some foreground component breaks the box/crop border.

    Global mode: `image` is the full page and `box` = (x0, y0, x1, y1); the
    box is padded by max(h//2, 8) pixels, the padded window binarized with
    Otsu, and a component counts as contact when it intersects the box but
    is not fully inside it (one-pixel shrink). Local mode: `image` is the
    crop itself (box ignored); contact means a component's bounding box
    reaches the crop border beyond the one-pixel tolerance ring.

    invert_mask selects the foreground polarity: True takes pixels <=
    threshold (dark foreground), False takes pixels > threshold.
    """
    if global_mode:
        if box is None:
            raise ValueError("global mode needs a box")
        x0, y0, x1, y1 = box
        if x1 - x0 < 1 or y1 - y0 < 1:
            raise ValueError("degenerate box")
        h_img, w_img = image.shape[:2]
        h = y1 - y0
        m = max(h // 2, 8)
        px0, px1 = max(0, x0 - m), min(w_img, x1 + m)
        py0, py1 = max(0, y0 - m), min(h_img, y1 + m)
        gray = to_grayscale(image[py0:py1, px0:px1])
    else:
        if image.ndim != 2:
            gray = to_grayscale(image)
        else:
            gray = image
        if gray.shape[0] < 1 or gray.shape[1] < 1:
            raise ValueError("degenerate crop")
        px0 = py0 = 0

    thr = otsu_threshold(gray)
    fg = binarize(gray, thr, invert=invert_mask)
    comps = connected_components(fg)

    if global_mode:
        for c in comps:
            if c.area < min_component_area:
                continue
            cx1, cy1 = c.x + px0, c.y + py0
            cx2, cy2 = cx1 + c.w, cy1 + c.h
            intersects = (cx1 <= x1 and cx2 >= x0) and (cy1 <= y1 and cy2 >= y0)
            fully_inside = (
                cx1 >= x0 + BORDER_TOL and cx2 <= x1 - BORDER_TOL
                and cy1 >= y0 + BORDER_TOL and cy2 <= y1 - BORDER_TOL
            )
            if intersects and not fully_inside:
                return True
        return False

    h, w = gray.shape
    for c in comps:
        if c.area < min_component_area:
            continue
        cx1, cy1, cx2, cy2 = c.x, c.y, c.x + c.w, c.y + c.h
        touches = (cx1 <= BORDER_TOL or cy1 <= BORDER_TOL
                   or cx2 >= w - BORDER_TOL or cy2 >= h - BORDER_TOL)
        inside = (cx1 >= BORDER_TOL and cy1 >= BORDER_TOL
                  and cx2 <= w - BORDER_TOL and cy2 <= h - BORDER_TOL)
        if touches and not inside:
            return True
    return False


def label_crop_quality(image: np.ndarray, box: tuple[int, int, int, int],
                       min_component_area: int = DEFAULT_MIN_COMPONENT_AREA,
                       ) -> tuple[CropLabel, bool | None]:
    """Classify a box as (WELL, fg_darker) / (ILL, None) / (DISCARD, None).

    Runs the border test in both polarities and both modes. The crop is ill
    only when all four runs flag contact; it is discarded when a local run
    disagrees with its global counterpart (the crop looks clean on its own
    but dirty in context, or vice versa); otherwise it is well-defined and
    fg_darker records whether the dark-foreground polarity was the clean one.
    """
    x0, y0, x1, y1 = box
    g_dark = border_integrity_test(image, box, global_mode=True, invert_mask=True,
                                   min_component_area=min_component_area)
    g_light = border_integrity_test(image, box, global_mode=True, invert_mask=False,
                                    min_component_area=min_component_area)
    crop_gray = to_grayscale(image[y0:y1, x0:x1])
    s_dark = border_integrity_test(crop_gray, global_mode=False, invert_mask=True,
                                   min_component_area=min_component_area)
    s_light = border_integrity_test(crop_gray, global_mode=False, invert_mask=False,
                                    min_component_area=min_component_area)
    if s_dark != g_dark or s_light != g_light:
        return CropLabel.DISCARD, None
    if g_dark and g_light:
        return CropLabel.ILL, None
    return CropLabel.WELL, not g_dark


def max_perturbation(box_w: int, box_h: int) -> int:
    """Largest per-side offset used when corrupting a box: scale-adaptive
    (floor of 0.3x the longer side, in exact integer arithmetic), capped at
    20 px."""
    return min(20, (3 * max(box_h, box_w)) // 10)


def sample_offset(rng: np.random.Generator, delta_max: int, rho: float = 0.5) -> int:
    """Draw an offset in {1..delta_max} with Pr(k) proportional to rho^(k-1)."""
    if delta_max < 1:
        raise ValueError("delta_max must be >= 1")
    weights = rho ** np.arange(delta_max)
    weights /= weights.sum()
    return int(rng.choice(np.arange(1, delta_max + 1), p=weights))


def perturb_box(box: tuple[int, int, int, int], image_w: int, image_h: int,
                rng: np.random.Generator, rho: float = 0.5,
                ) -> tuple[tuple[int, int, int, int], bool]:
    """Pad or crop a box's sides by small offsets to make it ill-defined.

    Per-side offsets follow a truncated geometric law biased toward small
    moves; with probability 1/2 all active sides share one offset and one
    operation. Crop moves are reduced (or skipped) so width/height stay
    >= 2, and the result is clipped to the image. Returns (box, changed);
    boxes too small to perturb come back unchanged with changed=False.
    """
    x0, y0, x1, y1 = box
    delta_max = max_perturbation(x1 - x0, y1 - y0)
    if delta_max < 1:
        return box, False

    sides = [s for s in ("left", "right", "top", "bottom") if rng.random() < 0.5]
    if not sides:
        sides = [("left", "right", "top", "bottom")[int(rng.integers(0, 4))]]

    coherent = rng.random() < 0.5
    if coherent:
        shared_delta = sample_offset(rng, delta_max, rho)
        shared_op = "pad" if rng.random() < 0.5 else "crop"

    nx0, ny0, nx1, ny1 = x0, y0, x1, y1
    for side in sides:
        if coherent:
            delta, op = shared_delta, shared_op
        else:
            delta = sample_offset(rng, delta_max, rho)
            op = "pad" if rng.random() < 0.5 else "crop"
        if op == "crop":
            # shrink inward, keeping width/height >= 2
            if side in ("left", "right"):
                feasible = (nx1 - nx0) - 2
            else:
                feasible = (ny1 - ny0) - 2
            delta = min(delta, feasible)
            if delta < 1:
                continue
            if side == "left":
                nx0 += delta
            elif side == "right":
                nx1 -= delta
            elif side == "top":
                ny0 += delta
            else:
                ny1 -= delta
        else:
            if side == "left":
                nx0 -= delta
            elif side == "right":
                nx1 += delta
            elif side == "top":
                ny0 -= delta
            else:
                ny1 += delta

    nx0, ny0 = max(0, nx0), max(0, ny0)
    nx1, ny1 = min(image_w, nx1), min(image_h, ny1)
    if nx1 - nx0 < 2 or ny1 - ny0 < 2:
        return box, False
    new = (nx0, ny0, nx1, ny1)
    return new, new != box


# ---------------------------------------------------------------------------
# dataset preparation
# ---------------------------------------------------------------------------

DEFAULT_WIDTH_BIN_EDGES = (32, 64, 128)  # 4 bins: <=32, <=64, <=128, larger


def _bin_index(width: int, edges: Sequence[int]) -> int:
    for i, e in enumerate(edges):
        if width <= e:
            return i
    return len(edges)


def collect_doc_candidates(image: np.ndarray, doc_id: str, boxes: Sequence[tuple[int, int, int, int]],
                           rng: np.random.Generator, rho: float = 0.5,
                           min_component_area: int = DEFAULT_MIN_COMPONENT_AREA) -> list[dict]:
    """Label every text box of one document and attach perturbed variants.

    Boxes are visited in a shuffled order (per-document RNG, so the result
    is reproducible regardless of scheduling). Each well-defined box also
    gets one perturbation attempt; the perturbed box is kept only when a
    quick opposite-polarity contact check and a full relabeling both
    classify it as ill-defined, which guarantees stored labels survive
    re-evaluation.
    """
    h_img, w_img = image.shape[:2]
    order = rng.permutation(len(boxes))
    out: list[dict] = []
    for i in order:
        box = boxes[int(i)]
        label, fg_darker = label_crop_quality(image, box,
                                              min_component_area=min_component_area)
        if label is CropLabel.DISCARD:
            continue
        if label is CropLabel.ILL:
            out.append({"doc_id": doc_id, "box": box, "kind": "natural_ill"})
            continue
        cand = {"doc_id": doc_id, "box": box, "kind": "well",
                "fg_darker": fg_darker, "perturbed": None}
        pbox, changed = perturb_box(box, w_img, h_img, rng, rho=rho)
        if changed:
            contact = border_integrity_test(
                image, pbox, global_mode=True, invert_mask=not fg_darker,
                min_component_area=min_component_area)
            if contact:
                plabel, _ = label_crop_quality(image, pbox,
                                               min_component_area=min_component_area)
                if plabel is CropLabel.ILL:
                    cand["perturbed"] = pbox
        out.append(cand)
    return out


def prepare_quality_dataset(doc_candidates: Sequence[tuple[str, list[dict]]],
                            target: int,
                            per_bucket_cap: int | None = None,
                            width_bin_edges: Sequence[int] = DEFAULT_WIDTH_BIN_EDGES,
                            ) -> tuple[list[QualityRecord], bool]:
    """Merge per-document candidates into a balanced labeled dataset.

    Buckets are (width bin, label) pairs with a shared cap. While an ill
    bucket has room, well-defined boxes with a valid perturbed variant are
    stored as perturbed ill examples instead, which keeps the labels
    balanced even on corpora whose OCR is clean. Naturally ill boxes may
    fill at most half of each ill bucket so perturbed examples always
    appear. Deterministic: candidates are consumed in doc_id order.

    Returns (records, exhausted) where exhausted means the corpus ran out
    before `target` records were stored.
    """
    n_bins = len(width_bin_edges) + 1
    if per_bucket_cap is None:
        per_bucket_cap = max(1, -(-target // (2 * n_bins)))
    natural_cap = -(-per_bucket_cap // 2)

    well_count = [0] * n_bins
    ill_count = [0] * n_bins
    natural_count = [0] * n_bins
    records: list[QualityRecord] = []

    for doc_id, cands in sorted(doc_candidates, key=lambda p: p[0]):
        for cand in cands:
            if len(records) >= target:
                return records, False
            x0, y0, x1, y1 = cand["box"]
            if cand["kind"] == "natural_ill":
                b = _bin_index(x1 - x0, width_bin_edges)
                if ill_count[b] < per_bucket_cap and natural_count[b] < natural_cap:
                    ill_count[b] += 1
                    natural_count[b] += 1
                    records.append(QualityRecord(
                        doc_id=doc_id, box=cand["box"], label=0,
                        origin="natural_ill", fg_darker=None))
                continue
            pbox = cand.get("perturbed")
            if pbox is not None:
                pb = _bin_index(pbox[2] - pbox[0], width_bin_edges)
                if ill_count[pb] < per_bucket_cap:
                    ill_count[pb] += 1
                    records.append(QualityRecord(
                        doc_id=doc_id, box=pbox, label=0,
                        origin="perturbed_ill", fg_darker=None))
                    continue
            b = _bin_index(x1 - x0, width_bin_edges)
            if well_count[b] < per_bucket_cap:
                well_count[b] += 1
                records.append(QualityRecord(
                    doc_id=doc_id, box=cand["box"], label=1,
                    origin="well", fg_darker=cand["fg_darker"]))
    return records, len(records) < target


# ---------------------------------------------------------------------------
# quality scoring backends
# ---------------------------------------------------------------------------

class QualityScorer:
    """Pluggable crop-quality score in [0, 1].

    The algorithmic backend maps the labeling outcome to 1.0 (well), 0.0
    (ill) or 0.5 (discard; exactly the default threshold, so the strict ">"
    retention test excludes it). The external backend looks up precomputed
    model scores by crop id and raises KeyError on a miss.
    """

    def __init__(self, backend: str = "algorithmic",
                 scores: dict[int, float] | None = None,
                 threshold: float = 0.5,
                 min_component_area: int = DEFAULT_MIN_COMPONENT_AREA):
        if backend not in ("algorithmic", "external"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "external" and scores is None:
            raise ValueError("external backend needs a score store")
        self.backend = backend
        self.scores = scores
        self.threshold = threshold
        self.min_component_area = min_component_area

    def score(self, image: np.ndarray, box: tuple[int, int, int, int],
              crop_id: int | None = None) -> float:
        return quality_score(image, box, self, crop_id=crop_id)


def quality_score(image: np.ndarray, box: tuple[int, int, int, int],
                  scorer: QualityScorer, crop_id: int | None = None) -> float:
    """Score one crop with the configured backend (see QualityScorer)."""
    if scorer.backend == "external":
        if crop_id is None:
            raise ValueError("external backend needs a crop_id")
        try:
            return scorer.scores[crop_id]
        except KeyError:
            raise KeyError(f"no precomputed quality score for crop_id {crop_id}") from None
    label, _ = label_crop_quality(image, box,
                                  min_component_area=scorer.min_component_area)
    if label is CropLabel.WELL:
        return 1.0
    if label is CropLabel.ILL:
        return 0.0
    return 0.5


# ---------------------------------------------------------------------------
# score store (binary, little-endian, sorted by crop_id)
# ---------------------------------------------------------------------------

def save_score_store(path, scores: dict[int, float]) -> None:
    """Write a quality-score store: magic, u32 count, (u64 id, f32 score)*."""
    from .util import atomic_write_bytes

    items = sorted(scores.items())
    blob = bytearray(GSCR_MAGIC)
    blob += struct.pack("<I", len(items))
    for cid, score in items:
        if not (0.0 <= score <= 1.0):
            raise ValueError(f"score out of range for crop_id {cid}: {score}")
        blob += struct.pack("<Qf", cid, score)
    atomic_write_bytes(path, bytes(blob))


def load_score_store(path) -> dict[int, float]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != GSCR_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    (count,) = struct.unpack_from("<I", data, 4)
    expected = 8 + count * 12
    if len(data) != expected:
        raise ValueError(f"{path}: truncated store ({len(data)} bytes, expected {expected})")
    scores: dict[int, float] = {}
    off = 8
    for _ in range(count):
        cid, score = struct.unpack_from("<Qf", data, off)
        off += 12
        if cid in scores:
            raise ValueError(f"{path}: duplicate crop_id {cid}")
        if not np.isfinite(score):
            raise ValueError(f"{path}: non-finite score for crop_id {cid}")
        scores[cid] = float(score)
    return scores
