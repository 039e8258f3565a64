"""Mining of (anchor, positive, negatives) crop tuples for contrastive
training, plus the matching InfoNCE-style loss as a verification utility.

Positives are same-line segments with identical geometry and character
count whose centers sit within tau0 mean character widths of the anchor.
Negatives share the anchor's character count and roughly its aspect ratio
but must be visually unrelated: augmented copies of the anchor itself (hard
negatives), far-away segments from the same page, then segments from other
documents until N negatives are reached.

Everything is deterministic under (seed, corpus): each anchor derives its
own RNG from (seed, doc_id, anchor index), cross-document scanning follows
doc_id order starting after the anchor's document, and output order is
(doc_id, anchor index).
"""

from __future__ import annotations

import base64
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .ocr import CharStats, DocumentRecord, compute_char_stats
from .photometric import compose_photometric
from .segments import LineSegment, extract_line_segments
from .similarity import CropEmbedding, crop_similarity
from .util import crop_id_for, derive_rng, load_image_rgb, resize_bilinear

log = logging.getLogger(__name__)

GEOMETRIC_BRANCH_P = 0.15
MIN_DIFF_RATIO = 0.05
MIN_L2_DISTANCE = 12.0
MAX_AUGMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class MiningConfig:
    """Thresholds and sizes for tuple mining (library defaults baked in)."""

    tau0: float = 10.0      # positive center-distance multiplier (x mean char width)
    tau1: float = 10.0      # negative vertical-distance multiplier (x mean char height)
    epsilon: float = 0.1    # aspect-ratio tolerance
    n_negatives: int = 256  # N
    m_alt: int = 10         # augmented hard negatives per anchor
    tau: float = 0.1        # loss temperature
    strict: bool = False    # drop tuples that cannot reach N negatives

    def __post_init__(self):
        if self.tau0 <= 0 or self.tau1 <= 0:
            raise ValueError("tau0/tau1 must be positive")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        if self.n_negatives < self.m_alt:
            raise ValueError("n_negatives must be >= m_alt")


@dataclass(frozen=True)
class CropRef:
    """A crop addressed by document and box (pixels live on disk)."""

    doc_id: str
    box: tuple[int, int, int, int]  # (x, y, w, h)
    is_blank: bool

    @property
    def crop_id(self) -> int:
        x, y, w, h = self.box
        return crop_id_for(self.doc_id, x, y, w, h)


@dataclass(frozen=True)
class Negative:
    kind: str  # hard_augmented | intra_image | cross_document
    ref: CropRef | None = None
    payload: np.ndarray | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ContrastiveTuple:
    anchor: CropRef
    positive: CropRef
    negatives: tuple[Negative, ...]
    short: bool  # True when fewer than N negatives were available


def _ref(doc_id: str, seg: LineSegment) -> CropRef:
    return CropRef(doc_id=doc_id, box=seg.box, is_blank=seg.is_blank)


def positive_candidates(anchor_idx: int, segments: Sequence[LineSegment],
                        stats: CharStats, tau0: float) -> list[int]:
    """Same line, exact geometry and character count, centers within
    tau0 x mean char width."""
    a = segments[anchor_idx]
    limit = tau0 * stats.mean_w
    out = []
    for j, s in enumerate(segments):
        if j == anchor_idx:
            continue
        if (s.line_index == a.line_index and s.w == a.w and s.h == a.h
                and s.char_count == a.char_count
                and math.dist(s.center, a.center) < limit):
            out.append(j)
    return out


def mine_positive(anchor_idx: int, segments: Sequence[LineSegment],
                  stats: CharStats, tau0: float,
                  rng: np.random.Generator) -> int | None:
    """Uniformly pick one positive, or None (anchor is then skipped)."""
    cands = positive_candidates(anchor_idx, segments, stats, tau0)
    if not cands:
        return None
    return cands[int(rng.integers(0, len(cands)))]


def intra_negative_candidates(anchor_idx: int, segments: Sequence[LineSegment],
                              stats: CharStats, tau1: float,
                              epsilon: float) -> list[int]:
    """Far-away same-page segments with matching count and aspect ratio."""
    a = segments[anchor_idx]
    out = []
    for j, s in enumerate(segments):
        if j == anchor_idx:
            continue
        if abs(s.y - a.y) <= tau1 * stats.mean_h:
            continue
        if s.char_count != a.char_count:
            continue
        ratio = s.aspect / a.aspect
        if 1.0 - epsilon <= ratio <= 1.0 + epsilon:
            out.append(j)
    return out


def cross_negative_candidates(anchor: LineSegment, anchor_doc: str,
                              corpus: Sequence[tuple[str, Sequence[LineSegment]]],
                              needed: int, epsilon: float) -> list[CropRef]:
    """Scan other documents in doc_id order (starting after the anchor's
    document, wrapping) until `needed` matches are found."""
    if needed <= 0:
        return []
    doc_ids = [d for d, _ in corpus]
    try:
        start = doc_ids.index(anchor_doc) + 1
    except ValueError:
        start = 0
    out: list[CropRef] = []
    for k in range(len(corpus)):
        doc_id, segments = corpus[(start + k) % len(corpus)]
        if doc_id == anchor_doc:
            continue
        for s in segments:
            if s.char_count != anchor.char_count:
                continue
            ratio = s.aspect / anchor.aspect
            if not (1.0 - epsilon <= ratio <= 1.0 + epsilon):
                continue
            out.append(_ref(doc_id, s))
            if len(out) >= needed:
                return out
    return out


# ---------------------------------------------------------------------------
# hard negatives: augmented copies of the anchor
# ---------------------------------------------------------------------------

def _vertical_shift(image: np.ndarray, box: tuple[int, int, int, int],
                    rng: np.random.Generator) -> np.ndarray:
    """Shift the crop window up/down by a height-proportional offset and
    resize back if the page boundary clipped it."""
    x, y, w, h = box
    frac = rng.uniform(0.1, 0.35)
    offset = max(1, int(round(frac * h)))
    if rng.random() < 0.5:
        offset = -offset
    y0 = min(max(0, y + offset), image.shape[0] - 1)
    y1 = min(image.shape[0], y0 + h)
    out = image[y0:y1, x:x + w]
    if out.shape[:2] != (h, w):
        out = resize_bilinear(out, w, h)
    return out.copy()


def _distinct_enough(candidate: np.ndarray, original: np.ndarray) -> bool:
    diff = candidate != original
    if diff.ndim == 3:
        diff = diff.any(axis=2)
    if diff.mean() < MIN_DIFF_RATIO:
        return False
    l2 = np.linalg.norm(candidate.astype(np.float64) - original.astype(np.float64))
    return l2 >= MIN_L2_DISTANCE


def augment_crop(image: np.ndarray, box: tuple[int, int, int, int],
                 is_blank: bool, rng: np.random.Generator) -> np.ndarray | None:
    """One augmented (visually altered, structurally similar) copy.

    Geometric misalignment with probability 0.15 on non-blank crops,
    otherwise a composition of photometric ops. Redrawn until the result
    differs by at least 5% of pixels and an L2 distance of 12; None after
    100 failed attempts.
    """
    x, y, w, h = box
    crop = image[y:y + h, x:x + w]
    for _ in range(MAX_AUGMENT_ATTEMPTS):
        if not is_blank and rng.random() < GEOMETRIC_BRANCH_P:
            cand = _vertical_shift(image, box, rng)
        else:
            cand = compose_photometric(crop, rng)
        if _distinct_enough(cand, crop):
            return cand
    return None


# ---------------------------------------------------------------------------
# full mining pass
# ---------------------------------------------------------------------------

def mine_anchor_tuple(anchor_idx: int, doc_id: str, image: np.ndarray,
                      segments: Sequence[LineSegment], stats: CharStats,
                      corpus: Sequence[tuple[str, Sequence[LineSegment]]],
                      config: MiningConfig,
                      rng: np.random.Generator) -> ContrastiveTuple | None:
    """Steps in order: positive, hard negatives, intra-image, cross-document."""
    pos_idx = mine_positive(anchor_idx, segments, stats, config.tau0, rng)
    if pos_idx is None:
        return None
    anchor = segments[anchor_idx]

    negatives: list[Negative] = []
    for _ in range(config.m_alt):
        payload = augment_crop(image, anchor.box, anchor.is_blank, rng)
        if payload is not None:
            negatives.append(Negative(kind="hard_augmented", payload=payload))

    room = config.n_negatives - len(negatives)
    for j in intra_negative_candidates(anchor_idx, segments, stats,
                                       config.tau1, config.epsilon)[:room]:
        negatives.append(Negative(kind="intra_image", ref=_ref(doc_id, segments[j])))

    room = config.n_negatives - len(negatives)
    for ref in cross_negative_candidates(anchor, doc_id, corpus, room, config.epsilon):
        negatives.append(Negative(kind="cross_document", ref=ref))

    short = len(negatives) < config.n_negatives
    if short and config.strict:
        return None
    return ContrastiveTuple(
        anchor=_ref(doc_id, anchor),
        positive=_ref(doc_id, segments[pos_idx]),
        negatives=tuple(negatives),
        short=short,
    )


def mine_contrastive_tuples(docs: Iterable[DocumentRecord], config: MiningConfig,
                            seed: int,
                            image_loader: Callable[[DocumentRecord], np.ndarray] | None = None,
                            max_run: int | None = None,
                            ) -> Iterator[ContrastiveTuple]:
    """Mine tuples over a whole corpus, streaming in (doc_id, anchor) order."""
    if image_loader is None:
        image_loader = lambda doc: load_image_rgb(doc.image_path)
    docs = sorted(docs, key=lambda d: d.doc_id)
    corpus: list[tuple[str, list[LineSegment]]] = []
    per_doc: dict[str, tuple[DocumentRecord, list[LineSegment], CharStats]] = {}
    for doc in docs:
        kwargs = {} if max_run is None else {"max_run": max_run}
        segs = extract_line_segments(doc, contrastive_mode=True, **kwargs)
        if not segs:
            continue
        stats = compute_char_stats(doc)
        corpus.append((doc.doc_id, segs))
        per_doc[doc.doc_id] = (doc, segs, stats)

    for doc_id, segs in corpus:
        doc, _, stats = per_doc[doc_id]
        image = image_loader(doc)
        for anchor_idx in range(len(segs)):
            rng = derive_rng(seed, "mine", doc_id, anchor_idx)
            tup = mine_anchor_tuple(anchor_idx, doc_id, image, segs, stats,
                                    corpus, config, rng)
            if tup is not None:
                if tup.short:
                    log.warning("tuple %s/%d short: %d negatives",
                                doc_id, anchor_idx, len(tup.negatives))
                yield tup


# ---------------------------------------------------------------------------
# loss (verification utility; training happens in the trainer package)
# ---------------------------------------------------------------------------

def contrastive_loss_scores(pos_score: float, neg_scores: Sequence[float],
                            tau: float) -> float:
    """-log( e^(s+/tau) / (e^(s+/tau) + sum e^(s-/tau)) ), max-stabilized."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    logits = np.asarray([pos_score, *neg_scores], dtype=np.float64) / tau
    m = logits.max()
    return float(-(logits[0] - m) + np.log(np.exp(logits - m).sum()))


def contrastive_loss(anchor: CropEmbedding, positive: CropEmbedding,
                     negatives: Sequence[CropEmbedding], tau: float,
                     anchor_blank: bool = False, positive_blank: bool = False,
                     negative_blanks: Sequence[bool] | None = None) -> float:
    """Tuple loss using the dual-head similarity (blank-aware routing)."""
    if negative_blanks is None:
        negative_blanks = [False] * len(negatives)
    pos = crop_similarity(anchor, positive, anchor_blank or positive_blank)
    negs = [crop_similarity(anchor, n, anchor_blank or b)
            for n, b in zip(negatives, negative_blanks)]
    return contrastive_loss_scores(pos, negs, tau)


# ---------------------------------------------------------------------------
# tuple export (line-delimited JSON; payloads inline as base64 PNG)
# ---------------------------------------------------------------------------

def _encode_payload(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_payload(data: str) -> np.ndarray:
    buf = io.BytesIO(base64.b64decode(data))
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def tuple_record(tup: ContrastiveTuple) -> dict:
    def ref_dict(r: CropRef) -> dict:
        return {"doc_id": r.doc_id, "box": list(r.box), "is_blank": r.is_blank}

    negatives = []
    for n in tup.negatives:
        if n.kind == "hard_augmented":
            negatives.append({"kind": n.kind,
                              "payload_png_b64": _encode_payload(n.payload)})
        else:
            negatives.append({"kind": n.kind, **ref_dict(n.ref)})
    return {"anchor": ref_dict(tup.anchor), "positive": ref_dict(tup.positive),
            "negatives": negatives, "short": tup.short}


def write_tuples(path, tuples: Iterable[ContrastiveTuple], header: dict | None = None) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps({"_header": header}, sort_keys=True) + "\n")
        for tup in tuples:
            f.write(json.dumps(tuple_record(tup), sort_keys=True) + "\n")
            count += 1
    return count
