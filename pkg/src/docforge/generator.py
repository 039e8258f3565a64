"""End-to-end tampering: crop database, region sampling, and the
insertion / inpainting / copy-move / splicing / coverage branches.

Per document: sample up to n_max non-overlapping quality-retained regions,
then for each region take one branch. Blank regions may receive rendered
text (insertion, gated by p_ins); otherwise the region may be erased
(inpainting, gated by p_inp); otherwise it is replaced by the most similar
candidate crop, drawn either from the cross-document database (splicing,
gated by p_spl) or from the same page resized to fit (copy-move). Pasting a
blank candidate over a text region hides it, which realizes coverage
without a dedicated branch.

The ground-truth mask marks the full region rectangle for paste/render
branches and exactly the changed pixels for inpainting. All randomness
derives from (seed, doc_id), so output is reproducible regardless of worker
count or scheduling.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .binarize import estimate_foreground_color
from .inpaint import inpaint
from .mining import CropRef
from .ocr import DocumentRecord
from .quality import QualityScorer
from .render import BUILTIN_FONTS, fit_text_scale, render_text
from .segments import extract_line_segments
from .similarity import (
    CropEmbedding,
    EmbeddingStore,
    classical_features,
    crop_similarity,
)
from .util import boxes_overlap, crop_id_for, derive_rng, load_image_rgb, resize_bilinear

log = logging.getLogger(__name__)

COLOR_DELTAS = (-2, -1, 0, 1, 2)


@dataclass(frozen=True)
class GenerationConfig:
    """Generation gates and limits (library defaults baked in)."""

    tau2: float = 0.5        # crop quality retention threshold (strict >)
    p_ins: float = 0.05      # insertion gate for blank regions
    p_inp: float = 0.05      # inpainting gate
    p_spl: float = 0.5       # splicing (vs copy-move) gate
    n_max: int = 5           # max tampered regions per document
    eps_prime: float = 0.05  # copy-move aspect-ratio tolerance (0 = exact size)
    seed: int = 0
    fonts: tuple[str, ...] = BUILTIN_FONTS
    exclude_same_doc_splice: bool = True

    def __post_init__(self):
        for name in ("p_ins", "p_inp", "p_spl"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")


@dataclass(frozen=True)
class CropRecord:
    """One quality-retained crop in the database."""

    crop_id: int
    doc_id: str
    image_path: str
    box: tuple[int, int, int, int]  # (x, y, w, h)
    line_index: int
    text: str
    is_blank: bool
    score: float | None  # None for blank crops (they bypass scoring)

    @property
    def char_count(self) -> int:
        return len(self.text)

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.box
        return (x + w / 2.0, y + h / 2.0)

    @property
    def aspect(self) -> float:
        return self.box[2] / self.box[3]

    @property
    def ref(self) -> CropRef:
        return CropRef(doc_id=self.doc_id, box=self.box, is_blank=self.is_blank)


class CropDatabase:
    """Quality-filtered crops indexed by (width, height, char count)."""

    def __init__(self, records: Iterable[CropRecord]):
        self.records: list[CropRecord] = sorted(records, key=lambda r: r.crop_id)
        self.index: dict[tuple[int, int, int], list[CropRecord]] = {}
        self.by_doc: dict[str, list[CropRecord]] = {}
        for r in self.records:
            x, y, w, h = r.box
            self.index.setdefault((w, h, r.char_count), []).append(r)
            self.by_doc.setdefault(r.doc_id, []).append(r)

    def __len__(self) -> int:
        return len(self.records)

    def query(self, w: int, h: int, char_count: int) -> list[CropRecord]:
        return self.index.get((w, h, char_count), [])


def build_crop_database(docs: Iterable[DocumentRecord], scorer: QualityScorer,
                        tau2: float = 0.5, max_run: int | None = None,
                        image_loader: Callable[[DocumentRecord], np.ndarray] | None = None,
                        ) -> CropDatabase:
    """Extract segments, score text crops, and keep those above tau2.

    Blank crops bypass the scorer (there are no characters to cut); their
    character count is inherited from the same-size text segment they were
    injected next to, so size-keyed retrieval still works.
    """
    if image_loader is None:
        image_loader = lambda doc: load_image_rgb(doc.image_path)
    records: list[CropRecord] = []
    for doc in sorted(docs, key=lambda d: d.doc_id):
        kwargs = {} if max_run is None else {"max_run": max_run}
        segments = extract_line_segments(doc, contrastive_mode=False, **kwargs)
        if not segments:
            continue
        image = image_loader(doc)
        for seg in segments:
            cid = crop_id_for(doc.doc_id, seg.x, seg.y, seg.w, seg.h)
            if seg.is_blank:
                score = None
            else:
                score = scorer.score(
                    image, (seg.x, seg.y, seg.x + seg.w, seg.y + seg.h), crop_id=cid)
                if not (score > tau2):
                    continue
            records.append(CropRecord(
                crop_id=cid, doc_id=doc.doc_id, image_path=doc.image_path,
                box=seg.box, line_index=seg.line_index, text=seg.text,
                is_blank=seg.is_blank, score=score))
    return CropDatabase(records)


def db_record_dict(r: CropRecord) -> dict:
    return {
        "crop_id": r.crop_id, "doc_id": r.doc_id, "image": r.image_path,
        "box": list(r.box), "line_index": r.line_index, "text": r.text,
        "is_blank": r.is_blank, "score": r.score,
    }


def db_record_from_dict(d: dict) -> CropRecord:
    return CropRecord(
        crop_id=int(d["crop_id"]), doc_id=d["doc_id"], image_path=d["image"],
        box=tuple(int(v) for v in d["box"]), line_index=int(d["line_index"]),
        text=d["text"], is_blank=bool(d["is_blank"]),
        score=None if d["score"] is None else float(d["score"]))


def save_crop_database(path, db: CropDatabase, header: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps({"_header": header}, sort_keys=True) + "\n")
        for r in db.records:
            f.write(json.dumps(db_record_dict(r), sort_keys=True) + "\n")


def load_crop_database(path) -> CropDatabase:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if "_header" in d:
                continue
            records.append(db_record_from_dict(d))
    return CropDatabase(records)


# ---------------------------------------------------------------------------
# similarity backend plumbing
# ---------------------------------------------------------------------------

class ImageCache:
    """Small LRU of decoded source pages (splicing reads foreign documents)."""

    def __init__(self, capacity: int = 32):
        self.capacity = capacity
        self._data: OrderedDict[str, np.ndarray] = OrderedDict()

    def get(self, path: str) -> np.ndarray:
        if path in self._data:
            self._data.move_to_end(path)
            return self._data[path]
        img = load_image_rgb(path)
        self._data[path] = img
        if len(self._data) > self.capacity:
            self._data.popitem(last=False)
        return img


@dataclass
class SimilarityBackend:
    """Classical features by default; a loaded embedding store overrides
    lookups for database crops. Rendered insertion candidates always use
    classical features (they exist nowhere on disk, so no store can know
    them), which stays consistent because both sides of that argmax are
    embedded the same way."""

    store: EmbeddingStore | None = None

    def embed_pixels(self, pixels: np.ndarray, is_blank: bool) -> CropEmbedding:
        return classical_features(pixels, is_blank)

    def embed_record(self, record: CropRecord, pixels: np.ndarray) -> CropEmbedding:
        if self.store is not None:
            return self.store.get(record.crop_id)
        return classical_features(pixels, record.is_blank)


@dataclass
class RegionResult:
    applied: bool
    record: dict


@dataclass
class TamperOutput:
    image: np.ndarray
    mask: np.ndarray
    log: list[dict]
    pristine: bool


# ---------------------------------------------------------------------------
# region selection
# ---------------------------------------------------------------------------

def select_regions(candidates: Sequence[CropRecord], n_max: int,
                   rng: np.random.Generator) -> list[CropRecord]:
    """Draw n ~ U{0..n_max}, then accept candidates in a shuffled order,
    rejecting any that overlap an already accepted region."""
    n = int(rng.integers(0, n_max + 1))
    if n == 0 or not candidates:
        return []
    chosen: list[CropRecord] = []
    for idx in rng.permutation(len(candidates)):
        cand = candidates[int(idx)]
        if any(boxes_overlap(cand.box, c.box) for c in chosen):
            continue
        chosen.append(cand)
        if len(chosen) == n:
            break
    return chosen


# ---------------------------------------------------------------------------
# branches
# ---------------------------------------------------------------------------

def _paste(image: np.ndarray, mask: np.ndarray, box: tuple[int, int, int, int],
           patch: np.ndarray) -> None:
    x, y, w, h = box
    image[y:y + h, x:x + w] = patch
    mask[y:y + h, x:x + w] = 255


def tamper_insertion(image: np.ndarray, mask: np.ndarray, region: CropRecord,
                     doc_records: Sequence[CropRecord], config: GenerationConfig,
                     backend: SimilarityBackend) -> RegionResult:
    """Render the nearest same-size text crop's string into a blank region,
    picking the (font, color) pair whose rendered patch embeds most
    similarly to that neighbor crop."""
    x, y, w, h = region.box
    neighbors = [r for r in doc_records
                 if not r.is_blank and r.box[2] == w and r.box[3] == h
                 and r.crop_id != region.crop_id]
    if not neighbors:
        return RegionResult(False, {
            "region": list(region.box), "crop_id": region.crop_id,
            "branch": "insertion", "status": "fallthrough",
            "reason": "no same-size text crop"})
    cx, cy = region.center
    neighbor = min(neighbors,
                   key=lambda r: (math.dist(r.center, (cx, cy)), r.crop_id))
    nx, ny, nw, nh = neighbor.box
    neighbor_pixels = image[ny:ny + nh, nx:nx + nw]
    v_c = backend.embed_pixels(neighbor_pixels, is_blank=False)

    col0 = estimate_foreground_color(neighbor_pixels)
    col0 = tuple(int(min(255, max(0, round(c)))) for c in col0)
    background = image[y:y + h, x:x + w]

    best = None
    best_score = -np.inf
    for font_id in sorted(config.fonts):
        try:
            spec = fit_text_scale(neighbor.text, font_id, w, h)
        except ValueError:
            continue
        for deltas in itertools.product(COLOR_DELTAS, repeat=3):
            color = tuple(int(min(255, max(0, col0[i] + deltas[i]))) for i in range(3))
            patch = render_text(neighbor.text, font_id, color, background, spec=spec)
            emb = backend.embed_pixels(patch.pixels, is_blank=False)
            score = crop_similarity(v_c, emb, either_blank=False)
            if score > best_score:
                best_score = score
                best = (font_id, color, patch)
    if best is None:
        return RegionResult(False, {
            "region": list(region.box), "crop_id": region.crop_id,
            "branch": "insertion", "status": "fallthrough",
            "reason": "text does not fit region"})
    font_id, color, patch = best
    _paste(image, mask, region.box, patch.pixels)
    return RegionResult(True, {
        "region": list(region.box), "crop_id": region.crop_id,
        "branch": "insertion", "category": "insertion", "status": "applied",
        "source_crop_id": neighbor.crop_id, "text": neighbor.text,
        "font": font_id, "color": list(color), "similarity": best_score})


def tamper_inpaint(image: np.ndarray, mask: np.ndarray, region: CropRecord,
                   rng: np.random.Generator) -> RegionResult:
    """Erase the region's content; only actually changed pixels are masked."""
    x, y, w, h = region.box
    res = inpaint(image[y:y + h, x:x + w], rng)
    image[y:y + h, x:x + w] = res.filled
    mask[y:y + h, x:x + w][res.changed] = 255
    return RegionResult(True, {
        "region": list(region.box), "crop_id": region.crop_id,
        "branch": "inpaint", "category": "inpainting", "status": "applied",
        "mode": res.mode, "changed_pixels": int(res.changed.sum())})


def tamper_copy_splice(image: np.ndarray, mask: np.ndarray, region: CropRecord,
                       db: CropDatabase, doc_records: Sequence[CropRecord],
                       splice: bool, config: GenerationConfig,
                       backend: SimilarityBackend,
                       cache: ImageCache) -> RegionResult:
    """Replace the region with the most similar candidate crop.

    Splicing queries the database for exact-size, equal-count crops from
    other documents; copy-move takes same-page crops with matching count
    and aspect ratio, resized to the region. Candidates are scored in
    crop_id order so the argmax is independent of enumeration order.
    """
    x, y, w, h = region.box
    branch = "splice" if splice else "copy_move"
    if splice:
        candidates = [r for r in db.query(w, h, region.char_count)
                      if r.crop_id != region.crop_id]
        if config.exclude_same_doc_splice:
            candidates = [r for r in candidates if r.doc_id != region.doc_id]
    else:
        candidates = []
        for r in doc_records:
            if r.crop_id == region.crop_id or r.char_count != region.char_count:
                continue
            ratio = r.aspect / region.aspect
            if 1.0 - config.eps_prime <= ratio <= 1.0 + config.eps_prime:
                candidates.append(r)
    if not candidates:
        return RegionResult(False, {
            "region": list(region.box), "crop_id": region.crop_id,
            "branch": branch, "status": "skipped", "reason": "no candidates"})

    region_pixels = image[y:y + h, x:x + w]
    v_r = (backend.store.get(region.crop_id) if backend.store is not None
           else backend.embed_pixels(region_pixels, region.is_blank))

    best = None
    best_score = -np.inf
    best_pixels = None
    for cand in sorted(candidates, key=lambda r: r.crop_id):
        cx, cy, cw, chh = cand.box
        if splice:
            src = cache.get(cand.image_path)
            pixels = src[cy:cy + chh, cx:cx + cw]
        else:
            pixels = image[cy:cy + chh, cx:cx + cw]
            if (cw, chh) != (w, h):
                pixels = resize_bilinear(pixels, w, h)
        if backend.store is not None:
            emb = backend.store.get(cand.crop_id)
        else:
            emb = backend.embed_pixels(pixels, cand.is_blank)
        score = crop_similarity(v_r, emb, region.is_blank or cand.is_blank)
        if score > best_score:
            best_score = score
            best = cand
            best_pixels = pixels
    if best_pixels.shape[:2] != (h, w):
        best_pixels = resize_bilinear(best_pixels, w, h)
    _paste(image, mask, region.box, best_pixels)
    if best.is_blank and not region.is_blank:
        category = "coverage"
    elif best.doc_id == region.doc_id:
        category = "copy_move"
    else:
        category = "splicing"
    return RegionResult(True, {
        "region": list(region.box), "crop_id": region.crop_id,
        "branch": branch, "category": category, "status": "applied",
        "source_crop_id": best.crop_id, "source_doc_id": best.doc_id,
        "similarity": best_score})


# ---------------------------------------------------------------------------
# per-document driver
# ---------------------------------------------------------------------------

def generate_tampered(doc_id: str, image: np.ndarray, db: CropDatabase,
                      config: GenerationConfig,
                      backend: SimilarityBackend | None = None,
                      cache: ImageCache | None = None) -> TamperOutput:
    """Tamper one document. Deterministic under (config.seed, doc_id)."""
    if backend is None:
        backend = SimilarityBackend()
    if cache is None:
        cache = ImageCache()
    rng = derive_rng(config.seed, "generate", doc_id)
    work = image.copy()
    mask = np.zeros(work.shape[:2], dtype=np.uint8)
    records: list[dict] = []

    doc_records = db.by_doc.get(doc_id, [])
    regions = select_regions(doc_records, config.n_max, rng)
    applied = 0
    for region in regions:
        if region.is_blank and rng.random() < config.p_ins:
            result = tamper_insertion(work, mask, region, doc_records, config, backend)
            records.append(result.record)
            if result.applied:
                applied += 1
                continue
            # no usable neighbor: fall through to copy/splice
            result = tamper_copy_splice(
                work, mask, region, db, doc_records,
                splice=rng.random() < config.p_spl, config=config,
                backend=backend, cache=cache)
        elif rng.random() < config.p_inp:
            result = tamper_inpaint(work, mask, region, rng)
        else:
            result = tamper_copy_splice(
                work, mask, region, db, doc_records,
                splice=rng.random() < config.p_spl, config=config,
                backend=backend, cache=cache)
        records.append(result.record)
        if result.applied:
            applied += 1
    return TamperOutput(image=work, mask=mask, log=records, pristine=applied == 0)
