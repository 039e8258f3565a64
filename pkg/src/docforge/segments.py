"""Line segments: cluster OCR characters into text lines, enumerate every
contiguous run as a candidate crop, and inject synthetic blank segments.

Blank segments come in two flavors, distinguished by their placeholder text:
"+" blanks sit on the same visual line as their source segment at a
horizontal multiple of its width; "-" blanks sit far above/below and serve
as hard negative candidates during pair mining. The placeholder character is
arbitrary; it only needs to never occur in real text and to match the source
segment's character count so a rendered replacement would end up with a
similar glyph size.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ocr import CharBox, CharStats, DocumentRecord, compute_char_stats
from .util import boxes_overlap, iround

# Enumerating every contiguous run is quadratic in line length; segments
# longer than this are rarely retrievable as tamper candidates anyway.
DEFAULT_MAX_RUN = 12


@dataclass(frozen=True)
class LineSegment:
    """A merged run of same-line characters, or an injected blank."""

    x: int
    y: int
    w: int
    h: int
    line_index: int
    text: str
    is_blank: bool

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    @property
    def char_count(self) -> int:
        return len(self.text)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def aspect(self) -> float:
        return self.w / self.h


def default_line_tolerance(stats: CharStats) -> int:
    """Vertical clustering tolerance: height-relative, floor of 2 px."""
    return max(2, iround(0.25 * stats.mean_h))


def cluster_lines(chars: list[CharBox], dy: float) -> list[list[CharBox]]:
    """Group characters into visual lines.

    Boxes are scanned in ascending bottom-edge order; a box joins the open
    cluster when both its top and bottom edges lie within `dy` of the
    cluster's opening box, otherwise it starts a new cluster.
    """
    if not chars:
        return []
    ordered = sorted(chars, key=lambda c: (c.y + c.h, c.y, c.x))
    clusters: list[list[CharBox]] = []
    current: list[CharBox] = []
    first: CharBox | None = None
    for c in ordered:
        if first is None or (
            abs(c.y - first.y) <= dy
            and abs((c.y + c.h) - (first.y + first.h)) <= dy
        ):
            current.append(c)
            if first is None:
                first = c
        else:
            clusters.append(current)
            current = [c]
            first = c
    clusters.append(current)
    return clusters


def enumerate_segments(cluster: list[CharBox], line_index: int,
                       max_run: int | None = DEFAULT_MAX_RUN) -> list[LineSegment]:
    """All contiguous runs of a line, sorted by horizontal midpoint.

    A k-character line yields k*(k+1)/2 segments when max_run is None (or
    >= k). Each segment box is the tight union of its member boxes and its
    text is the concatenation of member characters in horizontal order.
    """
    ordered = sorted(cluster, key=lambda c: (c.x + c.w / 2.0, c.x, c.y))
    k = len(ordered)
    cap = k if max_run is None else min(k, max(1, max_run))
    out: list[LineSegment] = []
    for i in range(k):
        x0 = ordered[i].x
        y0 = ordered[i].y
        x1 = ordered[i].x + ordered[i].w
        y1 = ordered[i].y + ordered[i].h
        text = []
        for j in range(i, min(k, i + cap)):
            c = ordered[j]
            x0 = min(x0, c.x)
            y0 = min(y0, c.y)
            x1 = max(x1, c.x + c.w)
            y1 = max(y1, c.y + c.h)
            text.append(c.text)
            out.append(LineSegment(
                x=x0, y=y0, w=x1 - x0, h=y1 - y0,
                line_index=line_index, text="".join(text), is_blank=False,
            ))
    return out


def _fits_page(x: int, y: int, w: int, h: int, page_w: int, page_h: int) -> bool:
    return 0 <= x and x + w <= page_w and 0 <= y and y + h <= page_h


def inject_blank_segments(segments: list[LineSegment], page_w: int, page_h: int,
                          stats: CharStats, contrastive_mode: bool) -> list[LineSegment]:
    """Append synthetic blank segments next to each existing segment.

    For every source segment, at most one "+" blank of identical size is
    placed at horizontal offset ±k*w (k ascending, offset direction -1 then
    +1) on the same line; the first in-page spot that overlaps no existing
    box wins. In contrastive mode placement is further restricted to the
    central third of the page width, where the background is least likely to
    shift. In contrastive mode a far-away "-" blank is additionally sought
    at a vertical gap of roughly ten mean character heights, giving each
    segment a geometry-matched hard negative candidate.
    """
    out = list(segments)
    boxes = [s.box for s in out]

    def try_place(seg: LineSegment, y_new: int, text_char: str,
                  central_third: bool) -> bool:
        if seg.w <= 0 or seg.w > page_w:
            return False
        for k in range(1, page_w // seg.w + 1):
            for d in (-1, 1):
                x_new = seg.x + d * k * seg.w
                if central_third and not (
                    page_w / 3.0 <= x_new and x_new <= 2.0 * page_w / 3.0 - seg.w
                ):
                    continue
                if not _fits_page(x_new, y_new, seg.w, seg.h, page_w, page_h):
                    continue
                cand = (x_new, y_new, seg.w, seg.h)
                if any(boxes_overlap(cand, b) for b in boxes):
                    continue
                blank = LineSegment(
                    x=x_new, y=y_new, w=seg.w, h=seg.h,
                    line_index=seg.line_index,
                    text=text_char * seg.char_count, is_blank=True,
                )
                out.append(blank)
                boxes.append(cand)
                return True
        return False

    # floor(10*mean_h)+1 keeps the gap strictly above ten mean heights,
    # so the blank passes the far-negative vertical predicate.
    gap = int(10 * stats.mean_h) + 1
    for seg in segments:
        if seg.is_blank:
            continue
        try_place(seg, seg.y, "+", central_third=contrastive_mode)
        if contrastive_mode:
            for dy in (gap, -gap):
                if try_place(seg, seg.y + dy, "-", central_third=False):
                    break
    return out


def extract_line_segments(doc: DocumentRecord, dy: float | None = None,
                          contrastive_mode: bool = False,
                          max_run: int | None = DEFAULT_MAX_RUN,
                          inject_blanks: bool = True) -> list[LineSegment]:
    """Full segment extraction for one document (deterministic).

    Clusters characters into lines, enumerates contiguous runs per line,
    then injects blank segments. Returns [] for an empty document.
    """
    if not doc.chars:
        return []
    stats = compute_char_stats(doc)
    if dy is None:
        dy = default_line_tolerance(stats)
    segments: list[LineSegment] = []
    for line_index, cluster in enumerate(cluster_lines(list(doc.chars), dy)):
        segments.extend(enumerate_segments(cluster, line_index, max_run=max_run))
    if inject_blanks:
        segments = inject_blank_segments(
            segments, doc.width, doc.height, stats, contrastive_mode)
    return segments


def segment_dump_record(doc_id: str, seg: LineSegment) -> dict:
    """Debug/export form of one segment."""
    return {
        "doc_id": doc_id,
        "box": [seg.x, seg.y, seg.w, seg.h],
        "line_index": seg.line_index,
        "text": seg.text,
        "is_blank": seg.is_blank,
    }
