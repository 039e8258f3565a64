"""Corpus ingestion: character-level OCR manifests and per-document statistics.

A corpus manifest is UTF-8 line-delimited JSON, one document per line:

    {"doc_id": "d1", "image": "pages/d1.png",
     "chars": [{"t": "A", "x": 10, "y": 12, "w": 8, "h": 14}, ...]}

Characters whose boxes fall outside the image are dropped (clamping them
would distort the width/height statistics every downstream threshold is
scaled by). Documents that end up with zero characters, or whose image is
missing, are skipped with a logged reason.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from PIL import Image

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    """Raised for malformed manifest entries."""


@dataclass(frozen=True)
class CharBox:
    """One OCR character: text plus top-left pixel box."""

    text: str
    x: int
    y: int
    w: int
    h: int

    def as_dict(self) -> dict:
        return {"t": self.text, "x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class DocumentRecord:
    """A parsed document: identifier, image reference, dimensions, characters."""

    doc_id: str
    image_path: str
    width: int
    height: int
    chars: tuple[CharBox, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class CharStats:
    """Mean character width/height for one document, in pixels."""

    mean_w: float
    mean_h: float


def _parse_char(raw: dict) -> CharBox:
    try:
        text = raw["t"]
        x, y, w, h = int(raw["x"]), int(raw["y"]), int(raw["w"]), int(raw["h"])
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"bad char entry {raw!r}") from e
    if not isinstance(text, str):
        raise ManifestError(f"char text must be a string, got {text!r}")
    if w < 1 or h < 1 or x < 0 or y < 0:
        raise ManifestError(f"char box out of domain: {raw!r}")
    return CharBox(text=text, x=x, y=y, w=w, h=h)


def parse_ocr_document(entry: dict, base_dir: str | Path | None = None) -> DocumentRecord:
    """Validate one manifest entry into a DocumentRecord.

    Raises ManifestError for malformed entries, FileNotFoundError when the
    image is missing, and ValueError("no characters") when every character
    was dropped by bounds validation.
    """
    try:
        doc_id = entry["doc_id"]
        image = entry["image"]
        raw_chars = entry["chars"]
    except (KeyError, TypeError) as e:
        raise ManifestError(f"manifest entry missing field: {e}") from e
    if not isinstance(doc_id, str) or not doc_id:
        raise ManifestError("doc_id must be a non-empty string")

    image_path = os.path.join(base_dir, image) if base_dir else image
    if not os.path.isfile(image_path):
        raise FileNotFoundError(image_path)
    with Image.open(image_path) as im:
        width, height = im.size

    chars = []
    dropped = 0
    for raw in raw_chars:
        cb = _parse_char(raw)
        if not cb.text:
            dropped += 1
            continue
        if cb.x + cb.w > width or cb.y + cb.h > height:
            dropped += 1
            continue
        chars.append(cb)
    if dropped:
        log.debug("doc %s: dropped %d out-of-bounds/empty chars", doc_id, dropped)
    if not chars:
        raise ValueError("no characters")
    return DocumentRecord(
        doc_id=doc_id, image_path=str(image_path), width=width, height=height,
        chars=tuple(chars),
    )


def iter_manifest(path: str | Path, base_dir: str | Path | None = None,
                  skipped: list | None = None) -> Iterator[DocumentRecord]:
    """Stream DocumentRecords from a manifest file, skipping bad entries.

    Each skip is logged; when `skipped` is given, (doc_id_or_line, reason)
    pairs are appended to it so callers can report totals.
    """
    if base_dir is None:
        base_dir = Path(path).parent
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as e:
                log.warning("%s:%d: unparseable line (%s)", path, lineno, e)
                if skipped is not None:
                    skipped.append((f"line {lineno}", f"unparseable: {e}"))
                continue
            try:
                yield parse_ocr_document(entry, base_dir=base_dir)
            except (ManifestError, FileNotFoundError, ValueError) as e:
                doc_id = entry.get("doc_id", f"line {lineno}") if isinstance(entry, dict) else f"line {lineno}"
                log.warning("skipping document %s: %s", doc_id, e)
                if skipped is not None:
                    skipped.append((doc_id, str(e)))


def write_manifest(path: str | Path, docs: Iterable[dict]) -> None:
    """Write manifest entries (dicts) as line-delimited JSON."""
    with open(path, "w", encoding="utf-8") as f:
        for entry in docs:
            f.write(json.dumps(entry, sort_keys=True) + "\n")


def entry_for(doc: DocumentRecord, image_path: str | None = None) -> dict:
    """Serialize a DocumentRecord back to its manifest form."""
    return {
        "doc_id": doc.doc_id,
        "image": image_path if image_path is not None else doc.image_path,
        "chars": [c.as_dict() for c in doc.chars],
    }


def compute_char_stats(doc: DocumentRecord) -> CharStats:
    """Arithmetic mean character width and height over the document."""
    if not doc.chars:
        raise ValueError("no characters")
    n = len(doc.chars)
    return CharStats(
        mean_w=sum(c.w for c in doc.chars) / n,
        mean_h=sum(c.h for c in doc.chars) / n,
    )
