"""Core raster types shared by the whole toolkit.

Intensity frames are 16-bit greyscale, depth maps are 16-bit millimeters
with 0 encoding "no measurement", masks are dense booleans. All values are
immutable after construction; every operation here is pure.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

__all__ = [
    "IntensityImage",
    "DepthMap",
    "BinaryMask",
    "BoundingBox",
    "LabeledInstance",
    "bbox_iou",
    "mask_iou",
    "bbox_from_mask",
    "connected_components",
    "mask_to_rle",
    "rle_to_mask",
    "read_pgm16",
    "write_pgm16",
    "CLASS_NAMES",
]

# class ids used everywhere: 0=deer, 1=boar, 2=hare, 3=fox
CLASS_NAMES = ("deer", "boar", "hare", "fox")

# full-scale 16-bit divided by full-scale 8-bit; used to express 16-bit
# luminance on the familiar 0-255 scale (65535 == 257 * 255 exactly)
LUMA_SCALE = 257.0


def _frozen_2d(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class IntensityImage:
    """Greyscale frame; ``pixels`` is a read-only uint16 array of shape (h, w)."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _frozen_2d(self.pixels, np.uint16))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in millimeters (uint16); 0 means missing/invalid."""

    mm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mm", _frozen_2d(self.mm, np.uint16))

    @property
    def height(self) -> int:
        return self.mm.shape[0]

    @property
    def width(self) -> int:
        return self.mm.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.mm.shape

    def valid(self) -> np.ndarray:
        """Boolean array: True where a measurement exists."""
        return self.mm > 0


@dataclass(frozen=True)
class BinaryMask:
    """Dense boolean mask; ``bits`` is a read-only bool array of shape (h, w)."""

    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen_2d(self.bits, bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; (x, y) is the top-left pixel, w/h count pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box {self}")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class LabeledInstance:
    """One ground-truth or predicted object: class, tight box, mask, optional score.

    The box must be exactly the tight bound of the mask; construct via
    :meth:`from_mask` unless you already hold a consistent pair.
    """

    class_id: int
    bbox: BoundingBox
    mask: BinaryMask
    score: Optional[float] = None

    def __post_init__(self):
        if self.class_id < 0 or self.class_id >= len(CLASS_NAMES):
            raise ValueError(f"class_id {self.class_id} out of range")
        if self.mask.is_empty():
            raise ValueError("instance mask is empty")
        if self.bbox != bbox_from_mask(self.mask):
            raise ValueError("bbox is not the tight bound of the mask")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0,1]")

    @classmethod
    def from_mask(cls, class_id: int, mask: BinaryMask, score: Optional[float] = None) -> "LabeledInstance":
        return cls(class_id, bbox_from_mask(mask), mask, score)


def bbox_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes, computed in continuous area units."""
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = float(ix) * float(iy)
    union = float(a.area) + float(b.area) - inter
    return inter / union


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a AND b| / |a OR b|; both-empty pairs evaluate to 0 so matching stays total."""
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 0.0
    return inter / union


def bbox_from_mask(m: BinaryMask) -> BoundingBox:
    """Tight axis-aligned bound over the set bits of a non-empty mask."""
    ys, xs = np.nonzero(m.bits)
    if ys.size == 0:
        raise ValueError("cannot bound an empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return BoundingBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def connected_components(m: BinaryMask) -> list[BinaryMask]:
    """Split a mask into 8-connected components.

    Components are ordered by their first set pixel in row-major order, so the
    result is deterministic. An empty mask yields an empty list.
    """
    labels, n = ndimage.label(m.bits, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    flat = labels.ravel()
    first = np.full(n + 1, flat.size, dtype=np.int64)
    # first row-major index per label
    idx = np.arange(flat.size)
    np.minimum.at(first, flat, idx)
    order = sorted(range(1, n + 1), key=lambda lab: first[lab])
    return [BinaryMask(labels == lab) for lab in order]


def mask_to_rle(m: BinaryMask) -> dict:
    """Row-major run-length encoding; counts alternate starting with a run of 0s."""
    flat = m.bits.ravel().astype(np.int8)
    changes = np.nonzero(np.diff(flat))[0] + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {"size": [m.height, m.width], "counts": counts}


def rle_to_mask(rle: dict) -> BinaryMask:
    """Inverse of :func:`mask_to_rle`; counts must sum to exactly h*w."""
    h, w = int(rle["size"][0]), int(rle["size"][1])
    counts = list(rle["counts"])
    if any(c < 0 for c in counts):
        raise ValueError("negative run length")
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"run lengths sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return BinaryMask(flat.reshape(h, w))


# --- 16-bit binary PGM (P5, big-endian), used for both intensity and depth ---

_PGM_HEADER = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s", re.S)


def write_pgm16(path, values: np.ndarray) -> None:
    """Write a (h, w) uint16 array as binary PGM with maxval 65535 (big-endian)."""
    arr = np.asarray(values, dtype=np.uint16)
    if arr.ndim != 2:
        raise ValueError("PGM payload must be 2-d")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a binary 16-bit PGM written by :func:`write_pgm16`."""
    with open(path, "rb") as fh:
        data = fh.read()
    m = _PGM_HEADER.match(data)
    if not m:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM, maxval={maxval}")
    payload = data[m.end():]
    expected = w * h * 2
    if len(payload) < expected:
        raise ValueError(f"{path}: truncated pixel data")
    arr = np.frombuffer(payload[:expected], dtype=">u2").reshape(h, w)
    return arr.astype(np.uint16)


def rle_json(rle: dict) -> str:
    """Canonical JSON for an RLE record (stable key order, no whitespace)."""
    return json.dumps(rle, sort_keys=True, separators=(",", ":"))
