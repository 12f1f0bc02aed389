"""Box types, detections and the distance/overlap primitives used everywhere else.

Boxes live in normalized center form ``(x, y, w, h)``: x and w are divided by
the frame width, y and h by the frame height.  Pixel corner form only appears
at file and metric boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

_clamp_events = 0


def clamp_events() -> int:
    """Number of box constructions that had to clamp an out-of-range field."""
    return _clamp_events


def _clamp01(v: float) -> float:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@dataclass(frozen=True, slots=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        global _clamp_events
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        clamped = tuple(_clamp01(float(v)) for v in vals)
        if clamped != vals:
            _clamp_events += 1
        for name, v in zip(("x", "y", "w", "h"), clamped):
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "BBox":
        if len(seq) != 4:
            raise ValueError(f"box needs 4 values, got {len(seq)}")
        return cls(float(seq[0]), float(seq[1]), float(seq[2]), float(seq[3]))

    def corners(self) -> tuple[float, float, float, float]:
        """Normalized corner form ``(x0, y0, x1, y1)``."""
        return (self.x - self.w / 2, self.y - self.h / 2, self.x + self.w / 2, self.y + self.h / 2)

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> "BBox":
        if x1 < x0:
            x0, x1 = x1, x0
        if y1 < y0:
            y0, y1 = y1, y0
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def to_pixels(self, frame_w: int, frame_h: int) -> "PixelBox":
        x0, y0, x1, y1 = self.corners()
        return PixelBox(x0 * frame_w, y0 * frame_h, x1 * frame_w, y1 * frame_h, frame_w, frame_h)


@dataclass(frozen=True, slots=True)
class PixelBox:
    x0: float
    y0: float
    x1: float
    y1: float
    frame_w: int
    frame_h: int

    def __post_init__(self) -> None:
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"inverted pixel box {(self.x0, self.y0, self.x1, self.y1)}")
        if self.frame_w <= 0 or self.frame_h <= 0:
            raise ValueError("frame dimensions must be positive")

    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    def to_bbox(self) -> BBox:
        return BBox.from_corners(
            self.x0 / self.frame_w, self.y0 / self.frame_h,
            self.x1 / self.frame_w, self.y1 / self.frame_h,
        )


@dataclass(frozen=True)
class Detection:
    """One candidate box at one frame.

    ``ff_score`` is the re-detection confidence against the first-frame
    template; ``embedding`` stands in for the box's appearance features.
    """

    t: int
    box: BBox
    ff_score: float
    embedding: np.ndarray
    det_id: int
    object_id: Optional[int] = None

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"negative frame index {self.t}")
        if not math.isfinite(self.ff_score):
            raise ValueError(f"non-finite ff_score on det {self.det_id}")
        emb = np.asarray(self.embedding, dtype=np.float64)
        if emb.ndim != 1:
            raise ValueError("embedding must be a vector")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)


def spatial_distance(a: BBox, b: BBox) -> float:
    """L-infinity distance between two normalized center-form boxes."""
    return max(abs(a.x - b.x), abs(a.y - b.y), abs(a.w - b.w), abs(a.h - b.h))


def l1_distance(a: BBox, b: BBox) -> float:
    # summation order (x, y, w, h) left to right; the vectorized paths match it
    return abs(a.x - b.x) + abs(a.y - b.y) + abs(a.w - b.w) + abs(a.h - b.h)


def loc_score_boxes(a: BBox, b: BBox) -> float:
    """Negative L1 distance; 0 for equal boxes, otherwise negative."""
    return -l1_distance(a, b)


def iou(a: BBox, b: BBox) -> float:
    """Box intersection over union.

    Zero-area boxes always give 0, even when both are identical.
    """
    if a == b:
        return 1.0 if a.w > 0.0 and a.h > 0.0 else 0.0
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def boxes_array(boxes: Iterable[BBox]) -> np.ndarray:
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def linf_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise L-infinity distances between rows of ``a`` (n,4) and ``b`` (m,4)."""
    d = np.abs(a[:, None, :] - b[None, :, :])
    return np.maximum(np.maximum(d[..., 0], d[..., 1]), np.maximum(d[..., 2], d[..., 3]))


def l1_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise L1 distances, summed in the same order as :func:`l1_distance`."""
    d = np.abs(a[:, None, :] - b[None, :, :])
    return ((d[..., 0] + d[..., 1]) + d[..., 2]) + d[..., 3]


def iou_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-aligned IoU for two (n,4) center-form arrays."""
    ax0, ax1 = a[:, 0] - a[:, 2] / 2, a[:, 0] + a[:, 2] / 2
    ay0, ay1 = a[:, 1] - a[:, 3] / 2, a[:, 1] + a[:, 3] / 2
    bx0, bx1 = b[:, 0] - b[:, 2] / 2, b[:, 0] + b[:, 2] / 2
    by0, by1 = b[:, 1] - b[:, 3] / 2, b[:, 1] + b[:, 3] / 2
    iw = np.minimum(ax1, bx1) - np.maximum(ax0, bx0)
    ih = np.minimum(ay1, by1) - np.maximum(ay0, by0)
    ok = (iw > 0) & (ih > 0)
    inter = np.where(ok, iw * ih, 0.0)
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok & (union > 0), inter / union, 0.0)
    same = (a == b).all(axis=1) & (a[:, 2] > 0) & (a[:, 3] > 0)
    return np.where(same, 1.0, np.clip(out, 0.0, 1.0))


@dataclass(frozen=True)
class Frame:
    """All detections of one frame in columnar form.

    The tracker consumes frames rather than lists of :class:`Detection` so a
    hundred boxes per frame cost a few array operations instead of a hundred
    object constructions.
    """

    t: int
    boxes: np.ndarray
    ff_scores: np.ndarray
    embeddings: np.ndarray
    det_ids: np.ndarray
    object_ids: tuple = field(default=())

    def __post_init__(self) -> None:
        n = len(self.det_ids)
        if self.boxes.shape != (n, 4) or self.ff_scores.shape != (n,) or len(self.embeddings) != n:
            raise ValueError(f"frame {self.t}: inconsistent column lengths")
        if self.object_ids and len(self.object_ids) != n:
            raise ValueError(f"frame {self.t}: object_ids length mismatch")
        if n > 1 and len(np.unique(self.det_ids)) != n:
            raise ValueError(f"frame {self.t}: duplicate det_id")
        if not self.object_ids:
            object.__setattr__(self, "object_ids", (None,) * n)
        if n and not (np.isfinite(self.boxes).all() and np.isfinite(self.ff_scores).all()):
            raise ValueError(f"frame {self.t}: non-finite box or ff_score")
        if n and ((self.boxes < 0.0).any() or (self.boxes > 1.0).any()):
            global _clamp_events
            _clamp_events += 1
            object.__setattr__(self, "boxes", np.clip(self.boxes, 0.0, 1.0))

    def __len__(self) -> int:
        return len(self.det_ids)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1] if self.embeddings.ndim == 2 else 0

    @classmethod
    def empty(cls, t: int, dim: int = 0) -> "Frame":
        return cls(t, np.zeros((0, 4)), np.zeros(0), np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_detections(cls, t: int, dets: Sequence[Detection], dim: Optional[int] = None) -> "Frame":
        if not dets:
            return cls.empty(t, dim or 0)
        for d in dets:
            if d.t != t:
                raise ValueError(f"detection {d.det_id} has t={d.t}, expected {t}")
        dims = {d.embedding.shape[0] for d in dets}
        if len(dims) != 1:
            raise ValueError(f"frame {t}: mixed embedding dimensions {sorted(dims)}")
        return cls(
            t,
            boxes_array(d.box for d in dets),
            np.array([d.ff_score for d in dets], dtype=np.float64),
            np.stack([d.embedding for d in dets]),
            np.array([d.det_id for d in dets], dtype=np.int64),
            tuple(d.object_id for d in dets),
        )

    def detection(self, i: int) -> Detection:
        return Detection(
            self.t, BBox.from_seq(self.boxes[i]), float(self.ff_scores[i]),
            self.embeddings[i], int(self.det_ids[i]), self.object_ids[i],
        )

    def detections(self) -> list[Detection]:
        return [self.detection(i) for i in range(len(self))]
