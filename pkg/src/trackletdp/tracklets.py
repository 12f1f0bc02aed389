"""Tracklet building: per-frame extension of tracklets or spawning of new ones.

A detection at frame t extends the tracklet of its best-matching frame t-1
detection only when the match is confident (score above ``alpha``) and
unambiguous (no competing current or previous detection within ``beta`` of
it).  Everything else starts a fresh single-detection tracklet; the track
scoring step resolves the ambiguity later.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .geometry import BBox, Detection, Frame


@dataclass(frozen=True)
class BuilderParams:
    alpha: float = 0.5
    beta: float = 0.1
    gamma: float = 0.3

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


class TrackedDetection(NamedTuple):
    """A detection as retained by the store (embeddings are not kept)."""

    t: int
    det_id: int
    box: BBox
    ff_score: float
    ff_tracklet_score: Optional[float]
    object_id: Optional[int]


@dataclass
class FrameRecord:
    t: int
    boxes: np.ndarray
    ff_scores: np.ndarray
    det_ids: np.ndarray
    object_ids: tuple
    owner: np.ndarray
    ff_tracklet_scores: Optional[np.ndarray] = None


class Tracklet:
    """A gap-free run of detections, one per frame from ``start`` to ``end``."""

    __slots__ = ("id", "start", "idx", "is_ff", "frozen", "_store")

    def __init__(self, tid: int, start: int, first_idx: int, is_ff: bool, store: "TrackletStore"):
        self.id = tid
        self.start = start
        self.idx = [first_idx]
        self.is_ff = is_ff
        self.frozen = False
        self._store = store

    @property
    def end(self) -> int:
        return self.start + len(self.idx) - 1

    def __len__(self) -> int:
        return len(self.idx)

    def _row(self, k: int) -> tuple[FrameRecord, int]:
        return self._store.frames[self.start + k], self.idx[k]

    def box_at(self, k: int) -> BBox:
        rec, i = self._row(k)
        return BBox.from_seq(rec.boxes[i])

    @property
    def start_box(self) -> BBox:
        return self.box_at(0)

    @property
    def end_box(self) -> BBox:
        return self.box_at(len(self.idx) - 1)

    def has(self, t: int) -> bool:
        return self.start <= t <= self.end

    def detection_at(self, t: int) -> TrackedDetection:
        if not self.has(t):
            raise KeyError(f"tracklet {self.id} has no detection at t={t}")
        return self._store.tracked(t, self.idx[t - self.start])

    @property
    def detections(self) -> list[TrackedDetection]:
        return [self._store.tracked(self.start + k, i) for k, i in enumerate(self.idx)]

    def __repr__(self) -> str:
        flag = " ff" if self.is_ff else ""
        return f"Tracklet(id={self.id}, {self.start}..{self.end}{flag}{' frozen' if self.frozen else ''})"


@dataclass
class UpdateResult:
    t: int
    extended: list[int] = field(default_factory=list)
    created: list[int] = field(default_factory=list)
    frozen: list[int] = field(default_factory=list)

    @property
    def changed(self) -> list[int]:
        return self.extended + self.created


class TrackletStore:
    """All tracklets of one tracker instance plus the retained detection columns.

    Single-writer: owned by one tracker, advanced one frame at a time.
    """

    def __init__(self) -> None:
        self.tracklets: dict[int, Tracklet] = {}
        self.frames: dict[int, FrameRecord] = {}
        self.ff_id: Optional[int] = None
        self.t0: Optional[int] = None
        self.last_t: Optional[int] = None
        self.prev_frame: Optional[Frame] = None
        self._next_id = 0

    def initialize(self, ff_detection: Detection) -> "TrackletStore":
        if self.ff_id is not None:
            raise RuntimeError("tracklet store is already initialized")
        frame = Frame.from_detections(ff_detection.t, [ff_detection])
        self._record(frame)
        tr = self._new_tracklet(frame.t, 0, is_ff=True)
        self.ff_id = tr.id
        self.t0 = self.last_t = frame.t
        self.prev_frame = frame
        return self

    @property
    def ff(self) -> Tracklet:
        if self.ff_id is None:
            raise RuntimeError("tracklet store is not initialized")
        return self.tracklets[self.ff_id]

    def __len__(self) -> int:
        return len(self.tracklets)

    def __iter__(self) -> Iterator[Tracklet]:
        return iter(self.tracklets.values())

    def __getitem__(self, tid: int) -> Tracklet:
        return self.tracklets[tid]

    def alive(self) -> list[Tracklet]:
        return [self.tracklets[int(o)] for o in self.frames[self.last_t].owner] if self.last_t is not None else []

    def tracked(self, t: int, i: int) -> TrackedDetection:
        rec = self.frames[t]
        fts = None if rec.ff_tracklet_scores is None else float(rec.ff_tracklet_scores[i])
        return TrackedDetection(t, int(rec.det_ids[i]), BBox.from_seq(rec.boxes[i]),
                                float(rec.ff_scores[i]), fts, rec.object_ids[i])

    def owner_of(self, t: int, i: int) -> Tracklet:
        return self.tracklets[int(self.frames[t].owner[i])]

    def _record(self, frame: Frame) -> FrameRecord:
        rec = FrameRecord(frame.t, frame.boxes.copy(), frame.ff_scores.copy(), frame.det_ids.copy(),
                          tuple(frame.object_ids), np.full(len(frame), -1, dtype=np.int64))
        self.frames[frame.t] = rec
        return rec

    def _new_tracklet(self, t: int, i: int, is_ff: bool = False) -> Tracklet:
        tr = Tracklet(self._next_id, t, i, is_ff, self)
        self.tracklets[tr.id] = tr
        self._next_id += 1
        self.frames[t].owner[i] = tr.id
        return tr


def init_tracklets(ff_detection: Detection) -> TrackletStore:
    """Fresh store holding only the first-frame template tracklet (id 0)."""
    return TrackletStore().initialize(ff_detection)


def extension_targets(pairwise: np.ndarray, prev_det_ids: np.ndarray, params: BuilderParams,
                      cur_det_ids: Optional[np.ndarray] = None) -> np.ndarray:
    """For each current detection, the index of the previous detection it extends, or -1.

    ``s1`` is the best score over previous detections (ties toward the lowest
    det_id), ``s2`` the best score of any *other* current detection against
    that same previous detection, ``s3`` the best score of the current
    detection against any *other* previous detection.  Maxima over empty sets
    are ``-inf``.
    """
    n, m = pairwise.shape
    out = np.full(n, -1, dtype=np.int64)
    if n == 0 or m == 0:
        return out
    s1 = pairwise.max(axis=1)
    ties = pairwise == s1[:, None]
    big = np.iinfo(np.int64).max
    jhat = np.argmin(np.where(ties, prev_det_ids[None, :], big), axis=1)

    # column top-2 for s2, row top-2 for s3
    if n > 1:
        col_top_row = np.argmax(pairwise, axis=0)
        col_sorted = np.sort(pairwise, axis=0)
        col_top, col_second = col_sorted[-1], col_sorted[-2]
        rows = np.arange(n)
        s2 = np.where(col_top_row[jhat] == rows, col_second[jhat], col_top[jhat])
    else:
        s2 = np.full(n, -np.inf)
    s3 = np.sort(pairwise, axis=1)[:, -2] if m > 1 else np.full(n, -np.inf)

    with np.errstate(invalid="ignore"):
        ok = (s1 > params.alpha) & (s2 <= s1 - params.beta) & (s3 <= s1 - params.beta)
    out[ok] = jhat[ok]

    # beta == 0 with exact ties can let two detections claim one previous
    # detection; the lowest det_id keeps it
    if ok.sum() > 1:
        taken = out[ok]
        if len(np.unique(taken)) != len(taken):
            seen: set[int] = set()
            order = np.flatnonzero(ok)
            if cur_det_ids is not None:
                order = order[np.argsort(cur_det_ids[order], kind="stable")]
            for i in order:
                j = int(out[i])
                if j in seen:
                    out[i] = -1
                seen.add(j)
    return out


def update_tracklets(store: TrackletStore, frame: Frame, pairwise: np.ndarray,
                     params: BuilderParams) -> UpdateResult:
    """Advance the store by one frame.

    ``pairwise`` must be ``len(frame) x len(previous frame)``.  Every current
    detection joins exactly one tracklet; tracklets alive at t-1 that gain no
    detection are frozen.
    """
    if store.last_t is None:
        raise RuntimeError("tracklet store is not initialized")
    if frame.t != store.last_t + 1:
        raise ValueError(f"expected frame {store.last_t + 1}, got {frame.t}")
    prev = store.frames[store.last_t]
    if pairwise.shape != (len(frame), len(prev.det_ids)):
        raise ValueError(f"pairwise shape {pairwise.shape} != {(len(frame), len(prev.det_ids))}")

    targets = extension_targets(pairwise, prev.det_ids, params, frame.det_ids)
    rec = store._record(frame)
    res = UpdateResult(frame.t)
    for i in np.argsort(frame.det_ids, kind="stable"):
        j = int(targets[i])
        if j >= 0:
            tr = store.tracklets[int(prev.owner[j])]
            tr.idx.append(int(i))
            rec.owner[i] = tr.id
            res.extended.append(tr.id)
        else:
            res.created.append(store._new_tracklet(frame.t, int(i)).id)
    extended = set(res.extended)
    for o in prev.owner:
        tr = store.tracklets[int(o)]
        if tr.id not in extended and not tr.frozen:
            tr.frozen = True
            res.frozen.append(tr.id)
    store.last_t = frame.t
    store.prev_frame = frame
    return res
