"""Video hard example mining over a gallery of ground-truth box embeddings.

For a reference box: retrieve its nearest neighbours from *other* videos,
keep one random neighbour from each of up to ``n_videos`` randomly chosen
videos as hard negatives, and balance them with boxes from random frames of
the reference video as positives.  Boxes fed to feature extraction are
jittered with clipped Gaussian noise on their corners.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .geometry import BBox


@dataclass(frozen=True)
class JitterParams:
    sd: float = 0.25
    clip: float = 0.25

    def __post_init__(self) -> None:
        if not self.sd > 0 or not self.clip > 0:
            raise ValueError("jitter sd and clip must be > 0")


def clip_offsets(raw, params: JitterParams = JitterParams()) -> np.ndarray:
    return np.clip(np.asarray(raw, dtype=np.float64), -params.clip, params.clip)


def jitter_offsets(n: int, params: JitterParams, rng: np.random.Generator) -> np.ndarray:
    """(n, 4) corner offsets, each drawn from N(0, sd) and clipped to [-clip, clip]."""
    return clip_offsets(rng.normal(0.0, params.sd, size=(n, 4)), params)


def jitter_box(box: Sequence[float], params: JitterParams = JitterParams(), seed=0) -> tuple[float, ...]:
    """Add one clipped-Gaussian offset to each of ``(x0, y0, x1, y1)``.

    Offsets are added as drawn; a large draw on a small box can swap corners.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if len(box) != 4:
        raise ValueError("corner box needs 4 values")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    r = jitter_offsets(1, params, rng)[0]
    return tuple(float(b + o) for b, o in zip(box, r))


@dataclass(frozen=True)
class GalleryEntry:
    video_id: int
    frame: int
    box: BBox
    embedding: np.ndarray
    entry_id: int


class Gallery:
    """Immutable set of embedded ground-truth boxes."""

    def __init__(self, entries: Sequence[GalleryEntry]):
        if not entries:
            raise ValueError("gallery is empty")
        dims = {e.embedding.shape[0] for e in entries}
        if len(dims) != 1:
            raise ValueError(f"gallery mixes embedding dimensions {sorted(dims)}")
        ids = [e.entry_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate entry_id in gallery")
        self.entries = list(entries)
        self.embeddings = np.stack([np.asarray(e.embedding, dtype=np.float64) for e in entries])
        self.embeddings.setflags(write=False)
        self.video_ids = np.array([e.video_id for e in entries], dtype=np.int64)
        self._by_id = {e.entry_id: i for i, e in enumerate(entries)}
        self._index: Optional[RandomProjectionForest] = None

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, entry_id: int) -> GalleryEntry:
        if entry_id not in self._by_id:
            raise KeyError(f"no gallery entry with entry_id {entry_id}")
        return self.entries[self._by_id[entry_id]]

    @classmethod
    def from_arrays(cls, embeddings: np.ndarray, video_ids: Sequence[int], frames: Optional[Sequence[int]] = None,
                    boxes: Optional[Sequence[BBox]] = None) -> "Gallery":
        n = len(embeddings)
        frames = frames if frames is not None else range(n)
        boxes = boxes if boxes is not None else [BBox(0.5, 0.5, 0.1, 0.1)] * n
        return cls([GalleryEntry(int(v), int(f), b, np.asarray(e), i)
                    for i, (e, v, f, b) in enumerate(zip(embeddings, video_ids, frames, boxes))])

    @classmethod
    def read_ndjson(cls, fh: TextIO) -> "Gallery":
        entries = []
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(GalleryEntry(int(rec["video_id"]), int(rec["frame"]), BBox.from_seq(rec["box"]),
                                            np.asarray(rec["embedding"], dtype=np.float64),
                                            int(rec.get("entry_id", len(entries)))))
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"gallery line {lineno}: {e}") from e
        return cls(entries)

    def build_index(self, n_trees: int = 10, leaf_size: int = 32, seed: int = 0) -> "RandomProjectionForest":
        self._index = RandomProjectionForest(self.embeddings, n_trees, leaf_size, seed)
        return self._index


def _distances(emb: np.ndarray, q: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        return np.sqrt(((emb - q) ** 2).sum(axis=1))
    if metric == "cosine":
        qn = np.linalg.norm(q)
        en = np.linalg.norm(emb, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = np.where((en > 0) & (qn > 0), (emb @ q) / (en * qn), 0.0)
        return 1.0 - cos
    raise ValueError(f"unknown metric {metric!r}")


def knn_indices(gallery: Gallery, query: np.ndarray, k: int, exclude_video: Optional[int] = None,
                metric: str = "euclidean", backend: str = "exact",
                search_k: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Gallery row indices and distances of the k nearest entries, ascending.

    Equal distances keep gallery order.
    """
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (gallery.embeddings.shape[1],):
        raise ValueError(f"query has shape {q.shape}, gallery dimension is {gallery.embeddings.shape[1]}")
    if k <= 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    if backend == "exact":
        cand = np.arange(len(gallery))
    elif backend == "annoy":
        if gallery._index is None:
            gallery.build_index()
        cand = gallery._index.candidates(q, search_k or max(50 * k, 500))
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if exclude_video is not None:
        cand = cand[gallery.video_ids[cand] != exclude_video]
    if len(cand) == 0:
        return cand, np.zeros(0)
    d = _distances(gallery.embeddings[cand], q, metric)
    order = np.lexsort((cand, d))[:k]
    return cand[order], d[order]


def knn_query(gallery: Gallery, query_embedding: np.ndarray, k: int = 10000,
              exclude_video: Optional[int] = None, metric: str = "euclidean",
              backend: str = "exact") -> list[GalleryEntry]:
    """Up to ``k`` nearest entries not from ``exclude_video``, nearest first."""
    idx, _ = knn_indices(gallery, query_embedding, k, exclude_video, metric, backend)
    return [gallery.entries[i] for i in idx]


def sample_negatives(neighbors: Sequence[GalleryEntry], n_videos: int = 100, seed=0,
                     exclude_video: Optional[int] = None) -> list[GalleryEntry]:
    """One random neighbour from each of up to ``n_videos`` distinct videos.

    Videos are drawn uniformly without replacement from those present among
    ``neighbors``; the result is ordered by the draw.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    by_video: dict[int, list[GalleryEntry]] = {}
    for e in neighbors:
        if e.video_id != exclude_video:
            by_video.setdefault(e.video_id, []).append(e)
    videos = sorted(by_video)
    if not videos or n_videos <= 0:
        return []
    chosen = rng.choice(len(videos), size=min(n_videos, len(videos)), replace=False)
    out = []
    for v in chosen:
        pool = by_video[videos[int(v)]]
        out.append(pool[int(rng.integers(len(pool)))])
    return out


def sample_positives(gallery: Gallery, video_id: int, n: int = 30, seed=0) -> list[GalleryEntry]:
    """Entries from up to ``n`` distinct random frames of ``video_id``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    by_frame: dict[int, list[GalleryEntry]] = {}
    for e in gallery.entries:
        if e.video_id == video_id:
            by_frame.setdefault(e.frame, []).append(e)
    if not by_frame:
        raise KeyError(f"video {video_id} is not in the gallery")
    if n <= 0:
        return []
    frames = sorted(by_frame)
    chosen = rng.choice(len(frames), size=min(n, len(frames)), replace=False)
    out = []
    for f in chosen:
        pool = by_frame[frames[int(f)]]
        out.append(pool[int(rng.integers(len(pool)))])
    return out


@dataclass
class MinedExample:
    label: str
    entry: GalleryEntry
    jittered_corners: Optional[tuple[float, ...]] = None


def mine(gallery: Gallery, reference_entry_id: int, k: int = 10000, n_videos: int = 100,
         n_positives: int = 30, seed: int = 0, metric: str = "euclidean", backend: str = "exact",
         jitter: Optional[JitterParams] = None) -> list[MinedExample]:
    """Hard negatives and balancing positives for one reference box."""
    ref = gallery.entry(reference_entry_id)
    rng_neg = np.random.default_rng([seed, 1])
    rng_pos = np.random.default_rng([seed, 2])
    rng_jit = np.random.default_rng([seed, 3])
    neighbors = knn_query(gallery, ref.embedding, k, ref.video_id, metric, backend)
    negs = sample_negatives(neighbors, n_videos, rng_neg, exclude_video=ref.video_id)
    poss = sample_positives(gallery, ref.video_id, n_positives, rng_pos)
    out = [MinedExample("positive", e) for e in poss] + [MinedExample("negative", e) for e in negs]
    if jitter is not None:
        for ex in out:
            ex.jittered_corners = jitter_box(ex.entry.box.corners(), jitter, rng_jit)
    return out


class RandomProjectionForest:
    """Approximate nearest-neighbour index: a forest of random hyperplane trees.

    Each split uses the hyperplane equidistant from two random points of the
    node.  Queries walk all trees best-first by hyperplane margin until
    ``search_k`` candidates are collected; callers re-rank candidates exactly.
    """

    def __init__(self, data: np.ndarray, n_trees: int = 10, leaf_size: int = 32, seed: int = 0):
        self.data = np.asarray(data, dtype=np.float64)
        self.leaf_size = max(1, leaf_size)
        rng = np.random.default_rng(seed)
        # node arrays: normal, offset, left, right, leaf items
        self.normals: list[Optional[np.ndarray]] = []
        self.offsets: list[float] = []
        self.children: list[tuple[int, int]] = []
        self.leaves: list[Optional[np.ndarray]] = []
        self.roots = [self._build(np.arange(len(self.data)), rng) for _ in range(n_trees)]

    def _node(self, normal, offset, children, leaf) -> int:
        self.normals.append(normal)
        self.offsets.append(offset)
        self.children.append(children)
        self.leaves.append(leaf)
        return len(self.normals) - 1

    def _build(self, items: np.ndarray, rng: np.random.Generator) -> int:
        if len(items) <= self.leaf_size:
            return self._node(None, 0.0, (-1, -1), items)
        for _ in range(8):
            a, b = rng.choice(items, size=2, replace=False)
            normal = self.data[a] - self.data[b]
            if np.any(normal):
                break
        else:
            return self._node(None, 0.0, (-1, -1), items)
        offset = float(normal @ (self.data[a] + self.data[b]) / 2.0)
        side = self.data[items] @ normal > offset
        left, right = items[~side], items[side]
        if len(left) == 0 or len(right) == 0:
            half = rng.permutation(items)
            left, right = half[: len(half) // 2], half[len(half) // 2:]
        node = self._node(normal, offset, (-1, -1), None)
        lo, hi = self._build(left, rng), self._build(right, rng)
        self.children[node] = (lo, hi)
        return node

    def candidates(self, q: np.ndarray, search_k: int) -> np.ndarray:
        heap = [(-math.inf, r) for r in self.roots]
        heapq.heapify(heap)
        found: list[np.ndarray] = []
        total = 0
        while heap and total < search_k:
            neg_margin, node = heapq.heappop(heap)
            leaf = self.leaves[node]
            if leaf is not None:
                found.append(leaf)
                total += len(leaf)
                continue
            m = float(q @ self.normals[node] - self.offsets[node])
            lo, hi = self.children[node]
            # priority is the worst margin seen along the path
            heapq.heappush(heap, (max(neg_margin, -m), hi))
            heapq.heappush(heap, (max(neg_margin, m), lo))
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))


def write_mined(fh: TextIO, examples: Iterable[MinedExample]) -> None:
    for ex in examples:
        e = ex.entry
        rec = {"label": ex.label, "entry_id": e.entry_id, "video_id": e.video_id, "frame": e.frame,
               "box": list(e.box.as_tuple())}
        if ex.jittered_corners is not None:
            rec["jittered_corners"] = list(ex.jittered_corners)
        fh.write(json.dumps(rec) + "\n")
