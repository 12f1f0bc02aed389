"""Online dynamic programming over tracklets.

``theta[a]`` is the best score of any tracklet sequence that starts with the
first-frame tracklet and ends with ``a``::

    theta[ff] = 0
    theta[a]  = unary(a) + max over a' (end(a') < start(a), start(a) - end(a') <= max_gap)
                           of  theta[a'] + w_loc * loc_score(a', a)

Floating-point order is fixed so that any independent re-derivation using the
same expressions reproduces theta bit for bit:

* a detection's contribution is ``w_ff * ff_score + (1 - w_ff) * ff_tracklet_score``;
* ``unary`` is the left-to-right sum of contributions in time order;
* ``loc_score`` is ``-(|dx| + |dy| + |dw| + |dh|)`` summed left to right;
* ``theta[a] = unary(a) + (theta[a'] + w_loc * loc_score(a', a))``.

A tracklet's predecessor set is fixed once it is created (every admissible
predecessor is already frozen by then), so extending a tracklet only adds one
contribution to its unary sum.  Only tracklets that were extended or created
in the current frame are written.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .geometry import BBox, l1_matrix, loc_score_boxes
from .tracklets import Tracklet, TrackletStore, UpdateResult

NEG_INF = -math.inf


@dataclass(frozen=True)
class DpParams:
    w_ff: float = 0.5
    w_loc: float = 1.0
    max_gap: int = 1500

    def __post_init__(self) -> None:
        if not 0.0 <= self.w_ff <= 1.0:
            raise ValueError("w_ff must lie in [0, 1]")
        if not math.isfinite(self.w_loc):
            raise ValueError("w_loc must be finite")
        if self.max_gap < 1:
            raise ValueError("max_gap must be >= 1")


def contribution(ff_score, ff_tracklet_score, w_ff: float):
    return w_ff * ff_score + (1.0 - w_ff) * ff_tracklet_score


def unary(tr: Tracklet, w_ff: float) -> float:
    total = None
    for d in tr.detections:
        if d.ff_tracklet_score is None:
            raise ValueError(f"detection {d.det_id} has no cached ff_tracklet_score")
        c = contribution(d.ff_score, d.ff_tracklet_score, w_ff)
        total = c if total is None else total + c
    return total


def loc_score_tracklets(a: Tracklet, b: Tracklet) -> float:
    """Negative L1 distance from the last box of ``a`` to the first box of ``b``."""
    if not a.end < b.start:
        raise ValueError(f"tracklet {a.id} ends at {a.end}, not before {b.id} starts at {b.start}")
    return loc_score_boxes(a.end_box, b.start_box)


def _better(val: float, tid: int, best: float, best_id: Optional[int]) -> bool:
    if val > best:
        return True
    return val == best and val != NEG_INF and best_id is not None and tid < best_id


def _rank(theta: float, tr: Tracklet) -> tuple:
    # output argmax: score, then the ff tracklet, then the lowest id
    return (theta, tr.is_ff, -tr.id)


class ThetaTable:
    """theta scores, predecessor links and the frozen-predecessor pool."""

    def __init__(self) -> None:
        self.theta: dict[int, float] = {}
        self.pred: dict[int, Optional[int]] = {}
        self.unary_sum: dict[int, float] = {}
        self.pred_term: dict[int, float] = {}
        self.last_writes = 0
        self.total_writes = 0
        self._best: Optional[tuple] = None
        self._best_frozen: Optional[tuple] = None
        self._cap = 0
        self._head = 0
        self._size = 0
        self._ids = np.zeros(0, dtype=np.int64)
        self._theta = np.zeros(0)
        self._end = np.zeros(0, dtype=np.int64)
        self._box = np.zeros((0, 4))

    @property
    def best_id(self) -> int:
        if self._best is None:
            raise RuntimeError("theta table is empty")
        return -self._best[2]

    @property
    def pool_size(self) -> int:
        return self._size - self._head

    def _pool_add(self, tr: Tracklet) -> None:
        th = self.theta[tr.id]
        key = _rank(th, tr)
        if self._best_frozen is None or key > self._best_frozen:
            self._best_frozen = key
        if th == NEG_INF:
            return
        if self._size == self._cap:
            live = self._size - self._head
            cap = max(64, 2 * live)
            ids, th_a, end, box = (np.zeros(cap, dtype=np.int64), np.zeros(cap),
                                   np.zeros(cap, dtype=np.int64), np.zeros((cap, 4)))
            sl = slice(self._head, self._size)
            ids[:live], th_a[:live], end[:live], box[:live] = (
                self._ids[sl], self._theta[sl], self._end[sl], self._box[sl])
            self._ids, self._theta, self._end, self._box = ids, th_a, end, box
            self._cap, self._head, self._size = cap, 0, live
        k = self._size
        self._ids[k] = tr.id
        self._theta[k] = th
        self._end[k] = tr.end
        self._box[k] = tr.end_box.as_tuple()
        self._size += 1

    def _expire(self, t: int, max_gap: int) -> None:
        while self._head < self._size and t - self._end[self._head] > max_gap:
            self._head += 1

    def _best_predecessors(self, start_boxes: np.ndarray, w_loc: float) -> list[tuple[Optional[int], float]]:
        n = len(start_boxes)
        if self.pool_size == 0:
            return [(None, NEG_INF)] * n
        sl = slice(self._head, self._size)
        ids, th, boxes = self._ids[sl], self._theta[sl], self._box[sl]
        out: list[tuple[Optional[int], float]] = []
        # bound the temporary (n, m, 4) array
        step = max(1, 2_000_000 // max(1, len(ids)))
        for lo in range(0, n, step):
            loc = -l1_matrix(start_boxes[lo:lo + step], boxes)
            vals = th[None, :] + w_loc * loc
            best = vals.max(axis=1)
            for r in range(len(best)):
                b = float(best[r])
                if b == NEG_INF:
                    out.append((None, NEG_INF))
                    continue
                cand = ids[vals[r] == b]
                out.append((int(cand.min()), b))
        return out

    def init(self, store: TrackletStore) -> "ThetaTable":
        ff = store.ff
        rec = store.frames[ff.start]
        if rec.ff_tracklet_scores is None:
            raise ValueError("first frame needs cached ff_tracklet_scores")
        self.theta[ff.id] = 0.0
        self.pred[ff.id] = None
        self.pred_term[ff.id] = 0.0
        self.unary_sum[ff.id] = 0.0
        self._best = _rank(0.0, ff)
        self.last_writes = 1
        self.total_writes = 1
        return self


def update_theta(table: ThetaTable, update: UpdateResult, store: TrackletStore, params: DpParams) -> ThetaTable:
    """Bring theta up to date after ``update_tracklets`` advanced ``store`` to ``update.t``.

    The frame's ``ff_tracklet_scores`` must already be cached on its record.
    """
    t = update.t
    rec = store.frames[t]
    if rec.ff_tracklet_scores is None:
        raise ValueError(f"frame {t} has no cached ff_tracklet_scores")
    contrib = contribution(rec.ff_scores, rec.ff_tracklet_scores, params.w_ff)

    for tid in update.frozen:
        table._pool_add(store[tid])
    table._expire(t, params.max_gap)

    writes = 0
    best = table._best_frozen
    for tid in update.extended:
        tr = store[tid]
        table.unary_sum[tid] = table.unary_sum[tid] + float(contrib[tr.idx[-1]])
        if tr.is_ff:
            th = 0.0
        else:
            th = table.unary_sum[tid] + table.pred_term[tid]
        table.theta[tid] = th
        writes += 1
        key = _rank(th, tr)
        if best is None or key > best:
            best = key

    if update.created:
        created = [store[tid] for tid in update.created]
        starts = np.array([rec.boxes[tr.idx[0]] for tr in created])
        for tr, (pid, term) in zip(created, table._best_predecessors(starts, params.w_loc)):
            u = float(contrib[tr.idx[0]])
            table.unary_sum[tr.id] = u
            table.pred[tr.id] = pid
            table.pred_term[tr.id] = term
            th = u + term
            table.theta[tr.id] = th
            writes += 1
            key = _rank(th, tr)
            if best is None or key > best:
                best = key

    table._best = best
    table.last_writes = writes
    table.total_writes += writes
    return table


def recompute_theta(store: TrackletStore, params: DpParams) -> tuple[dict[int, float], dict[int, Optional[int]]]:
    """Full O(n^2) recomputation of theta and predecessors from the tracklet set."""
    order = sorted(store, key=lambda tr: (tr.start, tr.id))
    theta: dict[int, float] = {}
    pred: dict[int, Optional[int]] = {}
    for a in order:
        if a.is_ff:
            theta[a.id], pred[a.id] = 0.0, None
            continue
        best, best_id = NEG_INF, None
        for p in order:
            if p.start >= a.start:
                break
            if not p.end < a.start or a.start - p.end > params.max_gap:
                continue
            val = theta[p.id] + params.w_loc * loc_score_boxes(p.end_box, a.start_box)
            if _better(val, p.id, best, best_id) or (best_id is None and val > NEG_INF):
                best, best_id = val, p.id
        theta[a.id] = unary(a, params.w_ff) + best
        pred[a.id] = best_id
    return theta, pred


class Selection(NamedTuple):
    box: BBox
    confidence: float
    present: bool
    tracklet_id: int
    det_id: Optional[int]
    object_id: Optional[int]


def select_output(table: ThetaTable, store: TrackletStore, t: int, w_ff: float = 0.5) -> Selection:
    """Box to report at frame ``t`` from the highest-theta tracklet.

    If that tracklet has no detection at ``t`` the object is reported absent:
    its most recent box is returned with confidence 0.
    """
    tr = store[table.best_id]
    if tr.has(t):
        d = tr.detection_at(t)
        conf = contribution(d.ff_score, d.ff_tracklet_score, w_ff)
        return Selection(d.box, float(conf), True, tr.id, d.det_id, d.object_id)
    d = tr.detection_at(tr.end)
    return Selection(d.box, 0.0, False, tr.id, None, None)


def reconstruct_track(table: ThetaTable, store: TrackletStore) -> list[Tracklet]:
    """Walk predecessor links from the current best tracklet back to the ff tracklet."""
    out = []
    tid: Optional[int] = table.best_id
    while tid is not None:
        out.append(store[tid])
        tid = table.pred[tid]
    out.reverse()
    return out


def sequence_score(seq: Iterable[Tracklet], params: DpParams) -> float:
    """Score of an explicit tracklet sequence in the documented arithmetic order."""
    seq = list(seq)
    if not seq or not seq[0].is_ff:
        raise ValueError("a track must start with the ff tracklet")
    score = 0.0
    for prev, cur in zip(seq, seq[1:]):
        score = unary(cur, params.w_ff) + (score + params.w_loc * loc_score_tracklets(prev, cur))
    return score
