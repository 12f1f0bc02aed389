"""Independent reference computations shared by the unit and acceptance tests."""
import math

import numpy as np

from conftest import object_frames
from trackletdp.dp import DpParams
from trackletdp.engine import TdpaTracker
from trackletdp.tracklets import BuilderParams

NEG = -math.inf


def run(frames, builder=BuilderParams(), dp=DpParams(), seed=0):
    tr = TdpaTracker(builder, dp, seed=seed)
    tr.reinitialize(frames[0].detection(0))
    for f in frames[1:]:
        yield tr, tr.step(f)


def brute_theta(store, dp: DpParams) -> dict:
    """Best score of every tracklet over all explicit sequences starting at ff (DFS, no memo)."""
    trs = sorted(store, key=lambda a: (a.start, a.id))

    def u(a):
        total = None
        for d in a.detections:
            c = dp.w_ff * d.ff_score + (1.0 - dp.w_ff) * d.ff_tracklet_score
            total = c if total is None else total + c
        return total

    def loc(a, b):
        p, q = a.end_box, b.start_box
        return -(abs(p.x - q.x) + abs(p.y - q.y) + abs(p.w - q.w) + abs(p.h - q.h))

    unaries = {a.id: u(a) for a in trs}
    best = {a.id: NEG for a in trs}
    ff = store.ff
    best[ff.id] = 0.0

    def dfs(last, score):
        for b in trs:
            if b.is_ff or not last.end < b.start or b.start - last.end > dp.max_gap:
                continue
            s = unaries[b.id] + (score + dp.w_loc * loc(last, b))
            if s > best[b.id]:
                best[b.id] = s
            dfs(b, s)

    dfs(ff, 0.0)
    return best


def small_instance(rng, max_tracklets=16):
    while True:
        frames = object_frames(rng, int(rng.integers(2, 13)), int(rng.integers(1, 5)),
                               p_visible=float(rng.uniform(0.5, 0.95)))
        dp = DpParams(w_ff=float(rng.choice([0.0, 0.3, 0.5, 1.0])), w_loc=float(rng.choice([0.0, 1.0, 2.5])),
                      max_gap=int(rng.choice([1, 2, 4, 1500])))
        builder = BuilderParams(alpha=float(rng.choice([0.3, 0.5, 0.7])), beta=0.1, gamma=0.3)
        states = list(run(frames, builder, dp))
        tracker = states[-1][0] if states else None
        if tracker is not None and len(tracker.store) <= max_tracklets:
            return frames, builder, dp, tracker


def cos(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return 0.0 if na == 0 or nb == 0 else float(np.clip(a @ b / (na * nb), -1, 1))


def dense_rescore(prev, cands, ff, params):
    """Explicit per-candidate score with masking; first maximum wins."""
    best, best_i = -np.inf, None
    for i, c in enumerate(cands):
        p, q = c.box, prev.box
        if max(abs(p.x - q.x), abs(p.y - q.y), abs(p.w - q.w), abs(p.h - q.h)) > params.xi:
            continue
        l1 = abs(p.x - q.x) + abs(p.y - q.y) + abs(p.w - q.w) + abs(p.h - q.h)
        s = cos(c.embedding, ff.embedding) + cos(c.embedding, prev.embedding) + params.delta * l1
        if s > best:
            best, best_i = s, i
    return prev if best_i is None else cands[best_i]


def full_sort(g, q, k, exclude):
    rows = [(math.dist(e.embedding, q), i) for i, e in enumerate(g.entries) if e.video_id != exclude]
    rows.sort()
    return [i for _, i in rows[:k]]
