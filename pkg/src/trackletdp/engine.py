"""Trackers over detection streams: the tracklet-DP tracker and the per-frame
Argmax baseline.  Both follow the ``reinitialize`` / ``step`` protocol used by
the reset-based evaluation loop."""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .dp import DpParams, ThetaTable, select_output, update_theta
from .geometry import BBox, Detection, Frame
from .metrics import PredictionRecord
from .oracle import CosineEmbeddingOracle, Oracle, pairwise_gated_scores
from .tracklets import BuilderParams, TrackletStore, UpdateResult, init_tracklets, update_tracklets


class TdpaTracker:
    """Tracklet building plus online DP selection, one frame at a time."""

    def __init__(self, builder: BuilderParams = BuilderParams(), dp: DpParams = DpParams(),
                 oracle: Optional[Oracle] = None, seed: int = 0):
        self.builder = builder
        self.dp = dp
        self.oracle = oracle or CosineEmbeddingOracle()
        self.seed = seed
        self.store: Optional[TrackletStore] = None
        self.table: Optional[ThetaTable] = None
        self._ff_ref: Optional[Detection] = None
        self.last_update: Optional[UpdateResult] = None

    def _record(self, t: int) -> PredictionRecord:
        sel = select_output(self.table, self.store, t, self.dp.w_ff)
        return PredictionRecord(t, sel.box, sel.confidence, sel.present, sel.det_id, sel.object_id)

    def reinitialize(self, template: Detection) -> PredictionRecord:
        self.store = init_tracklets(template)
        frame = self.store.prev_frame
        self.store.frames[template.t].ff_tracklet_scores = self.oracle.against(frame, template, self.seed)
        self._ff_ref = template
        self.table = ThetaTable().init(self.store)
        return self._record(template.t)

    initialize = reinitialize

    def step(self, frame: Frame) -> PredictionRecord:
        if self.store is None:
            raise RuntimeError("tracker is not initialized")
        store = self.store
        pairwise = pairwise_gated_scores(frame, store.prev_frame, self.builder.gamma, self.seed, self.oracle)
        upd = update_tracklets(store, frame, pairwise, self.builder)
        # reference is the ff tracklet's most recent detection *before* this frame
        store.frames[frame.t].ff_tracklet_scores = self.oracle.against(frame, self._ff_ref, self.seed)
        update_theta(self.table, upd, store, self.dp)
        self.last_update = upd
        ff = store.ff
        if ff.end == frame.t:
            self._ff_ref = frame.detection(ff.idx[-1])
        return self._record(frame.t)


class ArgmaxTracker:
    """Reports the highest ff_score detection of every frame; no temporal model."""

    def __init__(self) -> None:
        self._last: Optional[BBox] = None

    def reinitialize(self, template: Detection) -> PredictionRecord:
        self._last = template.box
        return PredictionRecord(template.t, template.box, template.ff_score, True,
                                template.det_id, template.object_id)

    initialize = reinitialize

    def step(self, frame: Frame) -> PredictionRecord:
        if self._last is None:
            raise RuntimeError("tracker is not initialized")
        if len(frame) == 0:
            return PredictionRecord(frame.t, self._last, 0.0, False)
        best = frame.ff_scores.max()
        cand = np.flatnonzero(frame.ff_scores == best)
        i = int(cand[np.argmin(frame.det_ids[cand])])
        d = frame.detection(i)
        self._last = d.box
        return PredictionRecord(frame.t, d.box, d.ff_score, True, d.det_id, d.object_id)


def run_tracker(tracker, template: Detection, frames: Iterable[Frame]) -> list[PredictionRecord]:
    """Initialize on ``template`` and step through every later frame."""
    out = [tracker.reinitialize(template)]
    for frame in frames:
        if frame.t <= template.t:
            continue
        out.append(tracker.step(frame))
    return out
