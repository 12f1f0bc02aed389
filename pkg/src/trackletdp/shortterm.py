"""Short-term tracking for reset-based evaluation.

Each step scores candidates by ``ff_score + prev_score + delta * L1`` where
``L1`` is the box distance to the previous result, drops candidates farther
than ``xi`` (L-infinity) from the previous result, and returns the best one.
Shifted copies of the previous box join the candidate set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import BBox, Detection, Frame, iou_array, l1_matrix, linf_matrix
from .metrics import PredictionRecord
from .oracle import CosineEmbeddingOracle, Oracle

DEFAULT_SHIFTS = (-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5)


@dataclass(frozen=True)
class ShortTermParams:
    delta: float = -1.0
    xi: float = 0.5
    shift_grid: tuple[float, ...] = DEFAULT_SHIFTS
    # a shifted proposal stands for an object only if it overlaps a detection this much
    proposal_iou: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "shift_grid", tuple(float(s) for s in self.shift_grid))
        if not self.shift_grid or 0.0 not in self.shift_grid:
            raise ValueError("shift_grid must be non-empty and contain 0.0")
        if not (math.isfinite(self.xi) and self.xi > 0):
            raise ValueError("xi must be > 0")
        if not math.isfinite(self.delta):
            raise ValueError("delta must be finite")


def shifted_proposals(prev: BBox, grid: Sequence[float] = DEFAULT_SHIFTS) -> list[BBox]:
    """Copies of ``prev`` moved by multiples of its own width and height, clamped to the frame."""
    return [BBox(prev.x + sx * prev.w, prev.y + sy * prev.h, prev.w, prev.h) for sx in grid for sy in grid]


def combined_scores(candidates: Frame, prev_det: Detection, ff_detection: Detection,
                    params: ShortTermParams, oracle: Oracle, seed: int = 0) -> np.ndarray:
    det_scores = oracle.against(candidates, ff_detection, seed)
    prev_scores = oracle.against(candidates, prev_det, seed)
    pb = np.array([prev_det.box.as_tuple()])
    loc = l1_matrix(candidates.boxes, pb)[:, 0]
    scores = det_scores + prev_scores + params.delta * loc
    far = linf_matrix(candidates.boxes, pb)[:, 0] > params.xi
    return np.where(far, -np.inf, scores)


def short_term_step(prev_det: Detection, candidates: Sequence[Detection], params: ShortTermParams,
                    oracle: Optional[Oracle], ff_detection: Detection, seed: int = 0) -> Detection:
    """Best-scoring candidate, or ``prev_det`` itself when nothing survives the cutoff."""
    if not candidates:
        return prev_det
    oracle = oracle or CosineEmbeddingOracle()
    t = candidates[0].t
    frame = Frame.from_detections(t, [c if c.t == t else Detection(t, c.box, c.ff_score, c.embedding,
                                                                    c.det_id, c.object_id)
                                      for c in candidates])
    scores = combined_scores(frame, prev_det, ff_detection, params, oracle, seed)
    i = int(np.argmax(scores))
    if scores[i] == -np.inf:
        return prev_det
    return candidates[i]


def proposal_candidates(frame: Frame, prev: BBox, params: ShortTermParams) -> list[Detection]:
    """Shifted proposals that land on a detection, keeping the proposal box itself.

    Without image features a shifted box is only scoreable when it covers an
    object the detector saw; it then takes that detection's appearance.
    Proposals get negative det_ids.
    """
    if len(frame) == 0:
        return []
    props = shifted_proposals(prev, params.shift_grid)
    pa = np.array([b.as_tuple() for b in props])
    out = []
    for k, box in enumerate(props):
        ov = iou_array(np.tile(pa[k], (len(frame), 1)), frame.boxes)
        i = int(np.argmax(ov))
        if ov[i] >= params.proposal_iou:
            out.append(Detection(frame.t, box, float(frame.ff_scores[i]), frame.embeddings[i],
                                 -1 - k, frame.object_ids[i]))
    return out


class ShortTermTracker:
    def __init__(self, params: ShortTermParams = ShortTermParams(), oracle: Optional[Oracle] = None,
                 seed: int = 0):
        self.params = params
        self.oracle = oracle or CosineEmbeddingOracle()
        self.seed = seed
        self.ff: Optional[Detection] = None
        self.prev: Optional[Detection] = None

    def reinitialize(self, template: Detection) -> PredictionRecord:
        self.ff = self.prev = template
        return PredictionRecord(template.t, template.box, template.ff_score, True,
                                template.det_id, template.object_id)

    initialize = reinitialize

    def step(self, frame: Frame) -> PredictionRecord:
        if self.prev is None:
            raise RuntimeError("tracker is not initialized")
        cands = frame.detections() + proposal_candidates(frame, self.prev.box, self.params)
        best = short_term_step(self.prev, cands, self.params, self.oracle, self.ff, self.seed)
        if best is self.prev:
            return PredictionRecord(frame.t, self.prev.box, 0.0, False)
        self.prev = best
        return PredictionRecord(frame.t, best.box, best.ff_score, True, best.det_id, best.object_id)
