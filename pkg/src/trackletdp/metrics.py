"""Tracking evaluation: success/precision plots, long-term Pr/Re/F, MaxGM,
reset-based accuracy/robustness and simulator identity accuracy.

Ground truth is a per-frame list of ``BBox`` or ``None`` (target absent).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .geometry import BBox, Detection, Frame, iou, iou_array

SUCCESS_THRESHOLDS = np.arange(101) / 100.0


@dataclass(frozen=True)
class PredictionRecord:
    t: int
    box: BBox
    confidence: float
    present: bool
    det_id: Optional[int] = None
    object_id: Optional[int] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.confidence):
            raise ValueError(f"frame {self.t}: non-finite confidence")


Truth = Sequence[Optional[BBox]]


def _check_aligned(preds: Sequence[PredictionRecord], truth: Truth) -> None:
    if len(preds) != len(truth):
        raise ValueError(f"{len(preds)} predictions for {len(truth)} ground-truth frames")


def _arrays(preds: Sequence[PredictionRecord], truth: Truth):
    n = len(preds)
    present_truth = np.array([b is not None for b in truth], dtype=bool)
    pb = np.array([p.box.as_tuple() for p in preds], dtype=np.float64).reshape(n, 4)
    tb = np.array([b.as_tuple() if b is not None else (0.0, 0.0, 0.0, 0.0) for b in truth],
                  dtype=np.float64).reshape(n, 4)
    ious = np.where(present_truth, iou_array(pb, tb), 0.0)
    conf = np.array([p.confidence for p in preds], dtype=np.float64)
    flagged = np.array([p.present for p in preds], dtype=bool)
    return ious, present_truth, conf, flagged, pb, tb


def overlaps(preds: Sequence[PredictionRecord], truth: Truth) -> np.ndarray:
    """Per-frame IoU over frames where the target is present."""
    _check_aligned(preds, truth)
    ious, present, *_ = _arrays(preds, truth)
    return ious[present]


def success_curve(preds: Sequence[PredictionRecord], truth: Truth) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of target-present frames with IoU strictly above each threshold."""
    ov = overlaps(preds, truth)
    if len(ov) == 0:
        raise ValueError("no frame with the target present")
    rates = (ov[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return SUCCESS_THRESHOLDS.copy(), rates


def success_auc(preds: Sequence[PredictionRecord], truth: Truth) -> float:
    """Mean success rate over thresholds 0.00, 0.01, ..., 1.00."""
    return float(success_curve(preds, truth)[1].mean())


def center_errors(preds: Sequence[PredictionRecord], truth: Truth, frame_w: int, frame_h: int) -> np.ndarray:
    if not frame_w or not frame_h or frame_w <= 0 or frame_h <= 0:
        raise ValueError("precision needs positive frame dimensions (frame_w, frame_h)")
    _check_aligned(preds, truth)
    _, present, _, _, pb, tb = _arrays(preds, truth)
    dx = (pb[:, 0] - tb[:, 0]) * frame_w
    dy = (pb[:, 1] - tb[:, 1]) * frame_h
    return np.hypot(dx, dy)[present]


def precision_curve(preds: Sequence[PredictionRecord], truth: Truth, frame_w: int, frame_h: int,
                    threshold_px: float = 20.0) -> float:
    """Fraction of target-present frames whose center error is at most ``threshold_px``."""
    err = center_errors(preds, truth, frame_w, frame_h)
    if len(err) == 0:
        raise ValueError("no frame with the target present")
    return float((err <= threshold_px).mean())


def precision_plot(preds, truth, frame_w, frame_h, max_px: int = 50) -> tuple[np.ndarray, np.ndarray]:
    err = center_errors(preds, truth, frame_w, frame_h)
    px = np.arange(max_px + 1, dtype=np.float64)
    return px, (err[None, :] <= px[:, None]).mean(axis=1)


def f_score(pr: float, re: float) -> float:
    return 2.0 * pr * re / (pr + re) if pr + re > 0 else 0.0


def geometric_mean(tpr: float, tnr: float) -> float:
    return math.sqrt(tpr * tnr)


def _descending_thresholds(conf: np.ndarray, flagged: np.ndarray) -> np.ndarray:
    return np.unique(conf[flagged])[::-1]


def f_curve(preds: Sequence[PredictionRecord], truth: Truth) -> list[tuple[float, float, float, float]]:
    """``(threshold, pr, re, f)`` for every distinct reported confidence, descending.

    A frame counts as reported at threshold tau when the tracker flags it
    present with confidence >= tau.  Pr is the mean IoU over reported frames
    (IoU 0 where the target is absent); Re is the mean IoU over target-present
    frames, counting unreported frames as 0.
    """
    _check_aligned(preds, truth)
    ious, present, conf, flagged, *_ = _arrays(preds, truth)
    n_present = int(present.sum())
    if n_present == 0:
        raise ValueError("long-term F needs at least one frame with the target present")
    order = np.argsort(-conf[flagged], kind="stable")
    c_sorted = conf[flagged][order]
    iou_sorted = ious[flagged][order]
    cum_iou = np.cumsum(iou_sorted)
    out = []
    for tau in _descending_thresholds(conf, flagged):
        k = int(np.searchsorted(-c_sorted, -tau, side="right"))
        pr = float(cum_iou[k - 1] / k)
        re = float(cum_iou[k - 1] / n_present)
        out.append((float(tau), pr, re, f_score(pr, re)))
    return out


def longterm_f(preds: Sequence[PredictionRecord], truth: Truth) -> tuple[float, float, float]:
    """Maximum F over thresholds and the (Pr, Re) where it is reached.

    Ties keep the highest threshold.  No reported frame at all gives (0, 0, 0).
    """
    best = (0.0, 0.0, 0.0)
    for _, pr, re, f in f_curve(preds, truth):
        if f > best[0]:
            best = (f, pr, re)
    return best


def gm_curve(preds: Sequence[PredictionRecord], truth: Truth,
             iou_threshold: float = 0.5) -> list[tuple[float, float, float, float]]:
    """``(threshold, tpr, tnr, gm)`` from reporting nothing (+inf) down to the lowest confidence."""
    _check_aligned(preds, truth)
    ious, present, conf, flagged, *_ = _arrays(preds, truth)
    n_pos, n_neg = int(present.sum()), int((~present).sum())
    if n_neg == 0:
        raise ValueError("MaxGM needs frames where the target is absent (TNR is undefined otherwise); "
                         "use longterm_f or success_auc for always-visible sequences")
    if n_pos == 0:
        raise ValueError("MaxGM needs frames where the target is present")
    out = []
    for tau in np.concatenate([[np.inf], _descending_thresholds(conf, flagged)]):
        reported = flagged & (conf >= tau)
        tpr = float((present & reported & (ious > iou_threshold)).sum() / n_pos)
        tnr = float((~present & ~reported).sum() / n_neg)
        out.append((float(tau), tpr, tnr, geometric_mean(tpr, tnr)))
    return out


def max_gm(preds: Sequence[PredictionRecord], truth: Truth, iou_threshold: float = 0.5) -> tuple[float, float, float]:
    """Maximum geometric mean of TPR and TNR over confidence thresholds, with its rates."""
    best = None
    for _, tpr, tnr, gm in gm_curve(preds, truth, iou_threshold):
        if best is None or gm > best[0]:
            best = (gm, tpr, tnr)
    return best


def identity_accuracy(selected_ids: Sequence[Optional[int]], truth_ids: Sequence[Optional[int]]) -> float:
    """Fraction of target-present frames where the reported detection is the target.

    ``truth_ids[t]`` is None where the target is absent.  Returns 0.0 when the
    target is never present.
    """
    if len(selected_ids) != len(truth_ids):
        raise ValueError("selected and truth id sequences differ in length")
    hits = total = 0
    for s, g in zip(selected_ids, truth_ids):
        if g is None:
            continue
        total += 1
        hits += s is not None and s == g
    return hits / total if total else 0.0


class ResettableTracker(Protocol):
    def reinitialize(self, template: Detection) -> PredictionRecord: ...

    def step(self, frame: Frame) -> PredictionRecord: ...


def template_from_truth(frame: Frame, box: BBox) -> Optional[Detection]:
    """Template for (re)initialization: the truth box carrying the appearance of
    the best-overlapping detection.  None when nothing overlaps the truth box."""
    if len(frame) == 0:
        return None
    ov = iou_array(frame.boxes, np.tile(np.array(box.as_tuple()), (len(frame), 1)))
    i = int(np.argmax(ov))
    if ov[i] <= 0.0:
        return None
    d = frame.detection(i)
    return Detection(frame.t, box, d.ff_score, d.embedding, d.det_id, d.object_id)


@dataclass
class ResetResult:
    resets: int
    accuracy: Optional[float]
    counted_frames: int
    failures: list[int] = field(default_factory=list)


def reset_based_eval(tracker: ResettableTracker, frames: Sequence[Frame], truth: Truth,
                     skip: int = 5, burn_in: int = 10,
                     make_template: Callable[[Frame, BBox], Optional[Detection]] = template_from_truth
                     ) -> ResetResult:
    """Run ``tracker`` under a reset protocol.

    A frame with zero overlap counts a failure; the tracker is re-initialized
    from the truth box ``skip`` frames later.  The ``burn_in`` frames after
    every initialization (including the first) are left out of the accuracy.
    Frames without a visible target neither fail nor count.
    """
    if len(frames) != len(truth):
        raise ValueError(f"{len(frames)} frames for {len(truth)} ground-truth entries")
    resets, failures, counted = 0, [], []
    need_init, init_t, t = True, 0, 0
    while t < len(frames):
        if need_init:
            tmpl = make_template(frames[t], truth[t]) if truth[t] is not None else None
            if tmpl is None:
                t += 1
                continue
            tracker.reinitialize(tmpl)
            need_init, init_t = False, t
            t += 1
            continue
        rec = tracker.step(frames[t])
        if truth[t] is not None:
            ov = iou(rec.box, truth[t])
            if ov == 0.0:
                resets += 1
                failures.append(t)
                need_init = True
                t += skip
                continue
            if t - init_t > burn_in:
                counted.append(ov)
        t += 1
    acc = float(np.mean(counted)) if counted else None
    return ResetResult(resets, acc, len(counted), failures)


@dataclass
class EvalReport:
    success_auc: Optional[float] = None
    precision_at_20px: Optional[float] = None
    f_max: Optional[float] = None
    pr_at_fmax: Optional[float] = None
    re_at_fmax: Optional[float] = None
    max_gm: Optional[float] = None
    tpr: Optional[float] = None
    tnr: Optional[float] = None
    resets: Optional[int] = None
    reset_accuracy: Optional[float] = None
    identity_accuracy: Optional[float] = None
    n_frames: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(preds: Sequence[PredictionRecord], truth: Truth, frame_w: Optional[int] = None,
             frame_h: Optional[int] = None, truth_ids: Optional[Sequence[Optional[int]]] = None,
             reset: Optional[ResetResult] = None) -> EvalReport:
    """Every metric that is defined for the given inputs; undefined ones stay None with a note."""
    _check_aligned(preds, truth)
    rep = EvalReport(n_frames=len(preds))
    try:
        rep.success_auc = success_auc(preds, truth)
    except ValueError as e:
        rep.notes.append(f"success_auc: {e}")
    if frame_w and frame_h:
        try:
            rep.precision_at_20px = precision_curve(preds, truth, frame_w, frame_h)
        except ValueError as e:
            rep.notes.append(f"precision: {e}")
    else:
        rep.notes.append("precision: frame dimensions unknown")
    try:
        rep.f_max, rep.pr_at_fmax, rep.re_at_fmax = longterm_f(preds, truth)
    except ValueError as e:
        rep.notes.append(f"longterm_f: {e}")
    try:
        rep.max_gm, rep.tpr, rep.tnr = max_gm(preds, truth)
    except ValueError as e:
        rep.notes.append(f"max_gm: {e}")
    if truth_ids is not None:
        rep.identity_accuracy = identity_accuracy([p.object_id for p in preds], truth_ids)
    if reset is not None:
        rep.resets, rep.reset_accuracy = reset.resets, reset.accuracy
    return rep
