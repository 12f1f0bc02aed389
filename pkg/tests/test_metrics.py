import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackletdp.geometry import BBox, Detection, Frame, iou
from trackletdp.metrics import (PredictionRecord, center_errors, evaluate, f_curve, f_score, geometric_mean,
                                identity_accuracy, longterm_f, max_gm, precision_curve, reset_based_eval,
                                success_auc)

W, H = 640, 480
BOX = BBox(0.5, 0.5, 0.2, 0.2)
FAR = BBox(0.1, 0.1, 0.05, 0.05)


def rec(t, box, conf=1.0, present=True, oid=None):
    return PredictionRecord(t, box, conf, present, None, oid)


def random_case(rng, n=50, p_absent=0.3):
    truth, preds = [], []
    for t in range(n):
        tb = None if rng.random() < p_absent else BBox(*rng.uniform(0.3, 0.7, 2), *rng.uniform(0.1, 0.3, 2))
        truth.append(tb)
        ref = tb or BOX
        pb = BBox(ref.x + rng.normal(0, 0.05), ref.y + rng.normal(0, 0.05), ref.w, ref.h)
        preds.append(rec(t, pb, float(np.round(rng.random(), 2)), bool(rng.random() < 0.8)))
    if all(tb is None for tb in truth):
        truth[0] = BOX
    return preds, truth


def sweep_f(preds, truth):
    """Every distinct confidence as a threshold, highest first; strict improvement only."""
    n_pos = sum(tb is not None for tb in truth)
    best = (0.0, 0.0, 0.0)
    for tau in sorted({p.confidence for p in preds}, reverse=True):
        rep = [t for t, p in enumerate(preds) if p.present and p.confidence >= tau]
        if not rep:
            continue
        ious = [iou(preds[t].box, truth[t]) if truth[t] is not None else 0.0 for t in rep]
        pr = sum(ious) / len(rep)
        re = sum(ious) / n_pos
        f = 2 * pr * re / (pr + re) if pr + re > 0 else 0.0
        if f > best[0]:
            best = (f, pr, re)
    return best


def sweep_gm(preds, truth):
    pos = [t for t, tb in enumerate(truth) if tb is not None]
    neg = [t for t, tb in enumerate(truth) if tb is None]
    best = None
    for tau in [math.inf] + sorted({p.confidence for p in preds}, reverse=True):
        rep = {t for t, p in enumerate(preds) if p.present and p.confidence >= tau}
        tpr = sum(1 for t in pos if t in rep and iou(preds[t].box, truth[t]) > 0.5) / len(pos)
        tnr = sum(1 for t in neg if t not in rep) / len(neg)
        gm = math.sqrt(tpr * tnr)
        if best is None or gm > best[0]:
            best = (gm, tpr, tnr)
    return best


def test_success_auc_examples():
    truth = [BOX] * 10
    assert success_auc([rec(t, BOX) for t in range(10)], truth) >= 0.99
    assert success_auc([rec(t, FAR) for t in range(10)], truth) <= 0.01
    with pytest.raises(ValueError):
        success_auc([rec(0, BOX)], truth)


def test_success_auc_tracks_mean_iou(rng):
    for _ in range(20):
        preds, truth = random_case(rng, 100, p_absent=0.0)
        mean_iou = np.mean([iou(p.box, tb) for p, tb in zip(preds, truth)])
        assert abs(success_auc(preds, truth) - mean_iou) <= 0.01


def test_precision_examples():
    truth = [BOX] * 4
    assert precision_curve([rec(t, BOX) for t in range(4)], truth, W, H) == 1.0
    shifted = BBox(BOX.x + 25 / W, BOX.y, BOX.w, BOX.h)
    assert precision_curve([rec(t, shifted) for t in range(4)], truth, W, H) == 0.0


def test_precision_counts_offsets():
    offsets = [0, 5, 19.5, 20, 20.5, 30, 100, 12]
    truth = [BOX] * len(offsets)
    preds = [rec(t, BBox(BOX.x, BOX.y + dy / H, BOX.w, BOX.h)) for t, dy in enumerate(offsets)]
    err = center_errors(preds, truth, W, H)
    assert np.allclose(err, offsets)
    want = sum(1 for e in err if e <= 20) / len(offsets)
    assert precision_curve(preds, truth, W, H) == want


def test_f_formula():
    assert f_score(0.5, 0.5) == 0.5
    assert f_score(0.0, 0.0) == 0.0


def test_perfect_longterm_tracker():
    truth = [BOX, BOX, None, None, BOX]
    preds = [rec(t, BOX, 0.9, tb is not None) if tb is not None else rec(t, BOX, 0.0, False)
             for t, tb in enumerate(truth)]
    f, pr, re = longterm_f(preds, truth)
    assert (f, pr, re) == (1.0, 1.0, 1.0)
    assert max_gm(preds, truth)[0] == 1.0


def test_longterm_f_needs_present_frames():
    with pytest.raises(ValueError):
        longterm_f([rec(0, BOX)], [None])


def test_max_gm_needs_absent_frames():
    with pytest.raises(ValueError, match="absent"):
        max_gm([rec(0, BOX)], [BOX])


def test_max_gm_reproduces_reported_rates():
    # 701 of 1000 present frames found, 745 of 1000 absent frames left unreported
    truth = [BOX] * 1000 + [None] * 1000
    preds = [rec(t, BOX, 0.9, t < 701) for t in range(1000)]
    preds += [rec(1000 + t, BOX, 0.9, t >= 745) for t in range(1000)]
    gm, tpr, tnr = max_gm(preds, truth)
    assert (tpr, tnr) == (0.701, 0.745)
    assert abs(gm - 0.7226) <= 0.0005
    assert geometric_mean(0.701, 0.745) == pytest.approx(gm)


def test_sweeps_match_brute_force(rng):
    for _ in range(40):
        preds, truth = random_case(rng)
        got = longterm_f(preds, truth)
        assert got == pytest.approx(sweep_f(preds, truth), abs=1e-12)
        if any(tb is None for tb in truth):
            assert max_gm(preds, truth) == pytest.approx(sweep_gm(preds, truth), abs=1e-12)
        fs = [f for *_, f in f_curve(preds, truth)]
        assert got[0] >= max(fs, default=0.0) - 1e-15
        assert all(0.0 <= v <= 1.0 for row in f_curve(preds, truth) for v in row[1:])


@given(st.integers(0, 2**32 - 1))
def test_sweeps_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    preds, truth = random_case(rng, 30)
    warped = [PredictionRecord(p.t, p.box, math.exp(3 * p.confidence) - 7, p.present) for p in preds]
    assert longterm_f(warped, truth) == longterm_f(preds, truth)
    if any(tb is None for tb in truth):
        assert max_gm(warped, truth) == max_gm(preds, truth)


def test_identity_accuracy_examples():
    assert identity_accuracy([1, 1, 1], [1, 1, 1]) == 1.0
    assert identity_accuracy([1, 2, 1, 2, None], [1, 1, 1, 1, None]) == 0.5
    assert identity_accuracy([None], [None]) == 0.0


class ScriptedTracker:
    """Follows the truth except on scripted frames, where it reports a disjoint box."""

    def __init__(self, truth, fail_at=(), fixed=None):
        self.truth, self.fail_at, self.fixed = truth, set(fail_at), fixed
        self.inits = []

    def reinitialize(self, template: Detection):
        self.inits.append(template.t)
        return rec(template.t, template.box)

    def step(self, frame: Frame):
        if self.fixed is not None:
            return rec(frame.t, self.fixed)
        if frame.t in self.fail_at:
            return rec(frame.t, FAR)
        return rec(frame.t, self.truth[frame.t] or FAR)


def frames_for(truth):
    return [Frame.from_detections(t, [Detection(t, tb or FAR, 1.0, np.ones(2), t)]) for t, tb in enumerate(truth)]


def test_reset_eval_perfect_tracker():
    truth = [BOX] * 40
    res = reset_based_eval(ScriptedTracker(truth), frames_for(truth), truth)
    assert res.resets == 0 and res.accuracy >= 0.99
    assert res.counted_frames == 40 - 11


def test_reset_eval_scripted_failure():
    truth = [BOX] * 40
    trk = ScriptedTracker(truth, fail_at={17})
    res = reset_based_eval(trk, frames_for(truth), truth)
    assert res.resets == 1 and res.failures == [17]
    assert trk.inits == [0, 22]


def test_reset_eval_fixed_disjoint_box_fails_every_frame_after_init():
    truth = [BOX] * 30
    trk = ScriptedTracker(truth, fixed=FAR)
    res = reset_based_eval(trk, frames_for(truth), truth)
    assert res.failures == [1, 7, 13, 19, 25]
    assert res.accuracy is None


def test_evaluate_reports_undefined_metrics_as_notes():
    truth = [BOX] * 5
    rep = evaluate([rec(t, BOX) for t in range(5)], truth, W, H, truth_ids=[1] * 5)
    assert rep.max_gm is None and any("max_gm" in n for n in rep.notes)
    assert rep.success_auc >= 0.99 and rep.precision_at_20px == 1.0
