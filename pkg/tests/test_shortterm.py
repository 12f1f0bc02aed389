import numpy as np
import pytest

from oracles import dense_rescore
from trackletdp.engine import run_tracker
from trackletdp.geometry import BBox, Detection, Frame, iou, spatial_distance
from trackletdp.metrics import identity_accuracy
from trackletdp.shortterm import (DEFAULT_SHIFTS, ShortTermParams, ShortTermTracker, proposal_candidates,
                                  shifted_proposals, short_term_step)
from trackletdp.simulator import generate, preset


def test_default_grid_has_49_proposals():
    props = shifted_proposals(BBox(0.5, 0.5, 0.1, 0.1))
    assert len(props) == 49 == len(DEFAULT_SHIFTS) ** 2
    assert BBox(0.5, 0.5, 0.1, 0.1) in props


def test_zero_grid_is_identity():
    b = BBox(0.3, 0.6, 0.2, 0.1)
    assert shifted_proposals(b, [0.0]) == [b]


def test_edge_proposals_stay_valid():
    for b in shifted_proposals(BBox(0.98, 0.01, 0.3, 0.3)):
        assert all(0.0 <= v <= 1.0 for v in b.as_tuple())


def test_grid_must_contain_zero():
    with pytest.raises(ValueError):
        ShortTermParams(shift_grid=(0.5, 1.0))


def test_identical_candidate_is_chosen():
    e = np.array([1.0, 0.0, 0.0])
    prev = Detection(0, BBox(0.5, 0.5, 0.1, 0.1), 1.0, e, 0)
    c = Detection(1, prev.box, 1.0, e, 1)
    other = Detection(1, BBox(0.55, 0.5, 0.1, 0.1), 0.2, np.array([0.0, 1.0, 0.0]), 2)
    assert short_term_step(prev, [other, c], ShortTermParams(), None, prev) is c


def test_far_candidate_is_filtered():
    e = np.array([1.0, 0.0])
    prev = Detection(0, BBox(0.2, 0.5, 0.1, 0.1), 1.0, e, 0)
    far = Detection(1, BBox(0.9, 0.5, 0.1, 0.1), 1.0, e, 1)
    assert short_term_step(prev, [far], ShortTermParams(xi=0.5), None, prev) is prev
    assert short_term_step(prev, [], ShortTermParams(), None, prev) is prev


def test_random_steps_match_dense_rescoring(rng):
    params = ShortTermParams(delta=-1.0, xi=0.3)
    for _ in range(200):
        prev = Detection(0, BBox(*rng.uniform(0.2, 0.8, 2), *rng.uniform(0.05, 0.2, 2)), 0.5,
                         rng.normal(size=4), 0)
        ff = Detection(0, prev.box, 1.0, rng.normal(size=4), 1000)
        n = int(rng.integers(0, 8))
        cands = [Detection(1, BBox(*rng.random(2), *rng.uniform(0.05, 0.2, 2)), 0.0, rng.normal(size=4), i + 1)
                 for i in range(n)]
        got = short_term_step(prev, cands, params, None, ff)
        assert got is dense_rescore(prev, cands, ff, params)
        assert got is prev or spatial_distance(got.box, prev.box) <= params.xi


def test_proposals_inherit_overlapping_detection(rng):
    e = rng.normal(size=3)
    f = Frame.from_detections(5, [Detection(5, BBox(0.55, 0.5, 0.1, 0.1), 0.8, e, 40, 2)])
    cands = proposal_candidates(f, BBox(0.5, 0.5, 0.1, 0.1), ShortTermParams())
    assert cands and all(c.det_id < 0 for c in cands)
    for c in cands:
        assert iou(c.box, f.detection(0).box) >= 0.5
        assert c.object_id == 2 and np.array_equal(c.embedding, e)


def test_tracker_follows_single_target():
    scn = generate(preset("clutter", seed=1))
    preds = run_tracker(ShortTermTracker(), scn.template, scn.frames)
    assert identity_accuracy([p.object_id for p in preds], scn.truth_ids) > 0.9


def test_tracker_needs_init():
    with pytest.raises(RuntimeError):
        ShortTermTracker().step(Frame.empty(0, 2))
