import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trackletdp.geometry import Frame

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_frames(rng: np.random.Generator, n_frames: int, max_dets: int, dim: int = 3,
                  min_dets: int = 0, spread: float = 0.15) -> list[Frame]:
    """Small random detection frames; boxes wander around a few anchors so the
    gate lets through a mix of matches and near-misses."""
    anchors = rng.uniform(0.3, 0.7, size=(3, 2))
    frames, next_id = [], 0
    for t in range(n_frames):
        n = int(rng.integers(max(1, min_dets) if t == 0 else min_dets, max_dets + 1))
        a = anchors[rng.integers(0, len(anchors), size=n)]
        xy = a + rng.normal(0, spread, size=(n, 2))
        wh = rng.uniform(0.05, 0.2, size=(n, 2))
        boxes = np.clip(np.column_stack([xy, wh]), 0, 1)
        # coarse embeddings and scores so exact ties turn up now and then
        emb = np.round(rng.normal(size=(n, dim)), 1)
        ff = np.round(rng.uniform(-0.2, 1.0, size=n), 2)
        ids = np.arange(next_id, next_id + n, dtype=np.int64)
        next_id += n
        frames.append(Frame(t, boxes, ff, emb, ids, tuple([None] * n)))
    return frames


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def object_frames(rng: np.random.Generator, n_frames: int, n_objects: int, dim: int = 4,
                  p_visible: float = 0.75, noise: float = 0.3) -> list[Frame]:
    """Frames of a few persistent objects that blink in and out; object 0 is
    always visible at frame 0 and comes first there."""
    protos = rng.normal(size=(n_objects, dim))
    pos = rng.uniform(0.2, 0.8, size=(n_objects, 2))
    size = rng.uniform(0.05, 0.15, size=(n_objects, 2))
    frames, next_id = [], 0
    for t in range(n_frames):
        pos = np.clip(pos + rng.normal(0, 0.03, size=pos.shape), 0.05, 0.95)
        vis = rng.random(n_objects) < p_visible
        if t == 0:
            vis[0] = True
        k = np.flatnonzero(vis)
        n = len(k)
        boxes = np.column_stack([pos[k], size[k]])
        emb = protos[k] + noise * rng.normal(size=(n, dim))
        ff = np.round(emb @ protos[0] / (np.linalg.norm(emb, axis=1) * np.linalg.norm(protos[0]) + 1e-12), 3)
        ids = np.arange(next_id, next_id + n, dtype=np.int64)
        next_id += n
        frames.append(Frame(t, boxes, ff, emb, ids, tuple(int(i) for i in k)))
    return frames


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
