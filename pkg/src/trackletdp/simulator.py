"""Deterministic synthetic detection streams with ground-truth identities.

Objects move along piecewise-linear waypoint paths and are visible during
listed frame intervals.  Every visible object yields one detection per frame
(unless the detector misses it) whose embedding is the object's prototype
plus Gaussian noise.  Clutter detections get fresh negative object ids and
random prototypes.  A detection's ``ff_score`` is the cosine similarity of its
embedding with the target's frame-0 detection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .geometry import BBox, Detection, Frame


class DetectorNoise(BaseModel):
    model_config = ConfigDict(extra="forbid")

    miss_rate: float = Field(0.0, ge=0.0, le=1.0)
    clutter_rate: float = Field(0.0, ge=0.0)
    box_jitter_sd: float = Field(0.0, ge=0.0)


class ObjectSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    is_target: bool = False
    # (t, x, y, w, h) in normalized center form
    waypoints: list[tuple[float, float, float, float, float]]
    visibility: list[tuple[int, int]]
    embedding_prototype: list[float]
    embedding_noise_sd: float = Field(0.0, ge=0.0)

    @field_validator("waypoints")
    @classmethod
    def _sorted_waypoints(cls, v):
        if not v:
            raise ValueError("at least one waypoint is required")
        return sorted(v, key=lambda w: w[0])

    @field_validator("visibility")
    @classmethod
    def _intervals(cls, v):
        v = sorted(v)
        for a, b in v:
            if a >= b:
                raise ValueError(f"empty visibility interval [{a}, {b})")
        for (a0, b0), (a1, b1) in zip(v, v[1:]):
            if a1 < b0:
                raise ValueError(f"overlapping visibility intervals [{a0}, {b0}) and [{a1}, {b1})")
        return v


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_frames: int = Field(ge=1)
    objects: list[ObjectSpec]
    detector: DetectorNoise = DetectorNoise()
    seed: int = 0
    frame_w: int = Field(640, gt=0)
    frame_h: int = Field(480, gt=0)
    embedding_dim: int = Field(16, ge=1)

    @model_validator(mode="after")
    def _check(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        targets = [o for o in self.objects if o.is_target]
        if len(targets) != 1:
            raise ValueError(f"exactly one target object required, got {len(targets)}")
        for o in self.objects:
            if len(o.embedding_prototype) != self.embedding_dim:
                raise ValueError(f"object {o.id}: prototype has {len(o.embedding_prototype)} dims, "
                                 f"expected {self.embedding_dim}")
            for a, b in o.visibility:
                if a < 0 or b > self.n_frames:
                    raise ValueError(f"object {o.id}: interval [{a}, {b}) outside [0, {self.n_frames})")
            if o.id < 0:
                raise ValueError("negative object ids are reserved for clutter")
        tgt = targets[0]
        if not any(a <= 0 < b for a, b in tgt.visibility):
            raise ValueError("the target must be visible at frame 0")
        return self

    @property
    def target(self) -> ObjectSpec:
        return next(o for o in self.objects if o.is_target)


def trajectory(obj: ObjectSpec, n_frames: int) -> np.ndarray:
    """(n_frames, 4) interpolated boxes; held constant outside the waypoint span."""
    wp = np.array(obj.waypoints, dtype=np.float64)
    ts = np.arange(n_frames, dtype=np.float64)
    return np.stack([np.interp(ts, wp[:, 0], wp[:, k]) for k in range(1, 5)], axis=1)


def visibility_mask(obj: ObjectSpec, n_frames: int) -> np.ndarray:
    m = np.zeros(n_frames, dtype=bool)
    for a, b in obj.visibility:
        m[a:b] = True
    return m


@dataclass
class Scenario:
    frames: list[Frame]
    truth: list[Optional[BBox]]
    target_id: int
    template_det_id: int
    misses: list[tuple[int, int]] = field(default_factory=list)
    frame_w: int = 640
    frame_h: int = 480

    @property
    def template(self) -> Detection:
        f0 = self.frames[0]
        i = int(np.flatnonzero(f0.det_ids == self.template_det_id)[0])
        return f0.detection(i)

    @property
    def truth_ids(self) -> list[Optional[int]]:
        return [self.target_id if b is not None else None for b in self.truth]


def iter_frames(spec: ScenarioSpec, misses: Optional[list] = None) -> Iterator[tuple[Frame, Optional[BBox]]]:
    """Yield ``(frame, truth_box)`` one frame at a time.

    Random draws per frame are made for every object whether or not it is
    visible, so changing one object's visibility does not reshuffle the noise
    of the others.
    """
    rng = np.random.default_rng(spec.seed)
    n, dim = spec.n_frames, spec.embedding_dim
    objs = spec.objects
    paths = np.stack([trajectory(o, n) for o in objs])          # (k, n, 4)
    vis = np.stack([visibility_mask(o, n) for o in objs])       # (k, n)
    protos = np.array([o.embedding_prototype for o in objs], dtype=np.float64)
    sds = np.array([o.embedding_noise_sd for o in objs])[:, None]
    ids = np.array([o.id for o in objs], dtype=np.int64)
    ti = next(k for k, o in enumerate(objs) if o.is_target)
    det = spec.detector
    next_det, next_clutter = 0, -1
    template_unit = None

    for t in range(n):
        u = rng.random(len(objs))
        jit = rng.normal(size=(len(objs), 4)) * det.box_jitter_sd
        emb = protos + sds * rng.normal(size=(len(objs), dim))
        keep = vis[:, t] & (u >= det.miss_rate)
        if t == 0:
            keep[ti] = True
        if misses is not None:
            for k in np.flatnonzero(vis[:, t] & ~keep):
                misses.append((t, int(ids[k])))
        boxes = np.clip(paths[:, t, :] + jit, 0.0, 1.0)[keep]
        embs = emb[keep]
        oids = ids[keep]

        n_clutter = int(rng.poisson(det.clutter_rate)) if det.clutter_rate > 0 else 0
        if n_clutter:
            cb = np.column_stack([rng.uniform(0.05, 0.95, (n_clutter, 2)), rng.uniform(0.03, 0.2, (n_clutter, 2))])
            ce = rng.normal(size=(n_clutter, dim))
            cid = np.arange(next_clutter, next_clutter - n_clutter, -1, dtype=np.int64)
            next_clutter -= n_clutter
            boxes, embs, oids = np.vstack([boxes, cb]), np.vstack([embs, ce]), np.concatenate([oids, cid])

        if template_unit is None:
            tv = emb[ti]
            nrm = np.linalg.norm(tv)
            template_unit = tv / nrm if nrm > 0 else tv
        norms = np.linalg.norm(embs, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ff = np.where(norms > 0, (embs @ template_unit) / norms, 0.0)
        ff = np.clip(ff, -1.0, 1.0)

        det_ids = np.arange(next_det, next_det + len(oids), dtype=np.int64)
        next_det += len(oids)
        frame = Frame(t, boxes, ff, embs, det_ids, tuple(int(o) for o in oids))
        truth = BBox.from_seq(paths[ti, t]) if vis[ti, t] else None
        yield frame, truth


def generate(spec: ScenarioSpec) -> Scenario:
    misses: list = []
    frames, truth = [], []
    for f, tb in iter_frames(spec, misses):
        frames.append(f)
        truth.append(tb)
    tgt = spec.target.id
    f0 = frames[0]
    tmpl = int(f0.det_ids[[o == tgt for o in f0.object_ids].index(True)])
    return Scenario(frames, truth, tgt, tmpl, misses, spec.frame_w, spec.frame_h)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _similar(base: np.ndarray, cos: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector with the given cosine to unit vector ``base``."""
    r = rng.normal(size=base.shape)
    orth = _unit(r - (r @ base) * base)
    return cos * base + np.sqrt(1.0 - cos * cos) * orth


PRESETS = ("crossing_distractor", "occlusion_40", "out_of_view", "clutter")


def preset(name: str, seed: int = 0) -> ScenarioSpec:
    """Named scenario.  ``seed`` varies geometry within fixed ranges and seeds the noise.

    * ``crossing_distractor`` -- a look-alike distractor (prototype cosine 0.9)
      crosses the target's path mid-sequence; noisy embeddings.
    * ``occlusion_40`` -- the target disappears for 41 frames ([60, 101));
      a dissimilar distractor stays visible; noise-free.
    * ``out_of_view`` -- the target leaves through the right edge and comes
      back 40 frames later; moderately similar distractor.
    * ``clutter`` -- single target with clutter, misses and box jitter.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    g = np.random.default_rng([seed, PRESETS.index(name)])
    dim = 32
    p_t = _unit(g.normal(size=dim))

    if name == "crossing_distractor":
        n = 150
        y = 0.5 + g.uniform(-0.05, 0.05)
        dy = g.uniform(-0.03, 0.03)
        tc = int(g.integers(60, 90))
        x0 = g.uniform(0.1, 0.2)
        speed = (0.5 - x0) / tc
        x_end = x0 + speed * (n - 1)
        w, h = 0.08, 0.16
        objs = [
            ObjectSpec(id=1, is_target=True, waypoints=[(0, x0, y, w, h), (n - 1, x_end, y, w, h)],
                       visibility=[(0, n)], embedding_prototype=p_t.tolist(), embedding_noise_sd=0.1),
            ObjectSpec(id=2, waypoints=[(0, 1.0 - x0, y + dy, w, h), (n - 1, 1.0 - x_end, y + dy, w, h)],
                       visibility=[(0, n)], embedding_prototype=_similar(p_t, 0.9, g).tolist(),
                       embedding_noise_sd=0.1),
        ]
        return ScenarioSpec(n_frames=n, objects=objs, seed=seed, embedding_dim=dim)

    if name == "occlusion_40":
        n, gap = 160, (60, 101)
        x0, y0 = g.uniform(0.2, 0.4), g.uniform(0.3, 0.7)
        vx, vy = g.uniform(-0.002, 0.002, size=2)
        objs = [
            ObjectSpec(id=1, is_target=True,
                       waypoints=[(0, x0, y0, 0.1, 0.15), (n - 1, x0 + vx * (n - 1), y0 + vy * (n - 1), 0.1, 0.15)],
                       visibility=[(0, gap[0]), (gap[1], n)], embedding_prototype=p_t.tolist()),
            ObjectSpec(id=2, waypoints=[(0, 0.8, g.uniform(0.2, 0.8), 0.1, 0.15)],
                       visibility=[(0, n)], embedding_prototype=_similar(p_t, 0.3, g).tolist()),
        ]
        return ScenarioSpec(n_frames=n, objects=objs, seed=seed, embedding_dim=dim)

    if name == "out_of_view":
        n = 180
        y = g.uniform(0.3, 0.7)
        objs = [
            ObjectSpec(id=1, is_target=True,
                       waypoints=[(0, 0.6, y, 0.1, 0.15), (69, 0.95, y, 0.1, 0.15),
                                  (110, 0.95, y, 0.1, 0.15), (n - 1, 0.6, y, 0.1, 0.15)],
                       visibility=[(0, 70), (110, n)], embedding_prototype=p_t.tolist(),
                       embedding_noise_sd=0.03),
            ObjectSpec(id=2, waypoints=[(0, 0.2, 1.0 - y, 0.1, 0.15), (n - 1, 0.3, 1.0 - y, 0.1, 0.15)],
                       visibility=[(0, n)], embedding_prototype=_similar(p_t, 0.6, g).tolist(),
                       embedding_noise_sd=0.03),
        ]
        return ScenarioSpec(n_frames=n, objects=objs, seed=seed, embedding_dim=dim)

    n = 150
    x0, y0 = g.uniform(0.3, 0.7, size=2)
    objs = [ObjectSpec(id=1, is_target=True,
                       waypoints=[(0, x0, y0, 0.1, 0.15), (n - 1, 1.0 - x0, 1.0 - y0, 0.1, 0.15)],
                       visibility=[(0, n)], embedding_prototype=p_t.tolist(), embedding_noise_sd=0.05)]
    return ScenarioSpec(n_frames=n, objects=objs, seed=seed, embedding_dim=dim,
                        detector=DetectorNoise(miss_rate=0.05, clutter_rate=4.0, box_jitter_sd=0.005))


def random_scenario(n_objects: int, n_frames: int, embedding_dim: int, seed: int = 0,
                    miss_rate: float = 0.0, clutter_rate: float = 0.0, noise_sd: float = 0.02,
                    leg: int = 500) -> ScenarioSpec:
    """Many always-visible objects wandering between random waypoints every ``leg`` frames."""
    g = np.random.default_rng([seed, 99])
    stops = list(range(0, n_frames, leg)) + [n_frames - 1]
    objs = []
    for k in range(n_objects):
        w, h = g.uniform(0.02, 0.06, size=2)
        wps = [(t, *g.uniform(0.05, 0.95, size=2), w, h) for t in stops]
        objs.append(ObjectSpec(id=k + 1, is_target=k == 0, waypoints=wps, visibility=[(0, n_frames)],
                               embedding_prototype=_unit(g.normal(size=embedding_dim)).tolist(),
                               embedding_noise_sd=noise_sd))
    return ScenarioSpec(n_frames=n_frames, objects=objs, seed=seed, embedding_dim=embedding_dim,
                        detector=DetectorNoise(miss_rate=miss_rate, clutter_rate=clutter_rate))
