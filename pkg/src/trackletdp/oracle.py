"""Re-detection score oracles.

An oracle scores candidate detections against a reference detection.  Two
backends are provided:

* :class:`CosineEmbeddingOracle` -- cosine similarity of embedding vectors.
* :class:`SyntheticIdentityOracle` -- a base score looked up from the pair of
  ground-truth object ids plus deterministic Gaussian noise.  Only usable on
  simulated streams, where every detection carries an ``object_id``.

Scores are raw reals; every threshold that consumes them is expressed in the
same units.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .geometry import Detection, Frame, linf_matrix

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.int64).view(np.uint64)


def keyed_normals(seed: int, det_ids, ref_ids) -> np.ndarray:
    """Standard normal draws keyed by ``(seed, det_id, ref_id)``.

    Counter-based: the value for a given key never depends on which other keys
    are drawn or in what order.  ``det_ids`` and ``ref_ids`` broadcast.
    """
    d, r = np.broadcast_arrays(_as_u64(det_ids), _as_u64(ref_ids))
    key = _splitmix(_splitmix(_splitmix(_as_u64(np.full(d.shape, seed))) ^ d) ^ r)
    u1 = (_splitmix(key ^ np.uint64(1)) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    u2 = (_splitmix(key ^ np.uint64(2)) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def _unit_rows(emb: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(norms > 0, emb / norms, 0.0)
    return out


class CosineEmbeddingOracle:
    kind = "cosine"

    def dense(self, cur: Frame, prev: Frame, seed: int = 0) -> np.ndarray:
        """Scores of every ``cur`` row with every ``prev`` row as reference."""
        if len(cur) and len(prev) and cur.dim != prev.dim:
            raise ValueError(f"embedding dimension mismatch: {cur.dim} vs {prev.dim}")
        if not len(cur) or not len(prev):
            return np.zeros((len(cur), len(prev)))
        return np.clip(_unit_rows(cur.embeddings) @ _unit_rows(prev.embeddings).T, -1.0, 1.0)

    def against(self, cur: Frame, ref: Detection, seed: int = 0) -> np.ndarray:
        if len(cur) and cur.dim != ref.embedding.shape[0]:
            raise ValueError(
                f"embedding dimension mismatch: {cur.dim} vs reference {ref.embedding.shape[0]}"
            )
        return self.dense(cur, Frame.from_detections(ref.t, [ref]), seed)[:, 0] if len(cur) else np.zeros(0)

    def to_config(self) -> dict:
        return {"kind": self.kind}


@dataclass
class SyntheticIdentityOracle:
    """Identity-keyed scores: ``base(id, ref_id) + N(0, noise_sd)``.

    ``confusability`` maps unordered id pairs to base scores; pairs not listed
    fall back to ``cross_id_mean``.
    """

    same_id_mean: float = 0.9
    noise_sd: float = 0.0
    cross_id_mean: float = 0.0
    confusability: Mapping[frozenset, float] = field(default_factory=dict)

    kind = "synthetic_identity"

    def __post_init__(self) -> None:
        if not np.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise ValueError("noise_sd must be finite and >= 0")
        self.confusability = {frozenset(k): float(v) for k, v in dict(self.confusability).items()}

    @classmethod
    def from_pairs(cls, same_id_mean: float, noise_sd: float, cross_id_mean: float = 0.0,
                   pairs: Sequence[Sequence[float]] = ()) -> "SyntheticIdentityOracle":
        conf = {}
        for a, b, s in pairs:
            key = frozenset((int(a), int(b)))
            if key in conf and conf[key] != float(s):
                raise ValueError(f"asymmetric confusability for pair {(int(a), int(b))}")
            conf[key] = float(s)
        return cls(same_id_mean, noise_sd, cross_id_mean, conf)

    def _base(self, a: int, b: int) -> float:
        if a == b:
            return self.same_id_mean
        return self.confusability.get(frozenset((a, b)), self.cross_id_mean)

    def _ids(self, frame: Frame) -> list[int]:
        if any(o is None for o in frame.object_ids):
            raise ValueError(f"frame {frame.t}: synthetic identity oracle needs object_id on every detection")
        return [int(o) for o in frame.object_ids]

    def dense(self, cur: Frame, prev: Frame, seed: int = 0) -> np.ndarray:
        ci, pi = self._ids(cur), self._ids(prev)
        base = np.array([[self._base(a, b) for b in pi] for a in ci], dtype=np.float64).reshape(len(ci), len(pi))
        if self.noise_sd == 0.0 or base.size == 0:
            return base
        noise = keyed_normals(seed, cur.det_ids[:, None], prev.det_ids[None, :])
        return base + self.noise_sd * noise

    def against(self, cur: Frame, ref: Detection, seed: int = 0) -> np.ndarray:
        if ref.object_id is None:
            raise ValueError("synthetic identity oracle needs object_id on the reference")
        if not len(cur):
            return np.zeros(0)
        return self.dense(cur, Frame.from_detections(ref.t, [ref]), seed)[:, 0]

    def to_config(self) -> dict:
        pairs = sorted([*sorted(k), v] for k, v in self.confusability.items() if len(k) == 2)
        return {"kind": self.kind, "same_id_mean": self.same_id_mean, "noise_sd": self.noise_sd,
                "cross_id_mean": self.cross_id_mean, "confusability": pairs}


Oracle = Union[CosineEmbeddingOracle, SyntheticIdentityOracle]


def _as_frame(dets: Union[Frame, Sequence[Detection]], dim: Optional[int] = None) -> Frame:
    if isinstance(dets, Frame):
        return dets
    t = dets[0].t if dets else 0
    if dets and any(d.t != t for d in dets):
        # scoring does not care about frame membership; relabel for the columnar view
        dets = [Detection(t, d.box, d.ff_score, d.embedding, d.det_id, d.object_id) for d in dets]
    return Frame.from_detections(t, list(dets), dim)


def score_against_reference(dets: Sequence[Detection], ref: Detection, seed: int = 0,
                            oracle: Optional[Oracle] = None) -> list[float]:
    """One score per detection, with ``ref`` as the re-detection reference."""
    oracle = oracle or CosineEmbeddingOracle()
    return [float(s) for s in oracle.against(_as_frame(dets), ref, seed)]


def pairwise_gated_scores(dets_t: Union[Frame, Sequence[Detection]],
                          dets_prev: Union[Frame, Sequence[Detection]],
                          gamma: float, seed: int = 0,
                          oracle: Optional[Oracle] = None) -> np.ndarray:
    """Score matrix ``[i, j]`` of ``dets_t[i]`` against reference ``dets_prev[j]``.

    Pairs whose L-infinity box distance exceeds ``gamma`` get ``-inf``; a
    distance exactly equal to ``gamma`` is kept.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    oracle = oracle or CosineEmbeddingOracle()
    cur, prev = _as_frame(dets_t), _as_frame(dets_prev)
    if not len(cur) or not len(prev):
        return np.zeros((len(cur), len(prev)))
    scores = oracle.dense(cur, prev, seed)
    far = linf_matrix(cur.boxes, prev.boxes) > gamma
    return np.where(far, -np.inf, scores)
