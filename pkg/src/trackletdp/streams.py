"""ND-JSON stream formats.

Every file starts with a header object carrying ``format_version`` and
``kind``; one record per line follows.  Floats are written with ``repr``
precision, so a read-back is bit-exact.

detections::

    {"format_version": 1, "kind": "detections", "frame_w": 640, "frame_h": 480,
     "embedding_dim": 16, "n_frames": 150, "ff_det_id": 0}
    {"t": 0, "det_id": 0, "box": [x, y, w, h], "ff_score": 1.0, "embedding": [...], "object_id": 1}

truth::

    {"format_version": 1, "kind": "truth", "frame_w": 640, "frame_h": 480, "target_id": 1}
    {"t": 0, "box": [x, y, w, h] | null, "object_id": 1 | null}

predictions::

    {"format_version": 1, "kind": "predictions", "mode": "tdpa"}
    {"t": 0, "box": [...], "confidence": 0.93, "present": true, "det_id": 0, "object_id": 1}
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .geometry import BBox, Frame
from .metrics import PredictionRecord

FORMAT_VERSION = 1


class StreamFormatError(ValueError):
    """Malformed or inconsistent stream file."""


def _dump(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), allow_nan=False)


def _header(fh: TextIO, kind: str) -> tuple[dict, int]:
    for lineno, line in enumerate(fh, 1):
        if line.strip():
            try:
                hdr = json.loads(line)
            except json.JSONDecodeError as e:
                raise StreamFormatError(f"line {lineno}: header is not JSON ({e})") from e
            if not isinstance(hdr, dict) or "format_version" not in hdr:
                raise StreamFormatError(f"line {lineno}: missing header with format_version")
            if hdr["format_version"] != FORMAT_VERSION:
                raise StreamFormatError(f"unsupported format_version {hdr['format_version']}")
            if hdr.get("kind", kind) != kind:
                raise StreamFormatError(f"expected a {kind} file, got {hdr.get('kind')}")
            return hdr, lineno
    raise StreamFormatError("empty file")


def _records(fh: TextIO, start: int):
    for lineno, line in enumerate(fh, start + 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise StreamFormatError(f"line {lineno}: {e}") from e
        if not isinstance(rec, dict):
            raise StreamFormatError(f"line {lineno}: expected an object")
        yield lineno, rec


@dataclass
class StreamHeader:
    frame_w: Optional[int]
    frame_h: Optional[int]
    embedding_dim: int
    n_frames: Optional[int] = None
    ff_det_id: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"format_version": FORMAT_VERSION, "kind": "detections", "frame_w": self.frame_w,
             "frame_h": self.frame_h, "embedding_dim": self.embedding_dim}
        if self.n_frames is not None:
            d["n_frames"] = self.n_frames
        if self.ff_det_id is not None:
            d["ff_det_id"] = self.ff_det_id
        return d


def write_detections(fh: TextIO, frames: Iterable[Frame], header: StreamHeader) -> None:
    fh.write(_dump(header.to_dict()) + "\n")
    for f in frames:
        for i in range(len(f)):
            rec = {"t": f.t, "det_id": int(f.det_ids[i]), "box": [float(v) for v in f.boxes[i]],
                   "ff_score": float(f.ff_scores[i]), "embedding": [float(v) for v in f.embeddings[i]]}
            if f.object_ids[i] is not None:
                rec["object_id"] = int(f.object_ids[i])
            fh.write(_dump(rec) + "\n")


def read_detections(fh: TextIO) -> tuple[StreamHeader, list[Frame]]:
    """Parse a detection stream into consecutive frames (frames without lines are empty)."""
    hdr, start = _header(fh, "detections")
    try:
        header = StreamHeader(hdr.get("frame_w"), hdr.get("frame_h"), int(hdr["embedding_dim"]),
                              hdr.get("n_frames"), hdr.get("ff_det_id"))
    except (KeyError, TypeError, ValueError) as e:
        raise StreamFormatError(f"line {start}: bad header ({e})") from e
    dim = header.embedding_dim
    cols: dict[int, list] = {}
    seen: set[int] = set()
    last_t = -1
    for lineno, rec in _records(fh, start):
        try:
            t = int(rec["t"])
            det_id = int(rec["det_id"])
            box = [float(v) for v in rec["box"]]
            ff = float(rec["ff_score"])
            emb = [float(v) for v in rec["embedding"]]
            oid = rec.get("object_id")
            oid = None if oid is None else int(oid)
        except (KeyError, TypeError, ValueError) as e:
            raise StreamFormatError(f"line {lineno}: malformed detection ({e!r})") from e
        if t < last_t:
            raise StreamFormatError(f"line {lineno}: t={t} after t={last_t}; lines must be sorted by t")
        if t < 0:
            raise StreamFormatError(f"line {lineno}: negative t")
        if det_id in seen:
            raise StreamFormatError(f"line {lineno}: duplicate det_id {det_id}")
        if len(box) != 4:
            raise StreamFormatError(f"line {lineno}: box needs 4 values")
        if len(emb) != dim:
            raise StreamFormatError(f"line {lineno}: embedding has {len(emb)} values, header says {dim}")
        if not (np.isfinite(box).all() and np.isfinite(ff)):
            raise StreamFormatError(f"line {lineno}: non-finite value")
        seen.add(det_id)
        last_t = t
        cols.setdefault(t, []).append((det_id, box, ff, emb, oid))
    n = header.n_frames if header.n_frames is not None else last_t + 1
    frames = []
    for t in range(max(n, last_t + 1)):
        rows = cols.get(t)
        if not rows:
            frames.append(Frame.empty(t, dim))
            continue
        frames.append(Frame(t, np.array([r[1] for r in rows], dtype=np.float64),
                            np.array([r[2] for r in rows], dtype=np.float64),
                            np.array([r[3] for r in rows], dtype=np.float64).reshape(len(rows), dim),
                            np.array([r[0] for r in rows], dtype=np.int64),
                            tuple(r[4] for r in rows)))
    return header, frames


@dataclass
class TruthHeader:
    frame_w: Optional[int]
    frame_h: Optional[int]
    target_id: Optional[int]


def write_truth(fh: TextIO, truth: Sequence[Optional[BBox]], header: TruthHeader) -> None:
    fh.write(_dump({"format_version": FORMAT_VERSION, "kind": "truth", "frame_w": header.frame_w,
                    "frame_h": header.frame_h, "target_id": header.target_id}) + "\n")
    for t, b in enumerate(truth):
        fh.write(_dump({"t": t, "box": None if b is None else list(b.as_tuple()),
                        "object_id": None if b is None else header.target_id}) + "\n")


def read_truth(fh: TextIO) -> tuple[TruthHeader, list[Optional[BBox]], list[Optional[int]]]:
    hdr, start = _header(fh, "truth")
    header = TruthHeader(hdr.get("frame_w"), hdr.get("frame_h"), hdr.get("target_id"))
    boxes, ids = [], []
    for lineno, rec in _records(fh, start):
        try:
            t = int(rec["t"])
            box = rec["box"]
            b = None if box is None else BBox.from_seq([float(v) for v in box])
            oid = rec.get("object_id")
        except (KeyError, TypeError, ValueError) as e:
            raise StreamFormatError(f"line {lineno}: malformed truth record ({e!r})") from e
        if t != len(boxes):
            raise StreamFormatError(f"line {lineno}: expected t={len(boxes)}, got {t}")
        boxes.append(b)
        ids.append(None if oid is None else int(oid))
    return header, boxes, ids


def write_predictions(fh: TextIO, preds: Iterable[PredictionRecord], mode: str) -> None:
    fh.write(_dump({"format_version": FORMAT_VERSION, "kind": "predictions", "mode": mode}) + "\n")
    for p in preds:
        fh.write(_dump({"t": p.t, "box": list(p.box.as_tuple()), "confidence": p.confidence,
                        "present": p.present, "det_id": p.det_id, "object_id": p.object_id}) + "\n")


def read_predictions(fh: TextIO) -> tuple[dict, list[PredictionRecord]]:
    hdr, start = _header(fh, "predictions")
    out = []
    for lineno, rec in _records(fh, start):
        try:
            p = PredictionRecord(int(rec["t"]), BBox.from_seq([float(v) for v in rec["box"]]),
                                 float(rec["confidence"]), bool(rec["present"]),
                                 rec.get("det_id"), rec.get("object_id"))
        except (KeyError, TypeError, ValueError) as e:
            raise StreamFormatError(f"line {lineno}: malformed prediction ({e!r})") from e
        if p.t != len(out):
            raise StreamFormatError(f"line {lineno}: expected t={len(out)}, got {p.t}")
        out.append(p)
    return hdr, out
