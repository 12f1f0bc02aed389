"""File-level operations behind the command line: track a stream file, evaluate
a prediction file, and the simulate → track → eval pipeline."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .config import EngineConfig
from .engine import run_tracker
from .geometry import Detection, Frame
from .metrics import (EvalReport, PredictionRecord, evaluate, f_curve, gm_curve, precision_plot,
                      reset_based_eval, success_curve)
from .simulator import Scenario, ScenarioSpec, generate
from .streams import (StreamFormatError, StreamHeader, TruthHeader, read_detections, read_predictions,
                      read_truth, write_detections, write_predictions, write_truth)

PathLike = Union[str, Path]


class StageError(RuntimeError):
    """Failure inside one pipeline stage; the message starts with the stage name."""

    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage
        self.original = err


def find_template(frames: Sequence[Frame], ff_det_id: Optional[int]) -> Detection:
    """The first-frame detection ``ff_det_id``; the highest ff_score one when unset."""
    if not frames or len(frames[0]) == 0:
        raise StreamFormatError("frame 0 has no detections to initialize from")
    f0 = frames[0]
    if ff_det_id is None:
        return f0.detection(int(np.argmax(f0.ff_scores)))
    hit = np.flatnonzero(f0.det_ids == ff_det_id)
    if len(hit) == 0:
        raise StreamFormatError(f"det_id {ff_det_id} is not a frame-0 detection")
    return f0.detection(int(hit[0]))


def track_frames(config: EngineConfig, frames: Sequence[Frame], template: Detection) -> list[PredictionRecord]:
    return run_tracker(config.make_tracker(), template, frames)


def run_track(config: EngineConfig, stream_file: PathLike, out_file: PathLike,
              ff_det_id: Optional[int] = None) -> list[PredictionRecord]:
    """Track one detection stream file and write the prediction file."""
    with open(stream_file) as fh:
        header, frames = read_detections(fh)
    ff = ff_det_id if ff_det_id is not None else header.ff_det_id
    preds = track_frames(config, frames, find_template(frames, ff))
    with open(out_file, "w") as fh:
        write_predictions(fh, preds, config.mode)
    return preds


def write_scenario(scn: Scenario, stream_file: PathLike, truth_file: PathLike) -> None:
    dim = scn.frames[0].dim if scn.frames else 0
    with open(stream_file, "w") as fh:
        write_detections(fh, scn.frames, StreamHeader(scn.frame_w, scn.frame_h, dim, len(scn.frames),
                                                      scn.template_det_id))
    with open(truth_file, "w") as fh:
        write_truth(fh, scn.truth, TruthHeader(scn.frame_w, scn.frame_h, scn.target_id))


def write_curves(preds: Sequence[PredictionRecord], truth, frame_w, frame_h, out_dir: PathLike) -> None:
    """Per-threshold CSVs for plotting; curves that are undefined for the input are skipped."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)

    def dump(name, header, rows):
        with open(d / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([[repr(float(v)) for v in r] for r in rows])

    try:
        th, rate = success_curve(preds, truth)
        dump("success.csv", ["iou_threshold", "success_rate"], zip(th, rate))
    except ValueError:
        pass
    if frame_w and frame_h:
        try:
            px, prec = precision_plot(preds, truth, frame_w, frame_h)
            dump("precision.csv", ["pixel_threshold", "precision"], zip(px, prec))
        except ValueError:
            pass
    try:
        dump("f_curve.csv", ["confidence_threshold", "precision", "recall", "f"], f_curve(preds, truth))
    except ValueError:
        pass
    try:
        dump("gm_curve.csv", ["confidence_threshold", "tpr", "tnr", "gm"], gm_curve(preds, truth))
    except ValueError:
        pass


def run_eval(pred_file: PathLike, truth_file: PathLike, curves_dir: Optional[PathLike] = None) -> EvalReport:
    with open(pred_file) as fh:
        _, preds = read_predictions(fh)
    with open(truth_file) as fh:
        th, truth, ids = read_truth(fh)
    rep = evaluate(preds, truth, th.frame_w, th.frame_h, truth_ids=ids)
    if curves_dir is not None:
        write_curves(preds, truth, th.frame_w, th.frame_h, curves_dir)
    return rep


def run_pipeline(spec: ScenarioSpec, config: EngineConfig, keep_dir: Optional[PathLike] = None,
                 reset_eval: bool = True) -> EvalReport:
    """Simulate, track and evaluate one scenario.

    With ``keep_dir`` the stream, truth and prediction files are written there.
    Errors are re-raised as :class:`StageError` labelled with the failing stage.
    """
    try:
        scn = generate(spec)
    except Exception as e:
        raise StageError("simulate", e) from e
    try:
        preds = track_frames(config, scn.frames, scn.template)
    except Exception as e:
        raise StageError("track", e) from e
    try:
        reset = reset_based_eval(config.make_tracker(), scn.frames, scn.truth) if reset_eval else None
        rep = evaluate(preds, scn.truth, scn.frame_w, scn.frame_h, truth_ids=scn.truth_ids, reset=reset)
        if reset is not None and reset.accuracy is None:
            rep.notes.append("reset_accuracy: no frames past burn-in")
    except Exception as e:
        raise StageError("eval", e) from e
    if keep_dir is not None:
        d = Path(keep_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_scenario(scn, d / "stream.ndjson", d / "truth.ndjson")
        with open(d / "predictions.ndjson", "w") as fh:
            write_predictions(fh, preds, config.mode)
    return rep


def report_json(rep: EvalReport) -> str:
    return json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
