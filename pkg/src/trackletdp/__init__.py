"""Re-detection tracking by dynamic programming over tracklets.

Detections stream in frame by frame; they are chained into tracklets and an
online dynamic program picks the best sequence of tracklets from the
first-frame template, so the tracker can follow the target through
disappearances and away from look-alike distractors.
"""
__version__ = "0.1.0"

from .config import EngineConfig, load_config
from .dp import DpParams, ThetaTable, recompute_theta, select_output, update_theta
from .engine import ArgmaxTracker, TdpaTracker, run_tracker
from .geometry import BBox, Detection, Frame, iou
from .metrics import (EvalReport, PredictionRecord, evaluate, identity_accuracy, longterm_f, max_gm,
                      reset_based_eval, success_auc)
from .oracle import CosineEmbeddingOracle, SyntheticIdentityOracle
from .shortterm import ShortTermParams, ShortTermTracker, shifted_proposals
from .simulator import ScenarioSpec, generate, preset
from .tracklets import BuilderParams, TrackletStore, init_tracklets, update_tracklets

__all__ = [
    "ArgmaxTracker", "BBox", "BuilderParams", "CosineEmbeddingOracle", "Detection", "DpParams", "EngineConfig",
    "EvalReport", "Frame", "PredictionRecord", "ScenarioSpec", "ShortTermParams", "ShortTermTracker",
    "SyntheticIdentityOracle", "TdpaTracker", "ThetaTable", "TrackletStore", "evaluate", "generate",
    "identity_accuracy", "init_tracklets", "iou", "load_config", "longterm_f", "max_gm", "preset",
    "recompute_theta", "reset_based_eval", "run_tracker", "select_output", "shifted_proposals", "success_auc",
    "update_theta", "update_tracklets",
]
