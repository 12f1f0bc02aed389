"""Engine configuration (JSON) and tracker construction.

Unknown keys are rejected; error messages name the offending key path, e.g.
``builder.alpah: Extra inputs are not permitted``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .dp import DpParams
from .engine import ArgmaxTracker, TdpaTracker
from .oracle import CosineEmbeddingOracle, SyntheticIdentityOracle
from .shortterm import DEFAULT_SHIFTS, ShortTermParams, ShortTermTracker
from .tracklets import BuilderParams

MODES = ("tdpa", "argmax", "short_term")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BuilderConfig(_Strict):
    alpha: float = 0.5
    beta: float = Field(0.1, ge=0)
    gamma: float = Field(0.3, gt=0)


class DpConfig(_Strict):
    w_ff: float = Field(0.5, ge=0, le=1)
    w_loc: float = 1.0
    max_gap: int = Field(1500, ge=1)


class ShortTermConfig(_Strict):
    delta: float = -1.0
    xi: float = Field(0.5, gt=0)
    shift_grid: list[float] = list(DEFAULT_SHIFTS)
    proposal_iou: float = Field(0.5, gt=0, le=1)


class OracleConfig(_Strict):
    kind: Literal["cosine", "synthetic_identity"] = "cosine"
    # synthetic_identity only
    same_id_mean: float = 0.9
    cross_id_mean: float = 0.0
    noise_sd: float = Field(0.0, ge=0)
    confusability: list[tuple[int, int, float]] = []

    def build(self):
        if self.kind == "cosine":
            return CosineEmbeddingOracle()
        return SyntheticIdentityOracle.from_pairs(self.same_id_mean, self.noise_sd, self.cross_id_mean,
                                                  self.confusability)


class EngineConfig(_Strict):
    mode: Literal["tdpa", "argmax", "short_term"] = "tdpa"
    seed: int = 0
    builder: BuilderConfig = BuilderConfig()
    dp: DpConfig = DpConfig()
    short_term: ShortTermConfig = ShortTermConfig()
    oracle: OracleConfig = OracleConfig()

    def with_overrides(self, mode: Optional[str] = None, seed: Optional[int] = None) -> "EngineConfig":
        upd = {}
        if mode is not None:
            upd["mode"] = mode
        if seed is not None:
            upd["seed"] = seed
        return parse_config({**self.model_dump(), **upd}) if upd else self

    def make_tracker(self):
        oracle = self.oracle.build()
        if self.mode == "argmax":
            return ArgmaxTracker()
        if self.mode == "short_term":
            st = self.short_term
            return ShortTermTracker(ShortTermParams(st.delta, st.xi, tuple(st.shift_grid), st.proposal_iou),
                                    oracle, self.seed)
        b, d = self.builder, self.dp
        return TdpaTracker(BuilderParams(b.alpha, b.beta, b.gamma), DpParams(d.w_ff, d.w_loc, d.max_gap),
                           oracle, self.seed)


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data) -> EngineConfig:
    try:
        return EngineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format(e)) from None


def load_config(path: Union[str, Path, None]) -> EngineConfig:
    if path is None:
        return EngineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return parse_config(data)


def defaults() -> dict:
    """Every engine parameter at its default value."""
    return EngineConfig().model_dump(mode="json")
