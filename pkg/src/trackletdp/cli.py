"""``trackletdp`` command line.

Exit codes: 0 success, 2 invalid input (bad config, stream, scenario or
arguments), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import pydantic

from . import __version__
from .config import MODES, ConfigError, defaults, load_config
from .miner import Gallery, JitterParams, mine, write_mined
from .pipeline import StageError, report_json, run_eval, run_pipeline, run_track, write_scenario
from .simulator import PRESETS, ScenarioSpec, generate, preset
from .streams import StreamFormatError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
_INVALID = (ConfigError, StreamFormatError, pydantic.ValidationError, FileNotFoundError,
            json.JSONDecodeError, KeyError)


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _scenario(args) -> ScenarioSpec:
    if args.preset is not None:
        return preset(args.preset, args.seed if args.seed is not None else 0)
    spec = ScenarioSpec.model_validate_json(Path(args.scenario).read_text())
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    return spec


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(mode=getattr(args, "mode", None), seed=args.seed)


def cmd_simulate(args) -> None:
    scn = generate(_scenario(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scenario(scn, out / "stream.ndjson", out / "truth.ndjson")


def cmd_track(args, mode: Optional[str] = None) -> None:
    cfg = _config(args)
    if mode is not None:
        cfg = cfg.with_overrides(mode=mode)
    run_track(cfg, args.stream, args.out, args.ff_det_id)


def cmd_eval(args) -> None:
    rep = run_eval(args.pred, args.truth, args.curves)
    _write(report_json(rep), args.out)


def cmd_mine(args) -> None:
    with open(args.gallery) as fh:
        gallery = Gallery.read_ndjson(fh)
    jitter = JitterParams() if args.jitter else None
    examples = mine(gallery, args.query, k=args.k, n_videos=args.videos, n_positives=args.positives,
                    seed=args.seed if args.seed is not None else 0, metric=args.metric,
                    backend=args.backend, jitter=jitter)
    if args.out is None:
        write_mined(sys.stdout, examples)
    else:
        with open(args.out, "w") as fh:
            write_mined(fh, examples)


def cmd_pipeline(args) -> None:
    rep = run_pipeline(_scenario(args), _config(args), keep_dir=args.keep)
    _write(report_json(rep), args.out)


def cmd_defaults(args) -> None:
    _write(json.dumps(defaults(), indent=2, sort_keys=True) + "\n", args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trackletdp", description="Tracklet dynamic-programming tracker toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--preset", choices=PRESETS)
        g.add_argument("--scenario", help="ScenarioSpec JSON file")

    def engine_args(sp, with_mode=True):
        sp.add_argument("--config", help="engine config JSON (see `defaults`)")
        sp.add_argument("--seed", type=int)
        if with_mode:
            sp.add_argument("--mode", choices=MODES)

    sp = sub.add_parser("simulate", help="write a detection stream and ground truth")
    scenario_args(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    for name, mode in (("track", None), ("track-st", "short_term")):
        sp = sub.add_parser(name, help="track a detection stream" if mode is None
                            else "track a detection stream with the short-term tracker")
        sp.add_argument("stream", help="detection stream ND-JSON")
        engine_args(sp, with_mode=mode is None)
        sp.add_argument("--ff-det-id", type=int, help="template det_id at frame 0 (default: from header)")
        sp.add_argument("--out", required=True, help="prediction ND-JSON")
        sp.set_defaults(func=lambda a, m=mode: cmd_track(a, m))

    sp = sub.add_parser("eval", help="score predictions against ground truth")
    sp.add_argument("pred")
    sp.add_argument("truth")
    sp.add_argument("--curves", help="directory for per-threshold CSVs")
    sp.add_argument("--out", help="report JSON (default: stdout)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("mine", help="hard-example mining over an embedding gallery")
    sp.add_argument("--gallery", required=True, help="gallery ND-JSON")
    sp.add_argument("--query", type=int, required=True, help="entry_id of the reference box")
    sp.add_argument("--k", type=int, default=10000)
    sp.add_argument("--videos", type=int, default=100)
    sp.add_argument("--positives", type=int, default=30)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    sp.add_argument("--backend", choices=("exact", "annoy"), default="exact")
    sp.add_argument("--jitter", action="store_true", help="attach jittered corner boxes")
    sp.add_argument("--out", help="output ND-JSON (default: stdout)")
    sp.set_defaults(func=cmd_mine)

    sp = sub.add_parser("pipeline", help="simulate, track and evaluate in one go")
    scenario_args(sp)
    engine_args(sp)
    sp.add_argument("--keep", help="directory to keep intermediate files in")
    sp.add_argument("--out", help="report JSON (default: stdout)")
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("defaults", help="print the default engine config")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_defaults)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID if isinstance(e.original, _INVALID) else EXIT_RUNTIME
    except _INVALID as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
