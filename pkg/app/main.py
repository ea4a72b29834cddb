"""
MultiExit Evacuation Engine
Command-line entry point.

    evac train    --config cfg.json --out runs/a [--resume] [--seed N]
    evac eval     --checkpoint runs/a/checkpoints/final.ckpt --scenario width_ratio
                  --params width_ratio=1:1.5,pedestrian_count=12 --seeds 10 --out runs/e
    evac baseline --kind nearest_exit --scenario delayed_open --seeds 10 --out runs/b
    evac render   --run runs/e [--interval N] [--png]
    evac compare  [--checkpoint ...] --out runs/c

--out defaults to EVAC_OUTPUT_DIR/<command>.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import torch

from app import __version__
from app.core.config import settings
from app.core.exceptions import ConfigError, EvacSimException
from app.core.logging import get_logger, setup_logging
from app.schemas.config import ExperimentConfig, SimulationParams
from app.schemas.report import PolicyHandle, PolicyKind
from app.schemas.scenario import ScenarioFamily, ScenarioParams
from app.services.environment import build_scenario
from app.workers.evaluation import compare, render_run, run_evaluation
from app.workers.training import train

logger = get_logger(__name__)


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scenario",
        required=True,
        choices=[f.value for f in ScenarioFamily],
        help="scenario family",
    )
    parser.add_argument("--params", default="", help="k=v,... scenario parameters")
    parser.add_argument("--seeds", type=int, default=10, help="number of evaluation seeds")
    parser.add_argument("--horizon", type=int, default=200, help="episode horizon T")
    parser.add_argument("--out", default=None, help="output run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evac", description="Multi-exit evacuation engine")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="overrides EVAC_LOG_LEVEL")
    parser.add_argument(
        "--seed", type=int, default=None, help="64-bit seed for all randomness (EVAC_DEFAULT_SEED)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train_cmd = commands.add_parser("train", help="train the shared policy network")
    train_cmd.add_argument("--config", help="experiment JSON file (defaults when omitted)")
    train_cmd.add_argument("--out", default=None, help="output run directory")
    train_cmd.add_argument("--resume", action="store_true", help="continue from latest.ckpt")

    eval_cmd = commands.add_parser("eval", help="evaluate a trained checkpoint")
    eval_cmd.add_argument("--checkpoint", required=True)
    _add_scenario_args(eval_cmd)

    baseline_cmd = commands.add_parser("baseline", help="evaluate a stand-in baseline policy")
    baseline_cmd.add_argument(
        "--kind",
        required=True,
        choices=[k.value for k in PolicyKind if k is not PolicyKind.RAINBOW],
    )
    _add_scenario_args(baseline_cmd)

    render_cmd = commands.add_parser("render", help="dump frames of an evaluation run")
    render_cmd.add_argument("--run", required=True, help="evaluation run directory")
    render_cmd.add_argument(
        "--interval", type=int, default=None,
        help="frames between dumps (default: 15 for delayed_open, 10 otherwise)",
    )
    render_cmd.add_argument("--png", action="store_true", help="also write PNG files")

    compare_cmd = commands.add_parser("compare", help="all policies over all scenario variants")
    compare_cmd.add_argument("--checkpoint", default=None)
    compare_cmd.add_argument("--seeds", type=int, default=10)
    compare_cmd.add_argument("--counts", default="12,24,36", help="pedestrian counts")
    compare_cmd.add_argument("--params", default="", help="k=v,... shared scenario parameters")
    compare_cmd.add_argument("--horizon", type=int, default=200)
    compare_cmd.add_argument("--out", default=None)
    return parser


def _evaluate(args: argparse.Namespace, handle: PolicyHandle) -> None:
    scenario = build_scenario(args.scenario, ScenarioParams.from_cli(args.params), seed=args.seed)
    run_evaluation(
        handle,
        scenario,
        args.seeds,
        args.out,
        horizon=args.horizon,
        params=SimulationParams(),
        base_seed=args.seed,
    )


def _parse_counts(text: str) -> List[int]:
    try:
        return [int(c) for c in text.split(",") if c.strip()]
    except ValueError:
        raise ConfigError(f"Pedestrian counts '{text}' are not integers")


def run(args: argparse.Namespace) -> None:
    if args.command == "train":
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            config.train.seed = args.seed
        train(config, args.out, resume=args.resume)
    elif args.command == "eval":
        _evaluate(args, PolicyHandle(kind=PolicyKind.RAINBOW, checkpoint=args.checkpoint))
    elif args.command == "baseline":
        _evaluate(args, PolicyHandle(kind=PolicyKind(args.kind)))
    elif args.command == "render":
        render_run(args.run, interval=args.interval, png=args.png)
    elif args.command == "compare":
        compare(
            args.checkpoint,
            args.out,
            n_seeds=args.seeds,
            pedestrian_counts=_parse_counts(args.counts),
            horizon=args.horizon,
            base=ScenarioParams.from_cli(args.params),
            base_seed=args.seed,
        )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.seed is None and args.command != "train":
        args.seed = settings.default_seed
    if getattr(args, "out", "") is None:
        args.out = str(Path(settings.output_dir) / args.command)
    if settings.num_threads:
        torch.set_num_threads(settings.num_threads)

    try:
        run(args)
    except EvacSimException as exc:
        logger.error(
            "Application exception",
            code=exc.code,
            message=exc.message,
            details=exc.details,
        )
        return exc.exit_code
    except Exception as exc:
        logger.error("Unhandled exception", error=str(exc), exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
