"""
Command-line entry point for push-vhgp.

    python -m src.main <train|predict|grid|learning-curve|validate-kl|quasistatic|synth|histograms> [options]

Exit codes: 0 success, 1 usage or input error, 2 data error, 3 numerical failure.
Command output goes to stdout; logs go to stderr.
"""

import argparse
import json
import sys
from typing import List, Optional

from pydantic import ValidationError

from src.__version__ import __version__
from src.config.logging import get_logger
from src.config.settings import settings
from src.models.artifact import load_artifact
from src.models.schemas import OUTPUT_NAMES, ExperimentConfig, PushInput
from src.services.dataset_service import dataset_service
from src.services.experiments import (
    ExperimentService, mirror_asymmetry, write_sidecar, write_table
)
from src.utils.exceptions import InputError, PushVHGPError

logger = get_logger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _name_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Experiment configuration from a JSON file, or the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            return ExperimentConfig.model_validate_json(f.read())
    except OSError as e:
        raise InputError(f"cannot read config file {path}: {e}") from e


def _with_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    """Apply command-line flags on top of the config file."""
    data = config.model_dump()
    if getattr(args, "seed", None) is not None:
        data["optim"]["seed"] = args.seed
    if getattr(args, "dt", None) is not None:
        data["grid"]["dt"] = args.dt
    if getattr(args, "v_p", None) is not None and args.command == "grid":
        data["grid"]["v_p"] = args.v_p
    if getattr(args, "models", None) is not None:
        data["learning_curve"]["models"] = args.models
    if getattr(args, "sizes", None) is not None:
        data["learning_curve"]["sizes"] = args.sizes
    if getattr(args, "seeds", None) is not None:
        data["learning_curve"]["seeds"] = args.seeds
    if getattr(args, "max_test", None) is not None:
        data["learning_curve"]["max_test"] = args.max_test
    if getattr(args, "brackets", None) is not None:
        data["quasistatic"]["brackets"] = args.brackets
    if getattr(args, "reference_speed", None) is not None:
        data["quasistatic"]["reference_speed"] = args.reference_speed
    if args.command == "quasistatic" and getattr(args, "model", None) is not None:
        data["quasistatic"]["model"] = args.model
    if getattr(args, "mode", None) is not None:
        data["sampling"]["mode"] = args.mode
    return ExperimentConfig.model_validate(data)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="push-vhgp", description="GP and VHGP regression of planar pushing outcomes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def common(sub, seed=True):
        sub.add_argument("--config", help="experiment configuration (JSON)")
        if seed:
            sub.add_argument("--seed", type=int, help=f"random seed (default {settings.default_seed})")

    train = commands.add_parser("train", help="fit three per-output models and save an artifact")
    train.add_argument("--data", required=True, help="canonical CSV or JSON dataset")
    train.add_argument("--model", choices=["gp", "vhgp"], default="vhgp")
    train.add_argument("--out", required=True, help="artifact path (JSON)")
    common(train)

    predict = commands.add_parser("predict", help="predictive mean and std at one input")
    predict.add_argument("--artifact", required=True)
    predict.add_argument("--v-p", dest="v_p", type=float, required=True, help="pusher speed (mm/s)")
    predict.add_argument("--c", type=float, required=True, help="contact coordinate in [0, 1]")
    predict.add_argument("--beta", type=float, required=True, help="push angle (rad)")

    grid = commands.add_parser("grid", help="predictions over a (c, beta) grid")
    grid.add_argument("--artifact", required=True)
    grid.add_argument("--dt", type=float, help="window (s)")
    grid.add_argument("--v-p", dest="v_p", type=float, help="pusher speed (mm/s)")
    grid.add_argument("--out", required=True, help="output CSV")
    common(grid, seed=False)

    curve = commands.add_parser("learning-curve", help="NMSE and NLPD against training-set size")
    curve.add_argument("--data", required=True)
    curve.add_argument("--models", type=_name_list, help="comma-separated subset of analytical,gp,vhgp")
    curve.add_argument("--sizes", type=_int_list, help="comma-separated training sizes")
    curve.add_argument("--seeds", type=int, help="number of resamples")
    curve.add_argument("--max-test", dest="max_test", type=int, help="test samples per resample")
    curve.add_argument("--out", required=True, help="output CSV")
    common(curve)

    kl = commands.add_parser("validate-kl", help="KL divergence against repeated-push groups")
    kl.add_argument("--artifact", required=True)
    kl.add_argument("--data", required=True, help="dataset with repetition ids")
    kl.add_argument("--out", required=True, help="output CSV")
    common(kl, seed=False)

    qs = commands.add_parser("quasistatic", help="velocity-bracket study with time scaling")
    qs.add_argument("--data", required=True, help="dataset spanning several speeds")
    qs.add_argument("--brackets", type=_float_list, help="comma-separated maximum speeds (mm/s)")
    qs.add_argument("--reference-speed", dest="reference_speed", type=float, help="mm/s")
    qs.add_argument("--model", choices=["gp", "vhgp"])
    qs.add_argument("--out", required=True, help="output CSV")
    common(qs)

    synth = commands.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--n", type=int, help="sample count (grid mode: default one pass over the grid)")
    synth.add_argument("--dt", type=float, default=0.2, help="window (s)")
    synth.add_argument("--mode", choices=["grid", "random"])
    synth.add_argument("--format", choices=["canonical-csv", "canonical-json"])
    synth.add_argument("--out", required=True, help="dataset path")
    common(synth)

    hist = commands.add_parser("histograms", help="outcome histograms per repeated-push input")
    hist.add_argument("--data", required=True, help="canonical CSV or JSON dataset")
    hist.add_argument("--bins", type=int, default=20, help="bins per output")
    hist.add_argument("--out", required=True, help="output CSV")
    common(hist, seed=False)

    return parser


def run(args, service: ExperimentService) -> None:
    config = _with_overrides(load_config(getattr(args, "config", None)), args)
    seed = config.optim.seed

    if args.command == "train":
        model_set = service.train(args.data, args.model, config, args.out)
        print("output,objective")
        for name, value in zip(OUTPUT_NAMES, model_set.objectives):
            print(f"{name},{value!r}")

    elif args.command == "predict":
        push = PushInput(v_p=args.v_p, c=args.c, beta=args.beta)
        prediction = service.predict(args.artifact, push)
        print("mean_dx_mm,mean_dy_mm,mean_dtheta_rad,std_dx_mm,std_dy_mm,std_dtheta_rad")
        stds = [v ** 0.5 for v in prediction.variance]
        print(",".join(repr(float(v)) for v in [*prediction.mean, *stds]))

    elif args.command == "grid":
        frame = service.grid(load_artifact(args.artifact), config.grid)
        write_table(frame, args.out)
        summary = {"rows": len(frame), "mirror_asymmetry": mirror_asymmetry(frame), "artifact": args.artifact}
        write_sidecar(args.out, "grid", config, seed, summary)
        print(json.dumps(summary))

    elif args.command == "learning-curve":
        frame = service.learning_curve(dataset_service.load(args.data), config)
        write_table(frame, args.out)
        summary = {"rows": len(frame), "data": args.data}
        write_sidecar(args.out, "learning-curve", config, seed, summary)
        print(json.dumps(summary))

    elif args.command == "validate-kl":
        frame, summary = service.validate_kl(load_artifact(args.artifact), dataset_service.load(args.data))
        write_table(frame, args.out)
        write_sidecar(args.out, "validate-kl", config, seed, summary)
        print(json.dumps(summary))

    elif args.command == "quasistatic":
        frame = service.quasistatic(dataset_service.load(args.data), config)
        write_table(frame, args.out)
        summary = {"rows": len(frame), "data": args.data}
        write_sidecar(args.out, "quasistatic", config, seed, summary)
        print(json.dumps(summary))

    elif args.command == "synth":
        dataset = service.synth(config, args.n, args.dt, seed)
        path = dataset_service.save(dataset, args.out, args.format)
        summary = {"samples": len(dataset), "path": str(path)}
        write_sidecar(path, "synth", config, seed, summary)
        print(json.dumps(summary))

    elif args.command == "histograms":
        frame = dataset_service.outcome_histograms(dataset_service.load(args.data), args.bins)
        write_table(frame, args.out)
        groups = int(len(frame) // (args.bins * len(OUTPUT_NAMES)))
        summary = {"rows": len(frame), "groups": groups, "bins": args.bins, "data": args.data}
        write_sidecar(args.out, "histograms", config, seed, summary)
        print(json.dumps(summary))


def main(argv: Optional[List[str]] = None, service: Optional[ExperimentService] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        run(args, service or ExperimentService())
    except ValidationError as e:
        logger.error("Invalid input", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return InputError.exit_code
    except PushVHGPError as e:
        logger.error("Command failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
