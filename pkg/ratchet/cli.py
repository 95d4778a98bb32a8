"""
Command line entry point.

    python -m ratchet.cli profile --rho 0.5 --kmax 10 --out results/profile
    python -m ratchet.cli compare --inputs a.csv b.csv --out results/compare
    python -m ratchet.cli serve --port 8000

Exit codes: 0 success, 1 configuration error, 2 runtime or numeric error,
3 acceptance threshold missed in compare mode.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, Optional, Sequence

from pydantic import ValidationError

from ratchet.config import settings
from ratchet.exceptions import AcceptanceError, ConfigError, RatchetError
from ratchet.schemas.experiment import ExperimentConfig, ExperimentKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3

# flag dest -> ExperimentConfig field
FLAG_FIELDS = {
    "alpha": "alpha",
    "mu": "mu",
    "rho": "rho",
    "n": "N",
    "f_value": "f_value",
    "reps": "reps",
    "forward_reps": "forward_reps",
    "seed": "seed",
    "kmax": "kmax",
    "t_max": "t_max",
    "burn_in": "burn_in",
    "snapshot_step": "snapshot_step",
    "threshold": "threshold",
    "cap": "cap",
    "u": "u",
    "window": "window",
    "scales": "scales",
    "inputs": "inputs",
    "out": "out_dir",
    "format": "format",
}


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file mirroring ExperimentConfig; flags override it")
    parser.add_argument("--alpha", type=float)
    rates = parser.add_mutually_exclusive_group()
    rates.add_argument("--mu", type=float)
    rates.add_argument("--rho", type=float, help="mu/alpha")
    parser.add_argument("--n", type=int, help="Population size N")
    scaling = parser.add_mutually_exclusive_group()
    scaling.add_argument("--f-value", type=float, help="Explicit f(N)")
    scaling.add_argument("--f-family", choices=["log", "power"], help="f(N) = c ln N or c N**gamma")
    parser.add_argument("--f-c", type=float, default=1.0, help="Constant c of the f family")
    parser.add_argument("--f-gamma", type=float, help="Exponent gamma of the power family")
    parser.add_argument("--reps", type=int)
    parser.add_argument("--forward-reps", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--kmax", type=int)
    parser.add_argument("--t-max", type=float)
    parser.add_argument("--burn-in", type=float)
    parser.add_argument("--snapshot-step", type=float)
    parser.add_argument("--threshold", type=int)
    parser.add_argument("--cap", type=int)
    parser.add_argument("--u", type=float)
    parser.add_argument("--window", type=float)
    parser.add_argument("--scales", type=float, nargs="+")
    parser.add_argument("--inputs", nargs="+", help="Route files (compare only)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--format", choices=["csv", "json"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratchet",
        description="Muller's ratchet with tournament selection: numerics and exact simulation",
    )
    parser.add_argument("--log-level", default=settings.log_level)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        _add_experiment_arguments(subparsers.add_parser(kind.value, help=f"Run the {kind.value} experiment"))
    serve = subparsers.add_parser("serve", help="Start the HTTP API")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then every flag that was given; validated once at the end."""
    values: Dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {args.config}: {e}")
        if not isinstance(values, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    values["experiment"] = args.command

    for dest, field in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[field] = value
    if args.rho is not None:
        values.pop("mu", None)
    if args.mu is not None:
        values.pop("rho", None)
    if args.f_family is not None:
        family: Dict[str, Any] = {"kind": args.f_family, "c": args.f_c}
        if args.f_gamma is not None:
            family["gamma"] = args.f_gamma
        values["f_family"] = family
        values.pop("f_value", None)
    elif args.f_value is not None:
        values.pop("f_family", None)

    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(str(e))


def _serve(host: str, port: int) -> int:
    import uvicorn

    uvicorn.run("ratchet.main:app", host=host, port=port)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    from ratchet.services.runner import run_experiment

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "serve":
        return _serve(args.host, args.port)

    try:
        config = config_from_args(args)
        manifest = run_experiment(config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AcceptanceError as e:
        logger.error(f"Acceptance threshold missed: {e}")
        return EXIT_ACCEPTANCE
    except RatchetError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME

    print(json.dumps({"experiment": manifest.experiment.value, "files": [f.name for f in manifest.files]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
