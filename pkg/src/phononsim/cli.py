"""Command-line front end.

    phononsim --scenario hom --out runs/hom --set loss.eta=0.38
    phononsim validate my_config.json

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import readout, scenarios
from ._io import write_csv, write_json
from .envelope import GridMismatchError, TruncationError, envelope_to_csv
from .lattice import NumericalInstabilityError, TopologyError
from .pulse import InfeasibleScheduleError
from .scatter import QuadratureError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

CONFIG_ERRORS = (scenarios.ConfigError, readout.ConfusionError, TopologyError, TruncationError,
                 GridMismatchError, InfeasibleScheduleError, OSError)
NUMERIC_ERRORS = (NumericalInstabilityError, QuadratureError, readout.IllConditionedError,
                  FloatingPointError, ArithmeticError)


def parse_sweep(text: str) -> tuple[str, list]:
    """'delta_MHz=-40:40:81' -> ('delta_MHz', [-40.0, 40.0, 81])."""
    name, sep, rng = text.partition("=")
    parts = rng.split(":")
    if not sep or len(parts) != 3:
        raise scenarios.ConfigError(f"--sweep expects name=start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise scenarios.ConfigError(f"--sweep {text!r}: start/stop must be numbers and count an integer") from None
    return name.strip(), [start, stop, count]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phononsim", description="Run a phonon-network scenario.")
    p.add_argument("--scenario", help="one of: " + ", ".join(scenarios.SCENARIOS))
    p.add_argument("--config", help="JSON config; fields not given keep their defaults")
    p.add_argument("--out", default="runs/out", help="output directory (default: runs/out)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a dotted config key, e.g. loss.eta=0.5 (repeatable)")
    p.add_argument("--sweep", action="append", default=[], metavar="NAME=START:STOP:COUNT",
                   help="sweep axis with inclusive endpoints, e.g. delta_MHz=-40:40:81")
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float, help="time step in ns")
    p.add_argument("--correct", dest="correct", action="store_true", default=None,
                   help="invert the readout confusion matrix")
    p.add_argument("--no-correct", dest="correct", action="store_false")
    p.add_argument("--loss-mode", choices=("leak", "jump"))
    return p


def resolve(args) -> scenarios.ScenarioConfig:
    """Defaults, then the config file, then flags, then ``--set`` entries."""
    cfg = scenarios.load_config(args.config) if args.config else scenarios.ScenarioConfig()
    if args.scenario is not None:
        cfg.scenario = args.scenario
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dt is not None:
        cfg.grid.dt = args.dt
    if args.correct is not None:
        cfg.readout.correct = args.correct
    if args.loss_mode is not None:
        cfg.loss.mode = args.loss_mode
    for s in args.sweep:
        name, spec = parse_sweep(s)
        scenarios.set_dotted(cfg, f"sweep.{name}", spec)
    for kv in args.overrides:
        key, sep, value = kv.partition("=")
        if not sep:
            raise scenarios.ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        scenarios.set_dotted(cfg, key.strip(), value)
    if cfg.scenario not in scenarios.SCENARIOS:
        raise scenarios.ConfigError(
            f"unknown scenario {cfg.scenario!r}; valid ids: {', '.join(scenarios.SCENARIOS)}")
    return scenarios.validate(cfg)


def write_outputs(result: scenarios.ScenarioResult, cfg, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if result.trace is not None:
        result.trace.to_csv(out / "trace.csv")
    elif result.probe is not None:
        envelope_to_csv(result.probe, out / "trace.csv")
    if result.sweep_rows:
        write_csv(out / "sweep.csv", result.sweep_header, result.sweep_rows)
    write_json(out / "summary.json", result.summary(cfg))


def validate_file(path) -> list[str]:
    """Every violated invariant of a config file, empty when it is fine."""
    try:
        cfg = scenarios.load_config(path)
    except scenarios.ConfigError as exc:
        return [str(exc)]
    return scenarios.violations(cfg)


def _validate_main(argv) -> int:
    p = argparse.ArgumentParser(prog="phononsim validate", description="Check a config without running it.")
    p.add_argument("config")
    args = p.parse_args(argv)
    try:
        problems = validate_file(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    if not problems:
        print("ok")
        return EXIT_OK
    for v in problems:
        print(v)
    return EXIT_CONFIG


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["validate"]:
        return _validate_main(argv[1:])
    args = _parser().parse_args(argv)
    try:
        cfg = resolve(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = scenarios.run(cfg)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(result, cfg, Path(args.out))
    print(f"{cfg.scenario}: wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
