"""Command-line entry point: ``nhqa <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .config import Settings, load_run_config
from .constants import COMMANDS, ENGINES, INITIAL_STATES, DEFAULT_G, DEFAULT_J, DEFAULT_N, DEFAULT_TAU
from .errors import NumericalError, ParameterError
from .lz import InitialState
from .model import ChainParams
from .runner import RunSpec, parse_sweep, run

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

_DEFAULTS: dict[str, Any] = {
    "J": DEFAULT_J,
    "g": DEFAULT_G,
    "delta": 0.0,
    "tau": DEFAULT_TAU,
    "N": DEFAULT_N,
    "samples": 101,
    "target": 0.999,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhqa",
        description="Non-Hermitian quantum annealing of the transverse-field Ising chain.",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="Experiment to run.")
    parser.add_argument("--J", type=float, default=None, help="Ising coupling (default 0.5).")
    parser.add_argument("--g", type=float, default=None, help="Initial transverse field (default 10).")
    parser.add_argument("--delta", type=float, default=None, help="Dissipation strength (default 0).")
    parser.add_argument("--tau", type=float, default=None, help="Annealing time (default 1000).")
    parser.add_argument("--N", type=int, default=None, help="Number of spins, even (default 1024).")
    parser.add_argument("--engine", choices=ENGINES, default=None, help="Per-mode engine.")
    parser.add_argument(
        "--initial-state", choices=INITIAL_STATES, default=None, help="Prepared mode state at t=0."
    )
    parser.add_argument(
        "--sweep",
        action="append",
        default=None,
        metavar="VAR:MIN:MAX:COUNT:SCALE",
        help="Grid axis; repeat for several axes. SCALE is lin or log.",
    )
    parser.add_argument("--modes", default=None, help="Comma-separated mode counters p.")
    parser.add_argument("--samples", type=int, default=None, help="Time samples per trajectory.")
    parser.add_argument("--target", type=float, default=None, help="Target probability for anneal-time.")
    parser.add_argument("--out", default=None, help="Output CSV path.")
    parser.add_argument("--config", default=None, help="Flat key=value run file.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (falls back to NHQA_THREADS).")
    parser.add_argument("--env-file", default=None, help="Optional .env file path.")
    parser.add_argument("--no-parquet", action="store_true", help="Skip the Parquet copy.")
    return parser


def _pick(name: str, cli_value: Any, file_values: dict[str, str], cast: type) -> Any:
    if cli_value is not None:
        return cli_value
    if name in file_values:
        try:
            return cast(file_values[name])
        except ValueError as exc:
            raise ParameterError(f"run config value {name}={file_values[name]!r}: {exc}") from exc
    return _DEFAULTS.get(name)


def _parse_modes(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ParameterError(f"modes must be comma-separated integers, got {text!r}") from exc


def spec_from_args(args: argparse.Namespace, settings: Settings) -> RunSpec:
    """Merge command-line flags over run-file values over defaults."""
    file_values = load_run_config(args.config) if args.config else {}
    command = args.command or file_values.get("command")
    if command is None:
        raise ParameterError("no command given on the command line or in the run config")

    params = ChainParams(
        J=_pick("J", args.J, file_values, float),
        g=_pick("g", args.g, file_values, float),
        delta=_pick("delta", args.delta, file_values, float),
        tau=_pick("tau", args.tau, file_values, float),
        N=_pick("N", args.N, file_values, int),
    )
    if args.sweep is not None:
        sweep_texts = list(args.sweep)
    elif "sweep" in file_values:
        sweep_texts = [part for part in file_values["sweep"].split(";") if part.strip()]
    else:
        sweep_texts = []

    initial_state = args.initial_state or file_values.get("initial_state")
    out = args.out or file_values.get("out")
    threads = _pick("threads", args.threads, file_values, int)
    if threads is None:
        threads = settings.threads
    return RunSpec(
        command=command,
        params=params,
        sweeps=tuple(parse_sweep(text) for text in sweep_texts),
        engine=args.engine or file_values.get("engine"),
        initial_state=InitialState(initial_state) if initial_state else None,
        modes=_parse_modes(args.modes or file_values.get("modes")),
        samples=_pick("samples", args.samples, file_values, int),
        target=_pick("target", args.target, file_values, float),
        output_path=Path(out) if out else None,
        threads=threads,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings.from_env(env_file=args.env_file)
        if args.no_parquet:
            settings.write_parquet = False
        spec = spec_from_args(args, settings)
    except (ParameterError, ValueError) as exc:
        print(f"nhqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = run(spec, settings)
    except ParameterError as exc:
        print(f"nhqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        LOGGER.error("numerical failure: %s", exc)
        print(f"nhqa: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"Run complete: {result.run_id}")
    print(f"CSV: {result.output_csv}")
    if result.output_parquet is not None:
        print(f"Parquet: {result.output_parquet}")
    print(f"Run metadata: {result.run_metadata}")
    if spec.command == "oracle-check" and "difference" in result.frame:
        print(f"max |dense - mode product| = {result.frame['difference'].max():.3e}")
    return EXIT_OK
