"""Experiment runner: one command, one parameter grid, one CSV with a JSON sidecar."""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd

from . import __version__
from .bloch import bloch_vector, evolve_bloch, evolve_schrodinger, mode_bloch_params
from .config import Settings
from .constants import COMMANDS, CSV_FLOAT_FORMAT, ENGINES, DEFAULT_G, DEFAULT_J, DEFAULT_N, DEFAULT_TAU
from .errors import ParameterError
from .logging_utils import configure_logging
from .lz import (
    InitialState,
    lz_context,
    pgs_at,
    prob_flip,
    prob_longwave_exact_asympt,
    sample_exact,
)
from .model import ChainParams, gap_abs, mode_context, mode_hamiltonian, schedule
from .observables import (
    anneal,
    anneal_time,
    anneal_time_estimate_implicit,
    hermitian_anneal_time,
    kink_density_asympt,
    kink_density_from_count,
    magnetization,
    pgs_first_mode,
    pgs_scaled,
    per_mode_pgs,
    pgs_total,
)
from .oracle import oracle_check
from .tdse import IntegratorConfig, integrate_mode, pgs_trajectory

LOGGER = logging.getLogger(__name__)

SWEEP_VARIABLES: tuple[str, ...] = ("J", "g", "delta", "tau", "N", "theta", "delta_star", "tau_star")
SCALES: tuple[str, ...] = ("lin", "log")
_CHAIN_FIELDS = ("J", "g", "delta", "tau", "N")

DEFAULT_MODES: dict[str, tuple[int, ...]] = {
    "mode-prob": (1, 16, 64, 256),
    "pgs-trajectory": (1, 2, 4, 8, 16, 32),
    "bloch-check": (1, 16, 64),
}
DEFAULT_ENGINES: dict[str, str] = {
    "mode-prob": "tdse",
    "pgs-trajectory": "lz-exact",
    "oracle-check": "tdse",
    "bloch-check": "tdse",
}
DEFAULT_INITIAL_STATES: dict[str, InitialState] = {
    "mode-prob": InitialState.DIABATIC,
    "oracle-check": InitialState.INSTANTANEOUS,
    "bloch-check": InitialState.DIABATIC,
}
FIRST_MODE_CUTOFFS: tuple[int, ...] = (1, 8, 16, 32)


@dataclass(frozen=True, slots=True)
class SweepAxis:
    variable: str
    minimum: float
    maximum: float
    count: int
    scale: str = "lin"

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            raise ParameterError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if not (math.isfinite(self.minimum) and math.isfinite(self.maximum)):
            raise ParameterError("sweep bounds must be finite")
        if self.count < 2:
            raise ParameterError(f"sweep count must be >= 2, got {self.count}")
        if self.scale not in SCALES:
            raise ParameterError(f"sweep scale must be one of {SCALES}, got {self.scale!r}")
        if self.scale == "log" and (self.minimum <= 0 or self.maximum <= 0):
            raise ParameterError("log sweeps need positive bounds")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.minimum, self.maximum, self.count)
        return np.linspace(self.minimum, self.maximum, self.count)

    def as_text(self) -> str:
        return f"{self.variable}:{self.minimum}:{self.maximum}:{self.count}:{self.scale}"


def parse_sweep(text: str) -> SweepAxis:
    """Parse ``var:min:max:count[:scale]``."""
    parts = text.strip().split(":")
    if len(parts) not in (4, 5):
        raise ParameterError(f"sweep must look like var:min:max:count[:lin|log], got {text!r}")
    try:
        return SweepAxis(
            variable=parts[0],
            minimum=float(parts[1]),
            maximum=float(parts[2]),
            count=int(parts[3]),
            scale=parts[4] if len(parts) == 5 else "lin",
        )
    except ValueError as exc:
        raise ParameterError(f"invalid sweep {text!r}: {exc}") from exc


@dataclass(frozen=True, slots=True)
class RunSpec:
    command: str
    params: ChainParams = field(
        default_factory=lambda: ChainParams(J=DEFAULT_J, g=DEFAULT_G, delta=0.0, tau=DEFAULT_TAU, N=DEFAULT_N)
    )
    sweeps: tuple[SweepAxis, ...] = ()
    engine: str | None = None
    initial_state: InitialState | None = None
    modes: tuple[int, ...] | None = None
    samples: int = 101
    target: float = 0.999
    output_path: Path | None = None
    threads: int = 1

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ParameterError(f"command must be one of {COMMANDS}, got {self.command!r}")
        if self.engine is not None and self.engine not in ENGINES:
            raise ParameterError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.samples < 2:
            raise ParameterError(f"samples must be >= 2, got {self.samples}")
        if self.threads < 1:
            raise ParameterError(f"threads must be >= 1, got {self.threads}")
        variables = [axis.variable for axis in self.sweeps]
        if len(set(variables)) != len(variables):
            raise ParameterError(f"sweep variables repeat: {variables}")
        if self.modes is not None:
            for p in self.modes:
                if not 1 <= p <= self.params.mode_count:
                    raise ParameterError(f"mode counter {p} outside 1..{self.params.mode_count}")

    @property
    def resolved_engine(self) -> str:
        return self.engine or DEFAULT_ENGINES.get(self.command, "lz-exact")

    @property
    def resolved_initial_state(self) -> InitialState:
        if self.initial_state is not None:
            return InitialState(self.initial_state)
        return DEFAULT_INITIAL_STATES.get(self.command, InitialState.DRESSED)

    @property
    def resolved_modes(self) -> tuple[int, ...]:
        chosen = self.modes or DEFAULT_MODES.get(self.command, (1,))
        return tuple(p for p in chosen if p <= self.params.mode_count)


@dataclass(slots=True)
class RunResult:
    run_id: str
    frame: pd.DataFrame
    output_csv: Path
    output_parquet: Path | None
    run_metadata: Path


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _package_versions() -> dict[str, str]:
    versions = {"nhqa": __version__}
    for name in ("numpy", "scipy", "mpmath", "pandas"):
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _even(value: float) -> int:
    return max(2, int(round(value / 2.0)) * 2)


def _grid(spec: RunSpec, defaults: tuple[SweepAxis, ...]) -> list[dict[str, float]]:
    """Cartesian grid of the requested axes; default axes fill variables not given."""
    axes = list(spec.sweeps)
    given = {axis.variable for axis in axes}
    axes.extend(axis for axis in defaults if axis.variable not in given)
    if not axes:
        return [{}]
    points = []
    for combo in itertools.product(*(axis.values() for axis in axes)):
        point = {axis.variable: float(value) for axis, value in zip(axes, combo)}
        if "N" in point:
            point["N"] = _even(point["N"])
        points.append(point)
    return points


def _params_at(spec: RunSpec, point: dict[str, float]) -> ChainParams:
    updates = {name: point[name] for name in _CHAIN_FIELDS if name in point}
    return spec.params.with_updates(**updates) if updates else spec.params


def _map_points(
    func: Callable[[dict[str, float]], list[dict[str, Any]]],
    points: list[dict[str, float]],
    threads: int,
) -> list[dict[str, Any]]:
    """Evaluate grid points concurrently; rows come back in grid order."""
    results: dict[int, list[dict[str, Any]]] = {}
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(func, point): idx for idx, point in enumerate(points)}
        completed = 0
        for future in as_completed(futures):
            idx = futures[future]
            results[idx] = future.result()
            completed += 1
            LOGGER.debug("grid point %d/%d done", completed, len(points))
    rows: list[dict[str, Any]] = []
    for idx in range(len(points)):
        rows.extend(results[idx])
    return rows


def _integrator(settings: Settings, spec: RunSpec) -> IntegratorConfig:
    return IntegratorConfig.from_settings(settings, dense_output_samples=spec.samples)


def _cmd_gap_surface(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (
        SweepAxis("g", 0.0, 2.0, 41),
        SweepAxis("theta", 0.0, math.pi, 41),
    )

    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        theta = point["theta"]
        return [
            {
                "g": params.g,
                "delta": params.delta,
                "theta": theta,
                "gap": gap_abs(params.g, params.delta, theta, params.J),
            }
        ]

    return pd.DataFrame(_map_points(evaluate, _grid(spec, defaults), spec.threads))


def _mode_rows(spec: RunSpec, settings: Settings, params: ChainParams, p: int, with_pgs: bool) -> list[dict[str, Any]]:
    mode = mode_context(p, params)
    engine = spec.resolved_engine
    initial_state = spec.resolved_initial_state
    times = np.linspace(0.0, params.tau, spec.samples)
    base = {"p": p, "phi": mode.phi, "delta": params.delta, "tau": params.tau}

    if engine == "asympt":
        estimate = prob_longwave_exact_asympt(mode, params)
        row = {**base, "t": params.tau, "prob_flip": estimate.value, "valid": estimate.valid}
        if with_pgs:
            row["pgs"] = estimate.value
        return [row]

    if engine == "tdse":
        trajectory = integrate_mode(
            mode, params, _integrator(settings, spec), initial_state=initial_state, times=times
        )
        flips = trajectory.flip_probabilities()
        rows = [{**base, "t": float(t), "prob_flip": float(f)} for t, f in zip(times, flips)]
        if with_pgs:
            sampled = pgs_trajectory(mode, params, trajectory=trajectory)
            for row, value, flag in zip(rows, sampled.pgs, sampled.exceptional):
                row["pgs"] = float(value)
                row["exceptional"] = bool(flag)
        return rows

    ctx = lz_context(mode, params, initial_state, rel_tol=settings.weber_rel_tol)
    states = sample_exact(ctx, times)
    rows = [{**base, "t": state.t, "prob_flip": prob_flip(state.u, state.v)} for state in states]
    if with_pgs:
        for row in rows:
            row["pgs"] = pgs_at(ctx, row["t"])
    return rows


def _cmd_mode_prob(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        rows: list[dict[str, Any]] = []
        for p in spec.resolved_modes:
            rows.extend(_mode_rows(spec, settings, params, p, with_pgs=False))
        return rows

    return pd.DataFrame(_map_points(evaluate, _grid(spec, ()), spec.threads))


def _cmd_pgs_trajectory(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        rows: list[dict[str, Any]] = []
        for p in spec.resolved_modes:
            rows.extend(_mode_rows(spec, settings, params, p, with_pgs=True))
        return rows

    return pd.DataFrame(_map_points(evaluate, _grid(spec, ()), spec.threads))


def _anneal_row(spec: RunSpec, settings: Settings, params: ChainParams, mode_workers: int = 1) -> dict[str, Any]:
    engine = spec.resolved_engine
    row: dict[str, Any] = {"N": params.N, "delta": params.delta, "tau": params.tau}
    asymptotic = kink_density_asympt(params)
    row["kink_density_asympt"] = asymptotic.value
    if engine == "asympt":
        row["kink_density"] = asymptotic.value
        row["magnetization"] = magnetization(asymptotic.value)
        return row
    result = anneal(
        params,
        engine,
        spec.resolved_initial_state,
        _integrator(settings, spec),
        max_workers=mode_workers,
        executor=settings.executor,
        failure_log=settings.failure_log_path,
    )
    row["kink_count"] = result.kink_count
    row["kink_density"] = result.kink_density
    row["residual_energy"] = result.residual_energy
    row["magnetization"] = result.magnetization
    row["pgs_total"] = result.pgs_total
    running = np.cumsum(1.0 - result.per_mode_pgs)
    for cutoff in FIRST_MODE_CUTOFFS:
        if cutoff <= params.mode_count:
            row[f"kink_density_first_{cutoff}"] = kink_density_from_count(float(running[cutoff - 1]), params.N)
    return row


def _chain_rows(spec: RunSpec, settings: Settings, defaults: tuple[SweepAxis, ...]) -> list[dict[str, Any]]:
    points = _grid(spec, defaults)
    if settings.executor == "process":
        # grid points run in turn; each spreads its modes over worker processes
        return [_anneal_row(spec, settings, _params_at(spec, point), spec.threads) for point in points]
    return _map_points(
        lambda point: [_anneal_row(spec, settings, _params_at(spec, point))],
        points,
        spec.threads,
    )


def _cmd_kinks_vs_delta(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (SweepAxis("delta", 0.0, 1.0, 21),)
    return pd.DataFrame(_chain_rows(spec, settings, defaults))


def _cmd_kinks_surface(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (
        SweepAxis("delta", 0.0, 1.0, 11),
        SweepAxis("tau", 100.0, 5000.0, 11, "log"),
    )
    return pd.DataFrame(_chain_rows(spec, settings, defaults))


def _cmd_magnetization_vs_tau(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (
        SweepAxis("delta", 0.0, 1.0, 5),
        SweepAxis("tau", 100.0, 5000.0, 25, "log"),
    )
    return pd.DataFrame(_chain_rows(spec, settings, defaults))


def _cmd_pgs_vs_delta(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (
        SweepAxis("N", 64.0, 1024.0, 5, "log"),
        SweepAxis("delta", 0.0, 1.0, 21),
    )
    engine = spec.resolved_engine

    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        row: dict[str, Any] = {
            "N": params.N,
            "delta": params.delta,
            "tau": params.tau,
            "pgs_first_mode": pgs_first_mode(params),
        }
        if engine != "asympt":
            cutoff = max(1, params.N // 64)
            values = per_mode_pgs(
                params,
                engine,
                spec.resolved_initial_state,
                _integrator(settings, spec),
                failure_log=settings.failure_log_path,
            )
            full = pgs_total(values).value
            truncated = pgs_total(values[:cutoff]).value
            row["pgs_total"] = full
            row["truncated_modes"] = cutoff
            row["pgs_truncated"] = truncated
            row["truncation_error"] = abs(truncated - full)
        return [row]

    return pd.DataFrame(_map_points(evaluate, _grid(spec, defaults), spec.threads))


def _cmd_pgs_surface(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (
        SweepAxis("delta_star", 1e-3, 1e3, 25, "log"),
        SweepAxis("tau_star", 1e-4, 1.0, 25, "log"),
    )

    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        return [
            {
                "delta_star": point["delta_star"],
                "tau_star": point["tau_star"],
                "pgs": pgs_scaled(point["delta_star"], point["tau_star"], spec.params.J),
            }
        ]

    return pd.DataFrame(_map_points(evaluate, _grid(spec, defaults), spec.threads))


def _cmd_anneal_time(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    defaults = (
        SweepAxis("N", 64.0, 4096.0, 7, "log"),
        SweepAxis("delta", 0.25, 1.0, 4),
    )

    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        J, g, delta, N = params.J, params.g, params.delta, params.N
        found = anneal_time(N, J, g, delta, spec.target)
        hermitian = hermitian_anneal_time(N, J, g, spec.target)
        return [
            {
                "N": N,
                "delta": delta,
                "target": spec.target,
                "tau_exact": found.exact,
                "tau_asymptotic": found.asymptotic if found.asymptotic is not None else math.nan,
                "tau_implicit": anneal_time_estimate_implicit(N, J, g, delta, spec.target)
                if delta > 0
                else math.nan,
                "tau_hermitian": hermitian,
                "speedup": hermitian / found.exact,
            }
        ]

    return pd.DataFrame(_map_points(evaluate, _grid(spec, defaults), spec.threads))


def _cmd_oracle_check(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        report = oracle_check(params, _integrator(settings, spec), spec.resolved_engine)
        return [
            {
                "N": params.N,
                "delta": params.delta,
                "tau": params.tau,
                "dense_pgs": report.dense_pgs,
                "mode_pgs": report.mode_pgs,
                "difference": report.difference,
                "max_odd_weight": report.max_odd_weight,
                "spectrum_error": report.spectrum_error,
            }
        ]

    return pd.DataFrame(_map_points(evaluate, _grid(spec, ()), spec.threads))


def _cmd_bloch_check(spec: RunSpec, settings: Settings) -> pd.DataFrame:
    config = _integrator(settings, spec)

    def evaluate(point: dict[str, float]) -> list[dict[str, Any]]:
        params = _params_at(spec, point)
        times = np.linspace(0.0, params.tau, spec.samples)
        rows: list[dict[str, Any]] = []
        for p in spec.resolved_modes:
            mode = mode_context(p, params)
            # (|k1>, |k0>) order: the diabatic start (u, v) = (1, 0) is (0, 1) here
            start = np.array([0.0, 1.0], dtype=complex)
            direct = evolve_schrodinger(
                lambda t: mode_hamiltonian(mode.phi, schedule(t, params), params), start, times, config
            )
            bloch = evolve_bloch(mode_bloch_params(mode, params), bloch_vector(start), times, config)
            vector_error = 0.0
            norm_error = 0.0
            for index, row in enumerate(direct):
                reference = bloch_vector(row)
                state = bloch.state(index)
                scale = max(reference.n, 1e-300)
                vector_error = max(vector_error, float(np.max(np.abs(state.n_vec - reference.n_vec))) / scale)
                norm_error = max(norm_error, abs(state.n - reference.n) / scale)
            trajectory = integrate_mode(mode, params, config, times=times)
            flip_error = float(np.max(np.abs(bloch.rho11 / bloch.n - trajectory.flip_probabilities())))
            rows.append(
                {
                    "p": p,
                    "delta": params.delta,
                    "tau": params.tau,
                    "max_vector_error": vector_error,
                    "max_norm_error": norm_error,
                    "max_flip_error": flip_error,
                }
            )
        return rows

    return pd.DataFrame(_map_points(evaluate, _grid(spec, ()), spec.threads))


COMMAND_HANDLERS: dict[str, Callable[[RunSpec, Settings], pd.DataFrame]] = {
    "gap-surface": _cmd_gap_surface,
    "mode-prob": _cmd_mode_prob,
    "pgs-trajectory": _cmd_pgs_trajectory,
    "kinks-vs-delta": _cmd_kinks_vs_delta,
    "kinks-surface": _cmd_kinks_surface,
    "magnetization-vs-tau": _cmd_magnetization_vs_tau,
    "pgs-vs-delta": _cmd_pgs_vs_delta,
    "pgs-surface": _cmd_pgs_surface,
    "anneal-time": _cmd_anneal_time,
    "oracle-check": _cmd_oracle_check,
    "bloch-check": _cmd_bloch_check,
}


def run(spec: RunSpec, settings: Settings | None = None) -> RunResult:
    """Execute one command and write CSV, optional Parquet and a JSON sidecar."""
    settings = settings or Settings.from_env()
    settings.ensure_directories()
    configure_logging(level=settings.log_level, log_file=settings.logs_dir / "nhqa.log")

    started_at = _utc_now_iso()
    clock = time.perf_counter()
    run_id = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    LOGGER.info("Run started: %s command=%s engine=%s", run_id, spec.command, spec.resolved_engine)

    frame = COMMAND_HANDLERS[spec.command](spec, settings)

    output_csv = spec.output_path or settings.output_dir / f"{spec.command}_{run_id}.csv"
    output_csv.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output_csv, index=False, float_format=CSV_FLOAT_FORMAT)
    output_parquet = None
    if settings.write_parquet:
        output_parquet = output_csv.with_suffix(".parquet")
        frame.to_parquet(output_parquet, index=False)

    completed_at = _utc_now_iso()
    run_metadata = {
        "run_id": run_id,
        "command": spec.command,
        "params": spec.params.as_dict(),
        "engine": spec.resolved_engine,
        "initial_state": spec.resolved_initial_state.value,
        "sweeps": [axis.as_text() for axis in spec.sweeps],
        "modes": list(spec.resolved_modes),
        "samples": spec.samples,
        "target": spec.target,
        "threads": spec.threads,
        "integrator": {
            "rel_tol": settings.rel_tol,
            "abs_tol": settings.abs_tol,
            "max_step_fraction": settings.max_step_fraction,
            "weber_rel_tol": settings.weber_rel_tol,
        },
        "versions": _package_versions(),
        "rows": int(len(frame)),
        "output_csv": str(output_csv),
        "output_parquet": str(output_parquet) if output_parquet else None,
        "failure_log": str(settings.failure_log_path),
        "started_at_utc": started_at,
        "completed_at_utc": completed_at,
        "wall_time_seconds": time.perf_counter() - clock,
    }
    metadata_path = output_csv.with_suffix(".json")
    with metadata_path.open("w", encoding="utf-8") as handle:
        json.dump(run_metadata, handle, indent=2, ensure_ascii=True)

    LOGGER.info("Run completed: csv=%s metadata=%s", output_csv, metadata_path)
    return RunResult(
        run_id=run_id,
        frame=frame,
        output_csv=output_csv,
        output_parquet=output_parquet,
        run_metadata=metadata_path,
    )
