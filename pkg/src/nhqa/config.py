"""Configuration loading for simulator runs."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from .errors import ParameterError


def _as_bool(value: str | None, default: bool = False) -> bool:
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "y"}


def _as_int(value: str | None, default: int) -> int:
    if value is None or value.strip() == "":
        return default
    return int(value)


def _as_float(value: str | None, default: float) -> float:
    if value is None or value.strip() == "":
        return default
    return float(value)


@dataclass(slots=True)
class Settings:
    """Runtime settings loaded from environment variables."""

    output_dir: Path
    log_level: str
    threads: int
    executor: str
    rel_tol: float
    abs_tol: float
    max_step_fraction: float
    weber_rel_tol: float
    write_parquet: bool

    @classmethod
    def from_env(cls, env_file: str | Path | None = None) -> "Settings":
        """Create settings from process environment and optional .env file."""
        load_dotenv(dotenv_path=env_file)

        executor = os.getenv("NHQA_EXECUTOR", "thread").strip().lower()
        if executor not in {"thread", "process"}:
            raise ParameterError(f"NHQA_EXECUTOR must be 'thread' or 'process', got {executor!r}")
        threads = _as_int(os.getenv("NHQA_THREADS"), 1)
        if threads < 1:
            raise ParameterError(f"NHQA_THREADS must be >= 1, got {threads}")

        return cls(
            output_dir=Path(os.getenv("NHQA_OUTPUT_DIR", "output")),
            log_level=os.getenv("NHQA_LOG_LEVEL", "INFO"),
            threads=threads,
            executor=executor,
            rel_tol=_as_float(os.getenv("NHQA_RTOL"), 1e-10),
            abs_tol=_as_float(os.getenv("NHQA_ATOL"), 1e-10),
            max_step_fraction=_as_float(os.getenv("NHQA_MAX_STEP_FRACTION"), 1e-3),
            weber_rel_tol=_as_float(os.getenv("NHQA_WEBER_RTOL"), 1e-10),
            write_parquet=_as_bool(os.getenv("NHQA_WRITE_PARQUET"), default=True),
        )

    @property
    def logs_dir(self) -> Path:
        return self.output_dir / "logs"

    @property
    def failure_log_path(self) -> Path:
        return self.logs_dir / "failed_modes_log.json"

    def ensure_directories(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logs_dir.mkdir(parents=True, exist_ok=True)


RUN_CONFIG_KEYS: frozenset[str] = frozenset(
    {
        "command",
        "J",
        "g",
        "delta",
        "tau",
        "N",
        "engine",
        "initial_state",
        "sweep",
        "modes",
        "samples",
        "target",
        "out",
        "threads",
    }
)


def load_run_config(path: str | Path) -> dict[str, str]:
    """
    Read a flat ``key=value`` run file.

    Blank values are dropped so that they fall through to command-line defaults.
    Unknown keys are rejected rather than ignored.
    """
    config_path = Path(path)
    if not config_path.exists():
        raise ParameterError(f"Run config not found: {config_path}")

    raw = dotenv_values(config_path)
    unknown = sorted(key for key in raw if key not in RUN_CONFIG_KEYS)
    if unknown:
        raise ParameterError(f"Unknown run config keys in {config_path}: {', '.join(unknown)}")
    return {key: value.strip() for key, value in raw.items() if value is not None and value.strip()}
