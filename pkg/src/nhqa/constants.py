"""Constants shared across the simulator."""

from __future__ import annotations

# Default chain: J, g, tau, N.
DEFAULT_J: float = 0.5
DEFAULT_G: float = 10.0
DEFAULT_TAU: float = 1.0e3
DEFAULT_N: int = 1024

ENGINES: tuple[str, ...] = ("tdse", "lz-exact", "asympt")
INITIAL_STATES: tuple[str, ...] = ("diabatic", "instantaneous", "dressed")

COMMANDS: tuple[str, ...] = (
    "gap-surface",
    "mode-prob",
    "pgs-trajectory",
    "kinks-vs-delta",
    "kinks-surface",
    "magnetization-vs-tau",
    "pgs-vs-delta",
    "pgs-surface",
    "anneal-time",
    "oracle-check",
    "bloch-check",
)

# Weber engine method switch radii.
SERIES_RADIUS: float = 4.0
ASYMPTOTIC_RADIUS: float = 12.0

# Large-order expansion refuses smaller |nu|.
LARGE_ORDER_MIN_NU: float = 25.0

# Eigenvector Gram determinant below this marks an exceptional point.
EXCEPTIONAL_POINT_GRAM: float = 1e-12

# Dense oracle memory guard.
DENSE_MAX_SPINS: int = 12

# Smallest log value kept in probability products (exp(-745) is the double underflow edge).
LOG_UNDERFLOW_FLOOR: float = -745.0

# Digits the Weber engine must keep after cancellation in the two-constant solution.
MIN_SURVIVING_DIGITS: int = 15

CSV_FLOAT_FORMAT: str = "%.14e"
