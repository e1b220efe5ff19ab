"""Direct integration of the per-mode Schrodinger equation and its adjoint."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .config import Settings
from .errors import ExceptionalPointError, NumericalError, ParameterError
from .lz import InitialState, ModeState, initial_vector, prob_flip
from .model import (
    AdiabaticBasis,
    ChainParams,
    ModeContext,
    final_basis,
    instantaneous_basis,
    intrinsic_ground_probability,
    project_adiabatic,
    schedule,
    tracked_gap_root,
)

LOGGER = logging.getLogger(__name__)

METHODS: tuple[str, ...] = ("DOP853", "RK45")
_DRESSED_UNSTABLE_EXPONENT = 20.0


@dataclass(frozen=True, slots=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_step: float | None = None
    max_step_fraction: float = 1e-3
    dense_output_samples: int = 101
    method: str = "DOP853"
    estimate_error: bool = False
    # tolerance handed to the exact per-mode engine
    weber_rel_tol: float = 1e-10

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not 0 < value <= 1e-3:
                raise ParameterError(f"{name} must lie in (0, 1e-3], got {value}")
        if self.dense_output_samples < 2:
            raise ParameterError(
                f"dense_output_samples must be >= 2, got {self.dense_output_samples}"
            )
        if self.max_step is not None and not self.max_step > 0:
            raise ParameterError(f"max_step must be > 0, got {self.max_step}")
        if not 0 < self.max_step_fraction <= 1:
            raise ParameterError(
                f"max_step_fraction must lie in (0, 1], got {self.max_step_fraction}"
            )
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 < self.weber_rel_tol < 1:
            raise ParameterError(f"weber_rel_tol must lie in (0, 1), got {self.weber_rel_tol}")

    @classmethod
    def from_settings(cls, settings: Settings, **overrides: object) -> "IntegratorConfig":
        values: dict[str, object] = {
            "rel_tol": settings.rel_tol,
            "abs_tol": settings.abs_tol,
            "max_step_fraction": settings.max_step_fraction,
            "weber_rel_tol": settings.weber_rel_tol,
        }
        values.update(overrides)
        return cls(**values)  # type: ignore[arg-type]

    def step_limit(self, tau: float) -> float:
        return self.max_step if self.max_step is not None else tau * self.max_step_fraction

    def loosened(self, factor: float = 10.0) -> "IntegratorConfig":
        return replace(
            self,
            rel_tol=min(self.rel_tol * factor, 1e-3),
            abs_tol=min(self.abs_tol * factor, 1e-3),
            estimate_error=False,
        )


@dataclass(slots=True)
class ModeTrajectory:
    """
    Sampled solution of one mode.

    Row i holds the amplitudes at times[i] divided by exp(log_scale[i]); adjoint
    rows are multiplied by the same factor, so utilde*u + vtilde*v is unchanged.
    """

    mode: ModeContext
    params: ChainParams
    initial_state: InitialState
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    log_scale: np.ndarray
    utilde: np.ndarray | None = None
    vtilde: np.ndarray | None = None
    nfev: int = 0
    error_estimate: float | None = None

    def state(self, index: int) -> ModeState:
        return ModeState(
            t=float(self.times[index]),
            u=complex(self.u[index]),
            v=complex(self.v[index]),
            utilde=None if self.utilde is None else complex(self.utilde[index]),
            vtilde=None if self.vtilde is None else complex(self.vtilde[index]),
            log_scale=float(self.log_scale[index]),
        )

    def states(self) -> list[ModeState]:
        return [self.state(index) for index in range(len(self.times))]

    @property
    def final_state(self) -> ModeState:
        return self.state(len(self.times) - 1)

    def flip_probabilities(self) -> np.ndarray:
        return np.array([prob_flip(u, v) for u, v in zip(self.u, self.v)])

    def norms_squared(self) -> np.ndarray:
        weight = np.abs(self.u) ** 2 + np.abs(self.v) ** 2
        return weight * np.exp(2.0 * self.log_scale)

    def biorthogonal_products(self) -> np.ndarray:
        if self.utilde is None or self.vtilde is None:
            raise ParameterError("trajectory was integrated without the adjoint")
        return self.utilde * self.u + self.vtilde * self.v


@dataclass(frozen=True, slots=True)
class PgsTrajectory:
    times: np.ndarray
    pgs: np.ndarray
    flip: np.ndarray
    exceptional: np.ndarray


def _rhs(mode: ModeContext, params: ChainParams, with_adjoint: bool):
    J = params.J
    s = mode.sin_phi
    c = mode.cos_phi

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        a = schedule(t, params) - c
        u, v = y[0], y[1]
        du = -1j * J * (-a * u + s * v)
        dv = -1j * J * (s * u + a * v)
        if not with_adjoint:
            return np.array([du, dv], dtype=complex)
        ut, vt = y[2], y[3]
        dut = 1j * J * (-a * ut + s * vt)
        dvt = 1j * J * (s * ut + a * vt)
        return np.array([du, dv, dut, dvt], dtype=complex)

    return rhs


def _advance(rhs, y: np.ndarray, t0: float, t1: float, config: IntegratorConfig, max_step: float):
    result = solve_ivp(
        rhs,
        (t0, t1),
        y,
        method=config.method,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=max_step,
    )
    if not result.success:
        raise NumericalError(f"integration failed: {result.message}", location=f"t={result.t[-1]}")
    return result.y[:, -1], int(result.nfev)


def _sample_times(params: ChainParams, config: IntegratorConfig, times: np.ndarray | None) -> np.ndarray:
    if times is None:
        return np.linspace(0.0, params.tau, config.dense_output_samples)
    grid = np.asarray(times, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ParameterError("sample times must be a non-empty 1-d array")
    if grid[0] < 0 or np.any(np.diff(grid) < 0):
        raise ParameterError("sample times must be >= 0 and non-decreasing")
    return grid


def _integrate(
    mode: ModeContext,
    params: ChainParams,
    config: IntegratorConfig,
    psi0: np.ndarray,
    grid: np.ndarray,
    with_adjoint: bool,
) -> tuple[np.ndarray, np.ndarray, int]:
    rhs = _rhs(mode, params, with_adjoint)
    max_step = config.step_limit(params.tau)
    width = 4 if with_adjoint else 2
    rows = np.zeros((grid.size, width), dtype=complex)
    log_scale = np.zeros(grid.size)

    y = np.zeros(width, dtype=complex)
    y[:2] = psi0
    if with_adjoint:
        weight = float(np.vdot(psi0, psi0).real)
        y[2:] = np.conj(psi0) / weight
    current_t = 0.0
    current_scale = 0.0
    nfev = 0
    for index, target in enumerate(grid):
        if target > current_t:
            y, used = _advance(rhs, y, current_t, float(target), config, max_step)
            nfev += used
            current_t = float(target)
            size = float(np.max(np.abs(y[:2])))
            if size == 0 or not math.isfinite(size):
                raise NumericalError("state norm left floating-point range", location=f"t={target}")
            y[:2] /= size
            if with_adjoint:
                y[2:] *= size
            current_scale += math.log(size)
        rows[index] = y
        log_scale[index] = current_scale
    return rows, log_scale, nfev


def _basis(mode: ModeContext, params: ChainParams, t: float) -> AdiabaticBasis:
    if t >= params.tau:
        return final_basis(mode.phi)
    return instantaneous_basis(mode.phi, schedule(t, params), tracked_gap_root(mode.phi, t, params))


def _final_pgs(trajectory: ModeTrajectory) -> float:
    state = trajectory.final_state
    alpha, beta = project_adiabatic(state.u, state.v, _basis(trajectory.mode, trajectory.params, state.t))
    return intrinsic_ground_probability(alpha, beta)


def integrate_mode(
    mode: ModeContext,
    params: ChainParams,
    config: IntegratorConfig | None = None,
    *,
    initial_state: InitialState = InitialState.DIABATIC,
    times: np.ndarray | None = None,
    with_adjoint: bool = False,
) -> ModeTrajectory:
    """
    Integrate i d/dt (u, v) = M (u, v) over the requested sample times.

    Segments between samples are integrated separately and the state is
    renormalized after each one; the removed growth is kept in ``log_scale``.
    """
    config = config or IntegratorConfig()
    initial_state = InitialState(initial_state)
    if initial_state is InitialState.DRESSED and params.J * params.delta * params.tau > _DRESSED_UNSTABLE_EXPONENT:
        LOGGER.warning(
            "dressed start with J*delta*tau=%.1f: the decaying branch is unstable under direct integration",
            params.J * params.delta * params.tau,
        )
    grid = _sample_times(params, config, times)
    psi0 = initial_vector(mode, params, initial_state)
    rows, log_scale, nfev = _integrate(mode, params, config, psi0, grid, with_adjoint)
    trajectory = ModeTrajectory(
        mode=mode,
        params=params,
        initial_state=initial_state,
        times=grid,
        u=rows[:, 0].copy(),
        v=rows[:, 1].copy(),
        log_scale=log_scale,
        utilde=rows[:, 2].copy() if with_adjoint else None,
        vtilde=rows[:, 3].copy() if with_adjoint else None,
        nfev=nfev,
    )
    if config.estimate_error:
        coarse_rows, coarse_scale, coarse_nfev = _integrate(
            mode, params, config.loosened(), psi0, grid[[0, -1]] if grid.size > 1 else grid, False
        )
        coarse = ModeTrajectory(
            mode=mode,
            params=params,
            initial_state=initial_state,
            times=grid[[0, -1]] if grid.size > 1 else grid,
            u=coarse_rows[:, 0],
            v=coarse_rows[:, 1],
            log_scale=coarse_scale,
        )
        trajectory.error_estimate = abs(_final_pgs(trajectory) - _final_pgs(coarse))
        trajectory.nfev += coarse_nfev
    LOGGER.debug("p=%d integrated with %d evaluations", mode.p, trajectory.nfev)
    return trajectory


def propagate(
    mode: ModeContext,
    params: ChainParams,
    y0: np.ndarray,
    t0: float,
    t1: float,
    config: IntegratorConfig | None = None,
) -> np.ndarray:
    """Carry (u, v) from t0 to t1 in either direction of time."""
    config = config or IntegratorConfig()
    y = np.asarray(y0, dtype=complex)
    if t0 == t1:
        return y.copy()
    rhs = _rhs(mode, params, with_adjoint=False)
    end, _ = _advance(rhs, y, float(t0), float(t1), config, config.step_limit(params.tau))
    return end


def final_pgs_error_estimate(
    mode: ModeContext,
    params: ChainParams,
    config: IntegratorConfig | None = None,
    *,
    initial_state: InitialState = InitialState.DIABATIC,
) -> float:
    """|P_gs(tau) at the configured tolerances - P_gs(tau) at tolerances ten times looser|."""
    config = replace(config or IntegratorConfig(), estimate_error=True)
    trajectory = integrate_mode(
        mode, params, config, initial_state=initial_state, times=np.array([0.0, params.tau])
    )
    assert trajectory.error_estimate is not None
    return trajectory.error_estimate


def final_ground_probability(trajectory: ModeTrajectory) -> float:
    return _final_pgs(trajectory)


def pgs_trajectory(
    mode: ModeContext,
    params: ChainParams,
    config: IntegratorConfig | None = None,
    *,
    initial_state: InitialState = InitialState.INSTANTANEOUS,
    times: np.ndarray | None = None,
    trajectory: ModeTrajectory | None = None,
) -> PgsTrajectory:
    """
    Intrinsic ground-state probability along the schedule.

    Each sample is projected bi-orthogonally on the instantaneous eigenvectors, the
    endpoint t = tau on the g~ = 0 eigenvectors. Samples at an exceptional point are
    flagged and left as NaN.
    """
    if trajectory is None:
        trajectory = integrate_mode(mode, params, config, initial_state=initial_state, times=times)
    count = len(trajectory.times)
    pgs = np.full(count, np.nan)
    exceptional = np.zeros(count, dtype=bool)
    for index, t in enumerate(trajectory.times):
        try:
            basis = _basis(mode, params, float(t))
        except ExceptionalPointError as exc:
            LOGGER.warning("p=%d: exceptional point at t=%.6g (%s)", mode.p, t, exc)
            exceptional[index] = True
            continue
        alpha, beta = project_adiabatic(trajectory.u[index], trajectory.v[index], basis)
        pgs[index] = intrinsic_ground_probability(alpha, beta)
    return PgsTrajectory(
        times=trajectory.times.copy(),
        pgs=pgs,
        flip=trajectory.flip_probabilities(),
        exceptional=exceptional,
    )
