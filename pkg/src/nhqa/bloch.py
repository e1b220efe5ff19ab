"""
Generalized Bloch equations of a two-level system with a non-Hermitian Hamiltonian.

For H = (lambda0~/2) 1 + (1/2) Omega~ . sigma with lambda0~ = lambda0 - i Gamma and
Omega~ = Omega + i Lambda, the unnormalized Bloch vector n = <u|sigma|u> and the
norm n = <u|u> obey

    dn/dt = -Gamma n + n Lambda + Omega x n
    dn/dt = -Gamma n + Lambda . n
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NumericalError, ParameterError
from .model import ChainParams, ModeContext, mode_hamiltonian, schedule
from .tdse import IntegratorConfig

LOGGER = logging.getLogger(__name__)

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True, slots=True)
class BlochParams:
    """Trace part lambda0~ and Pauli vector Omega~ of a 2x2 Hamiltonian."""

    lambda0: complex
    omega: tuple[complex, complex, complex]
    gamma0: float | None = None
    gamma1: float | None = None

    def __post_init__(self) -> None:
        if len(self.omega) != 3:
            raise ParameterError("Omega~ must have three components")
        if self.gamma0 is not None and self.gamma1 is not None:
            expected = 0.5 * (self.gamma0 + self.gamma1)
            if not math.isclose(expected, self.Gamma, rel_tol=1e-12, abs_tol=1e-14):
                raise ParameterError(
                    f"(Gamma0 + Gamma1)/2 = {expected} does not match -Im lambda0~ = {self.Gamma}"
                )

    @classmethod
    def from_rates(
        cls,
        lambda0: float,
        gamma0: float,
        gamma1: float,
        omega: tuple[complex, complex, complex],
    ) -> "BlochParams":
        """Build lambda0~ = lambda0 - i (Gamma0 + Gamma1)/2."""
        gamma = 0.5 * (gamma0 + gamma1)
        return cls(lambda0=complex(lambda0, -gamma), omega=tuple(complex(c) for c in omega), gamma0=gamma0, gamma1=gamma1)

    @property
    def Gamma(self) -> float:
        return -complex(self.lambda0).imag

    @property
    def real_omega(self) -> np.ndarray:
        return np.array([complex(c).real for c in self.omega])

    @property
    def imag_omega(self) -> np.ndarray:
        return np.array([complex(c).imag for c in self.omega])

    def matrix(self) -> np.ndarray:
        result = 0.5 * self.lambda0 * np.eye(2, dtype=complex)
        for component, sigma in zip(self.omega, _SIGMA):
            result = result + 0.5 * component * sigma
        return result


@dataclass(frozen=True, slots=True)
class BlochState:
    n_vec: np.ndarray
    n: float

    @property
    def nx(self) -> float:
        return float(self.n_vec[0])

    @property
    def ny(self) -> float:
        return float(self.n_vec[1])

    @property
    def nz(self) -> float:
        return float(self.n_vec[2])

    @property
    def length_mismatch(self) -> float:
        """|n - |n_vec||, zero for a pure state."""
        return abs(self.n - float(np.linalg.norm(self.n_vec)))


@dataclass(frozen=True, slots=True)
class BlochTrajectory:
    times: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    rho11: np.ndarray
    rho00: np.ndarray

    @property
    def nz(self) -> np.ndarray:
        return self.rho11 - self.rho00

    @property
    def n(self) -> np.ndarray:
        return self.rho11 + self.rho00

    def state(self, index: int) -> BlochState:
        return state_from_populations(
            self.nx[index], self.ny[index], self.rho11[index], self.rho00[index]
        )


def from_mode_hamiltonian(hamiltonian: np.ndarray) -> BlochParams:
    """Unique split of any 2x2 matrix into lambda0~/2 times 1 plus Omega~ . sigma / 2."""
    h = np.asarray(hamiltonian, dtype=complex)
    if h.shape != (2, 2):
        raise ParameterError(f"expected a 2x2 matrix, got shape {h.shape}")
    omega = (
        complex(h[0, 1] + h[1, 0]),
        complex(1j * (h[0, 1] - h[1, 0])),
        complex(h[0, 0] - h[1, 1]),
    )
    params = BlochParams(lambda0=complex(h[0, 0] + h[1, 1]), omega=omega)
    if params.Gamma < 0:
        LOGGER.debug("negative decay rate Gamma=%.3e: the norm grows", params.Gamma)
    return params


def mode_bloch_params(mode: ModeContext, params: ChainParams) -> Callable[[float], BlochParams]:
    """Bloch parameters of the mode Hamiltonian along the schedule, (|k1>, |k0>) order."""

    def at(t: float) -> BlochParams:
        return from_mode_hamiltonian(mode_hamiltonian(mode.phi, schedule(t, params), params))

    return at


def bloch_vector(u: np.ndarray) -> BlochState:
    """n_vec = <u|sigma|u> and n = <u|u> of a two-component state."""
    first, second = complex(u[0]), complex(u[1])
    coherence = first.conjugate() * second
    return BlochState(
        n_vec=np.array([2.0 * coherence.real, 2.0 * coherence.imag, abs(first) ** 2 - abs(second) ** 2]),
        n=abs(first) ** 2 + abs(second) ** 2,
    )


def populations(state: BlochState) -> tuple[float, float]:
    """(rho11, rho00) = ((n + nz)/2, (n - nz)/2)."""
    return 0.5 * (state.n + state.nz), 0.5 * (state.n - state.nz)


def state_from_populations(nx: float, ny: float, rho11: float, rho00: float) -> BlochState:
    return BlochState(n_vec=np.array([nx, ny, rho11 - rho00], dtype=float), n=float(rho11 + rho00))


def bloch_rhs(state: BlochState, params: BlochParams) -> np.ndarray:
    """Time derivatives of (nx, ny, nz, n)."""
    gamma = params.Gamma
    omega = params.real_omega
    lam = params.imag_omega
    n_vec = np.asarray(state.n_vec, dtype=float)
    d_vec = -gamma * n_vec + state.n * lam + np.cross(omega, n_vec)
    d_norm = -gamma * state.n + float(lam @ n_vec)
    return np.array([d_vec[0], d_vec[1], d_vec[2], d_norm])


def _population_rhs(params_at: Callable[[float], BlochParams]):
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        nx, ny, rho11, rho00 = y
        params = params_at(t)
        gamma = params.Gamma
        ox, oy, oz = params.real_omega
        lx, ly, lz = params.imag_omega
        total = rho11 + rho00
        inversion = rho11 - rho00
        exchange = 0.5 * (lx * nx + ly * ny)
        rotation = 0.5 * (ox * ny - oy * nx)
        return np.array(
            [
                -gamma * nx + lx * total + oy * inversion - oz * ny,
                -gamma * ny + ly * total - ox * inversion + oz * nx,
                -(gamma - lz) * rho11 + exchange + rotation,
                -(gamma + lz) * rho00 + exchange - rotation,
            ]
        )

    return rhs


def evolve_bloch(
    params_at: Callable[[float], BlochParams],
    initial: BlochState,
    times: np.ndarray,
    config: IntegratorConfig | None = None,
) -> BlochTrajectory:
    """Integrate the (nx, ny, rho11, rho00) form and sample it at ``times``."""
    config = config or IntegratorConfig()
    grid = np.asarray(times, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ParameterError("times must be an increasing 1-d array with at least two entries")
    rho11, rho00 = populations(initial)
    y0 = np.array([initial.nx, initial.ny, rho11, rho00])
    result = solve_ivp(
        _population_rhs(params_at),
        (float(grid[0]), float(grid[-1])),
        y0,
        method=config.method,
        t_eval=grid,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=config.max_step if config.max_step is not None else np.inf,
    )
    if not result.success:
        raise NumericalError(f"Bloch integration failed: {result.message}", location=f"t={result.t[-1]}")
    return BlochTrajectory(times=grid, nx=result.y[0], ny=result.y[1], rho11=result.y[2], rho00=result.y[3])


def evolve_schrodinger(
    hamiltonian_at: Callable[[float], np.ndarray],
    u0: np.ndarray,
    times: np.ndarray,
    config: IntegratorConfig | None = None,
) -> np.ndarray:
    """Rows of u(t) solving i du/dt = H(t) u at the requested times."""
    config = config or IntegratorConfig()
    grid = np.asarray(times, dtype=float)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return -1j * (hamiltonian_at(t) @ y)

    result = solve_ivp(
        rhs,
        (float(grid[0]), float(grid[-1])),
        np.asarray(u0, dtype=complex),
        method=config.method,
        t_eval=grid,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=config.max_step if config.max_step is not None else np.inf,
    )
    if not result.success:
        raise NumericalError(f"two-level integration failed: {result.message}", location=f"t={result.t[-1]}")
    return result.y.T
