"""
Brute-force evolution of the full spin chain for a handful of spins.

Basis states are integers whose bit n is 1 when spin n points down along z.
The chain Hamiltonian is

    H(g~) = -(J/2) sum_n (g~ sigma^x_n + sigma^z_n sigma^z_{n+1}) - i (J/2) N Im g~

with periodic boundary, the dissipative term i 2 delta sigma^-_n sigma^+_n already
rewritten as i delta (1 + sigma^x_n).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.optimize import linear_sum_assignment
from scipy.sparse import linalg as sparse_linalg

from .constants import DENSE_MAX_SPINS
from .errors import NumericalError, ParameterError
from .lz import InitialState
from .model import ChainParams, mode_angle, schedule
from .observables import per_mode_pgs, pgs_total
from .tdse import IntegratorConfig

LOGGER = logging.getLogger(__name__)

_DENSE_EIG_LIMIT = 256
_DEGENERACY_GAP = 1e-8
_PARITY_TOL = 1e-8


@dataclass(frozen=True, slots=True)
class DenseState:
    t: float
    amplitudes: np.ndarray
    N: int
    parity: str
    log_scale: float = 0.0

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real) * math.exp(2.0 * self.log_scale)


@dataclass(frozen=True, slots=True)
class ChainOperators:
    """Field-independent pieces: H = -(J/2) (g~ X + ZZ) - i (J/2) N Im g~."""

    N: int
    J: float
    transverse: sparse.csr_matrix
    coupling: sparse.csr_matrix

    def hamiltonian(self, g_tilde: complex) -> sparse.csr_matrix:
        g_tilde = complex(g_tilde)
        shift = -0.5j * self.J * self.N * g_tilde.imag
        identity = sparse.identity(2**self.N, dtype=complex, format="csr")
        return (-0.5 * self.J * (g_tilde * self.transverse + self.coupling) + shift * identity).tocsr()


def _check_size(N: int) -> None:
    if N > DENSE_MAX_SPINS:
        raise ParameterError(f"dense evolution is limited to N <= {DENSE_MAX_SPINS}, got {N}")
    if N < 2 or N % 2:
        raise ParameterError(f"N must be an even integer >= 2, got {N}")


def chain_operators(N: int, J: float) -> ChainOperators:
    _check_size(N)
    dim = 2**N
    states = np.arange(dim, dtype=np.int64)

    rows = np.tile(states, N)
    cols = np.concatenate([states ^ (1 << site) for site in range(N)])
    transverse = sparse.coo_matrix(
        (np.ones(N * dim, dtype=complex), (rows, cols)), shape=(dim, dim)
    ).tocsr()

    diagonal = np.zeros(dim)
    for site in range(N):
        left = (states >> site) & 1
        right = (states >> ((site + 1) % N)) & 1
        diagonal += np.where(left == right, 1.0, -1.0)
    coupling = sparse.diags(diagonal.astype(complex), format="csr")
    return ChainOperators(N=N, J=J, transverse=transverse, coupling=coupling)


def build_hamiltonian(g_tilde: complex, params: ChainParams) -> sparse.csr_matrix:
    """Sparse 2^N x 2^N chain Hamiltonian at field g~."""
    return chain_operators(params.N, params.J).hamiltonian(g_tilde)


def parity_operator(N: int) -> sparse.csr_matrix:
    """prod_n sigma^x_n, which flips every spin."""
    _check_size(N)
    dim = 2**N
    states = np.arange(dim)
    return sparse.coo_matrix(
        (np.ones(dim, dtype=complex), (states, (dim - 1) ^ states)), shape=(dim, dim)
    ).tocsr()


def _even_sector_basis(N: int) -> sparse.csr_matrix:
    dim = 2**N
    half = dim // 2
    low = np.arange(half)
    rows = np.concatenate([low, (dim - 1) ^ low])
    cols = np.concatenate([np.arange(half), np.arange(half)])
    values = np.full(dim, 1.0 / math.sqrt(2.0), dtype=complex)
    return sparse.coo_matrix((values, (rows, cols)), shape=(dim, half)).tocsr()


def odd_parity_weight(amplitudes: np.ndarray) -> float:
    """Share of the norm in the odd sector of prod sigma^x."""
    total = float(np.vdot(amplitudes, amplitudes).real)
    if total == 0:
        raise NumericalError("state norm vanished")
    odd = 0.5 * (amplitudes - amplitudes[::-1])
    return float(np.vdot(odd, odd).real) / total


def parity_tag(amplitudes: np.ndarray) -> str:
    weight = odd_parity_weight(amplitudes)
    if weight < _PARITY_TOL:
        return "even"
    if weight > 1.0 - _PARITY_TOL:
        return "odd"
    return "mixed"


def ferromagnetic_weight(amplitudes: np.ndarray) -> float:
    """Intrinsic probability of the span of the all-up and all-down states."""
    total = float(np.vdot(amplitudes, amplitudes).real)
    if total == 0:
        raise NumericalError("state norm vanished")
    return (abs(amplitudes[0]) ** 2 + abs(amplitudes[-1]) ** 2) / total


def _lowest_real_part_state(hamiltonian: sparse.csr_matrix) -> np.ndarray:
    dim = hamiltonian.shape[0]
    if dim <= _DENSE_EIG_LIMIT:
        values, vectors = np.linalg.eig(hamiltonian.toarray())
    else:
        values, vectors = sparse_linalg.eigs(hamiltonian, k=2, which="SR")
    order = np.argsort(values.real)
    if values.size > 1 and abs(values[order[1]] - values[order[0]]) < _DEGENERACY_GAP:
        LOGGER.warning(
            "initial eigenvalue is degenerate to %.1e; the prepared state is not unique",
            abs(values[order[1]] - values[order[0]]),
        )
    return vectors[:, order[0]]


def initial_dense_state(params: ChainParams, operators: ChainOperators | None = None) -> np.ndarray:
    """Eigenvector of H(0) with the smallest real energy inside the even sector."""
    operators = operators or chain_operators(params.N, params.J)
    basis = _even_sector_basis(params.N)
    hamiltonian = operators.hamiltonian(schedule(0.0, params))
    reduced = (basis.conj().T @ hamiltonian @ basis).tocsr()
    vector = basis @ _lowest_real_part_state(reduced)
    return vector / np.linalg.norm(vector)


def evolve_dense(
    params: ChainParams,
    config: IntegratorConfig | None = None,
    *,
    initial: np.ndarray | None = None,
) -> list[DenseState]:
    """
    Integrate i d/dt psi = H(t) psi over [0, tau] on ``dense_output_samples`` times.

    The state is renormalized after each sampling interval; the removed growth is
    kept in ``log_scale``.
    """
    config = config or IntegratorConfig()
    operators = chain_operators(params.N, params.J)
    psi = initial_dense_state(params, operators) if initial is None else np.asarray(initial, dtype=complex)
    if psi.shape != (2**params.N,):
        raise ParameterError(f"initial state must have length 2^N = {2**params.N}")

    transverse, coupling = operators.transverse, operators.coupling
    half_j = 0.5 * params.J

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        g_tilde = schedule(t, params)
        shift = -half_j * params.N * g_tilde.imag
        return 1j * half_j * (g_tilde * (transverse @ y) + coupling @ y) + shift * y

    times = np.linspace(0.0, params.tau, config.dense_output_samples)
    max_step = config.step_limit(params.tau)
    states = [DenseState(t=0.0, amplitudes=psi.copy(), N=params.N, parity=parity_tag(psi))]
    log_scale = 0.0
    for start, stop in zip(times[:-1], times[1:]):
        result = solve_ivp(
            rhs,
            (float(start), float(stop)),
            psi,
            method=config.method,
            rtol=config.rel_tol,
            atol=config.abs_tol,
            max_step=max_step,
        )
        if not result.success:
            raise NumericalError(f"dense integration failed: {result.message}", location=f"t={result.t[-1]}")
        psi = result.y[:, -1]
        size = float(np.linalg.norm(psi))
        if size == 0 or not math.isfinite(size):
            raise NumericalError("dense state norm left floating-point range", location=f"t={stop}")
        psi = psi / size
        log_scale += math.log(size)
        states.append(
            DenseState(
                t=float(stop),
                amplitudes=psi.copy(),
                N=params.N,
                parity=parity_tag(psi),
                log_scale=log_scale,
            )
        )
    return states


def mode_spectrum(g_tilde: complex, params: ChainParams) -> np.ndarray:
    """
    Energies of every even-quasiparticle state built from the mode pairs.

    A pair contributes -eps_k (empty), +eps_k (both filled) or 0 (one filled).
    """
    g_tilde = complex(g_tilde)
    shift = -0.5j * params.J * params.N * g_tilde.imag
    energies = []
    for p in range(1, params.mode_count + 1):
        phi = mode_angle(p, params.N)
        energies.append(params.J * np.sqrt(g_tilde**2 - 2.0 * g_tilde * math.cos(phi) + 1.0))
    levels: list[complex] = []
    for occupation in itertools.product(((0, 0), (1, 0), (0, 1), (1, 1)), repeat=params.mode_count):
        if sum(sum(pair) for pair in occupation) % 2:
            continue
        levels.append(shift + sum(eps * (sum(pair) - 1) for eps, pair in zip(energies, occupation)))
    return np.array(levels, dtype=complex)


def spectrum_check(g_tilde: complex, params: ChainParams) -> float:
    """Largest distance between matched dense even-sector and mode-pair eigenvalues."""
    basis = _even_sector_basis(params.N)
    reduced = (basis.conj().T @ build_hamiltonian(g_tilde, params) @ basis).toarray()
    dense = np.linalg.eigvals(reduced)
    modes = mode_spectrum(g_tilde, params)
    if dense.size != modes.size:
        raise NumericalError(f"sector sizes differ: {dense.size} dense vs {modes.size} mode levels")
    distance = np.abs(dense[:, None] - modes[None, :])
    rows, cols = linear_sum_assignment(distance)
    return float(distance[rows, cols].max())


def mode_product_pgs(
    params: ChainParams,
    config: IntegratorConfig | None = None,
    engine: str = "tdse",
) -> float:
    """Product of per-mode probabilities for the start the dense evolution prepares."""
    values = per_mode_pgs(params, engine, InitialState.INSTANTANEOUS, config)
    return pgs_total(values).value


@dataclass(frozen=True, slots=True)
class OracleReport:
    params: ChainParams
    dense_pgs: float
    mode_pgs: float
    difference: float
    max_odd_weight: float
    norm_drift: float | None
    spectrum_error: float


def oracle_check(
    params: ChainParams,
    config: IntegratorConfig | None = None,
    engine: str = "tdse",
) -> OracleReport:
    """Compare the dense evolution with the mode-product probability."""
    states = evolve_dense(params, config)
    final = states[-1].amplitudes
    dense_pgs = ferromagnetic_weight(final)
    mode_pgs = mode_product_pgs(params, config, engine)
    norm_drift = None
    if params.delta == 0:
        norm_drift = max(abs(state.norm_squared - 1.0) for state in states)
    report = OracleReport(
        params=params,
        dense_pgs=dense_pgs,
        mode_pgs=mode_pgs,
        difference=abs(dense_pgs - mode_pgs),
        max_odd_weight=max(odd_parity_weight(state.amplitudes) for state in states),
        norm_drift=norm_drift,
        spectrum_error=spectrum_check(schedule(0.0, params), params),
    )
    LOGGER.info(
        "oracle N=%d delta=%s tau=%s: dense=%.10f modes=%.10f diff=%.2e",
        params.N,
        params.delta,
        params.tau,
        dense_pgs,
        mode_pgs,
        report.difference,
    )
    return report
