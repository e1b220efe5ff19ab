from __future__ import annotations

import numpy as np
import pytest
from scipy.sparse import linalg as sparse_linalg

from nhqa.errors import ParameterError
from nhqa.model import ChainParams, schedule
from nhqa.oracle import (
    build_hamiltonian,
    evolve_dense,
    ferromagnetic_weight,
    initial_dense_state,
    mode_product_pgs,
    mode_spectrum,
    odd_parity_weight,
    oracle_check,
    parity_operator,
    parity_tag,
    spectrum_check,
)
from nhqa.tdse import IntegratorConfig

CHAIN = ChainParams(J=0.5, g=10.0, delta=0.0, tau=50.0, N=4)


def test_dense_size_is_limited() -> None:
    params = CHAIN.with_updates(N=14)
    with pytest.raises(ParameterError):
        build_hamiltonian(1.0, params)


def test_zero_field_hamiltonian_is_diagonal_ising() -> None:
    hamiltonian = build_hamiltonian(0.0, CHAIN)
    dense = hamiltonian.toarray()
    assert np.count_nonzero(dense - np.diag(np.diag(dense))) == 0
    assert np.diag(dense).real.min() == pytest.approx(-CHAIN.J * CHAIN.N / 2)
    assert dense[0, 0] == pytest.approx(-CHAIN.J * CHAIN.N / 2)


def test_hamiltonian_is_hermitian_only_without_dissipation() -> None:
    real = build_hamiltonian(3.0, CHAIN)
    assert sparse_linalg.norm(real - real.conj().T) == 0
    damped = build_hamiltonian(complex(3.0, 0.4), CHAIN)
    assert sparse_linalg.norm(damped - damped.conj().T) > 0


def test_parity_commutes_with_hamiltonian() -> None:
    hamiltonian = build_hamiltonian(complex(2.0, 0.3), CHAIN)
    parity = parity_operator(CHAIN.N)
    assert sparse_linalg.norm(parity @ hamiltonian - hamiltonian @ parity) < 1e-12


@pytest.mark.parametrize("g_tilde", [complex(10.0, 0.5), complex(0.7, 0.3), complex(2.0, 0.0)])
def test_even_sector_spectrum_matches_mode_pairs(g_tilde: complex) -> None:
    assert spectrum_check(g_tilde, CHAIN) < 1e-8


def test_even_sector_spectrum_matches_for_six_spins() -> None:
    assert spectrum_check(complex(1.3, 0.2), CHAIN.with_updates(N=6)) < 1e-8


def test_mode_spectrum_counts_even_states() -> None:
    levels = mode_spectrum(1.0, CHAIN)
    assert levels.size == 2 ** (CHAIN.N - 1)
    ground = levels[np.argmin(levels.real)]
    expected = -2.0 * CHAIN.J * (np.sin(np.pi / 8) + np.sin(3 * np.pi / 8))
    assert ground == pytest.approx(expected, abs=1e-12)


def test_parity_tags() -> None:
    dim = 2**CHAIN.N
    even = np.zeros(dim, dtype=complex)
    even[0] = even[-1] = 1.0
    odd = np.zeros(dim, dtype=complex)
    odd[0], odd[-1] = 1.0, -1.0
    up = np.zeros(dim, dtype=complex)
    up[0] = 1.0
    assert parity_tag(even) == "even"
    assert parity_tag(odd) == "odd"
    assert parity_tag(up) == "mixed"
    assert odd_parity_weight(up) == pytest.approx(0.5)
    assert ferromagnetic_weight(even) == pytest.approx(1.0)


def test_initial_state_is_even_ground_state() -> None:
    params = CHAIN.with_updates(delta=0.5)
    psi = initial_dense_state(params)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert parity_tag(psi) == "even"
    hamiltonian = build_hamiltonian(schedule(0.0, params), params)
    energy = np.vdot(psi, hamiltonian @ psi)
    levels = mode_spectrum(schedule(0.0, params), params)
    assert energy == pytest.approx(levels[np.argmin(levels.real)], abs=1e-8)


def test_dense_evolution_keeps_parity_and_norm() -> None:
    states = evolve_dense(CHAIN, IntegratorConfig(dense_output_samples=11))
    assert len(states) == 11
    assert all(state.parity == "even" for state in states)
    assert max(abs(state.norm_squared - 1.0) for state in states) < 1e-8


def test_dense_evolution_rejects_wrong_initial_length() -> None:
    with pytest.raises(ParameterError):
        evolve_dense(CHAIN, initial=np.ones(3, dtype=complex))


@pytest.mark.parametrize("delta", [0.0, 0.5])
def test_dense_evolution_matches_mode_product(delta: float) -> None:
    report = oracle_check(CHAIN.with_updates(delta=delta))
    assert report.difference < 1e-6
    assert report.max_odd_weight < 1e-10
    assert report.spectrum_error < 1e-8
    if delta == 0:
        assert report.norm_drift is not None and report.norm_drift < 1e-8
    else:
        assert report.norm_drift is None


def test_six_spin_chain_matches_mode_product() -> None:
    params = ChainParams(J=0.5, g=5.0, delta=0.3, tau=30.0, N=6)
    report = oracle_check(params, IntegratorConfig(dense_output_samples=31))
    assert report.difference < 1e-6


def test_mode_product_with_exact_engine() -> None:
    params = CHAIN.with_updates(delta=0.2)
    direct = mode_product_pgs(params, engine="tdse")
    exact = mode_product_pgs(params, engine="lz-exact")
    assert exact == pytest.approx(direct, abs=1e-6)
