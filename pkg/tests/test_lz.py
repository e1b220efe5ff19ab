from __future__ import annotations

import math

import numpy as np
import pytest

from nhqa.errors import ParameterError
from nhqa.lz import (
    InitialState,
    adiabatic_projection,
    adjoint_amplitudes,
    complex_time,
    exact_amplitudes,
    ground_state_probability_longwave_bound,
    initial_vector,
    lz_context,
    pgs_at,
    pgs_at_end,
    prob_flip,
    prob_longwave_asympt,
    prob_longwave_exact_asympt,
    prob_pi_half,
    sample_exact,
    surviving_digits,
)
from nhqa.model import ChainParams, ModeContext, instantaneous_basis, landau_zener_exponent, mode_context

REFERENCE = ChainParams(J=0.5, g=10.0, delta=0.0, tau=1e3, N=1024)
SMALL = ChainParams(J=0.5, g=10.0, delta=0.0, tau=100.0, N=64)


def _half_pi_mode(params: ChainParams) -> ModeContext:
    phi = 0.5 * math.pi
    return ModeContext(p=0, phi=phi, nu=landau_zener_exponent(phi, params), gamma=params.gamma)


def test_complex_time_is_frozen_after_ramp() -> None:
    at_end = complex_time(REFERENCE.tau, 0.3, REFERENCE)
    assert complex_time(REFERENCE.tau + 10.0, 0.3, REFERENCE) == at_end
    with pytest.raises(ParameterError):
        complex_time(-1.0, 0.3, REFERENCE)


def test_complex_time_at_start_is_large() -> None:
    assert abs(complex_time(0.0, 0.1, REFERENCE)) == pytest.approx(10.0 * (10.0 - math.cos(0.1)), rel=1e-12)


@pytest.mark.parametrize("delta", [0.0, 0.5])
def test_half_pi_mode_is_close_to_one_half(delta: float) -> None:
    params = REFERENCE.with_updates(delta=delta)
    assert prob_pi_half(params) == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("delta", [0.0, 0.5])
def test_half_pi_closed_form_matches_exact_solution(delta: float) -> None:
    params = REFERENCE.with_updates(delta=delta)
    ctx = lz_context(_half_pi_mode(params), params, InitialState.DRESSED)
    state = exact_amplitudes(ctx, params.tau)
    assert prob_flip(state.u, state.v) == pytest.approx(prob_pi_half(params), abs=1e-6)


def test_diabatic_start_is_reproduced_at_time_zero() -> None:
    params = SMALL.with_updates(delta=0.5)
    ctx = lz_context(mode_context(3, params), params, InitialState.DIABATIC)
    state = exact_amplitudes(ctx, 0.0)
    scale = math.exp(state.log_scale)
    assert state.u * scale == pytest.approx(1.0, abs=1e-9)
    assert state.v * scale == pytest.approx(0.0, abs=1e-9)


def test_instantaneous_start_has_unit_ground_probability() -> None:
    params = SMALL.with_updates(delta=0.5)
    ctx = lz_context(mode_context(5, params), params, InitialState.INSTANTANEOUS)
    assert pgs_at(ctx, 0.0) == pytest.approx(1.0, abs=1e-9)
    expected = instantaneous_basis(ctx.mode.phi, complex(params.g, params.delta)).ground
    assert np.allclose(initial_vector(ctx.mode, params, InitialState.INSTANTANEOUS), expected)


def test_dressed_start_has_no_growing_component() -> None:
    params = SMALL.with_updates(delta=0.5)
    ctx = lz_context(mode_context(2, params), params, InitialState.DRESSED)
    assert ctx.A_k == 0
    assert ctx.psi0[0] == 1
    assert abs(ctx.psi0[1]) == pytest.approx(ctx.start_mismatch)


@pytest.mark.parametrize("initial_state", list(InitialState))
def test_biorthogonal_product_is_conserved(initial_state: InitialState) -> None:
    params = SMALL.with_updates(delta=0.5)
    ctx = lz_context(mode_context(4, params), params, initial_state)
    for t in (0.0, 37.0, 80.0, params.tau):
        state = adjoint_amplitudes(ctx, t)
        assert state.biorthogonal_product == pytest.approx(1.0, abs=1e-8)


def test_hermitian_adjoint_is_complex_conjugate() -> None:
    ctx = lz_context(mode_context(6, SMALL), SMALL, InitialState.DIABATIC)
    state = adjoint_amplitudes(ctx, 55.0)
    assert state.utilde == pytest.approx(state.u.conjugate(), abs=1e-9)
    assert state.vtilde == pytest.approx(state.v.conjugate(), abs=1e-9)


def test_hermitian_norm_is_conserved() -> None:
    ctx = lz_context(mode_context(6, SMALL), SMALL, InitialState.DIABATIC)
    states = sample_exact(ctx, np.linspace(0.0, SMALL.tau, 11))
    for state in states:
        assert state.norm_squared == pytest.approx(1.0, abs=1e-9)


def test_tiny_dissipation_matches_hermitian_case() -> None:
    hermitian = lz_context(mode_context(4, SMALL), SMALL, InitialState.DIABATIC)
    params = SMALL.with_updates(delta=1e-9)
    damped = lz_context(mode_context(4, params), params, InitialState.DIABATIC)
    assert pgs_at_end(damped) == pytest.approx(pgs_at_end(hermitian), abs=1e-6)


def test_sample_exact_reports_progress() -> None:
    ctx = lz_context(mode_context(2, SMALL), SMALL)
    seen: list[tuple[int, int]] = []
    states = sample_exact(ctx, np.array([0.0, 50.0, 100.0]), on_progress=lambda i, n: seen.append((i, n)))
    assert [state.t for state in states] == [0.0, 50.0, 100.0]
    assert seen == [(1, 3), (2, 3), (3, 3)]


def test_exact_solution_rejects_times_outside_ramp() -> None:
    ctx = lz_context(mode_context(2, SMALL), SMALL)
    with pytest.raises(ParameterError):
        exact_amplitudes(ctx, SMALL.tau + 1.0)


@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_long_wavelength_modes_reduce_to_landau_zener(p: int) -> None:
    mode = mode_context(p, REFERENCE)
    ctx = lz_context(mode, REFERENCE, InitialState.DRESSED)
    expected = -math.expm1(-math.pi * REFERENCE.J * REFERENCE.tau * math.sin(mode.phi) ** 2 / REFERENCE.g)
    assert pgs_at_end(ctx) == pytest.approx(expected, abs=2e-3)


def test_first_mode_long_wave_values() -> None:
    hermitian = prob_longwave_asympt(mode_context(1, REFERENCE), REFERENCE)
    assert hermitian.valid
    assert hermitian.value == pytest.approx(1.4776e-3, rel=1e-3)

    damped_params = REFERENCE.with_updates(delta=0.5)
    damped = prob_longwave_asympt(mode_context(1, damped_params), damped_params)
    assert damped.value == pytest.approx(0.1801, rel=1e-3)


def test_exact_asymptotic_form_agrees_with_small_delta_form() -> None:
    params = REFERENCE.with_updates(delta=0.5)
    mode = mode_context(1, params)
    simple = prob_longwave_asympt(mode, params).value
    full = prob_longwave_exact_asympt(mode, params).value
    assert full == pytest.approx(simple, rel=5e-2)


def test_first_mode_exact_solution_matches_long_wave_form() -> None:
    params = REFERENCE.with_updates(delta=0.5)
    mode = mode_context(1, params)
    ctx = lz_context(mode, params, InitialState.DRESSED)
    assert pgs_at_end(ctx) == pytest.approx(prob_longwave_exact_asympt(mode, params).value, rel=5e-2)


def test_long_wave_window_flag() -> None:
    assert not prob_longwave_asympt(mode_context(200, REFERENCE), REFERENCE).valid


def test_projection_at_end_uses_zero_field_basis() -> None:
    ctx = lz_context(mode_context(1, SMALL), SMALL, InitialState.DRESSED)
    alpha, beta = adiabatic_projection(ctx, SMALL.tau)
    state = exact_amplitudes(ctx, SMALL.tau)
    half = 0.5 * ctx.mode.phi
    assert alpha == pytest.approx(math.sin(half) * state.u - math.cos(half) * state.v)
    assert abs(alpha) ** 2 + abs(beta) ** 2 == pytest.approx(state.norm_squared, rel=1e-9)


def test_ground_probability_bound_vanishes_for_small_angle() -> None:
    assert ground_state_probability_longwave_bound(0.3, 0.0) == 0.0
    assert ground_state_probability_longwave_bound(0.3, 0.2) > 0.0


def test_surviving_digits_follow_weber_tolerance() -> None:
    assert surviving_digits(1e-10) == 15
    assert surviving_digits(1e-14) == 19
    with pytest.raises(ParameterError):
        surviving_digits(0.0)
    ctx = lz_context(mode_context(4, SMALL), SMALL, rel_tol=1e-14)
    assert ctx.surviving_digits == 19
    assert ctx.digits >= 29
