"""
Exact per-mode Landau-Zener dynamics and the closed-form probabilities.

The rotating-frame amplitudes (u, v) of one mode solve i d/dt (u, v) = M (u, v)
with M = J [[-(g~ - cos phi), sin phi], [sin phi, g~ - cos phi]]. In the complex
time z(t) the two columns

    sol1 = (D_{-i nu}(z), -sqrt(i nu) D_{-i nu - 1}(z))
    sol2 = (i sqrt(i nu) D_{i nu - 1}(iz), D_{i nu}(iz))

form a fundamental matrix with constant determinant exp(-pi nu / 2). A state is
psi(z) = B sol1(z) + A sol2(z); the adjoint solves i d/dt psi~ = -M psi~ and is
psi~(z) = Phi(z)^{-T} Phi(z0)^T psi~(0).
"""

from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy import special

from . import weber
from .constants import MIN_SURVIVING_DIGITS
from .errors import NumericalError, ParameterError
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

_LN10 = math.log(10.0)
_MAX_DIGIT_RETRIES = 3
_DOUBLE_SAFE_EXPONENT = 575.0


class InitialState(str, enum.Enum):
    """Prepared state of a mode at t = 0."""

    DIABATIC = "diabatic"
    INSTANTANEOUS = "instantaneous"
    DRESSED = "dressed"


@dataclass(frozen=True, slots=True)
class Estimate:
    """Asymptotic value with a flag telling whether it was used inside its window."""

    value: float
    valid: bool


@dataclass(frozen=True, slots=True)
class ModeState:
    """Mode amplitudes at time t; the true state is (u, v) * exp(log_scale)."""

    t: float
    u: complex
    v: complex
    utilde: complex | None = None
    vtilde: complex | None = None
    alpha: complex | None = None
    beta: complex | None = None
    log_scale: float = 0.0

    @property
    def norm_squared(self) -> float:
        weight = abs(self.u) ** 2 + abs(self.v) ** 2
        if weight == 0:
            return 0.0
        return math.exp(math.log(weight) + 2.0 * self.log_scale)

    @property
    def biorthogonal_product(self) -> complex:
        if self.utilde is None or self.vtilde is None:
            raise ParameterError("state carries no adjoint amplitudes")
        return self.utilde * self.u + self.vtilde * self.v


@dataclass(frozen=True, slots=True)
class LZContext:
    """Constants of the exact solution of one mode for one initial state."""

    mode: ModeContext
    params: ChainParams
    initial_state: InitialState
    z0: complex
    z_tau: complex
    sqrt_inu: complex
    B_k: mpmath.mpc
    A_k: mpmath.mpc
    Btilde_k: mpmath.mpc
    Atilde_k: mpmath.mpc
    wronskian: mpmath.mpc
    psi0: tuple[complex, complex]
    digits: int
    surviving_digits: int
    rel_tol: float
    start_mismatch: float
    a_k_negligible: bool
    a3_deviation: float

    @property
    def working_rel_tol(self) -> float:
        return 10.0 ** (-self.digits)


def _z_scale(params: ChainParams) -> complex:
    gamma = params.gamma
    if gamma == 0:
        raise ParameterError("complex time is undefined for a static schedule (g = delta = 0)")
    return cmath.exp(0.25j * math.pi) * cmath.sqrt(2.0 * params.J / gamma)


def complex_time(t: float, phi: float, params: ChainParams) -> complex:
    """z(t) = exp(i pi/4) sqrt(2J/gamma) (gamma (tau - t) - cos phi), frozen after tau."""
    if t < 0:
        raise ParameterError(f"time must be >= 0, got {t}")
    return _z_scale(params) * (schedule(t, params) - math.cos(phi))


def z_of_t(ctx: LZContext, t: float) -> complex:
    return complex_time(t, ctx.mode.phi, ctx.params)


def surviving_digits(rel_tol: float) -> int:
    """Digits that must remain after cancellation for a Weber tolerance of rel_tol."""
    if not 0 < rel_tol < 1:
        raise ParameterError(f"Weber rel_tol must lie in (0, 1), got {rel_tol}")
    return max(MIN_SURVIVING_DIGITS, math.ceil(-math.log10(rel_tol) - 1e-9) + 5)


def _default_digits(nu: complex, keep: int) -> int:
    return keep + 10 + int(math.pi * abs(nu) / (2.0 * _LN10))


def _fundamental(
    mp: mpmath.MPContext,
    nu: complex,
    sqrt_inu: complex,
    z: complex,
    rel_tol: float,
    *,
    second: bool = True,
) -> tuple[mpmath.mpc, mpmath.mpc, mpmath.mpc, mpmath.mpc]:
    """Entries (U1, V1, U2, V2) of the fundamental matrix at z; U2 = V2 = 0 when second is False."""
    root = mp.mpc(sqrt_inu)
    value, lower = weber.pcf_pair(-1j * nu, z, rel_tol=rel_tol)
    u1 = mp.mpc(value.value)
    v1 = -root * lower.value
    if not second:
        return u1, v1, mp.mpc(0), mp.mpc(0)
    upper, upper_lower = weber.pcf_pair(1j * nu, 1j * z, rel_tol=rel_tol)
    u2 = 1j * root * upper_lower.value
    v2 = mp.mpc(upper.value)
    return u1, v1, u2, v2


def initial_vector(
    mode: ModeContext,
    params: ChainParams,
    initial_state: InitialState = InitialState.DIABATIC,
) -> np.ndarray:
    """Rotating-frame (u, v) at t = 0 for the requested preparation."""
    initial_state = InitialState(initial_state)
    if initial_state is InitialState.DIABATIC:
        return np.array([1.0, 0.0], dtype=complex)
    if initial_state is InitialState.INSTANTANEOUS:
        return instantaneous_basis(mode.phi, schedule(0.0, params)).ground.copy()
    ctx = lz_context(mode, params, InitialState.DRESSED)
    return np.array(ctx.psi0, dtype=complex)


def lz_context(
    mode: ModeContext,
    params: ChainParams,
    initial_state: InitialState = InitialState.DIABATIC,
    *,
    digits: int | None = None,
    rel_tol: float = weber.DEFAULT_REL_TOL,
) -> LZContext:
    """
    Constants of the exact solution for one mode.

    ``digits`` sets the Weber working accuracy; the default covers the expected
    cancellation between the two solution columns plus the digits ``rel_tol``
    asks for, and evaluations that lose more than that are redone with a larger value.
    """
    initial_state = InitialState(initial_state)
    nu = complex(mode.nu)
    scale = _z_scale(params)
    z0 = complex_time(0.0, mode.phi, params)
    z_tau = scale * (-math.cos(mode.phi))
    sqrt_inu = cmath.sqrt(1j * nu)
    keep = surviving_digits(rel_tol)
    if digits is None:
        digits = _default_digits(nu, keep)
    working_tol = 10.0 ** (-digits)

    mp = weber.mp_context()
    with mp.workdps(digits + 10):
        u1, v1, u2, v2 = _fundamental(mp, nu, sqrt_inu, z0, working_tol)
        wronskian = mp.exp(-mp.pi * mp.mpc(nu) / 2)
        if u1 == 0:
            raise NumericalError("D_{-i nu}(z0) vanishes", location=f"z0={z0}")

        if initial_state is InitialState.DRESSED:
            ratio = v1 / u1
            psi0 = (1 + 0j, complex(ratio))
            b_k, a_k = 1 / u1, mp.mpc(0)
        else:
            psi0 = tuple(complex(c) for c in initial_vector(mode, params, initial_state))
            b_k = (v2 * psi0[0] - u2 * psi0[1]) / wronskian
            a_k = (-v1 * psi0[0] + u1 * psi0[1]) / wronskian

        weight = abs(psi0[0]) ** 2 + abs(psi0[1]) ** 2
        adjoint0 = (psi0[0].conjugate() / weight, psi0[1].conjugate() / weight)
        btilde = (u1 * adjoint0[0] + v1 * adjoint0[1]) / wronskian
        atilde = (u2 * adjoint0[0] + v2 * adjoint0[1]) / wronskian

        mismatch = float(abs(v1 / u1))
        zc = mp.mpc(z0)
        leading = mp.power(zc, -1j * mp.mpc(nu)) * mp.exp(-zc * zc / 4)
        a3_deviation = float(abs(leading / u1 - 1))

    negligible = abs(z0) >= 20.0 and mismatch < 0.1
    if abs(z0) >= 20.0 and not negligible:
        LOGGER.debug("second solution weight %.3e at |z0|=%.1f for p=%d", mismatch, abs(z0), mode.p)
    return LZContext(
        mode=mode,
        params=params,
        initial_state=initial_state,
        z0=z0,
        z_tau=z_tau,
        sqrt_inu=sqrt_inu,
        B_k=b_k,
        A_k=a_k,
        Btilde_k=btilde,
        Atilde_k=atilde,
        wronskian=wronskian,
        psi0=psi0,
        digits=digits,
        surviving_digits=keep,
        rel_tol=rel_tol,
        start_mismatch=mismatch,
        a_k_negligible=negligible,
        a3_deviation=a3_deviation,
    )


def _lost_digits(mp: mpmath.MPContext, parts: list[mpmath.mpc], size: mpmath.mpf) -> float:
    """Decimal digits cancelled when the parts are summed into a state of the given size."""
    peak = max(abs(part) for part in parts)
    if peak == 0:
        return 0.0
    if size == 0:
        return math.inf
    return max(0.0, float(mp.log10(peak / size)))


def _evaluate_state(ctx: LZContext, t: float, with_adjoint: bool) -> tuple[ModeState, float]:
    if not 0.0 <= t <= ctx.params.tau:
        raise ParameterError(f"exact solution covers 0 <= t <= tau, got t={t}")
    nu = complex(ctx.mode.nu)
    z = z_of_t(ctx, t)
    mp = weber.mp_context()
    with mp.workdps(ctx.digits + 10):
        need_second = with_adjoint or ctx.A_k != 0
        u1, v1, u2, v2 = _fundamental(mp, nu, ctx.sqrt_inu, z, ctx.working_rel_tol, second=need_second)
        forward_parts = [ctx.B_k * u1, ctx.A_k * u2, ctx.B_k * v1, ctx.A_k * v2]
        u = forward_parts[0] + forward_parts[1]
        v = forward_parts[2] + forward_parts[3]
        lost = _lost_digits(mp, forward_parts, max(abs(u), abs(v)))

        utilde = vtilde = None
        if with_adjoint:
            adjoint_parts = [ctx.Btilde_k * v2, -ctx.Atilde_k * v1, -ctx.Btilde_k * u2, ctx.Atilde_k * u1]
            utilde = adjoint_parts[0] + adjoint_parts[1]
            vtilde = adjoint_parts[2] + adjoint_parts[3]

        magnitude = max(abs(u), abs(v))
        log_scale = 0.0
        if magnitude != 0:
            exponent = float(mp.log(magnitude))
            if abs(exponent) > _DOUBLE_SAFE_EXPONENT:
                log_scale = exponent
                shrink = mp.exp(-exponent)
                u, v = u * shrink, v * shrink
                if with_adjoint:
                    utilde, vtilde = utilde / shrink, vtilde / shrink

        state = ModeState(
            t=t,
            u=complex(u),
            v=complex(v),
            utilde=None if utilde is None else complex(utilde),
            vtilde=None if vtilde is None else complex(vtilde),
            log_scale=log_scale,
        )
    return state, lost


def _with_surviving_digits(
    ctx: LZContext, t: float, with_adjoint: bool
) -> ModeState:
    current = ctx
    for _ in range(_MAX_DIGIT_RETRIES + 1):
        state, lost = _evaluate_state(current, t, with_adjoint)
        if current.digits - lost >= current.surviving_digits:
            return state
        LOGGER.debug(
            "p=%d t=%s lost %.1f of %d digits; recomputing constants",
            ctx.mode.p,
            t,
            lost,
            current.digits,
        )
        current = lz_context(
            ctx.mode,
            ctx.params,
            ctx.initial_state,
            digits=current.digits + int(math.ceil(lost)) + 10,
            rel_tol=current.rel_tol,
        )
    raise NumericalError(
        "cancellation between solution columns exceeds working precision",
        location=f"p={ctx.mode.p}, t={t}",
        achieved=float(current.digits - lost),
    )


def exact_amplitudes(ctx: LZContext, t: float) -> ModeState:
    """Forward amplitudes (u, v) of the exact solution at time t."""
    return _with_surviving_digits(ctx, t, with_adjoint=False)


def adjoint_amplitudes(ctx: LZContext, t: float) -> ModeState:
    """Forward and adjoint amplitudes at time t; utilde*u + vtilde*v = 1."""
    return _with_surviving_digits(ctx, t, with_adjoint=True)


def prob_flip(u: complex, v: complex) -> float:
    """Intrinsic probability |v|^2 / (|u|^2 + |v|^2) of the flipped diabatic level."""
    weight = abs(u) ** 2 + abs(v) ** 2
    if weight == 0:
        raise NumericalError("state norm vanished; flip probability undefined")
    return abs(v) ** 2 / weight


def _basis_at(ctx: LZContext, t: float) -> AdiabaticBasis:
    phi = ctx.mode.phi
    if t >= ctx.params.tau:
        return final_basis(phi)
    return instantaneous_basis(phi, schedule(t, ctx.params), tracked_gap_root(phi, t, ctx.params))


def adiabatic_projection(ctx: LZContext, t: float) -> tuple[complex, complex]:
    """
    Bi-orthogonal coordinates (alpha, beta) of the exact state at time t.

    Both carry the log_scale of the state at t. At t = tau the g~ = 0 eigenvectors
    are used, before it the instantaneous ones on the branch followed from t = 0.
    """
    state = exact_amplitudes(ctx, t)
    return project_adiabatic(state.u, state.v, _basis_at(ctx, t))


def pgs_at_end(ctx: LZContext) -> float:
    """Intrinsic ground-state probability of the mode at t = tau."""
    alpha, beta = adiabatic_projection(ctx, ctx.params.tau)
    return intrinsic_ground_probability(alpha, beta)


def pgs_at(ctx: LZContext, t: float) -> float:
    alpha, beta = adiabatic_projection(ctx, t)
    return intrinsic_ground_probability(alpha, beta)


def _longwave_valid(mode: ModeContext, params: ChainParams) -> bool:
    z_tau = abs(_z_scale(params)) * math.cos(mode.phi)
    return mode.phi < math.pi / 8 and z_tau >= 4.0


def first_mode_form(re_nu: float, re_z2: float) -> float:
    """(1 - e^{-2 pi Re nu}) / (1 - e^{-2 pi Re nu} + e^{-2 pi Re nu - Re z^2})."""
    flip = -math.expm1(-2.0 * math.pi * re_nu)
    return flip / (flip + math.exp(-2.0 * math.pi * re_nu - re_z2))


def prob_longwave_asympt(mode: ModeContext, params: ChainParams) -> Estimate:
    """Long-wavelength flip probability with Re nu and Re z^2(tau) in their small-delta forms."""
    valid = _longwave_valid(mode, params)
    if not valid:
        LOGGER.debug("long-wave formula used outside its window for p=%d", mode.p)
    J, g, tau = params.J, params.g, params.tau
    if params.delta == 0:
        return Estimate(-math.expm1(-math.pi * J * tau * math.sin(mode.phi) ** 2 / g), valid)
    re_nu = J * tau * math.sin(mode.phi) ** 2 / (2.0 * g)
    re_z2 = 2.0 * params.delta * J * tau * math.cos(mode.phi) ** 2 / g**2
    return Estimate(first_mode_form(re_nu, re_z2), valid)


def prob_longwave_exact_asympt(mode: ModeContext, params: ChainParams) -> Estimate:
    """Long-wavelength flip probability with the complex nu and z(tau) kept exactly."""
    valid = _longwave_valid(mode, params)
    nu = complex(mode.nu)
    if nu == 0:
        return Estimate(0.0, valid)
    z_tau = _z_scale(params) * (-math.cos(mode.phi))
    log_ratio = (
        2.0 * special.loggamma(1.0 + 1j * nu).real
        - math.log(2.0 * math.pi * abs(nu))
        - math.pi * nu.real
        - (z_tau * z_tau).real
    )
    if log_ratio > 700.0:
        return Estimate(0.0, valid)
    return Estimate(1.0 / (1.0 + math.exp(log_ratio)), valid)


def prob_pi_half(params: ChainParams) -> float:
    """Flip probability of the mode at phi = pi/2, where z(tau) = 0."""
    if params.gamma == 0:
        raise ParameterError("nu is undefined for a static schedule (g = delta = 0)")
    nu = params.J / (2.0 * params.gamma)
    if params.delta == 0:
        rate = math.tanh(0.5 * math.pi * nu.real)
        return rate / (1.0 + rate)
    log_ratio = (
        math.log(abs(nu) / 2.0)
        + 2.0 * special.loggamma(0.5j * nu).real
        - 2.0 * special.loggamma(0.5 + 0.5j * nu).real
    )
    return 1.0 / (1.0 + math.exp(log_ratio))


def ground_state_probability_longwave_bound(flip_probability: float, phi: float) -> float:
    """
    Largest possible |P_gs - P_flip| for a mode at angle phi.

    The g~ = 0 ground vector is rotated from the flipped diabatic level by phi/2,
    so the two probabilities differ by at most s^2 + 2 s sqrt(P (1 - P)), s = sin(phi/2).
    """
    s = math.sin(0.5 * phi)
    p = min(max(flip_probability, 0.0), 1.0)
    return s * s + 2.0 * s * math.sqrt(p * (1.0 - p))


def sample_exact(
    ctx: LZContext,
    times: np.ndarray,
    *,
    with_adjoint: bool = False,
    on_progress: Callable[[int, int], None] | None = None,
) -> list[ModeState]:
    """Exact states at each requested time, ascending order kept."""
    states: list[ModeState] = []
    total = len(times)
    for index, t in enumerate(times):
        evaluate = adjoint_amplitudes if with_adjoint else exact_amplitudes
        state = evaluate(ctx, float(t))
        states.append(state)
        if on_progress is not None:
            on_progress(index + 1, total)
    return states
