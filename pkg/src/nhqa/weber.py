"""
Parabolic cylinder functions D_p(z) for complex order and complex argument.

D_p solves y'' = (z^2/4 - p - 1/2) y and decays along the positive real axis.
All arithmetic runs in mpmath at a working precision sized from the expected
growth of the solution; every result is computed twice, ten digits apart, and
the difference is reported as the error estimate.

Method cover:
- |z| <= SERIES_RADIUS: Taylor series about the origin.
- SERIES_RADIUS < |z| < ASYMPTOTIC_RADIUS: Taylor re-expansion along the ray 0 -> z.
- |z| >= ASYMPTOTIC_RADIUS: large-argument expansion, one exponential for
  |arg z| <= pi/2, two exponentials beyond; rejected in favour of the ray
  continuation when the least term is not small enough.
"""

from __future__ import annotations

import enum
import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable

import mpmath

from .constants import ASYMPTOTIC_RADIUS, LARGE_ORDER_MIN_NU, SERIES_RADIUS
from .errors import DomainError, NumericalError

LOGGER = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10
LARGE_ORDER_ERROR_CONSTANT = 1.0

_CHECK_DIGITS = 10
_MAX_ESCALATIONS = 5
_MAX_TAYLOR_TERMS = 4000
_MAX_ASYMPTOTIC_TERMS = 400
_LN10 = math.log(10.0)

_local = threading.local()


class Method(str, enum.Enum):
    SERIES = "series"
    ODE_CONTINUATION = "ode_continuation"
    ASYMPT_LARGE_ARG = "asympt_large_arg"
    ASYMPT_LARGE_ORDER = "asympt_large_order"


class Sector(str, enum.Enum):
    """Phase sector of the argument for the large-argument expansion."""

    PRINCIPAL = "principal"
    UPPER = "upper"
    LOWER = "lower"


def sector_of(z: complex) -> Sector:
    phase = math.atan2(complex(z).imag, complex(z).real)
    if abs(phase) <= 0.5 * math.pi:
        return Sector.PRINCIPAL
    return Sector.UPPER if phase > 0 else Sector.LOWER


def mp_context() -> mpmath.MPContext:
    """Thread-local mpmath context; the module-level one keeps precision in shared state."""
    ctx = getattr(_local, "ctx", None)
    if ctx is None:
        ctx = mpmath.MPContext()
        _local.ctx = ctx
    return ctx


@dataclass(frozen=True, slots=True)
class WeberEval:
    """One value of D_p(z) with the estimate of its absolute error."""

    value: mpmath.mpc
    abs_err_est: mpmath.mpf
    method: Method
    sector: Sector
    dps: int

    @property
    def rel_err_est(self) -> float:
        magnitude = abs(self.value)
        if magnitude == 0:
            return 0.0 if self.abs_err_est == 0 else math.inf
        return float(self.abs_err_est / magnitude)

    def scaled(self) -> tuple[complex, float]:
        """(mantissa, exponent) with value = mantissa * exp(exponent) and |mantissa| = 1."""
        magnitude = abs(self.value)
        if magnitude == 0:
            return 0j, 0.0
        return complex(self.value / magnitude), float(mpmath.log(magnitude))

    def as_complex(self) -> complex:
        mantissa, exponent = self.scaled()
        if mantissa == 0:
            return 0j
        if exponent > 709.0 or exponent < -745.0:
            raise NumericalError(
                "Weber value leaves double range; use scaled()",
                achieved=exponent,
            )
        return complex(self.value)


def _target_digits(rel_tol: float) -> int:
    if not 0 < rel_tol < 1:
        raise DomainError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    return max(15, int(math.ceil(-math.log10(rel_tol))) + 3)


def _guard_digits(p: complex, z: complex) -> int:
    growth = (
        abs((z * z).real) / 2.0
        + math.pi * abs(p.imag) / 2.0
        + math.sqrt(abs(p) + 0.5) * min(abs(z), SERIES_RADIUS)
    )
    return int(growth / _LN10) + 5


def _zero_values(ctx: mpmath.MPContext, p: mpmath.mpc) -> tuple[mpmath.mpc, mpmath.mpc]:
    root_pi = ctx.sqrt(ctx.pi)
    value = ctx.power(2, p / 2) * root_pi * ctx.rgamma((1 - p) / 2)
    slope = -ctx.power(2, (p + 1) / 2) * root_pi * ctx.rgamma(-p / 2)
    return value, slope


def _taylor_step(
    ctx: mpmath.MPContext,
    p: mpmath.mpc,
    center: mpmath.mpc,
    y: mpmath.mpc,
    dy: mpmath.mpc,
    h: mpmath.mpc,
) -> tuple[mpmath.mpc, mpmath.mpc]:
    """Advance (y, y') from center to center + h with the local Taylor series."""
    if h == 0:
        return y, dy
    eps = ctx.eps
    q0 = center * center / 4 - p - ctx.mpf(1) / 2
    half_c = center / 2
    h2 = h * h
    # Coefficients are stored already multiplied by h^k.
    terms = [y, dy * h]
    total = terms[0] + terms[1]
    total_slope = terms[1]
    for k in range(_MAX_TAYLOR_TERMS):
        nxt = q0 * terms[k]
        if k >= 1:
            nxt += half_c * h * terms[k - 1]
        if k >= 2:
            nxt += h2 * terms[k - 2] / 4
        nxt *= h2 / ((k + 2) * (k + 1))
        terms.append(nxt)
        total += nxt
        total_slope += (k + 2) * nxt
        scale = max(abs(total), abs(total_slope))
        if k >= 2 and max(abs(terms[-1]), abs(terms[-2]), abs(terms[-3])) <= eps * scale:
            return total, total_slope / h
        if scale == 0 and all(term == 0 for term in terms[-3:]):
            return total, total_slope / h
    raise NumericalError(
        "Taylor series of the Weber equation did not converge",
        location=f"center={complex(center)}, h={complex(h)}",
    )


def _continue_along_ray(
    ctx: mpmath.MPContext, p: mpmath.mpc, z: mpmath.mpc, method: Method | None = None
) -> tuple[mpmath.mpc, mpmath.mpc]:
    y, dy = _zero_values(ctx, p)
    distance = abs(z)
    if distance == 0:
        return y, dy
    if method is Method.SERIES or (method is None and distance <= SERIES_RADIUS):
        return _taylor_step(ctx, p, ctx.mpc(0), y, dy, z)

    direction = z / distance
    position = ctx.mpf(0)
    while position < distance:
        center = direction * position
        q = abs(center * center / 4 - p - ctx.mpf(1) / 2)
        step = ctx.mpf(1) if q <= 4 else min(ctx.mpf(1), 2 / ctx.sqrt(q))
        step = min(step, distance - position)
        y, dy = _taylor_step(ctx, p, center, y, dy, direction * step)
        position += step
    return y, dy


def _asymptotic_sum(
    ctx: mpmath.MPContext,
    factor: Callable[[int], mpmath.mpc],
    z2: mpmath.mpc,
) -> tuple[mpmath.mpc, mpmath.mpf]:
    """Sum 1 + t_1 + ... with t_{s+1} = t_s factor(s) / (2 (s+1) z^2); returns (sum, least term)."""
    term = ctx.mpc(1)
    total = ctx.mpc(1)
    least = ctx.mpf(1)
    for s in range(_MAX_ASYMPTOTIC_TERMS):
        nxt = term * factor(s) / (2 * (s + 1) * z2)
        size = abs(nxt)
        if size == 0:
            return total, ctx.mpf(0)
        if size > abs(term):
            return total, abs(term)
        total += nxt
        term = nxt
        least = size
        if size <= ctx.eps * abs(total):
            return total, size
    return total, least


def _large_argument(
    ctx: mpmath.MPContext, p: mpmath.mpc, z: mpmath.mpc, sector: Sector
) -> tuple[mpmath.mpc, mpmath.mpf]:
    z2 = z * z
    lead = ctx.power(z, p) * ctx.exp(-z2 / 4)
    first, least_first = _asymptotic_sum(
        ctx, lambda s: -(p - 2 * s) * (p - 2 * s - 1), z2
    )
    value = lead * first
    truncation = abs(lead) * least_first
    if sector is not Sector.PRINCIPAL:
        turn = 1 if sector is Sector.UPPER else -1
        coefficient = -ctx.sqrt(2 * ctx.pi) * ctx.rgamma(-p) * ctx.expjpi(turn * p)
        second_lead = coefficient * ctx.power(z, -p - 1) * ctx.exp(z2 / 4)
        second, least_second = _asymptotic_sum(
            ctx, lambda s: (p + 2 * s + 1) * (p + 2 * s + 2), z2
        )
        value += second_lead * second
        truncation += abs(second_lead) * least_second
    return value, truncation


def _two_pass(
    ctx: mpmath.MPContext,
    compute: Callable[[], tuple[mpmath.mpc, ...]],
    dps: int,
    rel_tol: float,
    location: str,
) -> tuple[tuple[mpmath.mpc, ...], list[mpmath.mpf], int]:
    for _ in range(_MAX_ESCALATIONS):
        with ctx.workdps(dps):
            coarse = compute()
        with ctx.workdps(dps + _CHECK_DIGITS):
            fine = compute()
            errors = [abs(f - c) for f, c in zip(fine, coarse)]
        shortfall = 0.0
        for value, error in zip(fine, errors):
            if error == 0 or error <= rel_tol * abs(value):
                continue
            if value == 0:
                shortfall = max(shortfall, float(_CHECK_DIGITS))
            else:
                shortfall = max(shortfall, float(ctx.log10(error / (rel_tol * abs(value)))))
        if shortfall == 0.0:
            return fine, errors, dps + _CHECK_DIGITS
        LOGGER.debug("raising Weber precision from %d digits at %s", dps, location)
        dps += int(math.ceil(shortfall)) + _CHECK_DIGITS
    LOGGER.warning("Weber evaluation missed rel_tol=%.1e at %s", rel_tol, location)
    return fine, errors, dps + _CHECK_DIGITS


def _evaluate(
    p: complex,
    z: complex,
    rel_tol: float,
    *,
    with_companion: bool,
    method: Method | None = None,
) -> tuple[WeberEval, WeberEval | None]:
    """D_p(z) and, on request, D_{p-1}(z) from the same expansion where possible."""
    if method is Method.ASYMPT_LARGE_ORDER:
        raise DomainError("the large-order form is evaluated by pcf_large_order")
    ctx = mp_context()
    p_c, z_c = complex(p), complex(z)
    sector = sector_of(z_c)
    digits = _target_digits(rel_tol)
    location = f"p={p_c}, z={z_c}"

    forced = method is not None
    if method is Method.ASYMPT_LARGE_ARG or (not forced and abs(z_c) >= ASYMPTOTIC_RADIUS):
        truncation: dict[int, mpmath.mpf] = {}

        def asymptotic() -> tuple[mpmath.mpc, ...]:
            order = ctx.mpc(p_c)
            arg = ctx.mpc(z_c)
            value, trunc = _large_argument(ctx, order, arg, sector)
            truncation[0] = trunc
            if not with_companion:
                return (value,)
            companion, trunc_companion = _large_argument(ctx, order - 1, arg, sector)
            truncation[1] = trunc_companion
            return value, companion

        dps = digits + int(abs((z_c * z_c).real) / 2.0 / _LN10) + 5
        values, errors, used = _two_pass(ctx, asymptotic, dps, rel_tol, location)
        total = [errors[i] + truncation[i] for i in range(len(values))]
        if forced or all(err <= 0.1 * rel_tol * abs(val) for val, err in zip(values, total)):
            evals = [
                WeberEval(val, err, Method.ASYMPT_LARGE_ARG, sector, used)
                for val, err in zip(values, total)
            ]
            return evals[0], (evals[1] if with_companion else None)
        LOGGER.debug("large-argument expansion too coarse at %s; continuing along the ray", location)

    if method is None:
        method = Method.SERIES if abs(z_c) <= SERIES_RADIUS else Method.ODE_CONTINUATION
    divide = with_companion and p_c != 0

    def along_ray() -> tuple[mpmath.mpc, ...]:
        order = ctx.mpc(p_c)
        arg = ctx.mpc(z_c)
        value, slope = _continue_along_ray(ctx, order, arg, method)
        if not with_companion:
            return (value,)
        if divide:
            return value, (slope + arg * value / 2) / order
        companion, _ = _continue_along_ray(ctx, order - 1, arg, method)
        return value, companion

    dps = digits + _guard_digits(p_c, z_c)
    if divide:
        dps += max(0, int(-math.log10(abs(p_c))))
    values, errors, used = _two_pass(ctx, along_ray, dps, rel_tol, location)
    evals = [WeberEval(val, err, method, sector, used) for val, err in zip(values, errors)]
    return evals[0], (evals[1] if with_companion else None)


def pcf(
    p: complex, z: complex, *, rel_tol: float = DEFAULT_REL_TOL, method: Method | None = None
) -> WeberEval:
    """
    D_p(z) for complex order p and complex argument z.

    ``method`` pins one expansion instead of choosing by |z|; the large-argument
    expansion is then returned even when its least term misses ``rel_tol``.
    """
    value, _ = _evaluate(p, z, rel_tol, with_companion=False, method=method)
    return value


def pcf_pair(p: complex, z: complex, *, rel_tol: float = DEFAULT_REL_TOL) -> tuple[WeberEval, WeberEval]:
    """(D_p(z), D_{p-1}(z)); for the Landau-Zener order use p = -i nu."""
    value, companion = _evaluate(p, z, rel_tol, with_companion=True)
    assert companion is not None
    return value, companion


def _slope_from_pair(
    ctx: mpmath.MPContext, p: complex, z: complex, value: mpmath.mpc, companion: mpmath.mpc
) -> mpmath.mpc:
    return -ctx.mpc(z) * value / 2 + ctx.mpc(p) * companion


def pcf_derivative(p: complex, z: complex, *, rel_tol: float = DEFAULT_REL_TOL) -> WeberEval:
    """D_p'(z) = -(z/2) D_p(z) + p D_{p-1}(z)."""
    p, z = complex(p), complex(z)
    value, companion = pcf_pair(p, z, rel_tol=rel_tol)
    ctx = mp_context()
    with ctx.workdps(value.dps):
        slope = _slope_from_pair(ctx, p, z, value.value, companion.value)
        error = abs(z) * value.abs_err_est / 2 + abs(p) * companion.abs_err_est
    return WeberEval(slope, error, value.method, value.sector, value.dps)


def weber_zero_values(p: complex) -> tuple[complex, complex]:
    """(D_p(0), D_p'(0)) from the Gamma-function closed forms."""
    ctx = mp_context()
    with ctx.workdps(30):
        value, slope = _zero_values(ctx, ctx.mpc(complex(p)))
        return complex(value), complex(slope)


def recurrence_residual(p: complex, z: complex, *, rel_tol: float = 1e-13) -> float:
    """|D_{p+1} - z D_p + p D_{p-1}| relative to the largest term, from independent evaluations."""
    p, z = complex(p), complex(z)
    upper = pcf(p + 1, z, rel_tol=rel_tol)
    middle = pcf(p, z, rel_tol=rel_tol)
    lower = pcf(p - 1, z, rel_tol=rel_tol)
    ctx = mp_context()
    with ctx.workdps(max(upper.dps, middle.dps, lower.dps)):
        terms = (upper.value, -ctx.mpc(z) * middle.value, ctx.mpc(p) * lower.value)
        scale = max(abs(term) for term in terms)
        if scale == 0:
            return 0.0
        return float(abs(terms[0] + terms[1] + terms[2]) / scale)


def identity_residual(nu: complex, z: complex, *, rel_tol: float = 1e-14) -> float:
    """
    Residual of D_{-i nu}(z) D_{i nu}(iz) - nu D_{-i nu-1}(z) D_{i nu-1}(iz) = exp(-pi nu / 2).

    Scaled by the largest of the two products and the right-hand side.
    """
    nu, z = complex(nu), complex(z)
    first, first_lower = pcf_pair(-1j * nu, z, rel_tol=rel_tol)
    second_upper, second = pcf_pair(1j * nu, 1j * z, rel_tol=rel_tol)
    ctx = mp_context()
    with ctx.workdps(max(first.dps, second.dps)):
        order = ctx.mpc(nu)
        product = first.value * second_upper.value
        cross = order * first_lower.value * second.value
        expected = ctx.exp(-ctx.pi * order / 2)
        scale = max(abs(product), abs(cross), abs(expected))
        return float(abs(product - cross - expected) / scale)


def _closed_forms(ctx: mpmath.MPContext, nu: complex) -> tuple[mpmath.mpc, mpmath.mpc]:
    order = ctx.mpc(nu)
    first = ctx.sqrt(2 * ctx.pi) * ctx.rgamma(1j * order)
    second = -1j * ctx.exp(-ctx.pi * order / 2)
    return first, second


def wronskian_closed_forms(nu: complex) -> tuple[complex, complex]:
    """(sqrt(2 pi) / Gamma(i nu), -i exp(-pi nu / 2))."""
    ctx = mp_context()
    with ctx.workdps(30):
        first, second = _closed_forms(ctx, complex(nu))
        return complex(first), complex(second)


def wronskian_check(nu: complex, z: complex, *, rel_tol: float = 1e-14) -> tuple[complex, complex]:
    """
    Computed minus closed-form Wronskians.

    First: W{D_{-i nu}(z), D_{-i nu}(-z)}. Second: W{D_{-i nu}(z), D_{i nu - 1}(iz)}.
    """
    nu, z = complex(nu), complex(z)
    p = -1j * nu
    f, f_lower = pcf_pair(p, z, rel_tol=rel_tol)
    g, g_lower = pcf_pair(p, -z, rel_tol=rel_tol)
    upper, h = pcf_pair(1j * nu, 1j * z, rel_tol=rel_tol)

    ctx = mp_context()
    with ctx.workdps(max(f.dps, g.dps, h.dps)):
        f_slope = _slope_from_pair(ctx, p, z, f.value, f_lower.value)
        g_slope = -_slope_from_pair(ctx, p, -z, g.value, g_lower.value)
        first = f.value * g_slope - f_slope * g.value

        # d/dz D_{i nu - 1}(iz) = -(z/2) D_{i nu - 1}(iz) - i D_{i nu}(iz)
        h_slope = -ctx.mpc(z) * h.value / 2 - 1j * upper.value
        second = f.value * h_slope - f_slope * h.value

        expected_first, expected_second = _closed_forms(ctx, nu)
        return complex(first - expected_first), complex(second - expected_second)


def _large_order_values(nu: complex, z: complex) -> tuple[mpmath.mpc, mpmath.mpc]:
    if abs(nu) < LARGE_ORDER_MIN_NU:
        raise DomainError(
            f"large-order form needs |nu| >= {LARGE_ORDER_MIN_NU}, got {abs(nu):.3g}; use pcf"
        )
    if z != 0 and abs(math.atan2(z.imag, z.real)) >= 0.5 * math.pi:
        raise DomainError(f"large-order form needs |arg z| < pi/2, got z={z}; use pcf")
    ctx = mp_context()
    with ctx.workdps(30):
        order = ctx.mpc(nu)
        arg = ctx.mpc(z)
        w = ctx.sqrt(arg * arg + 4j * order)
        if (w * ctx.conj(arg)).real < 0:
            w = -w
        half_sum = (arg + w) / 2
        value = (
            ctx.exp(1j * order / 2)
            * ctx.power(half_sum, -1j * order)
            * ctx.sqrt(half_sum / w)
            * ctx.exp(-arg * w / 4)
        )
        return value, value / half_sum


def pcf_large_order(nu: complex, z: complex) -> WeberEval:
    """Leading large-|nu| form of D_{-i nu}(z); relative error about 1/sqrt(|nu|)."""
    nu, z = complex(nu), complex(z)
    value, _ = _large_order_values(nu, z)
    error = abs(value) * LARGE_ORDER_ERROR_CONSTANT / math.sqrt(abs(nu))
    return WeberEval(value, error, Method.ASYMPT_LARGE_ORDER, Sector.PRINCIPAL, 30)


def pcf_large_order_pair(nu: complex, z: complex) -> tuple[WeberEval, WeberEval]:
    """Leading large-|nu| forms of (D_{-i nu}(z), D_{-i nu - 1}(z))."""
    nu, z = complex(nu), complex(z)
    value, companion = _large_order_values(nu, z)
    relative = LARGE_ORDER_ERROR_CONSTANT / math.sqrt(abs(nu))
    return (
        WeberEval(value, abs(value) * relative, Method.ASYMPT_LARGE_ORDER, Sector.PRINCIPAL, 30),
        WeberEval(companion, abs(companion) * relative, Method.ASYMPT_LARGE_ORDER, Sector.PRINCIPAL, 30),
    )
