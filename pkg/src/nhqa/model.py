"""Chain parameters, annealing schedule and the per-mode two-level problem."""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .constants import EXCEPTIONAL_POINT_GRAM
from .errors import DomainError, ExceptionalPointError, NumericalError, ParameterError

LOGGER = logging.getLogger(__name__)

_QUAD_TOL = 1e-10
_QUAD_TOL_CRITICAL = 1e-8
_ENERGY_CROSS_CHECK = 1e-8


@dataclass(frozen=True, slots=True)
class ChainParams:
    """Physical and run parameters of one annealing schedule."""

    J: float
    g: float
    delta: float
    tau: float
    N: int

    def __post_init__(self) -> None:
        if not self.J > 0:
            raise ParameterError(f"J must be > 0, got {self.J}")
        if not self.g >= 0:
            raise ParameterError(f"g must be >= 0, got {self.g}")
        if not self.delta >= 0:
            raise ParameterError(f"delta must be >= 0, got {self.delta}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be > 0, got {self.tau}")
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ParameterError(f"N must be an even integer >= 2, got {self.N}")

    @property
    def gamma(self) -> complex:
        """Complex sweep rate (g + i delta)/tau."""
        return complex(self.g, self.delta) / self.tau

    @property
    def is_static(self) -> bool:
        return self.g == 0 and self.delta == 0

    @property
    def tau0(self) -> float:
        return tau0(self.J, self.g, self.N)

    @property
    def mode_count(self) -> int:
        return self.N // 2

    def with_updates(self, **changes: float) -> "ChainParams":
        values = {
            "J": self.J,
            "g": self.g,
            "delta": self.delta,
            "tau": self.tau,
            "N": self.N,
        }
        values.update(changes)
        values["N"] = int(values["N"])
        return ChainParams(**values)

    def as_dict(self) -> dict[str, float]:
        return {"J": self.J, "g": self.g, "delta": self.delta, "tau": self.tau, "N": self.N}


def tau0(J: float, g: float, N: int) -> float:
    """Characteristic Hermitian annealing time 2 g N^2 / (pi^2 J)."""
    return 2.0 * g * N**2 / (math.pi**2 * J)


def mode_angle(p: int, N: int) -> float:
    """Momentum angle 2 pi (p - 1/2) / N of mode counter p."""
    if int(N) != N or N < 2 or N % 2:
        raise ParameterError(f"N must be an even integer >= 2, got {N}")
    if int(p) != p or not 1 <= p <= N // 2:
        raise ParameterError(f"mode counter p must satisfy 1 <= p <= {N // 2}, got {p}")
    return 2.0 * math.pi * (p - 0.5) / N


@dataclass(frozen=True, slots=True)
class ModeContext:
    p: int
    phi: float
    nu: complex
    gamma: complex

    @property
    def sin_phi(self) -> float:
        return math.sin(self.phi)

    @property
    def cos_phi(self) -> float:
        return math.cos(self.phi)


def landau_zener_exponent(phi: float, params: ChainParams) -> complex:
    """nu = J sin^2(phi) / (2 gamma)."""
    gamma = params.gamma
    if gamma == 0:
        raise ParameterError("nu is undefined for a static schedule (g = delta = 0)")
    return params.J * math.sin(phi) ** 2 / (2.0 * gamma)


def mode_context(p: int, params: ChainParams) -> ModeContext:
    phi = mode_angle(p, params.N)
    return ModeContext(p=p, phi=phi, nu=landau_zener_exponent(phi, params), gamma=params.gamma)


def schedule(t: float, params: ChainParams) -> complex:
    """Complex field gamma (tau - t) on the ramp, zero after it."""
    if t > params.tau:
        return 0j
    return params.gamma * (params.tau - t)


@dataclass(frozen=True, slots=True)
class Spectrum:
    """Offset, gap half-width and Bogoliubov angle of one mode at one field value."""

    eps0: complex
    eps_k: complex
    cos_theta: complex
    sin_theta: complex
    critical: bool = False

    @property
    def theta(self) -> complex:
        if self.critical:
            return complex(math.nan, math.nan)
        return -1j * cmath.log(self.cos_theta + 1j * self.sin_theta)

    @property
    def eigenvalues(self) -> tuple[complex, complex]:
        """(ground, excited) = (-eps0 - eps_k, -eps0 + eps_k)."""
        return (-self.eps0 - self.eps_k, -self.eps0 + self.eps_k)


def _gap_radicand(phi: float, g_tilde: complex) -> complex:
    return g_tilde * g_tilde - 2.0 * g_tilde * math.cos(phi) + 1.0


def _branch_root(phi: float, g_tilde: complex, previous_root: complex | None = None) -> complex:
    root = cmath.sqrt(_gap_radicand(phi, g_tilde))
    if previous_root is not None and abs(root - previous_root) > abs(root + previous_root):
        root = -root
    return root


def spectrum(
    phi: float,
    g_tilde: complex,
    params: ChainParams,
    previous: Spectrum | None = None,
) -> Spectrum:
    """
    Complex spectrum of one mode.

    Without ``previous`` the principal square root is used. With ``previous`` the
    sign of the root is chosen to stay closest to the earlier sample, which keeps
    eps_k continuous along a schedule.
    """
    if not 0.0 <= phi <= math.pi:
        raise ParameterError(f"mode angle must lie in [0, pi], got {phi}")
    g_tilde = complex(g_tilde)
    eps0 = params.J * math.cos(phi) + 1j * params.J * g_tilde.imag
    if _gap_radicand(phi, g_tilde) == 0:
        LOGGER.debug("gap closes at phi=%s g_tilde=%s", phi, g_tilde)
        nan = complex(math.nan, math.nan)
        return Spectrum(eps0=eps0, eps_k=0j, cos_theta=nan, sin_theta=nan, critical=True)

    previous_root = None
    if previous is not None and not previous.critical:
        previous_root = previous.eps_k / params.J
    root = _branch_root(phi, g_tilde, previous_root)
    return Spectrum(
        eps0=eps0,
        eps_k=params.J * root,
        cos_theta=(g_tilde - math.cos(phi)) / root,
        sin_theta=math.sin(phi) / root,
    )


def spectrum_path(phi: float, times: Iterable[float], params: ChainParams) -> list[Spectrum]:
    """Spectra along the schedule with the root branch tracked from t = times[0]."""
    path: list[Spectrum] = []
    previous: Spectrum | None = None
    for t in times:
        current = spectrum(phi, schedule(t, params), params, previous=previous)
        path.append(current)
        if not current.critical:
            previous = current
    return path


def tracked_gap_root(phi: float, t: float, params: ChainParams, *, samples: int = 256) -> complex:
    """
    sqrt(g~^2 - 2 g~ cos phi + 1) at time t, continued from the principal root at t = 0.

    Intervals where the root turns by more than a quarter of its size are bisected,
    so the branch survives close passes of the radicand around zero.
    """
    if t <= 0:
        return cmath.sqrt(_gap_radicand(phi, schedule(0.0, params)))

    def root_near(time: float, previous: complex) -> complex:
        return _branch_root(phi, schedule(time, params), previous)

    def advance(start: float, stop: float, previous: complex, depth: int) -> complex:
        candidate = root_near(stop, previous)
        if depth < 30 and abs(candidate - previous) > 0.25 * max(abs(previous), abs(candidate)):
            middle = 0.5 * (start + stop)
            previous = advance(start, middle, previous, depth + 1)
            return advance(middle, stop, previous, depth + 1)
        return candidate

    root = cmath.sqrt(_gap_radicand(phi, schedule(0.0, params)))
    grid = np.linspace(0.0, min(t, params.tau), samples + 1)
    for start, stop in zip(grid[:-1], grid[1:]):
        root = advance(float(start), float(stop), root, 0)
    return root


def gap_abs(g: float, delta: float, theta: float, J: float) -> float:
    """Modulus of the level splitting 2 J |sqrt(g~^2 - 2 g~ cos theta + 1)|."""
    g_tilde = complex(g, delta)
    return 2.0 * J * abs(cmath.sqrt(_gap_radicand(theta, g_tilde)))


def critical_point(delta: float) -> tuple[float, float]:
    """(theta_c, g_c) where the complex gap closes."""
    if delta < 0 or delta > 1:
        raise DomainError(f"critical point needs 0 <= delta <= 1, got {delta}")
    g_c = math.sqrt(1.0 - delta * delta)
    return math.acos(g_c), g_c


def mode_hamiltonian(phi: float, g_tilde: complex, params: ChainParams) -> np.ndarray:
    """Full mode Hamiltonian in the (|k1>, |k0>) basis, decay offset included."""
    a = complex(g_tilde) - math.cos(phi)
    s = math.sin(phi)
    eps0 = params.J * math.cos(phi) + 1j * params.J * complex(g_tilde).imag
    return np.array(
        [
            [-eps0 + params.J * a, params.J * s],
            [params.J * s, -eps0 - params.J * a],
        ],
        dtype=complex,
    )


def rotating_frame_matrix(phi: float, g_tilde: complex, J: float) -> np.ndarray:
    """Generator of the rotating-frame amplitudes (u, v) = (k0, k1) components."""
    a = complex(g_tilde) - math.cos(phi)
    s = math.sin(phi)
    return J * np.array([[-a, s], [s, a]], dtype=complex)


@dataclass(frozen=True, slots=True)
class AdiabaticBasis:
    """Right eigenvectors in (u, v) order; the left ones are their transposes."""

    ground: np.ndarray
    excited: np.ndarray

    @property
    def gram_determinant(self) -> float:
        first = self.ground / np.linalg.norm(self.ground)
        second = self.excited / np.linalg.norm(self.excited)
        return float(1.0 - abs(np.vdot(first, second)) ** 2)


def _half_angles(cos_theta: complex, sin_theta: complex) -> tuple[complex, complex]:
    if abs(1.0 + cos_theta) >= abs(1.0 - cos_theta):
        cos_half = cmath.sqrt((1.0 + cos_theta) / 2.0)
        return cos_half, sin_theta / (2.0 * cos_half)
    sin_half = cmath.sqrt((1.0 - cos_theta) / 2.0)
    return sin_theta / (2.0 * sin_half), sin_half


def final_basis(phi: float) -> AdiabaticBasis:
    """Eigenvectors at g~ = 0: ground (sin phi/2, -cos phi/2), excited (cos phi/2, sin phi/2)."""
    half = 0.5 * phi
    return AdiabaticBasis(
        ground=np.array([math.sin(half), -math.cos(half)], dtype=complex),
        excited=np.array([math.cos(half), math.sin(half)], dtype=complex),
    )


def instantaneous_basis(
    phi: float,
    g_tilde: complex,
    previous_root: complex | None = None,
) -> AdiabaticBasis:
    """Right eigenvectors of the mode generator, ground first."""
    g_tilde = complex(g_tilde)
    if g_tilde == 0:
        return final_basis(phi)
    if _gap_radicand(phi, g_tilde) == 0:
        raise ExceptionalPointError(
            "eigenvectors coalesce at the closed gap", location=f"phi={phi}, g~={g_tilde}"
        )
    root = _branch_root(phi, g_tilde, previous_root)
    cos_half, sin_half = _half_angles((g_tilde - math.cos(phi)) / root, math.sin(phi) / root)
    basis = AdiabaticBasis(
        ground=np.array([cos_half, -sin_half], dtype=complex),
        excited=np.array([sin_half, cos_half], dtype=complex),
    )
    gram = basis.gram_determinant
    if gram < EXCEPTIONAL_POINT_GRAM:
        raise ExceptionalPointError(
            "adiabatic basis is not invertible",
            location=f"phi={phi}, g~={g_tilde}",
            achieved=gram,
        )
    return basis


def project_adiabatic(u: complex, v: complex, basis: AdiabaticBasis) -> tuple[complex, complex]:
    """Bi-orthogonal coordinates (alpha, beta) of (u, v) in the adiabatic basis."""
    psi = np.array([u, v], dtype=complex)
    return complex(basis.ground @ psi), complex(basis.excited @ psi)


def intrinsic_ground_probability(alpha: complex, beta: complex) -> float:
    weight = abs(alpha) ** 2 + abs(beta) ** 2
    if weight == 0:
        raise NumericalError("state has zero weight in the adiabatic basis")
    return abs(alpha) ** 2 / weight


def _complex_quad(
    integrand: Callable[[float], complex],
    lower: float,
    upper: float,
    epsabs: float,
    points: Sequence[float] | None = None,
) -> complex:
    parts: list[float] = []
    for component in (lambda x: integrand(x).real, lambda x: integrand(x).imag):
        result = integrate.quad(
            component,
            lower,
            upper,
            epsabs=epsabs,
            epsrel=0.0,
            limit=400,
            points=points,
            full_output=1,
        )
        value, abserr = result[0], result[1]
        if len(result) > 3 and abserr > epsabs:
            raise NumericalError(
                f"quadrature did not converge: {result[3]}",
                location=f"[{lower}, {upper}]",
                achieved=abserr,
            )
        parts.append(value)
    return complex(parts[0], parts[1])


def _quadrature_settings(g_tilde: complex, delta: float) -> tuple[float, list[float] | None]:
    if 0 <= delta <= 1:
        theta_c, g_c = critical_point(delta)
        if abs(g_tilde - complex(g_c, delta)) < 1e-6:
            return _QUAD_TOL_CRITICAL, [theta_c] if 0 < theta_c < math.pi else None
    return _QUAD_TOL, None


def ground_energy_per_spin(g_tilde: complex, params: ChainParams) -> complex:
    """
    -i J delta - (J/pi) * integral_0^pi sqrt(g~^2 - 2 g~ cos t + 1) dt by adaptive quadrature.

    The result is checked against the elliptic-integral form away from g~ = -1.
    """
    g_tilde = complex(g_tilde)
    epsabs, points = _quadrature_settings(g_tilde, g_tilde.imag)
    integral = _complex_quad(
        lambda angle: cmath.sqrt(_gap_radicand(angle, g_tilde)), 0.0, math.pi, epsabs, points
    )
    energy = -1j * params.J * g_tilde.imag - params.J * integral / math.pi
    if g_tilde + 1.0 == 0:
        return energy
    closed = ground_energy_closed_form(g_tilde, params)
    tolerance = max(_ENERGY_CROSS_CHECK * abs(energy), 10.0 * epsabs * params.J)
    if abs(energy - closed) > tolerance:
        raise NumericalError(
            "ground energy quadrature disagrees with the elliptic-integral form",
            location=f"g~={g_tilde}",
            achieved=abs(energy - closed),
        )
    return energy


def elliptic_e(m: complex, scale: complex = 1.0) -> complex:
    """
    Complete elliptic integral of the second kind for complex parameter m.

    The root of 1 - m sin^2 is taken on the branch where scale * root has a
    non-negative real part.
    """

    def integrand(angle: float) -> complex:
        root = cmath.sqrt(1.0 - m * math.sin(angle) ** 2)
        if (scale * root).real < 0:
            root = -root
        return root

    return _complex_quad(integrand, 0.0, 0.5 * math.pi, _QUAD_TOL)


def ground_energy_closed_form(g_tilde: complex, params: ChainParams) -> complex:
    """Elliptic-integral form -i J delta - (2 J (g~ + 1)/pi) E(4 g~ / (g~ + 1)^2)."""
    g_tilde = complex(g_tilde)
    shifted = g_tilde + 1.0
    if shifted == 0:
        raise DomainError("closed form is singular at g~ = -1")
    m = 4.0 * g_tilde / (shifted * shifted)
    return -1j * params.J * g_tilde.imag - 2.0 * params.J * shifted * elliptic_e(m, shifted) / math.pi
