"""Chain-level observables built from the per-mode ground-state probabilities."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

import mpmath
import numpy as np
from scipy import optimize

from .constants import ENGINES, LOG_UNDERFLOW_FLOOR
from .errors import DomainError, ModeFailureError, NhqaError, NumericalError, ParameterError
from .lz import (
    Estimate,
    InitialState,
    first_mode_form,
    lz_context,
    pgs_at_end,
    prob_longwave_exact_asympt,
)
from .model import ChainParams, mode_context, tau0
from .tdse import IntegratorConfig, final_ground_probability, integrate_mode

LOGGER = logging.getLogger(__name__)

_LERCH_SERIES_LIMIT = 0.99
_LERCH_TOL = 1e-12
_BRACKET_FLOOR = 1.0
_BRACKET_CEILING = 1e12
_PROBABILITY_SLACK = 1e-12


@dataclass(frozen=True, slots=True)
class GroundStateProduct:
    """Product of per-mode probabilities; ``killing_mode`` names the first exact zero."""

    value: float
    log_value: float
    killing_mode: int | None = None


@dataclass(frozen=True, slots=True)
class AnnealResult:
    params: ChainParams
    engine: str
    initial_state: InitialState
    modes: np.ndarray
    per_mode_pgs: np.ndarray
    kink_count: float
    kink_density: float
    residual_energy: float
    magnetization: float
    pgs_total: float
    log_pgs_total: float
    killing_mode: int | None
    tau0: float


@dataclass(frozen=True, slots=True)
class AnnealTime:
    """Annealing time reaching a target probability and its logarithmic estimate."""

    exact: float
    asymptotic: float | None
    target: float


def _check_engine(engine: str) -> str:
    if engine not in ENGINES:
        raise ParameterError(f"engine must be one of {ENGINES}, got {engine!r}")
    return engine


def mode_ground_probability(
    params: ChainParams,
    p: int,
    engine: str = "lz-exact",
    initial_state: InitialState = InitialState.DRESSED,
    config: IntegratorConfig | None = None,
) -> float:
    """P^gs_k(tau) of mode p with the chosen engine."""
    _check_engine(engine)
    initial_state = InitialState(initial_state)
    if params.is_static:
        return 1.0
    mode = mode_context(p, params)
    if engine == "lz-exact":
        rel_tol = (config or IntegratorConfig()).weber_rel_tol
        return pgs_at_end(lz_context(mode, params, initial_state, rel_tol=rel_tol))
    if engine == "tdse":
        trajectory = integrate_mode(
            mode,
            params,
            config,
            initial_state=initial_state,
            times=np.array([0.0, params.tau]),
        )
        return final_ground_probability(trajectory)
    return prob_longwave_exact_asympt(mode, params).value


def _mode_task(
    params: ChainParams,
    p: int,
    engine: str,
    initial_state: InitialState,
    config: IntegratorConfig | None,
) -> float:
    return mode_ground_probability(params, p, engine, initial_state, config)


def _write_failure_log(path: Path, failures: list[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(failures, handle, indent=2, ensure_ascii=True)


def _make_executor(kind: str, max_workers: int) -> Executor:
    if kind == "process":
        return ProcessPoolExecutor(max_workers=max_workers)
    if kind == "thread":
        return ThreadPoolExecutor(max_workers=max_workers)
    raise ParameterError(f"executor must be 'thread' or 'process', got {kind!r}")


def per_mode_pgs(
    params: ChainParams,
    engine: str = "lz-exact",
    initial_state: InitialState = InitialState.DRESSED,
    config: IntegratorConfig | None = None,
    *,
    modes: Iterable[int] | None = None,
    max_workers: int = 1,
    executor: str = "thread",
    on_progress: Callable[[int, int], None] | None = None,
    failure_log: Path | None = None,
) -> np.ndarray:
    """
    Final ground-state probability of each requested mode, in ascending p.

    Modes run concurrently. Failures are collected, written to ``failure_log``
    when given, and raised together as ModeFailureError.
    """
    _check_engine(engine)
    initial_state = InitialState(initial_state)
    counters = sorted(set(range(1, params.mode_count + 1) if modes is None else modes))
    if not counters:
        return np.zeros(0)
    if max_workers < 1:
        raise ParameterError(f"max_workers must be >= 1, got {max_workers}")

    values: dict[int, float] = {}
    failures: list[dict[str, Any]] = []
    with _make_executor(executor, max_workers) as pool:
        futures = {
            pool.submit(_mode_task, params, p, engine, initial_state, config): p for p in counters
        }
        completed = 0
        total = len(futures)
        for future in as_completed(futures):
            p = futures[future]
            completed += 1
            if on_progress is not None:
                on_progress(completed, total)
            try:
                values[p] = future.result()
            except NhqaError as exc:
                LOGGER.warning("mode p=%d failed: %s", p, exc)
                failures.append(
                    {
                        "p": p,
                        "engine": engine,
                        "params": params.as_dict(),
                        "error": str(exc),
                        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
                    }
                )

    if failure_log is not None:
        _write_failure_log(failure_log, sorted(failures, key=lambda item: item["p"]))
    if failures:
        raise ModeFailureError({item["p"]: item["error"] for item in failures})
    return np.array([values[p] for p in counters])


def pgs_total(per_mode: Iterable[float], modes: Iterable[int] | None = None) -> GroundStateProduct:
    """Product of the per-mode probabilities, accumulated as a sum of logarithms."""
    values = np.asarray(list(per_mode), dtype=float)
    counters = list(modes) if modes is not None else list(range(1, values.size + 1))
    if len(counters) != values.size:
        raise ParameterError("modes and probabilities differ in length")
    if np.any(values < -_PROBABILITY_SLACK) or np.any(values > 1.0 + _PROBABILITY_SLACK):
        raise ParameterError("per-mode probabilities must lie in [0, 1]")
    values = np.clip(values, 0.0, 1.0)
    zeros = np.flatnonzero(values == 0.0)
    if zeros.size:
        killer = int(counters[int(zeros[0])])
        LOGGER.info("ground-state product vanishes: mode p=%d has zero probability", killer)
        return GroundStateProduct(value=0.0, log_value=-math.inf, killing_mode=killer)
    log_value = float(np.sum(np.log(values)))
    value = 0.0 if log_value < LOG_UNDERFLOW_FLOOR else math.exp(log_value)
    return GroundStateProduct(value=value, log_value=log_value)


def kink_count(per_mode: Iterable[float]) -> float:
    """Sum over k > 0 of 1 - P^gs_k(tau), in ascending p."""
    return float(math.fsum(1.0 - value for value in per_mode))


def kink_density_from_count(count: float, N: int) -> float:
    """Kinks per spin; each excited (k, -k) pair carries two quasiparticles."""
    return 2.0 * count / N


def residual_energy(count: float, J: float) -> float:
    return J * count


def magnetization(n: float) -> float:
    """m_z = sqrt(1 - 2 n)."""
    if n < 0 or n > 0.5:
        raise DomainError(f"kink density must lie in [0, 1/2], got {n}")
    return math.sqrt(1.0 - 2.0 * n)


def anneal(
    params: ChainParams,
    engine: str = "lz-exact",
    initial_state: InitialState = InitialState.DRESSED,
    config: IntegratorConfig | None = None,
    *,
    max_workers: int = 1,
    executor: str = "thread",
    on_progress: Callable[[int, int], None] | None = None,
    failure_log: Path | None = None,
) -> AnnealResult:
    initial_state = InitialState(initial_state)
    modes = np.arange(1, params.mode_count + 1)
    values = per_mode_pgs(
        params,
        engine,
        initial_state,
        config,
        max_workers=max_workers,
        executor=executor,
        on_progress=on_progress,
        failure_log=failure_log,
    )
    count = kink_count(values)
    density = kink_density_from_count(count, params.N)
    if density <= 0.5:
        m_z = magnetization(density)
    else:
        LOGGER.warning("kink density %.4f exceeds 1/2; magnetization undefined", density)
        m_z = math.nan
    product = pgs_total(values, modes)
    return AnnealResult(
        params=params,
        engine=engine,
        initial_state=initial_state,
        modes=modes,
        per_mode_pgs=values,
        kink_count=count,
        kink_density=density,
        residual_energy=residual_energy(count, params.J),
        magnetization=m_z,
        pgs_total=product.value,
        log_pgs_total=product.log_value,
        killing_mode=product.killing_mode,
        tau0=params.tau0,
    )


def kink_density_exact(
    params: ChainParams,
    engine: str = "lz-exact",
    initial_state: InitialState = InitialState.DRESSED,
    config: IntegratorConfig | None = None,
    *,
    max_workers: int = 1,
    executor: str = "thread",
    failure_log: Path | None = None,
) -> float:
    """Kink density from all N/2 per-mode probabilities."""
    if engine not in ("tdse", "lz-exact"):
        raise ParameterError(f"exact kink density needs engine 'tdse' or 'lz-exact', got {engine!r}")
    if params.is_static:
        return 0.0
    values = per_mode_pgs(
        params,
        engine,
        initial_state,
        config,
        max_workers=max_workers,
        executor=executor,
        failure_log=failure_log,
    )
    return kink_density_from_count(kink_count(values), params.N)


def n0(J: float, g: float, tau: float) -> float:
    """Hermitian kink density (1/2 pi) sqrt(g / (J tau))."""
    if J <= 0 or tau <= 0 or g < 0:
        raise ParameterError("n0 needs J > 0, tau > 0 and g >= 0")
    return math.sqrt(g / (J * tau)) / (2.0 * math.pi)


def _lerch_series(x: float) -> float:
    if x == 0:
        return 1.0
    # x^n / sqrt(n + 1) summed until the geometric tail drops below the tolerance
    terms = int(math.ceil(math.log(_LERCH_TOL * (1.0 - x)) / math.log(x))) + 1
    n = np.arange(terms, dtype=float)
    return float(np.sum(np.exp(n * math.log(x)) / np.sqrt(n + 1.0)))


def _lerch_integral(x: float) -> float:
    # (2/sqrt(pi)) int_0^inf exp(-u^2) / (1 - x exp(-u^2)) du, peak width sqrt(1 - x)
    ctx = mpmath.mp.clone()
    ctx.dps = 30
    width = ctx.sqrt(1 - ctx.mpf(x))
    integral = ctx.quad(
        lambda u: ctx.exp(-u * u) / (1 - x * ctx.exp(-u * u)),
        [0, width, 10 * width, 1, ctx.inf],
    )
    return float(2 * integral / ctx.sqrt(ctx.pi))


def lerch_phi(x: float) -> float:
    """Lerch transcendent sum_{n>=0} x^n / sqrt(n + 1) for 0 <= x < 1."""
    if not 0.0 <= x < 1.0:
        raise DomainError(f"Lerch series needs 0 <= x < 1, got {x}")
    if x <= _LERCH_SERIES_LIMIT:
        return _lerch_series(x)
    return _lerch_integral(x)


def _damping_exponent(J: float, g: float, delta: float, tau: float) -> float:
    return 2.0 * delta * tau * J / g**2


def kink_density_asympt(params: ChainParams) -> Estimate:
    """n0 e^{-X} Phi(1 - e^{-X}, 1/2, 1) with X = 2 delta tau J / g^2."""
    if params.g <= 0:
        raise ParameterError("asymptotic kink density needs g > 0")
    valid = math.sqrt(2.0 * params.J * params.tau / params.g) >= 10.0
    if not valid:
        LOGGER.debug("asymptotic kink density used with sqrt(2 J tau / g) < 10")
    exponent = _damping_exponent(params.J, params.g, params.delta, params.tau)
    base = n0(params.J, params.g, params.tau)
    value = base * math.exp(-exponent) * lerch_phi(-math.expm1(-exponent))
    return Estimate(value, valid)


def kink_density_scaled_axes(delta_star: float, tau_star: float, J: float, N: int) -> float:
    """Asymptotic kink density on delta* = delta tau0 / g^2 and tau* = tau / tau0."""
    if tau_star <= 0:
        raise ParameterError(f"tau* must be > 0, got {tau_star}")
    exponent = 2.0 * J * delta_star * tau_star
    base = 1.0 / (2.0 * N * math.sqrt(2.0 * tau_star))
    return base * math.exp(-exponent) * lerch_phi(-math.expm1(-exponent))


def pgs_first_mode(params: ChainParams) -> float:
    """Whole-chain probability with only phi = pi/N retained."""
    re_nu = params.tau / params.tau0
    re_z2 = _damping_exponent(params.J, params.g, params.delta, params.tau)
    return first_mode_form(re_nu, re_z2)


def pgs_scaled(delta_star: float, tau_star: float, J: float) -> float:
    return first_mode_form(tau_star, 2.0 * J * delta_star * tau_star)


def _short_time_ratio(params: ChainParams) -> float:
    exponent = _damping_exponent(params.J, params.g, params.delta, params.tau)
    return params.tau0 / (2.0 * math.pi * params.tau) * math.exp(-exponent)


def pgs_short_time(params: ChainParams) -> float:
    """Small-tau/tau0 form 1 / (1 + (tau0 / 2 pi tau) e^{-2 J delta tau / g^2})."""
    return 1.0 / (1.0 + _short_time_ratio(params))


def pgs_near_unity(params: ChainParams) -> float:
    return 1.0 - _short_time_ratio(params)


def _check_target(target: float) -> None:
    if not 0.0 < target < 1.0:
        raise ParameterError(f"target probability must lie in (0, 1), got {target}")


def _find_root(function: Callable[[float], float]) -> float:
    """Root of an increasing function, bracketed by decades from tau = 1 up to 1e12."""
    low = _BRACKET_FLOOR
    if function(low) > 0:
        raise NumericalError("no bracket found above tau = 1: target already reached", location=f"tau={low}")
    high = low * 10.0
    while function(high) < 0:
        low, high = high, high * 10.0
        if high > _BRACKET_CEILING:
            raise NumericalError("no bracket found below 1e12", location=f"tau={high}")
    return float(optimize.brentq(function, low, high, xtol=1e-12, rtol=1e-14, maxiter=500))


def hermitian_anneal_time(N: int, J: float, g: float, target: float = 0.999) -> float:
    """tau reaching the target with delta = 0: -(tau0 / 2 pi) ln(1 - target)."""
    _check_target(target)
    return -tau0(J, g, N) * math.log1p(-target) / (2.0 * math.pi)


def anneal_time_asymptotic(N: int, J: float, g: float, delta: float) -> float:
    """(g^2 / 2 J delta) ln(N / pi)."""
    if delta <= 0:
        raise ParameterError("logarithmic annealing time needs delta > 0")
    return g**2 / (2.0 * J * delta) * math.log(N / math.pi)


def anneal_time(N: int, J: float, g: float, delta: float, target: float = 0.999) -> AnnealTime:
    """Smallest tau at which the first-mode probability reaches ``target``."""
    _check_target(target)
    if delta == 0:
        return AnnealTime(exact=hermitian_anneal_time(N, J, g, target), asymptotic=None, target=target)

    def residual(tau: float) -> float:
        return pgs_first_mode(ChainParams(J=J, g=g, delta=delta, tau=tau, N=N)) - target

    exact = _find_root(residual)
    LOGGER.debug("N=%d delta=%s: tau=%.6g", N, delta, exact)
    return AnnealTime(exact=exact, asymptotic=anneal_time_asymptotic(N, J, g, delta), target=target)


def anneal_time_estimate_implicit(
    N: int, J: float, g: float, delta: float, target: float = 0.999
) -> float:
    """Root of 2 J delta tau / g^2 = ln(tau0 / 2 pi tau) + ln(target / (1 - target))."""
    _check_target(target)
    if delta <= 0:
        raise ParameterError("implicit annealing time needs delta > 0")
    scale = tau0(J, g, N)
    odds = math.log(target) - math.log1p(-target)

    def residual(tau: float) -> float:
        return 2.0 * J * delta * tau / g**2 - math.log(scale / (2.0 * math.pi * tau)) - odds

    return _find_root(residual)


def speedup(N: int, J: float, g: float, delta: float, target: float = 0.999) -> float:
    """Hermitian over dissipative annealing time at equal target probability."""
    return hermitian_anneal_time(N, J, g, target) / anneal_time(N, J, g, delta, target).exact


def first_mode_contributions(
    params: ChainParams,
    ps: Iterable[int],
    engine: str = "lz-exact",
    initial_state: InitialState = InitialState.DRESSED,
    config: IntegratorConfig | None = None,
    *,
    max_workers: int = 1,
) -> dict[int, float]:
    """Kink density carried by modes 1..p for each requested p."""
    cutoffs = sorted(set(ps))
    if not cutoffs:
        return {}
    values = per_mode_pgs(
        params,
        engine,
        initial_state,
        config,
        modes=range(1, cutoffs[-1] + 1),
        max_workers=max_workers,
    )
    running = np.cumsum(1.0 - values)
    return {p: kink_density_from_count(float(running[p - 1]), params.N) for p in cutoffs}
