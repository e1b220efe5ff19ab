from __future__ import annotations

import json
import math

import mpmath
import numpy as np
import pytest

from nhqa import observables
from nhqa.errors import DomainError, ModeFailureError, NumericalError, ParameterError
from nhqa.lz import InitialState
from nhqa.model import ChainParams
from nhqa.observables import (
    anneal,
    anneal_time,
    anneal_time_asymptotic,
    anneal_time_estimate_implicit,
    first_mode_contributions,
    hermitian_anneal_time,
    kink_count,
    kink_density_asympt,
    kink_density_exact,
    kink_density_from_count,
    kink_density_scaled_axes,
    lerch_phi,
    magnetization,
    mode_ground_probability,
    n0,
    per_mode_pgs,
    pgs_first_mode,
    pgs_near_unity,
    pgs_scaled,
    pgs_short_time,
    pgs_total,
    residual_energy,
    speedup,
)

REFERENCE = ChainParams(J=0.5, g=10.0, delta=0.0, tau=1e3, N=1024)


def test_hermitian_kink_density_value() -> None:
    assert n0(0.5, 10.0, 1e3) == pytest.approx(0.022508, rel=1e-4)
    with pytest.raises(ParameterError):
        n0(0.5, 10.0, 0.0)


def test_magnetization_from_kink_density() -> None:
    assert magnetization(0.0) == 1.0
    assert magnetization(0.5) == 0.0
    assert magnetization(0.022508) == pytest.approx(0.97723, rel=1e-4)
    with pytest.raises(DomainError):
        magnetization(0.6)


def test_counts_and_energies() -> None:
    count = kink_count([1.0, 0.75, 0.5])
    assert count == pytest.approx(0.75)
    assert kink_density_from_count(count, 6) == pytest.approx(0.25)
    assert residual_energy(count, 0.5) == pytest.approx(0.375)


@pytest.mark.parametrize("x", [0.3, 0.9, 0.99, 0.995, 0.9999])
def test_lerch_matches_mpmath(x: float) -> None:
    with mpmath.workdps(30):
        expected = float(mpmath.lerchphi(x, 0.5, 1))
    assert lerch_phi(x) == pytest.approx(expected, rel=1e-9)


def test_lerch_reference_values() -> None:
    assert lerch_phi(0.0) == 1.0
    assert lerch_phi(0.5) == pytest.approx(1.61225, abs=1e-5)
    assert lerch_phi(0.993262) == pytest.approx(20.234, rel=1e-3)
    assert lerch_phi(0.99) == pytest.approx(lerch_phi(0.990001), rel=1e-4)
    with pytest.raises(DomainError):
        lerch_phi(1.0)
    with pytest.raises(DomainError):
        lerch_phi(-0.1)


def test_asymptotic_kink_density() -> None:
    hermitian = kink_density_asympt(REFERENCE)
    assert hermitian.valid
    assert hermitian.value == pytest.approx(n0(0.5, 10.0, 1e3))
    damped = kink_density_asympt(REFERENCE.with_updates(delta=0.5))
    assert damped.value == pytest.approx(3.069e-3, rel=1e-3)


def test_asymptotic_kink_density_decreases_with_delta() -> None:
    values = [kink_density_asympt(REFERENCE.with_updates(delta=d)).value for d in np.linspace(0.0, 1.0, 21)]
    assert all(later < earlier for earlier, later in zip(values, values[1:]))


def test_scaled_axes_match_physical_parameters() -> None:
    params = REFERENCE.with_updates(delta=0.3)
    delta_star = params.delta * params.tau0 / params.g**2
    tau_star = params.tau / params.tau0
    scaled = kink_density_scaled_axes(delta_star, tau_star, params.J, params.N)
    assert scaled == pytest.approx(kink_density_asympt(params).value, rel=1e-9)
    assert pgs_scaled(delta_star, tau_star, params.J) == pytest.approx(pgs_first_mode(params), rel=1e-12)


def test_first_mode_probabilities() -> None:
    assert pgs_first_mode(REFERENCE) == pytest.approx(1.4776e-3, rel=1e-3)
    damped = REFERENCE.with_updates(delta=0.5)
    assert pgs_first_mode(damped) == pytest.approx(0.18005, rel=1e-3)
    assert pgs_short_time(damped) == pytest.approx(pgs_first_mode(damped), rel=1e-3)


def test_near_unity_form_agrees_for_long_anneals() -> None:
    params = REFERENCE.with_updates(delta=0.5, tau=4000.0)
    assert pgs_near_unity(params) == pytest.approx(pgs_first_mode(params), abs=1e-6)


def test_first_mode_probability_is_monotone() -> None:
    by_delta = [pgs_first_mode(REFERENCE.with_updates(delta=d)) for d in np.linspace(0.0, 1.0, 21)]
    assert all(later >= earlier for earlier, later in zip(by_delta, by_delta[1:]))
    by_size = [pgs_first_mode(REFERENCE.with_updates(delta=0.5, N=n)) for n in range(64, 1344, 64)]
    assert all(later <= earlier for earlier, later in zip(by_size, by_size[1:]))


def _exact_product(params: ChainParams, modes: range | None = None) -> float:
    return pgs_total(per_mode_pgs(params, "lz-exact", modes=modes, max_workers=4)).value


def test_chain_ground_probability_grows_with_delta() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.0, tau=1e3, N=32)
    values = [_exact_product(params.with_updates(delta=d)) for d in np.linspace(0.0, 1.0, 20)]
    assert all(later >= earlier - 1e-9 for earlier, later in zip(values, values[1:]))


def test_chain_ground_probability_falls_with_size() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.5, tau=1e3, N=16)
    values = [_exact_product(params.with_updates(N=n)) for n in (16, 32, 64, 128)]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(values, values[1:]))


@pytest.mark.parametrize("delta", [0.75, 1.0])
def test_leading_modes_carry_the_chain_product(delta: float) -> None:
    params = ChainParams(J=0.5, g=10.0, delta=delta, tau=1e3, N=128)
    truncated = _exact_product(params, modes=range(1, params.N // 64 + 1))
    assert truncated == pytest.approx(_exact_product(params), abs=1e-3)


def test_ground_state_product() -> None:
    assert pgs_total([1.0, 1.0, 1.0]).value == 1.0
    assert pgs_total([0.5, 0.5]).value == pytest.approx(0.25)
    killed = pgs_total([0.9, 0.0, 0.0], modes=[1, 2, 3])
    assert killed.value == 0.0
    assert killed.killing_mode == 2
    tiny = pgs_total([1e-200] * 4)
    assert tiny.value == 0.0
    assert tiny.log_value == pytest.approx(4 * math.log(1e-200))
    with pytest.raises(ParameterError):
        pgs_total([1.5])
    with pytest.raises(ParameterError):
        pgs_total([0.5, 0.5], modes=[1])


def test_hermitian_anneal_time() -> None:
    assert hermitian_anneal_time(1024, 0.5, 10.0) == pytest.approx(4.672e6, rel=1e-3)
    ratio = hermitian_anneal_time(2048, 0.5, 10.0) / hermitian_anneal_time(1024, 0.5, 10.0)
    assert ratio == pytest.approx(4.0, rel=1e-12)
    result = anneal_time(1024, 0.5, 10.0, 0.0)
    assert result.asymptotic is None
    assert result.exact == pytest.approx(hermitian_anneal_time(1024, 0.5, 10.0))


def test_dissipative_anneal_time_reaches_target() -> None:
    result = anneal_time(1024, 0.5, 10.0, 0.5)
    reached = pgs_first_mode(ChainParams(J=0.5, g=10.0, delta=0.5, tau=result.exact, N=1024))
    assert reached == pytest.approx(0.999, abs=1e-9)
    assert result.asymptotic == pytest.approx(1157.3, rel=1e-4)
    assert 1.0 <= result.exact / result.asymptotic <= 3.0


def test_anneal_time_finds_roots_below_the_field_scale() -> None:
    # P(1) = 3.82e-4 and P(20) = 9.20e-3 for this chain
    params = ChainParams(J=0.5, g=10.0, delta=1.0, tau=1.0, N=64)
    result = anneal_time(64, 0.5, 10.0, 1.0, target=4.79e-3)
    assert 1.0 < result.exact < 20.0
    reached = pgs_first_mode(params.with_updates(tau=result.exact))
    assert reached == pytest.approx(4.79e-3, abs=1e-9)


def test_anneal_time_raises_when_target_is_met_at_tau_one() -> None:
    with pytest.raises(NumericalError):
        anneal_time(64, 0.5, 10.0, 1.0, target=1e-4)


def test_dissipative_anneal_time_grows_logarithmically() -> None:
    step = 10.0**2 / (2.0 * 0.5 * 0.5) * math.log(2.0)
    times = [anneal_time(n, 0.5, 10.0, 0.5).exact for n in (256, 512, 1024, 2048)]
    for earlier, later in zip(times, times[1:]):
        assert step <= later - earlier <= 2.0 * step


def test_implicit_estimate_tracks_exact_root() -> None:
    implicit = anneal_time_estimate_implicit(1024, 0.5, 10.0, 0.5)
    assert implicit == pytest.approx(anneal_time(1024, 0.5, 10.0, 0.5).exact, rel=1e-2)
    assert anneal_time_asymptotic(1024, 0.5, 10.0, 0.5) == pytest.approx(200.0 * math.log(1024 / math.pi))


def test_anneal_time_rejects_bad_target() -> None:
    with pytest.raises(ParameterError):
        anneal_time(1024, 0.5, 10.0, 0.5, target=1.0)
    with pytest.raises(ParameterError):
        anneal_time_asymptotic(1024, 0.5, 10.0, 0.0)


def test_speedup_is_large() -> None:
    assert speedup(1024, 0.5, 10.0, 0.25) > 500.0


def test_static_schedule_has_no_kinks() -> None:
    static = ChainParams(J=0.5, g=0.0, delta=0.0, tau=10.0, N=16)
    assert mode_ground_probability(static, 3) == 1.0
    assert kink_density_exact(static) == 0.0
    with pytest.raises(ParameterError):
        kink_density_exact(static, engine="asympt")


def test_unknown_engine_is_rejected() -> None:
    with pytest.raises(ParameterError):
        mode_ground_probability(REFERENCE, 1, engine="magic")


def test_engines_agree_on_a_small_chain() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.2, tau=50.0, N=16)
    exact = per_mode_pgs(params, "lz-exact", InitialState.INSTANTANEOUS)
    direct = per_mode_pgs(params, "tdse", InitialState.INSTANTANEOUS)
    assert np.allclose(exact, direct, atol=1e-6)


def test_per_mode_results_are_ordered_with_threads() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.5, tau=1e3, N=64)
    serial = per_mode_pgs(params, "asympt")
    threaded = per_mode_pgs(params, "asympt", max_workers=4)
    assert np.array_equal(serial, threaded)
    picked = per_mode_pgs(params, "asympt", modes=[5, 2])
    assert picked.tolist() == [serial[1], serial[4]]


def test_mode_failures_are_logged_and_raised(tmp_path, monkeypatch: pytest.MonkeyPatch) -> None:
    original = observables.mode_ground_probability

    def flaky(params, p, engine, initial_state, config):
        if p == 2:
            raise NumericalError("no convergence", location="p=2")
        return original(params, p, engine, initial_state, config)

    monkeypatch.setattr(observables, "mode_ground_probability", flaky)
    log_path = tmp_path / "logs" / "failed_modes_log.json"
    params = ChainParams(J=0.5, g=10.0, delta=0.5, tau=1e3, N=8)
    with pytest.raises(ModeFailureError) as excinfo:
        per_mode_pgs(params, "asympt", failure_log=log_path)

    assert set(excinfo.value.failures) == {2}
    records = json.loads(log_path.read_text(encoding="utf-8"))
    assert [record["p"] for record in records] == [2]
    assert records[0]["engine"] == "asympt"
    assert "timestamp_utc" in records[0]


def test_anneal_summary_is_consistent() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.0, tau=20.0, N=8)
    result = anneal(params)
    assert result.modes.tolist() == [1, 2, 3, 4]
    assert result.kink_count == pytest.approx(kink_count(result.per_mode_pgs))
    assert result.kink_density == pytest.approx(2.0 * result.kink_count / 8)
    assert result.residual_energy == pytest.approx(0.5 * result.kink_count)
    assert result.pgs_total == pytest.approx(float(np.prod(result.per_mode_pgs)))
    assert result.tau0 == pytest.approx(params.tau0)


def test_exact_kink_density_matches_hermitian_limit() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.0, tau=1e3, N=128)
    assert kink_density_exact(params) == pytest.approx(n0(0.5, 10.0, 1e3), rel=5e-2)


def test_exact_kink_density_matches_dissipative_asymptote() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.5, tau=1e3, N=128)
    assert kink_density_exact(params) == pytest.approx(kink_density_asympt(params).value, rel=0.1)


def test_first_mode_contributions_accumulate() -> None:
    params = ChainParams(J=0.5, g=10.0, delta=0.5, tau=1e3, N=64)
    contributions = first_mode_contributions(params, [1, 4, 2], engine="asympt")
    assert list(contributions) == [1, 2, 4]
    assert contributions[1] <= contributions[2] <= contributions[4]
