import math

import numpy as np
import pytest

from manevkit.exc import DomainError
from manevkit.phase_space import CutoffSpec, EnergyProfile
from manevkit.self_similar import (T_b_functional, T_b_lower_bound, b_ladder, blowup_pseudoconformal,
                                   blowup_selfsimilar, blowup_series, blowup_times, choose_r_chi,
                                   cutoff_radius, find_b_star, rate_fit, solve_self_similar,
                                   stationarity_residual, virial_selfsimilar, virial_terms)

RELAX = dict(max_iterations=8, tolerance=1e-6)


@pytest.fixture(scope="module")
def chi(manev_state):
    return choose_r_chi(manev_state)


@pytest.fixture(scope="module")
def at_rest(manev_state, chi):
    return solve_self_similar(manev_state, 0.0, chi, **RELAX)


@pytest.fixture(scope="module")
def drifting(manev_state, chi):
    return solve_self_similar(manev_state, 0.05, chi, **RELAX)


def test_cutoff_covers_the_support(manev_state, chi):
    assert chi.r_chi >= 2.0 * manev_state.support_radius
    assert chi.R_chi == 2.0 * chi.r_chi


def test_cutoff_radius_needs_a_negative_energy():
    assert cutoff_radius(1.0, -8.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        cutoff_radius(1.0, 0.0)


def test_without_drift_the_ground_state_is_a_fixed_point(at_rest):
    assert at_rest.nu == pytest.approx(1.0, abs=1e-2)
    assert at_rest.descent_violations == 0
    assert at_rest.equimeasurability() < 1e-2
    assert at_rest.distance_to_ground() < 5e-2


def test_relaxation_does_not_raise_T_b(drifting):
    trace = np.array(drifting.trace)
    assert drifting.descent_violations == 0
    assert np.all(np.diff(trace) <= 1e-10 * np.abs(trace[:-1]))
    assert drifting.iterations == len(drifting.nu_trace)
    assert drifting.e_b < 0


def test_relaxation_keeps_the_distribution(drifting):
    assert drifting.equimeasurability() < 1e-2
    assert drifting.b_tilde == pytest.approx(drifting.nu * 0.05)


def test_T_b_of_a_profile_at_rest(manev_state, chi):
    assert T_b_functional(manev_state.profile, 0.3, chi) == pytest.approx(0.5 * manev_state.kinetic)


def test_T_b_lower_bound(drifting):
    assert T_b_lower_bound(drifting.profile, drifting.b, drifting.chi) <= drifting.T_b


def test_self_similar_needs_pure_manev(mixed_state, manev_state):
    with pytest.raises(DomainError):
        solve_self_similar(mixed_state, 0.1, **RELAX)
    with pytest.raises(DomainError):
        solve_self_similar(manev_state, -0.1, **RELAX)


def test_b_ladder():
    assert b_ladder(0.4, 3) == [0.4, 0.2, 0.1, 0.05]


def test_find_b_star_halves_from_the_start(manev_state, chi):
    b, result = find_b_star(manev_state, chi, start=0.05, halvings=2, max_iterations=3)
    assert b in (0.05, 0.025, 0.0125)
    assert result.b == b


def test_stationarity_residual_detects_a_perturbation(at_rest):
    base = stationarity_residual(at_rest)
    assert base < stationarity_residual(at_rest, perturbation=0.5)


def test_virial_without_drift(at_rest):
    virial = virial_selfsimilar(at_rest)
    assert virial.residual < 2e-2


def _cut_by_the_cutoff(state, scale):
    profile = state.profile
    b = scale * math.sqrt(state.kinetic / state.mass) / state.support_radius
    return EnergyProfile(profile.energies, profile.values, profile.potential, b,
                         CutoffSpec(0.5 * state.support_radius), profile.has_jump)


def test_virial_terms_of_the_ground_state(manev_state):
    terms = virial_terms(manev_state.profile)
    assert terms.drift == 0.0
    assert terms.residual < 1e-2


def test_virial_terms_balance_a_cut_drift(manev_state):
    terms = virial_terms(_cut_by_the_cutoff(manev_state, 1.0))
    assert terms.drift > 0.0
    assert terms.residual < 1e-2
    # the opposite drift sign misses the balance by 2 |drift|
    flipped = abs(terms.kinetic - terms.force_moment + terms.drift) / terms.kinetic
    assert terms.residual < 0.25 * flipped


def test_selfsimilar_scale_is_one_at_the_renormalized_time(drifting):
    assert drifting.renormalized().b == pytest.approx(drifting.b_tilde)
    t = 1.0 - 1.0 / (2.0 * drifting.b_tilde)
    assert blowup_selfsimilar(drifting, 1.0, t).scale == pytest.approx(1.0)


def test_self_similar_family_loses_kinetic_at_rate_one(drifting):
    times = blowup_times(1.0)
    series = blowup_series(lambda t: blowup_selfsimilar(drifting, 1.0, t), times)
    remaining = [s.remaining for s in series]
    assert rate_fit(remaining, [s.kinetic for s in series]) == pytest.approx(-1.0, abs=1e-8)
    masses = np.array([s.mass for s in series])
    assert np.allclose(masses, masses[0], rtol=1e-10)


def test_pseudoconformal_family_rate(manev_state):
    times = blowup_times(1.0)
    series = blowup_series(lambda t: blowup_pseudoconformal(manev_state, 1.0, t), times)
    rate = rate_fit([s.remaining for s in series], [s.kinetic for s in series])
    assert rate == pytest.approx(-2.0, abs=0.02)


def test_blowup_needs_an_earlier_time(manev_state, mixed_state, at_rest):
    with pytest.raises(DomainError):
        blowup_pseudoconformal(manev_state, 1.0, 1.0)
    with pytest.raises(DomainError):
        blowup_pseudoconformal(mixed_state, 1.0, 0.5)
    with pytest.raises(DomainError):
        blowup_selfsimilar(at_rest, 1.0, 0.5)


def test_blowup_times_approach_T():
    times = blowup_times(2.0, points=5)
    assert times[0] == pytest.approx(1.8)
    assert times[-1] == pytest.approx(1.998)
    assert np.all(np.diff(times) > 0)


def test_rate_fit_needs_enough_points():
    with pytest.raises(DomainError):
        rate_fit([1.0, 0.5], [1.0, 2.0])
    with pytest.raises(DomainError):
        rate_fit(np.ones(6), -np.ones(6))
