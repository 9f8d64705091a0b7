from dataclasses import replace

import pytest

from manevkit.exc import DomainError
from manevkit.ground_state import (classify_regime, density_lipschitz_check, estimate_kjm,
                                   hamiltonian_lower_bound, regrid, solve_ground_state,
                                   structural_violations, subcritical_margin, trial_family,
                                   tune_pure_manev, virial_residual)
from manevkit.phase_space import ConstraintPair, ModelParams, SumOfPowers, casimir_mass
from manevkit.potentials import functional_K

VIRIAL_TOL = 5e-3


def test_pure_manev_state_is_critical(manev_state):
    assert manev_state.converged
    assert manev_state.coupling == 1.0
    assert abs(functional_K(manev_state.profile) - 1.0) < VIRIAL_TOL
    assert abs(manev_state.hamiltonian) / manev_state.kinetic < VIRIAL_TOL
    assert manev_state.summary()["K"] == pytest.approx(functional_K(manev_state.profile))


def test_polytrope_virial(poisson_state):
    assert poisson_state.converged
    half = 0.5 * poisson_state.energies.poisson
    assert abs(poisson_state.kinetic / half - 1.0) < VIRIAL_TOL


def test_virial_identity(manev_state, poisson_state, mixed_state):
    for state in (manev_state, poisson_state, mixed_state):
        assert virial_residual(state) < VIRIAL_TOL


def test_structure(manev_state, poisson_state, mixed_state):
    for state in (manev_state, poisson_state, mixed_state):
        assert structural_violations(state) == []
        assert state.support_radius < state.density.grid.extent


def test_multipliers(manev_state, poisson_state, mixed_state):
    for state in (manev_state, poisson_state, mixed_state):
        m = state.multipliers
        assert m.lam < 0 and m.mu < 0 and m.c_q > 0
        assert m.lam_fit == pytest.approx(m.lam, rel=2e-2)
        assert m.mu_fit == pytest.approx(m.mu, rel=2e-2)


def test_density_is_lipschitz_in_the_potential(manev_state, mixed_state):
    for state in (manev_state, mixed_state):
        check = density_lipschitz_check(state)
        assert check.ratio <= 1.1 * check.bound


def _hits(state, m1, mj):
    assert state.mass == pytest.approx(m1, rel=1e-8)
    assert state.casimir == pytest.approx(mj, rel=1e-8)


def test_poisson_targets(j4, options):
    state = solve_ground_state(ModelParams(2.0, 0.0), j4, (2.0, 3.0), options)
    _hits(state, 2.0, 3.0)
    assert virial_residual(state) < VIRIAL_TOL


def test_mixed_targets(mixed_state, j4, options):
    m1, mj = 0.95 * mixed_state.mass, 0.95 * mixed_state.casimir
    state = solve_ground_state(mixed_state.params, j4, ConstraintPair(m1, mj), options)
    _hits(state, m1, mj)
    assert state.normalized.omega > 1.0
    assert virial_residual(state) < VIRIAL_TOL


def test_manev_targets_set_the_coupling(j4, options):
    state = solve_ground_state(ModelParams(0.0, 1.0), j4, ConstraintPair(1.0, 2.0), options)
    _hits(state, 1.0, 2.0)
    assert functional_K(state.profile) == pytest.approx(state.coupling, rel=VIRIAL_TOL)
    bound = hamiltonian_lower_bound(state.kinetic, state.coupling)
    assert state.hamiltonian == pytest.approx(bound, abs=VIRIAL_TOL * state.kinetic)


def test_manev_targets_leave_a_coupling_residual(j4, options):
    state = solve_ground_state(ModelParams(0.0, 1.0), j4, ConstraintPair(1.0, 2.0), options)
    e = state.energies
    assert abs(e.kinetic - state.coupling * e.manev) < VIRIAL_TOL * e.kinetic
    assert virial_residual(state) == pytest.approx(abs(1.0 - 1.0 / state.coupling),
                                                   abs=VIRIAL_TOL)
    assert state.summary()["coupling_J"] == state.coupling


def test_unconverged_state_fails_the_virial(j4, options):
    state = solve_ground_state(ModelParams(1.0, 0.0), j4, None, replace(options, max_iterations=1))
    assert not state.converged
    assert virial_residual(state) > 2 * VIRIAL_TOL


def test_sum_of_powers_targets(options):
    j = SumOfPowers([(1.0, 4.0), (1.0, 6.0)])
    state = solve_ground_state(ModelParams(1.0, 0.0), j, ConstraintPair(1.5, 0.5), options)
    _hits(state, 1.5, 0.5)
    assert casimir_mass(state.profile, j=j) == pytest.approx(0.5, rel=1e-8)


def test_iteration_cap_is_reported(j4, options):
    state = solve_ground_state(ModelParams(0.0, 1.0), j4, None, replace(options, max_iterations=2))
    assert not state.converged
    assert state.iterations == 2


def test_regime_classification():
    params = ModelParams(1.0, 1.0)
    targets = ConstraintPair(1.0, 1.0)
    assert classify_regime(targets, params, 100.0, 4.0) == "subcritical"
    assert classify_regime(targets, params, 1e-3, 4.0) == "supercritical"
    assert classify_regime(targets, ModelParams(0.0, 1.0), 1e-3, 4.0, coupling=1.0) == "critical"
    with pytest.raises(DomainError):
        subcritical_margin(targets, 1.0, 0.0, 4.0)


def test_hamiltonian_lower_bound():
    assert hamiltonian_lower_bound(2.0, 2.0) == 1.0
    with pytest.raises(DomainError):
        hamiltonian_lower_bound(2.0, 0.0)


def test_trial_family_prefix():
    short = [label for label, _ in trial_family(3, seed=1, size=200)]
    longer = [label for label, _ in trial_family(4, seed=1, size=200)]
    assert longer[:3] == short


def test_kjm_estimate_is_seeded_and_monotone(j4, manev_state):
    small = estimate_kjm(j4, 3, seed=1, size=200)
    again = estimate_kjm(j4, 3, seed=1, size=200)
    larger = estimate_kjm(j4, 5, seed=1, size=200)
    assert small.value == again.value and small.label == again.label
    assert larger.value <= small.value
    assert len(larger.candidates) == 5
    with_minimizer = estimate_kjm(j4, 3, seed=1, minimizers=[manev_state], size=200)
    assert with_minimizer.value <= small.value
    assert len(with_minimizer.candidates) == 4


def test_regrid_extends_the_grid(manev_state):
    assert regrid(manev_state, manev_state.density.grid.extent) is manev_state
    wider = regrid(manev_state, 6.0 * manev_state.support_radius)
    assert wider.density.grid.extent == pytest.approx(6.0 * wider.support_radius)
    assert wider.mass == pytest.approx(manev_state.mass, rel=VIRIAL_TOL)


def test_tune_pure_manev(j4, options):
    tuning = tune_pure_manev(2.0, j4, options=options)
    assert tuning.state.mass == pytest.approx(2.0, rel=1e-8)
    assert abs(functional_K(tuning.state.profile) - 1.0) < 1e-4
    assert tuning.mj == pytest.approx(tuning.state.casimir, rel=1e-8)
    with pytest.raises(DomainError):
        tune_pure_manev(2.0, j4, ModelParams(1.0, 1.0), options)
