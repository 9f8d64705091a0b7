import math

import numpy as np
import pytest

from manevkit.exc import ConfigError, ConstraintError, GridError
from manevkit.phase_space import (ConstraintPair, CutoffSpec, DistributionCurve, EnergyProfile,
                                  ModelParams, PowerLaw, RadialField, RadialGrid, SumOfPowers,
                                  distribution_curve, energy_nodes, equimeasurability_distance,
                                  measure)


def test_grid_rejects_bad_shapes():
    with pytest.raises(GridError):
        RadialGrid(1.0, 4)
    with pytest.raises(GridError):
        RadialGrid(1.0, 100, edge=2.0)
    with pytest.raises(GridError):
        RadialGrid(-1.0, 100)


def test_graded_grid_places_edge_on_a_node():
    grid = RadialGrid(3.0, 401, 1.0)
    nodes = grid.nodes
    assert nodes[0] == 0.0 and nodes[-1] == 3.0
    assert nodes[grid.edge_index] == 1.0
    assert np.all(np.diff(nodes) > 0)
    # cells shrink towards the edge from both sides
    k = grid.edge_index
    assert grid.widths[k - 1] < grid.widths[k - 50]
    assert grid.widths[k] < grid.widths[k + 50]


def test_shell_weights_integrate_ball_volume():
    grid = RadialGrid(2.5, 301, 1.0)
    volume = grid.integrate_volume(np.ones(grid.size))
    assert abs(volume / (4.0 * math.pi / 3.0 * 2.5 ** 3) - 1.0) < 1e-12


def test_scaled_grid_keeps_shape():
    grid = RadialGrid(3.0, 101, 1.0)
    assert grid.scaled(2.0).shape_key == grid.shape_key
    assert np.allclose(grid.scaled(2.0).nodes, 2.0 * grid.nodes, rtol=1e-14)


def test_constraint_pair_and_model_validation():
    with pytest.raises(ConstraintError):
        ConstraintPair(0.0, 1.0)
    with pytest.raises(ConstraintError):
        ConstraintPair(1.0, -1.0)
    with pytest.raises(ConfigError):
        ModelParams(0.0, 0.0)
    with pytest.raises(ConfigError):
        ModelParams(-1.0, 1.0)
    assert ModelParams(0.0, 2.0).pure_manev
    assert ModelParams(1.0, 0.0).pure_poisson


def test_power_law_inverse_derivative():
    j = PowerLaw(4.0, 2.0)
    s = np.geomspace(1e-6, 1e6, 50)
    assert np.allclose(j.j_prime(j.j_prime_inverse(s)), s, rtol=1e-12)
    j.validate()


def test_sum_of_powers_inverse_and_bounds():
    j = SumOfPowers([(1.0, 4.0), (0.5, 6.0)])
    assert j.exponents == (4.0, 6.0)
    assert not j.is_power_law
    s = np.geomspace(1e-6, 1e6, 50)
    assert np.allclose(j.j_prime(j.j_prime_inverse(s)), s, rtol=1e-10)
    j.validate()


def test_casimir_validation_requires_p_above_three():
    with pytest.raises(ConfigError):
        PowerLaw(2.0).validate()
    with pytest.raises(ConfigError):
        SumOfPowers([(1.0, 0.5)])


def _flat_profile(values, has_jump=False):
    grid = RadialGrid(2.0, 101, 1.0)
    psi = RadialField(grid, np.where(grid.nodes <= 1.0, -1.0, 0.0))
    energies = np.linspace(-1.0, -0.5, len(values))
    return EnergyProfile(energies, np.asarray(values, float), psi, has_jump=has_jump)


def test_profile_must_be_nonincreasing_and_flag_jumps():
    with pytest.raises(ConstraintError):
        _flat_profile([1.0, 2.0, 0.0])
    with pytest.raises(ConstraintError):
        _flat_profile([1.0, 1.0, 1.0])
    profile = _flat_profile([1.0, 1.0, 1.0], has_jump=True)
    assert profile.evaluate(-0.5) == 0.0
    assert profile.evaluate(-0.75) == 1.0
    assert profile.evaluate(-2.0) == 1.0


def test_energy_nodes_cluster_towards_cut():
    nodes = energy_nodes(-1.0, -0.2, 50)
    assert nodes[0] == -1.0 and nodes[-1] == -0.2
    assert np.diff(nodes)[-1] < np.diff(nodes)[0]


def test_distribution_curve_from_samples():
    values = np.array([3.0, 1.0, 2.0, 2.0])
    volumes = np.array([0.5, 1.0, 0.25, 0.25])
    curve = DistributionCurve.from_samples(values, volumes)
    assert curve.sup == 3.0
    # meas{f > level} at the sampled levels
    assert curve.at(0.0) == 2.0
    assert curve.at(1.0) == 1.0
    assert curve.at(2.0) == 0.5
    assert curve.at(3.0) == 0.0


def test_equimeasurability_distance_of_equal_curves_is_zero(manev_state):
    curve = distribution_curve(manev_state.profile)
    assert equimeasurability_distance(curve, curve) == 0.0
    shifted = DistributionCurve(curve.levels, 1.1 * curve.volumes)
    assert equimeasurability_distance(curve, shifted) > 0.05


def test_layer_cake_matches_mass(manev_state):
    # the L1 norm of f is its mass
    curve = distribution_curve(manev_state.profile)
    assert abs(curve.layer_cake() / manev_state.mass - 1.0) < 1e-2


def test_measure_collects_moments(manev_state, j4):
    moments = measure(manev_state.profile, j4)
    assert abs(moments.mass / manev_state.mass - 1.0) < 1e-12
    assert moments.energy_norm == pytest.approx(moments.mass + moments.casimir + moments.kinetic)


def test_cutoff_profile():
    chi = CutoffSpec(2.0)
    r = np.linspace(0.0, 10.0, 201)
    values = chi(r)
    assert np.all(values[r <= 2.0] == 1.0)
    assert np.all(values[r >= chi.R_chi] == 0.0)
    assert np.all(np.diff(values) <= 0)
