import math
from dataclasses import replace

import numpy as np
import pytest

from manevkit.exc import DomainError, GridError
from manevkit.ground_state import solve_ground_state
from manevkit.phase_space import (RadialField, RadialGrid, density_from_profile,
                                  distribution_curve, equimeasurability_distance)
from manevkit.rearrangement import (ABEL_PREFACTOR, JacobianContext, SchwarzProfile,
                                    abel_cumulative, abel_forward, abel_invert,
                                    abel_level_measure, bathtub_gap, energy_rearrangement,
                                    jacobian_a, jacobian_a_prime, jacobian_inverse,
                                    level_measure, level_measure_distance, schwarz_profile,
                                    tune_nu)


@pytest.fixture(scope="module")
def square_well():
    grid = RadialGrid(2.0, 2000, 1.0)
    return JacobianContext(RadialField(grid, np.where(grid.nodes <= 1.0, -1.0, 0.0)))


@pytest.mark.parametrize("e", [-0.9, -0.5, -0.1])
def test_square_well_volume(square_well, e):
    ball = 4.0 * math.pi / 3.0
    assert jacobian_a(e, square_well) == pytest.approx(ball ** 2 * (2.0 * (e + 1.0)) ** 1.5,
                                                       rel=1e-6)
    assert jacobian_a_prime(e, square_well) == pytest.approx(
        3.0 * ball ** 2 * math.sqrt(2.0 * (e + 1.0)), rel=1e-6)


def test_jacobian_keeps_array_shape(square_well):
    e = np.array([[-0.9, -0.5], [-0.3, -0.1]])
    assert jacobian_a(e, square_well).shape == (2, 2)
    assert isinstance(jacobian_a(-0.5, square_well), float)


def test_jacobian_derivative_matches_differences(manev_state):
    ctx = JacobianContext(manev_state.potential)
    for e in np.linspace(ctx.e_min, ctx.e_max, 7)[1:-1]:
        h = 1e-5 * abs(e)
        fd = (jacobian_a(e + h, ctx) - jacobian_a(e - h, ctx)) / (2.0 * h)
        assert fd == pytest.approx(jacobian_a_prime(e, ctx), rel=1e-4)


def test_jacobian_inverse_round_trip(manev_state):
    ctx = JacobianContext(manev_state.potential)
    top = 0.9 * jacobian_a(ctx.e_max, ctx)
    volumes = np.geomspace(1e-3 * top, top, 9)
    back = jacobian_a(jacobian_inverse(volumes, ctx), ctx)
    assert np.max(np.abs(back / volumes - 1.0)) < 1e-10


def test_jacobian_domain(square_well):
    with pytest.raises(DomainError):
        jacobian_a(0.0, square_well)
    with pytest.raises(DomainError):
        jacobian_a_prime(0.3, square_well)
    with pytest.raises(DomainError):
        jacobian_inverse(-1.0, square_well)
    with pytest.raises(DomainError):
        JacobianContext(square_well.potential, b=-0.1)


def test_jacobian_inverse_rejects_unresolvable_volume(manev_state):
    ctx = JacobianContext(manev_state.potential)
    with pytest.raises(GridError):
        jacobian_inverse(2.0 * jacobian_a(ctx.e_max, ctx), ctx)


def test_level_measure():
    grid = RadialGrid(2.0, 401)
    psi = RadialField(grid, grid.nodes ** 2 - 4.0)
    measure = level_measure(psi, [-5.0, -3.0, 0.0])
    assert measure[0] == 0.0
    assert measure[1] == pytest.approx(4.0 * math.pi / 3.0, rel=1e-4)
    assert measure[2] == pytest.approx(32.0 * math.pi / 3.0, rel=1e-12)
    with pytest.raises(GridError):
        level_measure(psi, [0.5])


def test_schwarz_profile_jumps_take_the_lower_value():
    qstar = SchwarzProfile([0.0, 1.0, 1.0, 2.0], [3.0, 2.0, 1.0, 0.0])
    assert qstar.at(0.0) == 3.0
    assert qstar.at(0.5) == 2.5
    assert qstar.at(1.0) == 1.0
    assert qstar.left_limit(1.0) == 2.0
    assert qstar.at(3.0) == 0.0
    assert qstar.support_volume == 2.0


def test_schwarz_profile_of_zero_is_empty(manev_state):
    zero = manev_state.profile.with_values(np.zeros(manev_state.profile.values.size))
    qstar = schwarz_profile(zero)
    assert qstar.sup == 0.0
    with pytest.raises(DomainError):
        energy_rearrangement(qstar, JacobianContext(manev_state.potential))


def test_rearrangement_keeps_the_distribution(manev_state):
    ctx = JacobianContext(manev_state.potential)
    rearranged = energy_rearrangement(schwarz_profile(manev_state.profile), ctx,
                                      manev_state.profile.energies.size)
    gap = equimeasurability_distance(distribution_curve(manev_state.profile),
                                     distribution_curve(rearranged))
    assert gap < 1e-2
    assert density_from_profile(rearranged).mass == pytest.approx(manev_state.mass, rel=5e-3)


def test_abel_forward_of_a_constant():
    w = np.linspace(-1.0, 0.0, 101)
    a = abel_forward(w, np.ones(w.size))
    exact = ABEL_PREFACTOR * 2.0 / 3.0 * (w + 1.0) ** 1.5
    assert np.allclose(a, exact, rtol=1e-12, atol=1e-14)


def _l1(w, got, want):
    return float(np.sum(np.abs(got[:-1] - want[:-1]) * np.diff(w))
                 / np.sum(np.abs(want[:-1]) * np.diff(w)))


def test_abel_round_trip():
    w = np.linspace(-1.0, -0.2, 201)
    mu = 4.0 * math.pi / 3.0 * np.clip(1.0 - (w + 1.0) ** 2, 0.0, None) + 1.0
    back = abel_invert(w, abel_forward(w, mu))
    assert _l1(w, back, mu) < 1e-3


def _linear_mu_data(n):
    # mu = 2 + w on [-1, 0] transforms in closed form
    w = np.linspace(-1.0, 0.0, n)
    x = w + 1.0
    a = ABEL_PREFACTOR * (2.0 / 3.0 * x ** 1.5 + 4.0 / 15.0 * x ** 2.5)
    mids = 0.5 * (w[:-1] + w[1:])
    mu = 2.0 + np.concatenate([mids, mids[-1:]])
    return w, a, mu


def test_abel_cumulative_of_a_closed_form():
    w, a, _ = _linear_mu_data(401)
    x = w + 1.0
    assert np.allclose(abel_cumulative(w, a), x + 0.5 * x ** 2, atol=1e-3)


@pytest.mark.parametrize("n", [101, 401])
def test_abel_invert_of_a_closed_form(n):
    w, a, mu = _linear_mu_data(n)
    assert _l1(w, abel_invert(w, a), mu) < 1e-3


@pytest.mark.parametrize("n", [401, 1601])
def test_abel_invert_tolerates_noise(n):
    w, a, mu = _linear_mu_data(n)
    noisy = a * (1.0 + 1e-6 * np.random.default_rng(7).standard_normal(n))
    back = abel_invert(w, noisy)
    assert _l1(w, back, mu) < 1e-2
    assert np.max(np.abs(back - mu)) < 0.1


def test_abel_invert_needs_five_nodes():
    w = np.linspace(-1.0, 0.0, 4)
    with pytest.raises(GridError):
        abel_invert(w, np.zeros(4))


def test_level_measure_from_the_jacobian(manev_state):
    ctx = JacobianContext(manev_state.potential)
    w, mu = abel_level_measure(ctx)
    mids = 0.5 * (w[:-1] + w[1:])
    exact = level_measure(manev_state.potential, np.concatenate([mids, mids[-1:]]))
    assert _l1(w, mu, exact) < 1e-2


def test_level_measure_agrees_across_solves(manev_state, j4, options):
    again = solve_ground_state(manev_state.params, j4, None,
                               replace(options, damping=0.4, max_iterations=1000))
    first = abel_level_measure(JacobianContext(manev_state.potential), nodes=401)
    second = abel_level_measure(JacobianContext(again.potential), nodes=601)
    assert again.converged
    assert level_measure_distance(first, second) < 1e-3
    assert level_measure_distance(second, first) < 1e-3


def test_level_measure_distance_sees_a_shift():
    w = np.linspace(-1.0, 0.0, 101)
    assert level_measure_distance((w, 2.0 + w), (w, 2.1 + w)) == pytest.approx(0.1 / 1.5,
                                                                             rel=1e-2)


def test_abel_level_measure_rejects_a_bad_fraction(manev_state):
    with pytest.raises(DomainError):
        abel_level_measure(JacobianContext(manev_state.potential), fraction=1.0)


def test_bathtub_never_gains(manev_state, rng):
    ctx = JacobianContext(manev_state.potential)
    qstar = schwarz_profile(manev_state.profile)
    scale = abs(ctx.e_min) * manev_state.mass
    for k in range(10):
        gap = bathtub_gap(qstar, ctx, rng, swaps=None if k % 2 else 4)
        assert gap <= 1e-12 * scale


def test_tune_nu_returns_one_for_the_ground_state(manev_state):
    qstar = schwarz_profile(manev_state.profile)
    tuning = tune_nu(qstar, 0.0, manev_state.potential, manev_state.energies.potential,
                     params=manev_state.params)
    assert tuning.nu == pytest.approx(1.0, abs=5e-3)
    assert tuning.bracket[0] <= tuning.nu <= tuning.bracket[1]


def test_tune_nu_rejects_a_vanishing_potential(manev_state):
    qstar = schwarz_profile(manev_state.profile)
    flat = RadialField(manev_state.potential.grid, np.zeros(manev_state.potential.grid.size))
    with pytest.raises(DomainError):
        tune_nu(qstar, 0.0, flat, 1.0)
