"""Named invariant checks run by ``manev-kit verify``.

Checks are registered in order with ``@check(name)``; each gets the shared ``VerifyContext``
and returns the measured value and its threshold. Checks whose name starts with
``kernel.`` compare the kernels against analytic values, so scaling the kernel prefactors
with ``kernel_scale`` makes exactly those checks fail.
"""
import contextlib
import logging
import math
import typing
from collections import OrderedDict, namedtuple
from dataclasses import replace
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from manevkit import potentials
from manevkit.exc import ManevKitError
from manevkit.ground_state import (GroundState, SolverOptions, density_lipschitz_check,
                                   solve_ground_state, structural_violations, virial_residual)
from manevkit.phase_space import (CasimirSpec, ConstraintPair, ModelParams, PowerLaw,
                                  RadialDensity, RadialField, RadialGrid, casimir_mass,
                                  density_from_profile, distribution_curve,
                                  equimeasurability_distance, kinetic_energy)
from manevkit.potentials import (functional_K, interpolation_ratios, manev_potential,
                                 pairing, poisson_energy, poisson_potential)
from manevkit.rearrangement import (JacobianContext, abel_forward, abel_invert,
                                    abel_level_measure, bathtub_gap, energy_rearrangement,
                                    jacobian_a, jacobian_a_prime, jacobian_inverse,
                                    level_measure_distance, schwarz_profile)
from manevkit.rescaling import (RescaleParams, apply_rescale, fit_constraints, h_ratio,
                                rescale_factors)
from manevkit.self_similar import solve_self_similar

logger = logging.getLogger(__name__)

CheckStatus = namedtuple("CheckStatus", "name passed value threshold detail")

registry = OrderedDict()


def check(name: str):
    def register(fn):
        registry[name] = fn
        return fn
    return register


@contextlib.contextmanager
def kernel_scale(scale: float):
    """Multiply both kernel prefactors by ``scale`` inside the block."""
    saved = potentials.POISSON_PREFACTOR, potentials.MANEV_PREFACTOR
    potentials.POISSON_PREFACTOR = saved[0] * scale
    potentials.MANEV_PREFACTOR = saved[1] * scale
    try:
        yield
    finally:
        potentials.POISSON_PREFACTOR, potentials.MANEV_PREFACTOR = saved


class VerifyContext:
    """Ground states and seeded samples shared between checks."""

    def __init__(self, j: CasimirSpec, options: SolverOptions = SolverOptions(), seed: int = 0,
                 relax_iterations: int = 50, kernel_size: int = 2000):
        self.j = j
        self.options = options
        self.seed = seed
        self.relax_iterations = relax_iterations
        self.kernel_size = kernel_size

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    @cached_property
    def unit_ball(self) -> RadialDensity:
        grid = RadialGrid(2.0, self.kernel_size, 1.0)
        return RadialDensity(grid, (grid.nodes <= 1.0).astype(float))

    @cached_property
    def manev_state(self) -> GroundState:
        return solve_ground_state(ModelParams(0.0, 1.0), self.j, None, self.options)

    @cached_property
    def poisson_state(self) -> GroundState:
        return solve_ground_state(ModelParams(1.0, 0.0), self.j, None, self.options)

    @cached_property
    def mixed_state(self) -> GroundState:
        return solve_ground_state(ModelParams(1.0, 1.0), self.j, None, self.options)

    @property
    def states(self) -> typing.List[GroundState]:
        return [self.manev_state, self.poisson_state, self.mixed_state]

    @cached_property
    def square_well(self) -> JacobianContext:
        grid = RadialGrid(2.0, self.kernel_size, 1.0)
        return JacobianContext(RadialField(grid, np.where(grid.nodes <= 1.0, -1.0, 0.0)))


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


@check("kernel.poisson_origin")
def _poisson_origin(ctx: VerifyContext):
    return _rel(float(poisson_potential(ctx.unit_ball).values[0]), -0.5), 1e-6


@check("kernel.manev_origin")
def _manev_origin(ctx: VerifyContext):
    return _rel(float(manev_potential(ctx.unit_ball).values[0]), -2.0 / math.pi), 1e-6


@check("kernel.exterior_law")
def _exterior_law(ctx: VerifyContext):
    density = ctx.unit_ball
    r = density.grid.nodes
    outside = r > 1.0
    exact = -density.mass / (4.0 * math.pi * r[outside])
    phi = poisson_potential(density).values[outside]
    return float(np.max(np.abs(phi / exact - 1.0))), 1e-8


@check("kernel.energy_pairing")
def _energy_pairing(ctx: VerifyContext):
    # E^P(ball) = -int phi^P rho = 8 pi / 15
    return _rel(poisson_energy(ctx.unit_ball), 8.0 * math.pi / 15.0), 1e-6


@check("abel.round_trip")
def _abel_round_trip(ctx: VerifyContext):
    w = np.linspace(-1.0, -0.2, 401)
    mu = 4.0 * math.pi / 3.0 * np.clip(1.0 - (w + 1.0) ** 2, 0.0, None) + 1.0
    back = abel_invert(w, abel_forward(w, mu))
    gap = float(np.sum(np.abs(back[:-1] - mu[:-1]) * np.diff(w)))
    return gap / float(np.sum(np.abs(mu[:-1]) * np.diff(w))), 1e-3


@check("abel.re_solve")
def _abel_re_solve(ctx: VerifyContext):
    state = ctx.manev_state
    options = replace(ctx.options, damping=0.4, max_iterations=2 * ctx.options.max_iterations)
    again = solve_ground_state(state.params, ctx.j, None, options)
    first = abel_level_measure(JacobianContext(state.potential), nodes=401)
    second = abel_level_measure(JacobianContext(again.potential), nodes=601)
    return level_measure_distance(first, second), 1e-3


@check("rescaling.factors")
def _rescaling_factors(ctx: VerifyContext):
    rng = ctx.rng(1)
    j = PowerLaw(ctx.j.exponents[0])
    state = ctx.mixed_state
    base = state.profile
    base_density = state.density
    base_moments = np.array([base_density.mass, casimir_mass(base, j=j),
                             kinetic_energy(base), poisson_energy(base_density),
                             -pairing(base_density, manev_potential(base_density).values)])
    worst = 0.0
    for _ in range(20):
        params = RescaleParams(*np.exp(rng.uniform(-1.0, 1.0, size=3)))
        scaled = apply_rescale(base, params)
        density = density_from_profile(scaled)
        moments = np.array([density.mass, casimir_mass(scaled, j=j),
                            kinetic_energy(scaled), poisson_energy(density),
                            -pairing(density, manev_potential(density).values)])
        factors = rescale_factors(params, j)
        predicted = base_moments * np.array([factors.mass, factors.casimir[0], factors.kinetic,
                                             factors.poisson_energy, factors.manev_energy])
        worst = max(worst, float(np.max(np.abs(moments / predicted - 1.0))))
    return worst, 1e-10


@check("rescaling.power_law_closed_form")
def _power_law(ctx: VerifyContext):
    j = PowerLaw(ctx.j.exponents[0])
    state = ctx.manev_state
    rng = ctx.rng(2)
    worst = 0.0
    base_mass = state.mass
    base_casimir = casimir_mass(state.profile, j=j)
    for _ in range(5):
        m1, mj = np.exp(rng.uniform(-1.0, 1.0, size=2))
        from_fit = fit_constraints(state.profile, ConstraintPair(m1, mj), j).gamma
        ratio = mj * base_mass / (m1 * base_casimir)
        root = brentq(lambda g: math.log(h_ratio(state.profile, j, g) / ratio),
                      1e-6, 1e6, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        worst = max(worst, _rel(from_fit, root))
    return worst, 1e-12


@check("jacobian.square_well")
def _square_well(ctx: VerifyContext):
    well = ctx.square_well
    worst = 0.0
    for e in (-0.9, -0.5, -0.1):
        exact = (4.0 * math.pi / 3.0) ** 2 * (2.0 * (e + 1.0)) ** 1.5
        worst = max(worst, _rel(float(jacobian_a(e, well)), exact))
    return worst, 1e-7


@check("jacobian.derivative")
def _jacobian_derivative(ctx: VerifyContext):
    jc = JacobianContext(ctx.manev_state.potential)
    worst = 0.0
    for e in np.linspace(jc.e_min, jc.e_max, 7)[1:-1]:
        h = 1e-5 * abs(e)
        fd = (float(jacobian_a(e + h, jc)) - float(jacobian_a(e - h, jc))) / (2.0 * h)
        worst = max(worst, _rel(fd, float(jacobian_a_prime(e, jc))))
    return worst, 1e-4


@check("jacobian.round_trip")
def _jacobian_round_trip(ctx: VerifyContext):
    jc = JacobianContext(ctx.manev_state.potential)
    top = float(jacobian_a(jc.e_max - 1e-6 * abs(jc.e_max), jc))
    volumes = np.geomspace(1e-3 * top, 0.9 * top, 9)
    back = jacobian_a(jacobian_inverse(volumes, jc), jc)
    return float(np.max(np.abs(back / volumes - 1.0))), 1e-10


@check("ground_state.poisson_virial")
def _poisson_virial(ctx: VerifyContext):
    state = ctx.poisson_state
    return _rel(state.kinetic, 0.5 * state.energies.poisson), 1e-4


@check("ground_state.virial")
def _virial(ctx: VerifyContext):
    return max(virial_residual(s) for s in ctx.states), 1e-4


@check("ground_state.manev_critical")
def _manev_critical(ctx: VerifyContext):
    state = ctx.manev_state
    k_gap = abs(functional_K(state.profile) - 1.0)
    h_gap = abs(state.hamiltonian) / state.kinetic
    return max(k_gap, h_gap), 1e-4


@check("ground_state.multipliers")
def _multipliers(ctx: VerifyContext):
    worst = 0.0
    for state in ctx.states:
        m = state.multipliers
        worst = max(worst, _rel(m.lam_fit, m.lam), _rel(m.mu_fit, m.mu))
    return worst, 1e-3


@check("ground_state.structure")
def _structure(ctx: VerifyContext):
    failures = [v for s in ctx.states for v in structural_violations(s)]
    return float(len(failures)), 0.0, "; ".join(failures)


@check("ground_state.density_lipschitz")
def _lipschitz(ctx: VerifyContext):
    worst = 0.0
    for state in ctx.states:
        result = density_lipschitz_check(state)
        worst = max(worst, result.ratio / result.bound)
    return worst, 1.1


@check("rearrangement.equimeasurability")
def _equimeasurability(ctx: VerifyContext):
    state = ctx.manev_state
    jc = JacobianContext(state.potential)
    rearranged = energy_rearrangement(schwarz_profile(state.profile), jc,
                                      state.profile.energies.size)
    return equimeasurability_distance(distribution_curve(state.profile),
                                      distribution_curve(rearranged)), 1e-3


@check("rearrangement.bathtub")
def _bathtub(ctx: VerifyContext):
    state = ctx.manev_state
    jc = JacobianContext(state.potential)
    qstar = schwarz_profile(state.profile)
    rng = ctx.rng(3)
    gaps = [bathtub_gap(qstar, jc, rng, swaps=None if k % 2 else 8) for k in range(50)]
    scale = abs(jc.e_min) * state.mass
    return max(gaps) / scale, 1e-12


@check("rearrangement.descent")
def _descent(ctx: VerifyContext):
    result = solve_self_similar(ctx.manev_state, 0.05, max_iterations=ctx.relax_iterations)
    return float(result.descent_violations), 0.0


@check("potentials.interpolation_invariance")
def _interpolation(ctx: VerifyContext):
    p = ctx.j.exponents[0]
    state = ctx.mixed_state
    base = np.array(interpolation_ratios(state.profile, p))
    rng = ctx.rng(4)
    worst = 0.0
    for _ in range(5):
        params = RescaleParams(*np.exp(rng.uniform(-0.5, 0.5, size=3)))
        ratios = np.array(interpolation_ratios(apply_rescale(state.profile, params), p))
        worst = max(worst, float(np.max(np.abs(ratios / base - 1.0))))
    return worst, 1e-10


@check("potentials.k_invariance")
def _k_invariance(ctx: VerifyContext):
    profile = ctx.manev_state.profile
    base = functional_K(profile)
    worst = max(_rel(functional_K(apply_rescale(profile, RescaleParams(g, s, s))), base)
                for g, s in ((1.0, 0.5), (1.0, 2.0), (1.0, 3.0)))
    return worst, 1e-12


def run_check(name: str, ctx: VerifyContext) -> CheckStatus:
    try:
        result = registry[name](ctx)
    except ManevKitError as err:
        logger.warning("check %s raised %s: %s", name, type(err).__name__, err)
        return CheckStatus(name, False, math.nan, math.nan, str(err))
    value, threshold = result[0], result[1]
    detail = result[2] if len(result) > 2 else ""
    passed = bool(value <= threshold)
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, "%-40s %s value=%.3e threshold=%.1e", name,
               "pass" if passed else "FAIL", value, threshold)
    return CheckStatus(name, passed, float(value), float(threshold), detail)


def run_checks(ctx: VerifyContext, names: typing.Optional[typing.Sequence[str]] = None,
               scale: float = 1.0) -> typing.List[CheckStatus]:
    """Run the registered checks in order; ``scale`` multiplies the kernel prefactors."""
    names = list(registry) if names is None else list(names)
    unknown = [n for n in names if n not in registry]
    if unknown:
        raise KeyError("unknown checks: %s" % ", ".join(unknown))
    with kernel_scale(scale):
        return [run_check(name, ctx) for name in names]
