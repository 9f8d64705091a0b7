"""Ground states by a damped self-consistent fixed point on the Euler-Lagrange form.

The fixed point is solved in normalized variables: the support radius is 1, the central
potential is psi(0) = -1 and the cut-off energy is e_cut = psi(1). The profile is

    F(e) = (j')^{-1}(A (e_cut - e))_+

and psi is replaced by c Phi(rho) with Phi = omega phi^P + phi^M (or one component) and
c = -1/Phi(0). The normalized solution is then carried to the physical targets by a member
of the scaling group gamma f(x/lambda, mu v) that keeps it stationary.
"""
import logging
import math
import typing
from collections import namedtuple
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from manevkit import settings
from manevkit.exc import BracketError, ConstraintError, DivergenceError, DomainError
from manevkit.phase_space import (CasimirSpec, ConstraintPair, EnergyProfile, ModelParams,
                                  RadialDensity, RadialField, RadialGrid, casimir_mass,
                                  density_from_profile, energy_nodes, profile_integral)
from manevkit.potentials import (Energies, RadialPotential, combined_potential, energies,
                                 functional_K, functional_KjM, kjm_weight, manev_potential,
                                 poisson_potential)
from manevkit.rescaling import (RescaleParams, apply_rescale, constraint_rescale,
                                fit_constraints)

logger = logging.getLogger(__name__)

POISSON, MANEV, MIXED = "poisson", "manev", "mixed"

Multipliers = namedtuple("Multipliers", "lam mu c_q lam_fit mu_fit")


@dataclass(frozen=True)
class SolverOptions:
    size: int = settings.GRID_SIZE
    extent_factor: float = settings.EXTENT_FACTOR
    inner: typing.Optional[int] = None
    energy_nodes: int = settings.ENERGY_NODES
    damping: float = settings.DAMPING
    tolerance: float = settings.TOLERANCE
    max_iterations: int = settings.MAX_ITERATIONS

    def grid(self) -> RadialGrid:
        return RadialGrid(self.extent_factor, self.size, 1.0, self.inner)


def model_kind(params: ModelParams) -> str:
    if params.pure_poisson:
        return POISSON
    if params.pure_manev:
        return MANEV
    return MIXED


@dataclass(eq=False)
class NormalizedSolution:
    kind: str
    omega: float
    amplitude: float
    profile: EnergyProfile
    density: RadialDensity
    scale: float
    mass: float
    casimir: float
    iterations: int
    converged: bool
    update: float

    @property
    def psi(self) -> np.ndarray:
        return self.profile.potential.values


def _unit_ball_guess(grid: RadialGrid) -> np.ndarray:
    r = grid.nodes
    with np.errstate(divide="ignore"):
        outside = -2.0 / (3.0 * r)
    return np.where(r < 1.0, -(3.0 - r * r) / 3.0, outside)


def _normalized_profile(grid: RadialGrid, psi: np.ndarray, j: CasimirSpec, amplitude: float,
                        count: int) -> EnergyProfile:
    e_cut = float(psi[grid.edge_index])
    nodes = energy_nodes(float(psi[0]), e_cut, count)
    values = j.j_prime_inverse(amplitude * (e_cut - nodes))
    values[-1] = 0.0
    return EnergyProfile(nodes, values, RadialField(grid, psi))


def _shape_potential(density: RadialDensity, kind: str, omega: float) -> np.ndarray:
    if kind == POISSON:
        return poisson_potential(density).values
    if kind == MANEV:
        return manev_potential(density).values
    return omega * poisson_potential(density).values + manev_potential(density).values


def solve_normalized(kind: str, j: CasimirSpec, omega: float = 1.0, amplitude: float = 1.0,
                     options: SolverOptions = SolverOptions(),
                     initial: typing.Optional[np.ndarray] = None) -> NormalizedSolution:
    """Damped Picard iteration psi <- (1 - theta) psi + theta c Phi(rho(psi))."""
    grid = options.grid()
    psi = _unit_ball_guess(grid) if initial is None else np.array(initial, dtype=float)
    theta = options.damping
    previous = math.inf
    growing = 0
    update = math.inf
    iterations = 0
    for iterations in range(1, options.max_iterations + 1):
        profile = _normalized_profile(grid, psi, j, amplitude, options.energy_nodes)
        density = density_from_profile(profile)
        shape = _shape_potential(density, kind, omega)
        target = -shape / shape[0]
        update = float(np.max(np.abs(target - psi)) / np.max(np.abs(psi)))
        psi = (1.0 - theta) * psi + theta * target
        psi[0] = -1.0
        if update < options.tolerance:
            break
        growing = growing + 1 if update > previous else 0
        if growing >= settings.DIVERGENCE_PATIENCE:
            raise DivergenceError("fixed point update grew for %d consecutive steps (last %.3g)"
                                  % (growing, update))
        previous = update
        logger.debug("%s fixed point: iteration %d update %.3e", kind, iterations, update)
    converged = update < options.tolerance
    if not converged:
        logger.warning("%s fixed point hit the iteration cap %d with update %.3e",
                       kind, options.max_iterations, update)

    profile = _normalized_profile(grid, psi, j, amplitude, options.energy_nodes)
    density = density_from_profile(profile)
    shape = _shape_potential(density, kind, omega)
    return NormalizedSolution(kind, omega, amplitude, profile, density, -1.0 / shape[0],
                              density.mass, casimir_mass(profile, j=j), iterations,
                              converged, update)


def _fit_amplitude(kind: str, j: CasimirSpec, omega: float, ratio: float,
                   options: SolverOptions, initial=None) -> NormalizedSolution:
    """Amplitude A whose normalized solution has Mj/M1 = ratio (non-power Casimirs)."""
    last = {"psi": initial}

    def gap(log_a: float) -> float:
        norm = solve_normalized(kind, j, omega, math.exp(log_a), options, last["psi"])
        last["psi"] = norm.psi
        last[log_a] = norm
        return math.log(norm.casimir / norm.mass) - math.log(ratio)

    lo, hi = (math.log(x) for x in settings.AMPLITUDE_BRACKET)
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise BracketError("no amplitude in %r gives Mj/M1 = %.6g"
                           % (settings.AMPLITUDE_BRACKET, ratio))
    root = brentq(gap, lo, hi, xtol=1e-13)
    return last[root] if root in last else solve_normalized(kind, j, omega, math.exp(root),
                                                           options, last["psi"])


def _gamma(norm: NormalizedSolution, j: CasimirSpec,
           targets: typing.Optional[ConstraintPair]) -> float:
    if targets is None or not j.is_power_law:
        return 1.0
    p = j.exponents[0]
    ratio = (targets.mj / targets.m1) * (norm.mass / norm.casimir)
    return ratio ** (1.0 / (p - 1.0))


def _mapping(norm: NormalizedSolution, params: ModelParams, j: CasimirSpec,
             targets: typing.Optional[ConstraintPair]) -> typing.Tuple[RescaleParams, float]:
    """Stationarity-preserving rescaling of a normalized solution and its coupling J."""
    c = norm.scale
    gamma = _gamma(norm, j, targets)
    delta, kappa = params.delta, params.kappa
    if norm.kind == MIXED:
        lam = kappa * norm.omega / delta
        return RescaleParams(gamma, lam, kappa * gamma * lam / c), 1.0
    if norm.kind == POISSON:
        lam = 1.0
        if targets is not None:
            lam = (c ** 3 * norm.mass / (delta ** 3 * gamma ** 2 * targets.m1)) ** (1.0 / 3.0)
        return RescaleParams(gamma, lam, delta * gamma * lam * lam / c), 1.0
    if targets is None:
        return RescaleParams(1.0, 1.0, kappa / c), 1.0
    lam_over_mu = (targets.m1 / (gamma * norm.mass)) ** (1.0 / 3.0)
    return RescaleParams(gamma, 1.0, 1.0 / lam_over_mu), c / (gamma * kappa * lam_over_mu)


def _mixed_mass(norm: NormalizedSolution, params: ModelParams, j: CasimirSpec,
                targets: ConstraintPair) -> float:
    gamma = _gamma(norm, j, targets)
    return norm.scale ** 3 * norm.mass / (params.kappa ** 3 * gamma ** 2)


def _solve_mixed(params: ModelParams, j: CasimirSpec, targets: ConstraintPair,
                 options: SolverOptions, initial=None) -> NormalizedSolution:
    """Root-find omega so the mapped mixed solution carries the target mass."""
    last = {"psi": initial}
    ratio = targets.mj / targets.m1

    def solve(log_w: float) -> NormalizedSolution:
        omega = math.exp(log_w)
        if j.is_power_law:
            norm = solve_normalized(MIXED, j, omega, 1.0, options, last["psi"])
        else:
            norm = _fit_amplitude(MIXED, j, omega, ratio, options, last["psi"])
        last["psi"] = norm.psi
        last[log_w] = norm
        return norm

    def gap(log_w: float) -> float:
        return math.log(_mixed_mass(solve(log_w), params, j, targets) / targets.m1)

    lo_cap, hi_cap = (math.log(x) for x in settings.OMEGA_BRACKET)
    lo = hi = 0.0
    g_lo = g_hi = gap(0.0)
    step = math.log(4.0)
    # the mapped mass decreases as the Poisson share omega grows
    while g_lo * g_hi > 0:
        if g_hi > 0:
            lo, g_lo = hi, g_hi
            hi += step
            if hi > hi_cap:
                raise BracketError("target mass %.6g is not reached for omega <= %.3g"
                                   % (targets.m1, settings.OMEGA_BRACKET[1]))
            g_hi = gap(hi)
        else:
            hi, g_hi = lo, g_lo
            lo -= step
            if lo < lo_cap:
                raise BracketError("target mass %.6g exceeds the mixed family; the constraint "
                                   "pair is not subcritical" % targets.m1)
            g_lo = gap(lo)
    if g_lo == 0.0:
        return last[lo]
    if g_hi == 0.0:
        return last[hi]
    root = brentq(gap, lo, hi, xtol=1e-13)
    return last[root] if root in last else solve(root)


def _normalize_targets(targets) -> typing.Optional[ConstraintPair]:
    if targets is None or isinstance(targets, ConstraintPair):
        return targets
    return ConstraintPair(*targets)


@dataclass(eq=False)
class GroundState:
    params: ModelParams
    j: CasimirSpec
    targets: typing.Optional[ConstraintPair]
    profile: EnergyProfile
    potential: RadialPotential
    density: RadialDensity
    energies: Energies
    casimir: float
    coupling: float
    support_radius: float
    normalized: NormalizedSolution
    rescale: RescaleParams
    options: SolverOptions = field(default_factory=SolverOptions)

    @property
    def converged(self) -> bool:
        return self.normalized.converged

    @property
    def iterations(self) -> int:
        return self.normalized.iterations

    @property
    def mass(self) -> float:
        return self.energies.mass

    @property
    def kinetic(self) -> float:
        return self.energies.kinetic

    @property
    def hamiltonian(self) -> float:
        return self.energies.hamiltonian

    @cached_property
    def multipliers(self) -> Multipliers:
        return recover_multipliers(self)

    @cached_property
    def energy_norm(self) -> float:
        return self.mass + self.casimir + self.kinetic

    def summary(self) -> dict:
        m = self.multipliers
        out = {
            "delta": self.params.delta,
            "kappa": self.params.kappa,
            "casimir": repr(self.j),
            "M1": self.mass,
            "Mj": self.casimir,
            "kinetic": self.kinetic,
            "E_P": self.energies.poisson,
            "E_M": self.energies.manev,
            "E_pot": self.energies.potential,
            "H": self.hamiltonian,
            "coupling_J": self.coupling,
            "lambda": m.lam,
            "mu": m.mu,
            "C_Q": m.c_q,
            "lambda_fit": m.lam_fit,
            "mu_fit": m.mu_fit,
            "R_Q": self.support_radius,
            "virial_residual": virial_residual(self),
            "iterations": self.iterations,
            "converged": self.converged,
            "update": self.normalized.update,
        }
        if self.energies.manev > 0:
            out["K"] = functional_K(self.profile)
            out["K_jM"] = functional_KjM(self.profile, self.j)
        return out


def _build_state(norm: NormalizedSolution, params: ModelParams, j: CasimirSpec,
                 targets: typing.Optional[ConstraintPair], options: SolverOptions) -> GroundState:
    rescale, coupling = _mapping(norm, params, j, targets)
    profile = apply_rescale(norm.profile, rescale)
    if targets is not None:
        fit = fit_constraints(profile, targets, j)
        post = fit.params
        if not post.is_identity:
            logger.debug("constraint post-pass: gamma-1=%.3e lambda-1=%.3e",
                         fit.gamma - 1.0, fit.lam - 1.0)
            profile = apply_rescale(profile, post)
            rescale = rescale.then(post)
    density = density_from_profile(profile)
    potential = combined_potential(density, params)
    values = energies(profile, params)
    return GroundState(params, j, targets, profile, potential, density, values,
                       casimir_mass(profile, j=j), coupling, profile.grid.edge,
                       norm, rescale, options)


def solve_ground_state(params: ModelParams, j: CasimirSpec, targets=None,
                       options: SolverOptions = SolverOptions(),
                       kjm_estimate: typing.Optional[float] = None,
                       initial: typing.Optional[NormalizedSolution] = None) -> GroundState:
    """Steady state of the Euler-Lagrange form meeting ``targets`` (M1, Mj).

    Without targets the normalized solution is returned with gamma = 1 (and omega = 1 for
    the mixed model); for pure Manev this is the steady state with coupling J = 1.
    """
    j.validate()
    targets = _normalize_targets(targets)
    kind = model_kind(params)
    if kind == MIXED and targets is not None and kjm_estimate is not None:
        margin = subcritical_margin(targets, params.kappa, kjm_estimate, j.exponents[0])
        if margin <= 0:
            logger.warning("constraint pair is not certified subcritical (margin %.3g)", margin)
    start = None if initial is None else initial.psi
    if kind == MIXED and targets is not None:
        norm = _solve_mixed(params, j, targets, options, start)
    elif targets is not None and not j.is_power_law:
        norm = _fit_amplitude(kind, j, 1.0, targets.mj / targets.m1, options, start)
    else:
        norm = solve_normalized(kind, j, 1.0, 1.0, options, start)
    state = _build_state(norm, params, j, targets, options)
    logger.info("%s ground state: M1=%.8g Mj=%.8g H=%.8g J=%.8g after %d iterations",
                kind, state.mass, state.casimir, state.hamiltonian, state.coupling,
                state.iterations)
    return state


def recover_multipliers(state: GroundState) -> Multipliers:
    """lambda and mu of j'(Q) = (e - lambda)/mu from the identities and from a linear fit."""
    profile = state.profile
    j = state.j
    c_q = profile_integral(profile, j.t_j_prime(profile.values)) - state.casimir
    if not c_q > 0:
        raise ConstraintError("C_Q = %.6g is not positive: the Casimir violates its growth "
                              "bounds or the state is unconverged" % c_q)
    kinetic = state.kinetic
    mu = -kinetic / (3.0 * c_q)
    lam = -(state.coupling * state.energies.potential
            - kinetic / 6.0 * (5.0 + 2.0 * state.casimir / c_q)) / state.mass
    support = profile.values > 0
    slope, intercept = np.polyfit(profile.energies[support], j.j_prime(profile.values[support]), 1)
    return Multipliers(lam, mu, c_q, -intercept / slope, 1.0 / slope)


def virial_residual(state: GroundState) -> float:
    """|kin - delta E^P / 2 - kappa E^M| / kin.

    A pure Manev state with targets balances kin = J E^M instead, so its residual is
    |1 - 1/J|; the summary reports J as ``coupling_J``.
    """
    e = state.energies
    p = state.params
    rhs = 0.5 * p.delta * e.poisson + p.kappa * e.manev
    return abs(e.kinetic - rhs) / e.kinetic


def subcritical_margin(targets, kappa: float, estimate: float, p: float) -> float:
    """K_hat - kappa M1^((p-3)/(3(p-1))) (M1 + Mj)^(2/(3(p-1)))."""
    if not estimate > 0:
        raise DomainError("the K_jM estimate must be positive")
    targets = _normalize_targets(targets)
    return estimate - kappa * kjm_weight(targets.m1, targets.mj, p)


def classify_regime(targets, params: ModelParams, estimate: float, p: float,
                    coupling: typing.Optional[float] = None,
                    tolerance: float = settings.MANEV_TUNE_TOLERANCE) -> str:
    """subcritical, critical or supercritical; non-rigorous since K_hat is an upper estimate."""
    if params.pure_manev and coupling is not None and abs(coupling - 1.0) <= tolerance:
        return "critical"
    if subcritical_margin(targets, params.kappa, estimate, p) > 0:
        return "subcritical"
    return "supercritical"


def hamiltonian_lower_bound(kinetic: float, coupling: float) -> float:
    """H(f) >= kin (1 - 1/J) on the constraint set."""
    if not coupling > 0:
        raise DomainError("coupling must be positive")
    return kinetic * (1.0 - 1.0 / coupling)


ManevTuning = namedtuple("ManevTuning", "mj state trace")


def tune_pure_manev(m1: float, j: CasimirSpec, params: ModelParams = ModelParams(),
                    options: SolverOptions = SolverOptions(),
                    tolerance: float = settings.MANEV_TUNE_TOLERANCE) -> ManevTuning:
    """The Mj for which the pure-Manev minimizer at (m1, Mj) has K(Q) = kappa, i.e. J = 1."""
    if not params.pure_manev:
        raise DomainError("Mj tuning applies to the pure Manev model")
    if not m1 > 0:
        raise ConstraintError("target mass must be positive")
    base = solve_ground_state(params, j, None, options)
    p = j.exponents[0]
    guess = base.casimir * (m1 / base.mass) ** ((3.0 - p) / 2.0)
    trace = []
    states = {}

    def gap(log_mj: float) -> float:
        state = solve_ground_state(params, j, ConstraintPair(m1, math.exp(log_mj)), options,
                                   initial=base.normalized)
        k = functional_K(state.profile) / params.kappa
        trace.append((math.exp(log_mj), k))
        states[log_mj] = state
        return math.log(k)

    lo = hi = math.log(guess)
    g_lo = g_hi = gap(lo)
    step = math.log(2.0)
    for _ in range(60):
        if g_lo * g_hi <= 0:
            break
        # J decreases in Mj
        if g_hi > 0:
            lo, g_lo = hi, g_hi
            hi += step
            g_hi = gap(hi)
        else:
            hi, g_hi = lo, g_lo
            lo -= step
            g_lo = gap(lo)
    else:
        raise BracketError("no Mj bracket with J = 1 around %.6g" % guess)
    if g_lo == 0.0 or g_hi == 0.0:
        root = lo if g_lo == 0.0 else hi
    else:
        root = brentq(gap, lo, hi, xtol=1e-13)
    if root not in states:
        gap(root)
    state = states[root]
    k = functional_K(state.profile) / params.kappa
    if abs(k - 1.0) > tolerance:
        raise BracketError("Mj tuning stopped at |K - 1| = %.3g" % abs(k - 1.0))
    return ManevTuning(math.exp(root), state, tuple(trace))


KjmEstimate = namedtuple("KjmEstimate", "value label candidates")


def _trial_profile(rng: np.random.Generator, size: int) -> typing.Tuple[str, EnergyProfile]:
    """Polytropic trial F = (e_cut - e)_+^n in the Plummer well psi = -1/sqrt(1 + r^2)."""
    n = float(rng.uniform(0.0, 3.0))
    radius = float(rng.uniform(0.5, 2.5))
    grid = RadialGrid(2.0 * radius, size, radius)
    psi = RadialField(grid, -1.0 / np.sqrt(1.0 + grid.nodes ** 2))
    e_cut = -1.0 / math.sqrt(1.0 + radius * radius)
    nodes = energy_nodes(-1.0, e_cut, settings.ENERGY_NODES)
    values = (e_cut - nodes) ** n
    if n > 0:
        values[-1] = 0.0
    profile = EnergyProfile(nodes, values, psi, has_jump=n == 0)
    lam, mu = np.exp(rng.uniform(-1.0, 1.0, size=2))
    label = "polytrope n=%.4f R=%.4f" % (n, radius)
    return label, apply_rescale(profile, RescaleParams(1.0, lam, mu))


def trial_family(family_size: int = settings.TRIAL_FAMILY_SIZE,
                 seed: int = settings.DEFAULT_SEED,
                 size: int = 400) -> typing.List[typing.Tuple[str, EnergyProfile]]:
    """Seeded polytropes in Plummer wells; a family of size n is a prefix of size n + 1."""
    rng = np.random.default_rng(seed)
    return [_trial_profile(rng, size) for _ in range(family_size)]


def estimate_kjm(j: CasimirSpec, family_size: int = settings.TRIAL_FAMILY_SIZE,
                 seed: int = settings.DEFAULT_SEED, minimizers: typing.Sequence[GroundState] = (),
                 size: int = 400) -> KjmEstimate:
    """Upper estimate of K_jM as the minimum of K_jM over a seeded trial family.

    A family of size n is a prefix of the family of size n + 1, so enlarging it never
    increases the estimate.
    """
    candidates = [(label, functional_KjM(profile, j))
                  for label, profile in trial_family(family_size, seed, size)]
    for state in minimizers:
        candidates.append(("minimizer delta=%g kappa=%g" % (state.params.delta, state.params.kappa),
                           functional_KjM(state.profile, j)))
    if not candidates:
        raise DomainError("empty trial family")
    label, value = min(candidates, key=lambda item: item[1])
    logger.info("K_jM estimate %.10g from %s over %d candidates", value, label, len(candidates))
    return KjmEstimate(value, label, tuple(candidates))


def lipschitz_constant(j: CasimirSpec, mu: float, depth: float) -> float:
    """4 pi sqrt 2 |mu|^(1/2) (j')^{-1}(k0) sqrt(k0) with k0 = depth/|mu|."""
    k0 = depth / abs(mu)
    return 4.0 * math.pi * math.sqrt(2.0 * abs(mu)) * float(j.j_prime_inverse(k0)) * math.sqrt(k0)


LipschitzCheck = namedtuple("LipschitzCheck", "ratio bound")


def density_lipschitz_check(state: GroundState) -> LipschitzCheck:
    """Largest |rho(x) - rho(y)| / |psi(x) - psi(y)| over neighbouring nodes of the support."""
    psi = state.profile.potential.values
    rho = state.density.values
    inside = np.nonzero(rho > 0)[0]
    stop = min(inside[-1] + 2, rho.size)
    d_rho = np.abs(np.diff(rho[:stop]))
    d_psi = np.abs(np.diff(psi[:stop]))
    moving = d_psi > 0
    ratio = float(np.max(d_rho[moving] / d_psi[moving])) if np.any(moving) else 0.0
    depth = state.profile.e_cut - float(psi.min())
    bound = lipschitz_constant(state.j, state.multipliers.mu, depth)
    return LipschitzCheck(ratio, bound)


def structural_violations(state: GroundState, slack: float = 1e-9) -> typing.List[str]:
    """Names of the ground-state invariants that fail."""
    out = []
    rho = state.density.values
    phi = state.potential.values
    if np.any(np.diff(rho) > slack * rho.max()):
        out.append("density not nonincreasing")
    if np.any(np.diff(phi) < -slack * np.abs(phi).max()):
        out.append("potential not nondecreasing")
    if rho[-1] > 0:
        out.append("support reaches the grid edge")
    m = state.multipliers
    if not m.lam < 0:
        out.append("lambda not negative")
    if not m.mu < 0:
        out.append("mu not negative")
    if not math.isfinite(state.hamiltonian):
        out.append("Hamiltonian not finite")
    return out


def regrid(state: GroundState, extent: float) -> GroundState:
    """Re-solve ``state`` on a grid reaching ``extent`` with the same node counts."""
    factor = extent / state.support_radius
    if factor <= state.options.extent_factor:
        return state
    inner = state.options.inner
    if inner is None:
        inner = state.options.grid().inner_intervals
    options = replace(state.options, extent_factor=factor, inner=inner)
    if state.normalized.kind == MIXED and state.targets is not None:
        norm = solve_normalized(MIXED, state.j, state.normalized.omega,
                                state.normalized.amplitude, options)
    else:
        norm = solve_normalized(state.normalized.kind, state.j, 1.0,
                                state.normalized.amplitude, options)
    logger.debug("regridded ground state to extent %.6g", extent)
    return _build_state(norm, state.params, state.j, state.targets, options)
