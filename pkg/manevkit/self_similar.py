"""Self-similar blow-up profiles and the explicit blow-up families of the pure Manev model.

Profiles Q_b are built by relaxation: starting from the ground state Q, every step
rearranges the Schwarz profile of Q along the microscopic energy
|v|^2/2 + b chi(x) x.v + nu phi_f, with nu tuned so that the potential energy stays at
E_pot(Q). Each step keeps the distribution curve of Q and does not increase T_b.
"""
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from manevkit import settings
from manevkit.exc import ConvergenceError, DomainError, GridError
from manevkit.ground_state import GroundState, regrid
from manevkit.phase_space import (CutoffSpec, EnergyProfile, RadialDensity, RadialField,
                                  chi_values, density_from_profile, distribution_curve,
                                  equimeasurability_distance, kinetic_energy)
from manevkit.potentials import RadialPotential, combined_potential, force
from manevkit.rearrangement import (JacobianContext, jacobian_inverse, schwarz_profile,
                                    tune_nu)
from manevkit.rescaling import RescaleParams, apply_rescale

logger = logging.getLogger(__name__)


def cutoff_radius(peak: float, e_star: float) -> float:
    """r_chi = (8 C ||Q|| / |a^{-1}(r*)|)^(2/3) with C ||Q|| = max |phi^M| r^(3/2)."""
    if not e_star < 0:
        raise DomainError("a^{-1}(r*) must be negative, got %r" % e_star)
    return (8.0 * peak / abs(e_star)) ** (2.0 / 3.0)


def choose_r_chi(state: GroundState, margin: float = 2.0) -> CutoffSpec:
    """Cut-off radius from the decay of phi^M, at least ``margin`` support radii."""
    r = state.potential.grid.nodes
    peak = float(np.max(np.abs(state.potential.values) * r ** 1.5))
    qstar = schwarz_profile(state.profile)
    e_star = float(jacobian_inverse(qstar.support_volume, JacobianContext(state.potential)))
    r_chi = cutoff_radius(peak, e_star)
    floor = margin * state.support_radius
    if r_chi < floor:
        logger.info("cut-off radius %.6g raised to %.6g support radii", r_chi, margin)
        r_chi = floor
    return CutoffSpec(r_chi)


def T_b_functional(profile: EnergyProfile, b: float, chi: typing.Optional[CutoffSpec]) -> float:
    """T_b(f) = int (|v|^2/2 + b chi(x) x.v) f.

    For f carrying its own drift b_f chi_f, int x.v f = -b_f int chi_f r^2 rho.
    """
    density = density_from_profile(profile)
    r = density.grid.nodes
    own = profile.b * chi_values(profile.chi, r)
    cross = density.grid.integrate_volume(b * chi_values(chi, r) * own * r * r * density.values)
    return 0.5 * kinetic_energy(profile) - cross


def T_b_lower_bound(profile: EnergyProfile, b: float, chi: CutoffSpec) -> float:
    """kin/4 - b^2 R_chi^2 ||f||_1."""
    mass = density_from_profile(profile).mass
    return 0.25 * kinetic_energy(profile) - b * b * chi.R_chi ** 2 * mass


@dataclass(eq=False)
class SelfSimilarProfile:
    b: float
    nu: float
    chi: CutoffSpec
    profile: EnergyProfile
    potential: RadialPotential
    density: RadialDensity
    ground: GroundState
    T_b: float
    trace: typing.List[float] = field(default_factory=list)
    nu_trace: typing.List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    change: float = math.inf
    descent_violations: int = 0

    @property
    def e_b(self) -> float:
        return self.profile.e_cut

    @property
    def kinetic(self) -> float:
        return kinetic_energy(self.profile)

    @property
    def b_tilde(self) -> float:
        return self.nu * self.b

    def renormalized(self) -> EnergyProfile:
        """Q_b(x, v/nu_b): drift nu_b b and the potential coefficient set to 1."""
        return apply_rescale(self.profile, RescaleParams(1.0, 1.0, 1.0 / self.nu))

    def equimeasurability(self) -> float:
        return equimeasurability_distance(distribution_curve(self.ground.profile),
                                          distribution_curve(self.profile))

    def distance_to_ground(self) -> float:
        """|kin(Q_b) - kin(Q)|/kin(Q) + ||rho_b - rho_Q||_1 / M1."""
        ground = self.ground
        if ground.density.grid != self.density.grid:
            raise GridError("self-similar profile and ground state live on different grids")
        gap = self.density.grid.integrate_volume(np.abs(self.density.values
                                                        - ground.density.values))
        return abs(self.kinetic - ground.kinetic) / ground.kinetic + gap / ground.mass

    def summary(self) -> dict:
        return {
            "b": self.b,
            "nu_b": self.nu,
            "e_b": self.e_b,
            "T_b": self.T_b,
            "r_chi": self.chi.r_chi,
            "iterations": self.iterations,
            "converged": self.converged,
            "change": self.change,
            "descent_violations": self.descent_violations,
            "distance_to_ground": self.distance_to_ground(),
            "support_radius": self.density.support_radius,
        }


def solve_self_similar(state: GroundState, b: float, chi: typing.Optional[CutoffSpec] = None,
                       max_iterations: int = settings.RELAX_ITERATIONS,
                       tolerance: float = settings.RELAX_TOLERANCE) -> SelfSimilarProfile:
    """Relax f <- Q^{*b, nu phi_f} from f = Q until the density stops changing."""
    if not state.params.pure_manev:
        raise DomainError("self-similar profiles are built for the pure Manev model")
    if b < 0:
        raise DomainError("b must be nonnegative")
    chi = choose_r_chi(state) if chi is None else chi
    base = regrid(state, settings.CHI_MARGIN * chi.R_chi)
    params = base.params
    qstar = schwarz_profile(base.profile)
    target = base.energies.potential

    profile = base.profile
    density = base.density
    potential = base.potential
    t_prev = T_b_functional(profile, b, chi)
    trace = [t_prev]
    nus = []
    violations = 0
    change = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        tuning = tune_nu(qstar, b, potential, target, chi, params)
        candidate = tuning.profile
        new_density = density_from_profile(candidate)
        t_new = T_b_functional(candidate, b, chi)
        if t_new > t_prev + settings.DESCENT_SLACK * abs(t_prev):
            violations += 1
            logger.warning("T_b rose from %.12g to %.12g at iteration %d", t_prev, t_new,
                           iterations)
        change = float(np.max(np.abs(new_density.values - density.values))
                       / np.max(density.values))
        profile, density, t_prev = candidate, new_density, t_new
        potential = combined_potential(density, params)
        trace.append(t_new)
        nus.append(tuning.nu)
        logger.debug("b=%.6g relaxation %d: nu=%.12g T_b=%.12g change=%.3e",
                     b, iterations, tuning.nu, t_new, change)
        if change < tolerance:
            converged = True
            break
    if not converged:
        logger.warning("b=%.6g relaxation stopped after %d iterations at change %.3e",
                       b, iterations, change)
    if density.support_radius >= chi.r_chi:
        raise GridError("support radius %.6g escapes r_chi = %.6g; choose a larger cut-off"
                        % (density.support_radius, chi.r_chi))
    return SelfSimilarProfile(b, nus[-1], chi, profile, potential, density, base, t_prev,
                              trace, nus, iterations, converged, change, violations)


def find_b_star(state: GroundState, chi: typing.Optional[CutoffSpec] = None,
                start: float = settings.B_LADDER_START, halvings: int = 12,
                **kwargs) -> typing.Tuple[float, SelfSimilarProfile]:
    """Largest b = start / 2^k for which the relaxation brackets nu and stays inside r_chi."""
    chi = choose_r_chi(state) if chi is None else chi
    b = start
    for _ in range(halvings + 1):
        try:
            return b, solve_self_similar(state, b, chi, **kwargs)
        except (ConvergenceError, GridError) as err:
            logger.info("b=%.6g rejected: %s", b, err)
            b *= 0.5
    raise DomainError("no admissible b down to %.3g" % (2.0 * b))


def b_ladder(b_star: float, depth: int = settings.B_LADDER_DEPTH) -> typing.List[float]:
    return [b_star / 2 ** k for k in range(depth + 1)]


def _pchip(x: np.ndarray, y: np.ndarray) -> PchipInterpolator:
    keep = np.concatenate([[True], np.diff(x) > 0])
    return PchipInterpolator(x[keep], y[keep], extrapolate=True)


def stationarity_residual(result: SelfSimilarProfile, perturbation: float = 0.0,
                          sizes: typing.Tuple[int, int, int] = (64, 64, 64),
                          cutoff_band: float = 0.05) -> float:
    """L^1 residual of the self-similar transport equation, relative to the free-streaming term.

    On Qbar(r, u, l) the operator reads u Q_r + (l^2/r^3 - phi') Q_u + b (r Q_r - u Q_u),
    evaluated by centred differences on the (r, u, l) box with measure 8 pi^2 l. Points
    within ``cutoff_band`` of the energy cut-off are left out. ``perturbation`` multiplies
    Qbar by 1 + eps sin^2(pi r / R) and is used as a negative control.
    """
    bar = result.renormalized()
    b = bar.b
    density = density_from_profile(bar)
    phi = combined_potential(density, result.ground.params)
    radius = density.support_radius
    if radius >= result.chi.r_chi:
        raise GridError("support leaves the plateau of the cut-off")

    energies, values = bar.energies, bar.values
    f_of_e = _pchip(energies, values)
    psi = _pchip(bar.grid.nodes, bar.potential.values)
    d_phi = _pchip(phi.grid.nodes, phi.values).derivative()
    e_cut = bar.e_cut
    depth = e_cut - float(bar.potential.values.min())

    speed = math.sqrt(2.0 * depth + (b * radius) ** 2) + b * radius
    nr, nu, nl = sizes
    r = np.linspace(radius / nr, radius, nr)
    u = np.linspace(-speed, speed, nu)
    ell = np.linspace(0.0, radius * speed, nl)
    R, U, L = np.meshgrid(r, u, ell, indexing="ij")
    energy = 0.5 * (U * U + L * L / (R * R)) + b * R * U + psi(R)
    q = np.where(energy < e_cut, f_of_e(np.clip(energy, energies[0], e_cut)), 0.0)
    q = np.where(energy < energies[0], values[0], q)
    if perturbation:
        q = q * (1.0 + perturbation * np.sin(np.pi * R / radius) ** 2)

    q_r = np.gradient(q, r, axis=0)
    q_u = np.gradient(q, u, axis=1)
    free = U * q_r + (L * L / R ** 3) * q_u
    residual = free - d_phi(R) * q_u + b * (R * q_r - U * q_u)

    band = cutoff_band * depth
    interior = energy < e_cut - band
    # centred differences need interior neighbours in r and u
    interior[0] = interior[-1] = False
    interior[:, 0] = interior[:, -1] = False
    for axis in (0, 1):
        interior &= np.roll(energy, 1, axis=axis) < e_cut - band
        interior &= np.roll(energy, -1, axis=axis) < e_cut - band
    weight = 8.0 * math.pi ** 2 * L
    norm = float(np.sum(np.abs(free) * weight * interior))
    if norm == 0.0:
        raise DomainError("no interior points for the residual")
    return float(np.sum(np.abs(residual) * weight * interior)) / norm


@dataclass(frozen=True)
class BlowupSnapshot:
    t: float
    T: float
    scale: float
    kinetic: float
    mass: float
    profile: EnergyProfile

    @property
    def remaining(self) -> float:
        return self.T - self.t


def _check_time(T: float, t: float) -> None:
    if not t < T:
        raise DomainError("t = %r is not before the blow-up time %r" % (t, T))


def _snapshot(t: float, T: float, scale: float, profile: EnergyProfile) -> BlowupSnapshot:
    return BlowupSnapshot(t, T, scale, kinetic_energy(profile),
                          density_from_profile(profile).mass, profile)


def blowup_selfsimilar(result: SelfSimilarProfile, T: float, t: float) -> BlowupSnapshot:
    """Qbar_b(x/lambda, lambda v) with lambda(t) = sqrt(2 b~ (T - t)).

    b~ = nu_b b is the drift of ``renormalized``, so lambda = 1 at t = T - 1/(2 b~); this is
    T - 1/(2 b) only when nu_b = 1.
    """
    _check_time(T, t)
    bar = result.renormalized()
    if not bar.b > 0:
        raise DomainError("the self-similar family needs b > 0")
    lam = math.sqrt(2.0 * bar.b * (T - t))
    return _snapshot(t, T, lam, apply_rescale(bar, RescaleParams(1.0, lam, lam)))


def blowup_pseudoconformal(state: GroundState, T: float, t: float) -> BlowupSnapshot:
    """Q(T x/(T - t), ((T - t)/T) v + x/T) as a profile with drift 1/(T - t) and no cut-off."""
    _check_time(T, t)
    if not state.params.pure_manev:
        raise DomainError("the pseudo-conformal family exists for the pure Manev model")
    s = (T - t) / T
    shrunk = apply_rescale(state.profile, RescaleParams(1.0, s, s))
    drift = 1.0 / (T - t)
    r = shrunk.grid.nodes
    psi = RadialField(shrunk.grid, shrunk.potential.values + 0.5 * (drift * r) ** 2)
    profile = EnergyProfile(shrunk.energies, shrunk.values, psi, drift, None, shrunk.has_jump)
    return _snapshot(t, T, s, profile)


def blowup_times(T: float, points: int = 12, first: float = 0.9,
                 last: float = 0.999) -> np.ndarray:
    """Times with T - t geometrically spaced over t/T in [first, last]."""
    remaining = np.geomspace(1.0 - first, 1.0 - last, points)
    return T * (1.0 - remaining)


def blowup_series(snapshot: typing.Callable[[float], BlowupSnapshot],
                  times: np.ndarray) -> typing.List[BlowupSnapshot]:
    return [snapshot(float(t)) for t in times]


def rate_fit(remaining, kinetic) -> float:
    """Least-squares slope of log kinetic against log (T - t)."""
    remaining = np.asarray(remaining, dtype=float)
    kinetic = np.asarray(kinetic, dtype=float)
    if remaining.size < 5 or remaining.size != kinetic.size:
        raise DomainError("rate fit needs at least 5 matching points")
    if np.any(remaining <= 0) or np.any(kinetic <= 0):
        raise DomainError("rate fit needs positive data")
    slope, _ = np.polyfit(np.log(remaining), np.log(kinetic), 1)
    return float(slope)


@dataclass(frozen=True)
class VirialTerms:
    kinetic: float
    force_moment: float
    drift: float

    @property
    def residual(self) -> float:
        return abs(self.kinetic - self.force_moment - self.drift) / self.kinetic


def virial_terms(profile: EnergyProfile) -> VirialTerms:
    """The three moments of int |v|^2 f = int x.grad psi rho + b int (x.v)(x.grad chi) f.

    The identity holds for every f = F(|v|^2/2 + b chi x.v + psi). With v = u - b chi x,
    f is even in u, so int (x.v) f dv = -b chi r^2 rho and the drift moment is
    -b^2 int chi chi' r^3 rho, which is >= 0 since chi' <= 0.
    """
    density = density_from_profile(profile)
    grid = density.grid
    r = grid.nodes
    moment = grid.integrate_volume(r * force(profile.potential) * density.values)
    drift = 0.0
    if profile.b > 0 and profile.chi is not None:
        chi = profile.chi
        drift = -profile.b ** 2 * grid.integrate_volume(chi(r) * chi.derivative(r) * r ** 3
                                                        * density.values)
    return VirialTerms(kinetic_energy(profile), moment, drift)


@dataclass(frozen=True)
class SelfSimilarVirial:
    residual: float
    lhs: float
    rhs: float
    bound: float


def virial_selfsimilar(result: SelfSimilarProfile) -> SelfSimilarVirial:
    """nu_b E_pot(Q) - int |v|^2 Q_b against -b int (x.v)(x.grad chi) Q_b.

    The right side is b^2 int chi chi' r^3 rho <= 0 (see ``virial_terms``), so the tuned
    potential energy falls short of the kinetic energy once the cut-off reaches the support.
    """
    terms = virial_terms(result.profile)
    kinetic = terms.kinetic
    lhs = result.nu * result.ground.energies.potential - kinetic
    rhs = -terms.drift
    bound = result.b * result.chi.R_chi ** 2 * result.chi.max_slope * (result.ground.mass
                                                                        + kinetic) / 2.0
    return SelfSimilarVirial(abs(lhs - rhs) / kinetic, lhs, rhs, bound)
