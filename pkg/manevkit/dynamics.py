"""Spherically symmetric mean-field particle code for the Vlasov-Poisson-Manev flow.

Particles move on radial characteristics

    dr/dt = u,  du/dt = l^2/r^3 - phi'(r),  dl/dt = 0

with a kick-drift-kick leapfrog. The density is deposited onto a uniform radial grid with
a triangular kernel reflected at the origin; potentials come from the same quadratures the
steady-state solvers use. Every particle carries the value of f it was sampled with, so
level-set measures are conserved exactly.
"""
import logging
import math
import typing
from dataclasses import dataclass, field, replace

import numpy as np

from manevkit import settings
from manevkit.exc import ConfigError, DomainError
from manevkit.ground_state import GroundState
from manevkit.phase_space import (CasimirSpec, DistributionCurve, EnergyProfile, ModelParams,
                                  RadialDensity, RadialGrid, chi_values, density_from_profile,
                                  distribution_curve, equimeasurability_distance)
from manevkit.potentials import combined_potential, force, potential_energy

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ParticleEnsemble:
    r: np.ndarray
    u: np.ndarray
    ell: np.ndarray
    weight: np.ndarray
    value: np.ndarray
    alive: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("r", "u", "ell", "weight", "value"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.alive is None:
            self.alive = np.ones(self.r.size, dtype=bool)
        if np.any(self.r <= 0):
            raise DomainError("particle radii must be positive")
        if np.any(self.weight <= 0) or np.any(self.ell < 0):
            raise DomainError("weights must be positive and angular momenta nonnegative")

    @property
    def count(self) -> int:
        return self.r.size

    @property
    def mass(self) -> float:
        return float(self.weight[self.alive].sum())

    @property
    def kinetic(self) -> float:
        """sum m |v|^2 with |v|^2 = u^2 + l^2/r^2."""
        a = self.alive
        return float(np.sum(self.weight[a] * (self.u[a] ** 2 + (self.ell[a] / self.r[a]) ** 2)))

    @property
    def escaped(self) -> int:
        return int(np.count_nonzero(~self.alive))

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.r.copy(), self.u.copy(), self.ell.copy(),
                                self.weight.copy(), self.value.copy(), self.alive.copy())

    def casimir(self, j: CasimirSpec) -> float:
        """int j(f) from particles of phase volume m/f."""
        a = self.alive
        return float(np.sum(self.weight[a] * j.j(self.value[a]) / self.value[a]))

    def curve(self) -> DistributionCurve:
        a = self.alive
        return DistributionCurve.from_samples(self.value[a], self.weight[a] / self.value[a])

    def half_mass_radius(self) -> float:
        a = self.alive
        order = np.argsort(self.r[a])
        cumulative = np.cumsum(self.weight[a][order])
        return float(self.r[a][order][np.searchsorted(cumulative, 0.5 * cumulative[-1])])


def _source_profile(source) -> EnergyProfile:
    return source.profile if isinstance(source, GroundState) else source


def sample_particles(source, count: int, seed: int = settings.DEFAULT_SEED) -> ParticleEnsemble:
    """Particles of equal weight drawn from a ground state or an energy profile.

    Radii are stratified through the inverse cumulative mass; speeds in the drifting frame
    are drawn against t^2 and accepted with probability F(e)/F(psi_eff(r)).
    """
    if count < settings.MIN_PARTICLES:
        raise ConfigError("at least %d particles are needed, got %d"
                          % (settings.MIN_PARTICLES, count))
    profile = _source_profile(source)
    rng = np.random.default_rng(seed)
    density = density_from_profile(profile)
    grid = density.grid
    nodes = grid.nodes

    left, right = grid.hat_moments(2)
    cells = 4.0 * math.pi * (left * density.values[:-1] + right * density.values[1:])
    cumulative = np.concatenate([[0.0], np.cumsum(cells)])
    total = cumulative[-1]
    strata = (np.arange(count) + rng.uniform(size=count)) / count
    r = np.interp(strata * total, cumulative, nodes)
    psi_eff = profile.effective_potential()
    occupied = np.nonzero(profile.evaluate(psi_eff.values) > 0)[0]
    if occupied.size == 0:
        raise DomainError("profile has no occupied phase space")
    # keep every radius where some velocity is occupied
    r = np.clip(r, settings.R_FLOOR * density.support_radius, nodes[occupied[-1]])

    phi_eff = psi_eff.at(r)
    e_cut = profile.e_cut
    top = profile.evaluate(phi_eff)
    if np.any(top <= 0):
        raise DomainError("no velocity is occupied at %d sampled radii; the occupied region "
                          "has gaps" % int(np.count_nonzero(top <= 0)))
    depth = np.clip(e_cut - phi_eff, 0.0, None)
    speed = np.empty(count)
    pending = np.arange(count)
    while pending.size:
        t = rng.uniform(size=pending.size) ** (1.0 / 3.0)
        e = phi_eff[pending] + depth[pending] * t * t
        accept = rng.uniform(size=pending.size) * top[pending] < profile.evaluate(e)
        speed[pending[accept]] = t[accept] * np.sqrt(2.0 * depth[pending[accept]])
        pending = pending[~accept]

    cos_t = rng.uniform(-1.0, 1.0, size=count)
    w_r = speed * cos_t
    w_t = speed * np.sqrt(1.0 - cos_t * cos_t)
    drift = profile.b * chi_values(profile.chi, r) * r
    u = w_r - drift
    ell = r * w_t
    value = profile.evaluate(phi_eff + 0.5 * speed * speed)
    weight = np.full(count, total / count)
    logger.debug("sampled %d particles of weight %.6g", count, total / count)
    return ParticleEnsemble(r, u, ell, weight, value)


@dataclass(frozen=True)
class ForceField:
    """phi and phi' on a radial grid, continued by the exterior laws of a mass ``mass``."""
    nodes: np.ndarray
    potential: np.ndarray
    derivative: np.ndarray
    mass: float
    params: ModelParams

    @classmethod
    def point_mass(cls, mass: float, params: ModelParams) -> "ForceField":
        empty = np.zeros(0)
        return cls(empty, empty, empty, mass, params)

    @property
    def extent(self) -> float:
        return float(self.nodes[-1]) if self.nodes.size else 0.0

    def _outside(self, r: np.ndarray, grad: bool) -> np.ndarray:
        d, k, m = self.params.delta, self.params.kappa, self.mass
        if grad:
            return d * m / (4.0 * math.pi * r * r) + k * m / (math.pi ** 2 * r ** 3)
        return -d * m / (4.0 * math.pi * r) - k * m / (2.0 * math.pi ** 2 * r * r)

    def _eval(self, r, table: np.ndarray, grad: bool) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if not self.nodes.size:
            return self._outside(r, grad)
        out = np.interp(r, self.nodes, table)
        far = r > self.extent
        if np.any(far):
            out[far] = self._outside(r[far], grad)
        return out

    def __call__(self, r) -> np.ndarray:
        return self._eval(r, self.derivative, True)

    def phi(self, r) -> np.ndarray:
        return self._eval(r, self.potential, False)


def deposit(ensemble: ParticleEnsemble, grid: RadialGrid,
            bandwidth: int = settings.BANDWIDTH) -> RadialDensity:
    """Mass-conserving deposit with a triangular kernel of half-width ``bandwidth`` cells."""
    if grid.edge is not None:
        raise ConfigError("particles deposit onto a uniform grid")
    h = grid.extent / (grid.size - 1)
    a = ensemble.alive & (ensemble.r <= grid.extent)
    x = ensemble.r[a] / h
    m = ensemble.weight[a]
    base = np.floor(x).astype(int)
    masses = np.zeros(grid.size)
    weights = []
    indices = []
    for offset in range(-bandwidth + 1, bandwidth + 1):
        k = base + offset
        w = np.clip(1.0 - np.abs(x - k) / bandwidth, 0.0, None)
        # nodes behind the origin fold back onto their mirror images
        weights.append(w)
        indices.append(np.abs(k))
    weights = np.array(weights)
    indices = np.array(indices)
    inside = indices < grid.size
    weights = np.where(inside, weights, 0.0)
    norm = weights.sum(0)
    weights = weights / np.where(norm > 0, norm, 1.0)
    masses += np.bincount(indices[inside], (weights * m)[inside], minlength=grid.size)
    return RadialDensity(grid, masses / grid.shell_weights)


def _reflect(ensemble: ParticleEnsemble, r_floor: float) -> None:
    low = ensemble.r < r_floor
    if np.any(low):
        ensemble.r[low] = 2.0 * r_floor - ensemble.r[low]
        ensemble.u[low] = -ensemble.u[low]


def _kick(ensemble: ParticleEnsemble, field_: ForceField, dt: float) -> None:
    a = ensemble.alive
    r = ensemble.r[a]
    accel = ensemble.ell[a] ** 2 / r ** 3 - field_(r)
    ensemble.u[a] += dt * accel


def step(ensemble: ParticleEnsemble, field_: ForceField, dt: float,
         r_floor: float = settings.R_FLOOR,
         after_drift: typing.Optional[typing.Callable[[ParticleEnsemble], ForceField]] = None
         ) -> ParticleEnsemble:
    """One kick-drift-kick step; the second kick uses ``after_drift(ensemble)`` if given."""
    out = ensemble.copy()
    _kick(out, field_, 0.5 * dt)
    a = out.alive
    out.r[a] += dt * out.u[a]
    _reflect(out, r_floor)
    if after_drift is not None:
        field_ = after_drift(out)
    _kick(out, field_, 0.5 * dt)
    return out


def particle_energy(ensemble: ParticleEnsemble, field_: ForceField) -> np.ndarray:
    r = ensemble.r
    return 0.5 * (ensemble.u ** 2 + (ensemble.ell / r) ** 2) + field_.phi(r)


@dataclass(frozen=True)
class EvolutionConfig:
    dt: typing.Optional[float] = None
    steps: int = 1000
    horizon: typing.Optional[float] = None
    deposit_size: int = settings.DEPOSIT_SIZE
    bandwidth: int = settings.BANDWIDTH
    cadence: int = 1
    sample_every: int = 10
    params: ModelParams = field(default_factory=ModelParams)
    extent: typing.Optional[float] = None
    r_floor: float = settings.R_FLOOR
    cfl: float = settings.CFL

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("time step must be positive")
        if self.steps < 1 or self.cadence < 1 or self.sample_every < 1:
            raise ConfigError("step counts must be positive")
        if self.bandwidth < 1:
            raise ConfigError("deposit bandwidth must cover at least one grid spacing")


@dataclass(eq=False)
class DiagnosticSeries:
    times: typing.List[float] = field(default_factory=list)
    hamiltonian: typing.List[float] = field(default_factory=list)
    mass: typing.List[float] = field(default_factory=list)
    casimir: typing.List[float] = field(default_factory=list)
    kinetic: typing.List[float] = field(default_factory=list)
    poisson: typing.List[float] = field(default_factory=list)
    manev: typing.List[float] = field(default_factory=list)
    distance: typing.List[float] = field(default_factory=list)
    blowup: bool = False
    escaped: int = 0
    dt: float = 0.0

    COLUMNS = ("t", "H", "M1", "Mj", "kinetic", "EP", "EM", "D")

    def rows(self) -> typing.List[typing.Tuple[float, ...]]:
        distance = self.distance or [math.nan] * len(self.times)
        return list(zip(self.times, self.hamiltonian, self.mass, self.casimir, self.kinetic,
                        self.poisson, self.manev, distance))

    def drift(self, name: str) -> float:
        values = getattr(self, name)
        return abs(values[-1] - values[0]) / abs(values[0])


def dynamical_time(ensemble: ParticleEnsemble) -> float:
    """Half-mass radius over the mass-weighted rms speed."""
    sigma = math.sqrt(ensemble.kinetic / ensemble.mass)
    return ensemble.half_mass_radius() / sigma


class _FieldSolver:
    def __init__(self, grid: RadialGrid, config: EvolutionConfig):
        self.grid = grid
        self.config = config
        self.density = None
        self.potential = None
        self.field = None

    def __call__(self, ensemble: ParticleEnsemble) -> ForceField:
        self.density = deposit(ensemble, self.grid, self.config.bandwidth)
        self.potential = combined_potential(self.density, self.config.params)
        self.field = ForceField(self.grid.nodes, self.potential.values, force(self.potential),
                                self.density.mass, self.config.params)
        return self.field


def evolve(ensemble: ParticleEnsemble, config: EvolutionConfig,
           j: typing.Optional[CasimirSpec] = None,
           reference: typing.Optional[GroundState] = None,
           mode: str = "plain") -> typing.Tuple[ParticleEnsemble, DiagnosticSeries]:
    """Self-consistent evolution: deposit, potentials, force, leapfrog step."""
    extent = config.extent or 3.0 * float(ensemble.r.max())
    grid = RadialGrid(extent, config.deposit_size)
    solver = _FieldSolver(grid, config)
    state = ensemble.copy()
    dt = config.dt or config.cfl * dynamical_time(state)
    steps = config.steps
    if config.horizon is not None:
        steps = max(1, int(math.ceil(config.horizon / dt)))
    series = DiagnosticSeries(dt=dt)
    field_ = solver(state)
    initial_kinetic = state.kinetic

    def record(t: float, fresh: bool = True) -> None:
        # between refreshes the deposit lags the particles
        if not fresh:
            solver(state)
        pot = potential_energy(solver.density, solver.potential)
        kinetic = state.kinetic
        series.times.append(t)
        series.kinetic.append(kinetic)
        series.poisson.append(pot.poisson)
        series.manev.append(pot.manev)
        series.hamiltonian.append(kinetic - pot.total)
        series.mass.append(state.mass)
        series.casimir.append(state.casimir(j) if j is not None else math.nan)
        if reference is not None:
            series.distance.append(orbital_distance(state, reference, mode))

    record(0.0)
    for n in range(1, steps + 1):
        refresh = n % config.cadence == 0
        state = step(state, field_, dt, config.r_floor * extent,
                     after_drift=solver if refresh else None)
        if refresh:
            field_ = solver.field
        left = state.alive & (state.r > extent)
        if np.any(left):
            state.alive &= ~left
            logger.info("%d particles left the grid at step %d", int(left.sum()), n)
        if n % config.sample_every == 0 or n == steps:
            record(n * dt, refresh)
        if state.kinetic > settings.BLOWUP_FACTOR * initial_kinetic:
            series.blowup = True
            logger.warning("kinetic energy exceeded %g times its initial value at t=%.6g",
                           settings.BLOWUP_FACTOR, n * dt)
            if series.times[-1] != n * dt:
                record(n * dt, refresh)
            break
    series.escaped = state.escaped
    return state, series


def _scaled(ensemble: ParticleEnsemble, lam: float) -> ParticleEnsemble:
    """Particles of f(lam x, v/lam): positions over lam, radial speeds times lam."""
    out = ensemble.copy()
    out.r /= lam
    out.u *= lam
    return out


def orbital_distance(ensemble: ParticleEnsemble, state: GroundState, mode: str = "plain",
                     size: int = settings.DEPOSIT_SIZE) -> float:
    """|H(f) - H(Q)|/kin(Q) + ||rho_f - rho_Q||_1/M1 + curve distance; shift fixed to 0."""
    if mode not in ("plain", "scaled"):
        raise ConfigError("unknown distance mode %r" % mode)
    if mode == "scaled":
        ensemble = _scaled(ensemble, math.sqrt(state.kinetic / ensemble.kinetic))
    a = ensemble.alive
    extent = max(float(ensemble.r[a].max()), state.density.support_radius) * 1.05
    grid = RadialGrid(extent, size)
    density = deposit(ensemble, grid)
    potential = combined_potential(density, state.params)
    hamiltonian = ensemble.kinetic - potential_energy(density, potential).total
    reference = state.density.at(grid.nodes)
    gap = grid.integrate_volume(np.abs(density.values - reference))
    curve = equimeasurability_distance(distribution_curve(state.profile), ensemble.curve())
    return (abs(hamiltonian - state.hamiltonian) / state.kinetic + gap / state.mass + curve)


def perturb(ensemble: ParticleEnsemble, kind: str, size: float) -> ParticleEnsemble:
    """dilation: x -> (1+eps) x, v -> v/(1+eps); shear: u -> u - r/T; amplitude: f -> (1+eps) f."""
    out = ensemble.copy()
    if kind == "dilation":
        out.r *= 1.0 + size
        out.u /= 1.0 + size
    elif kind == "shear":
        if not size > 0:
            raise ConfigError("shear needs a positive blow-up time")
        out.u -= out.r / size
    elif kind == "amplitude":
        out.weight *= 1.0 + size
        out.value *= 1.0 + size
    else:
        raise ConfigError("unknown perturbation %r" % kind)
    return out


@dataclass(frozen=True)
class StabilityReport:
    series: DiagnosticSeries
    initial: float
    maximum: float

    @property
    def ratio(self) -> float:
        return self.maximum / self.initial if self.initial > 0 else math.inf


def stability_experiment(state: GroundState, epsilon: float, horizon: float,
                         count: int = 100000, seed: int = settings.DEFAULT_SEED,
                         perturbation: str = "dilation", mode: str = "plain",
                         config: typing.Optional[EvolutionConfig] = None) -> StabilityReport:
    """Orbital distance along the flow of a perturbed sample of ``state``.

    ``horizon`` is measured in dynamical times of the unperturbed sample.
    """
    ensemble = sample_particles(state, count, seed)
    t_dyn = dynamical_time(ensemble)
    if epsilon:
        ensemble = perturb(ensemble, perturbation, epsilon)
    config = config or EvolutionConfig(params=state.params)
    config = replace(config, params=state.params, horizon=horizon * t_dyn,
                     extent=config.extent or 4.0 * state.support_radius)
    _, series = evolve(ensemble, config, state.j, state, mode)
    distances = np.asarray(series.distance)
    report = StabilityReport(series, float(distances[0]), float(distances.max()))
    logger.info("stability: initial distance %.4g, max %.4g (ratio %.3g)",
                report.initial, report.maximum, report.ratio)
    return report
