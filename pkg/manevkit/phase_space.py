"""Spherically symmetric phase-space densities.

A distribution f(x, v) is carried by an ``EnergyProfile``: a nonincreasing function F of
the microscopic energy |v|^2/2 + b chi(|x|) x.v + psi(|x|), tabulated on energy nodes
and tied to the radial table of psi it was built against. With the shifted velocity
w = v + b chi(r) x every velocity moment reduces to a one-dimensional energy-shell
integral, which is done by product integration against the piecewise-linear F.
"""
import abc
import logging
import math
import typing
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid

from manevkit import settings
from manevkit.exc import ConfigError, ConstraintError, GridError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class RadialGrid:
    """Radial nodes 0 = r_0 < ... < r_{N-1} = extent.

    Without an ``edge`` the nodes are uniform. With one, ``inner`` intervals are spent on
    [0, edge] and the rest on [edge, extent]; both pieces are graded so that cells shrink
    towards the origin and towards the edge from either side, which keeps density cusps
    and jumps at a support boundary placed on ``edge`` resolved.
    """
    extent: float
    size: int = settings.GRID_SIZE
    edge: typing.Optional[float] = None
    inner: typing.Optional[int] = None

    def __post_init__(self):
        if self.size < 5:
            raise GridError("a radial grid needs at least 5 nodes, got %d" % self.size)
        if not self.extent > 0:
            raise GridError("grid extent must be positive, got %r" % self.extent)
        if self.edge is not None:
            if not 0 < self.edge < self.extent:
                raise GridError("edge %r outside (0, %r)" % (self.edge, self.extent))
            n_in = self.inner_intervals
            if n_in < 2 or self.size - 1 - n_in < 2:
                raise GridError("edge split leaves fewer than 2 intervals on one side")

    @property
    def inner_intervals(self) -> int:
        if self.edge is None:
            return 0
        if self.inner is not None:
            return int(self.inner)
        return int(round(settings.INNER_FRACTION * (self.size - 1)))

    @property
    def shape_key(self) -> typing.Tuple:
        """Hashable description of the grid up to a global dilation."""
        edge = None if self.edge is None else self.edge / self.extent
        return self.size, edge, self.inner_intervals

    def scaled(self, factor: float) -> "RadialGrid":
        edge = None if self.edge is None else self.edge * factor
        return RadialGrid(self.extent * factor, self.size, edge, self.inner)

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.edge is None:
            nodes = np.linspace(0.0, self.extent, self.size)
        else:
            n_in = self.inner_intervals
            n_out = self.size - 1 - n_in
            x = np.linspace(0.0, 1.0, n_in + 1)
            inside = self.edge * (x - np.sin(2.0 * np.pi * x) / (2.0 * np.pi))
            y = np.linspace(0.0, 1.0, n_out + 1)
            outside = self.edge + (self.extent - self.edge) * (y - np.sin(np.pi * y) / np.pi)
            inside[-1] = self.edge
            nodes = np.concatenate([inside, outside[1:]])
        nodes[0] = 0.0
        nodes[-1] = self.extent
        if np.any(np.diff(nodes) <= 0):
            raise GridError("grid nodes are not strictly increasing")
        nodes.setflags(write=False)
        return nodes

    @cached_property
    def edge_index(self) -> typing.Optional[int]:
        return None if self.edge is None else self.inner_intervals

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights: sum(w * g) is the integral of the piecewise-linear g."""
        h = self.widths
        w = np.zeros(self.size)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w

    def hat_moments(self, power: int) -> typing.Tuple[np.ndarray, np.ndarray]:
        """Per cell, the integrals of r**power against the left and right hat functions."""
        x, w = leggauss(4)
        a, b = self.nodes[:-1], self.nodes[1:]
        h = b - a
        r = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x
        wq = 0.5 * h[:, None] * w * r ** power
        right = (r - a[:, None]) / h[:, None]
        return (wq * (1.0 - right)).sum(1), (wq * right).sum(1)

    @cached_property
    def shell_weights(self) -> np.ndarray:
        """Weights of the 3-D integral 4 pi int g r^2 dr, exact for piecewise-linear g."""
        left, right = self.hat_moments(2)
        w = np.zeros(self.size)
        w[:-1] += left
        w[1:] += right
        return FOUR_PI * w

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def integrate_volume(self, values: np.ndarray) -> float:
        return float(np.dot(self.shell_weights, values))


@dataclass(eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise GridError("field has %d values on a %d-node grid"
                            % (self.values.size, self.grid.size))

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def at(self, r) -> np.ndarray:
        return np.interp(r, self.grid.nodes, self.values)

    def scaled(self, factor: float) -> "RadialField":
        return RadialField(self.grid, factor * self.values)


@dataclass(eq=False)
class RadialDensity(RadialField):
    @cached_property
    def mass(self) -> float:
        return self.grid.integrate_volume(self.values)

    @property
    def support_radius(self) -> float:
        inside = np.nonzero(self.values > 0)[0]
        if inside.size == 0:
            return 0.0
        last = inside[-1]
        return float(self.grid.nodes[min(last + 1, self.grid.size - 1)])


class CasimirSpec(abc.ABC):
    """A convex j with j(0) = j'(0) = 0 and p <= t j'(t)/j(t) <= q."""

    @property
    @abc.abstractmethod
    def exponents(self) -> typing.Tuple[float, float]:
        pass

    @abc.abstractmethod
    def j(self, t):
        pass

    @abc.abstractmethod
    def j_prime(self, t):
        pass

    @abc.abstractmethod
    def j_second(self, t):
        pass

    @abc.abstractmethod
    def j_prime_inverse(self, s):
        pass

    @property
    def is_power_law(self) -> bool:
        return False

    def t_j_prime(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.j_prime(t)

    def validate(self, samples: typing.Optional[np.ndarray] = None) -> None:
        p, q = self.exponents
        if not 3.0 < p <= q:
            raise ConfigError("Casimir exponents must satisfy 3 < p <= q, got p=%r q=%r" % (p, q))
        t = np.geomspace(1e-4, 1e4, 161) if samples is None else np.asarray(samples, float)
        if abs(float(self.j(0.0))) > 0 or abs(float(self.j_prime(0.0))) > 0:
            raise ConfigError("Casimir must satisfy j(0) = j'(0) = 0")
        if np.any(self.j_second(t) <= 0):
            raise ConfigError("Casimir is not strictly convex on the sampled range")
        ratio = self.t_j_prime(t) / self.j(t)
        slack = 1e-9 * q
        if np.any(ratio < p - slack) or np.any(ratio > q + slack):
            raise ConfigError("t j'(t)/j(t) leaves [p, q] on the sampled range")


class PowerLaw(CasimirSpec):
    """j(t) = coefficient * t**p."""

    def __init__(self, p: float, coefficient: float = 1.0):
        if not p > 0 or not coefficient > 0:
            raise ConfigError("power-law Casimir needs p > 0 and a positive coefficient")
        self.p = float(p)
        self.coefficient = float(coefficient)

    def __repr__(self):
        return "PowerLaw(p=%r, coefficient=%r)" % (self.p, self.coefficient)

    @property
    def exponents(self):
        return self.p, self.p

    @property
    def is_power_law(self) -> bool:
        return True

    def j(self, t):
        return self.coefficient * np.power(np.clip(t, 0.0, None), self.p)

    def j_prime(self, t):
        return self.coefficient * self.p * np.power(np.clip(t, 0.0, None), self.p - 1.0)

    def j_second(self, t):
        t = np.clip(t, 0.0, None)
        return self.coefficient * self.p * (self.p - 1.0) * np.power(t, self.p - 2.0)

    def j_prime_inverse(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, None)
        return np.power(s / (self.coefficient * self.p), 1.0 / (self.p - 1.0))


class SumOfPowers(CasimirSpec):
    """j(t) = sum_k c_k t**e_k with positive coefficients."""

    def __init__(self, terms: typing.Sequence[typing.Tuple[float, float]]):
        terms = [(float(c), float(e)) for c, e in terms]
        if not terms or any(c <= 0 or e <= 1 for c, e in terms):
            raise ConfigError("sum-of-powers Casimir needs positive coefficients and exponents > 1")
        self.terms = tuple(sorted(terms, key=lambda ce: ce[1]))
        t = np.geomspace(1e-12, 1e12, 2401)
        self._table_t = np.log(t)
        self._table_s = np.log(self.j_prime(t))

    def __repr__(self):
        return "SumOfPowers(%r)" % (self.terms,)

    @property
    def exponents(self):
        return self.terms[0][1], self.terms[-1][1]

    @property
    def is_power_law(self) -> bool:
        return len(self.terms) == 1

    def j(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, None)
        return sum(c * np.power(t, e) for c, e in self.terms)

    def j_prime(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, None)
        return sum(c * e * np.power(t, e - 1.0) for c, e in self.terms)

    def j_second(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, None)
        return sum(c * e * (e - 1.0) * np.power(t, e - 2.0) for c, e in self.terms)

    def j_prime_inverse(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        positive = s > 0
        if not np.any(positive):
            return out
        target = s[positive]
        # log-log table lookup, then Newton on j'(t) = s
        t = np.exp(np.interp(np.log(target), self._table_s, self._table_t))
        for _ in range(4):
            t = np.clip(t - (self.j_prime(t) - target) / self.j_second(t), 0.5 * t, 2.0 * t)
        out[positive] = t
        return out


@dataclass(frozen=True)
class ConstraintPair:
    """Target mass M1 and Casimir mass Mj."""
    m1: float
    mj: float

    def __post_init__(self):
        if not (self.m1 > 0 and self.mj > 0):
            raise ConstraintError("constraint targets must be positive, got M1=%r Mj=%r"
                                  % (self.m1, self.mj))


@dataclass(frozen=True)
class ModelParams:
    """Weights of the Poisson (delta) and Manev (kappa) parts of the potential."""
    delta: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.delta < 0 or self.kappa < 0 or not self.delta + self.kappa > 0:
            raise ConfigError("model weights need delta, kappa >= 0 and delta + kappa > 0")

    @property
    def pure_manev(self) -> bool:
        return self.delta == 0

    @property
    def pure_poisson(self) -> bool:
        return self.kappa == 0


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cut-off: 1 on [0, r_chi], 0 beyond 2 r_chi, cubic smoothstep in between."""
    r_chi: float

    def __post_init__(self):
        if not self.r_chi > 0:
            raise ConfigError("cut-off radius must be positive")

    @property
    def R_chi(self) -> float:
        return 2.0 * self.r_chi

    def __call__(self, r) -> np.ndarray:
        z = np.clip((np.asarray(r, dtype=float) - self.r_chi) / self.r_chi, 0.0, 1.0)
        return 1.0 - z * z * (3.0 - 2.0 * z)

    def derivative(self, r) -> np.ndarray:
        z = np.clip((np.asarray(r, dtype=float) - self.r_chi) / self.r_chi, 0.0, 1.0)
        return -6.0 * z * (1.0 - z) / self.r_chi

    @property
    def max_slope(self) -> float:
        return 1.5 / self.r_chi

    def scaled(self, factor: float) -> "CutoffSpec":
        return CutoffSpec(self.r_chi * factor)


def chi_values(chi: typing.Optional[CutoffSpec], r: np.ndarray) -> np.ndarray:
    if chi is None:
        return np.ones_like(np.asarray(r, dtype=float))
    return chi(r)


@dataclass(eq=False)
class EnergyProfile:
    """f(x, v) = F(|v|^2/2 + b chi(r) x.v + psi(r)) with F tabulated on energy nodes.

    F is piecewise linear between nodes, equal to ``values[0]`` below the first node and
    zero from ``e_cut = energies[-1]`` on. A nonzero last value is a jump at e_cut and
    must be flagged.
    """
    energies: np.ndarray
    values: np.ndarray
    potential: RadialField
    b: float = 0.0
    chi: typing.Optional[CutoffSpec] = None
    has_jump: bool = False

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.energies.ndim != 1 or self.energies.shape != self.values.shape:
            raise ConstraintError("energy nodes and values must be matching 1-D tables")
        if self.energies.size < 2 or np.any(np.diff(self.energies) <= 0):
            raise ConstraintError("energy nodes must be strictly increasing")
        if not self.e_cut <= 0:
            raise ConstraintError("cut-off energy must be nonpositive, got %r" % self.e_cut)
        if np.any(self.values < 0):
            raise ConstraintError("profile values must be nonnegative")
        scale = max(float(self.values.max()), 1e-300)
        if np.any(np.diff(self.values) > 1e-12 * scale):
            raise ConstraintError("profile must be nonincreasing in the energy")
        if self.values[-1] > 0 and not self.has_jump:
            raise ConstraintError("profile is discontinuous at e_cut but not flagged as a jump")
        if self.b < 0:
            raise ConstraintError("drift parameter must be nonnegative")

    @property
    def e_cut(self) -> float:
        return float(self.energies[-1])

    @property
    def grid(self) -> RadialGrid:
        return self.potential.grid

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values > 0)

    def evaluate(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        out = np.interp(e, self.energies, self.values)
        return np.where(e >= self.e_cut, 0.0, out)

    def with_values(self, values: np.ndarray) -> "EnergyProfile":
        values = np.asarray(values, dtype=float)
        return EnergyProfile(self.energies, values, self.potential, self.b, self.chi,
                             has_jump=bool(values[-1] > 0))

    def effective_potential(self, potential: typing.Optional[RadialField] = None,
                            b: typing.Optional[float] = None,
                            chi: typing.Optional[CutoffSpec] = None) -> RadialField:
        psi = self.potential if potential is None else potential
        b = self.b if b is None else b
        chi = self.chi if chi is None else chi
        r = psi.grid.nodes
        drift = b * chi_values(chi, r) * r
        return RadialField(psi.grid, psi.values - 0.5 * drift * drift)


def energy_nodes(e_min: float, e_cut: float, count: int = settings.ENERGY_NODES,
                 grading: float = settings.ENERGY_GRADING) -> np.ndarray:
    """Energy nodes on [e_min, e_cut], clustered towards e_cut."""
    if not e_min < e_cut:
        raise ConstraintError("empty energy range [%r, %r]" % (e_min, e_cut))
    k = np.linspace(0.0, 1.0, count + 1)
    nodes = e_cut - (e_cut - e_min) * (1.0 - k) ** grading
    nodes[0] = e_min
    nodes[-1] = e_cut
    return nodes


def shell_integral(energies: np.ndarray, values: np.ndarray, levels: np.ndarray,
                   power: float) -> np.ndarray:
    """int F(s) (s - c)_+^power ds for each c in ``levels``, exact for piecewise-linear F.

    F extends as the constant values[0] below the first node and vanishes from the last.
    """
    c = np.asarray(levels, dtype=float)[:, None]
    lo, hi = energies[:-1], energies[1:]
    slope = np.diff(values) / (hi - lo)
    y0 = np.clip(lo - c, 0.0, None)
    y1 = np.clip(hi - c, 0.0, None)
    base = values[:-1] + slope * (c - lo)
    g1, g2 = power + 1.0, power + 2.0
    cells = base * (y1 ** g1 - y0 ** g1) / g1 + slope * (y1 ** g2 - y0 ** g2) / g2
    total = cells.sum(axis=1)
    below = np.clip(energies[0] - c[:, 0], 0.0, None)
    return total + values[0] * below ** g1 / g1


def _resolve(profile: EnergyProfile, potential, b, chi):
    psi = profile.potential if potential is None else potential
    b = profile.b if b is None else b
    chi = profile.chi if chi is None else chi
    return psi, b, chi


def _shell_density(profile: EnergyProfile, values: np.ndarray, potential, b, chi,
                   power: float) -> np.ndarray:
    psi, b, chi = _resolve(profile, potential, b, chi)
    phi_eff = profile.effective_potential(psi, b, chi).values
    if np.any(values > 0) and phi_eff[-1] < profile.e_cut:
        raise GridError("profile support exceeds the grid extent %.6g" % psi.grid.extent)
    return shell_integral(profile.energies, values, phi_eff, power)


def density_from_profile(profile: EnergyProfile, potential: typing.Optional[RadialField] = None,
                         b: typing.Optional[float] = None,
                         chi: typing.Optional[CutoffSpec] = None) -> RadialDensity:
    """rho(r) = 4 pi sqrt(2) int F(s) (s - psi_eff(r))_+^(1/2) ds."""
    psi, _, _ = _resolve(profile, potential, b, chi)
    shell = _shell_density(profile, profile.values, potential, b, chi, 0.5)
    return RadialDensity(psi.grid, np.clip(FOUR_PI * SQRT2 * shell, 0.0, None))


def mass(density: RadialDensity) -> float:
    return density.mass


def casimir_mass(profile: EnergyProfile, potential: typing.Optional[RadialField] = None,
                 b: typing.Optional[float] = None, chi: typing.Optional[CutoffSpec] = None,
                 j: typing.Optional[CasimirSpec] = None) -> float:
    if j is None:
        raise ConfigError("casimir_mass needs a Casimir")
    psi, _, _ = _resolve(profile, potential, b, chi)
    shell = _shell_density(profile, j.j(profile.values), potential, b, chi, 0.5)
    return psi.grid.integrate_volume(FOUR_PI * SQRT2 * shell)


def profile_integral(profile: EnergyProfile, values: np.ndarray,
                     potential: typing.Optional[RadialField] = None) -> float:
    """int G(e) dx dv for G tabulated on the profile's energy nodes."""
    psi, _, _ = _resolve(profile, potential, None, None)
    shell = _shell_density(profile, np.asarray(values, float), potential, None, None, 0.5)
    return psi.grid.integrate_volume(FOUR_PI * SQRT2 * shell)


def kinetic_energy(profile: EnergyProfile, potential: typing.Optional[RadialField] = None,
                   b: typing.Optional[float] = None,
                   chi: typing.Optional[CutoffSpec] = None) -> float:
    """int |v|^2 f dx dv; the w.x cross term of |w - b chi x|^2 integrates to zero."""
    psi, b, chi = _resolve(profile, potential, b, chi)
    r = psi.grid.nodes
    w2 = FOUR_PI * 2.0 * SQRT2 * _shell_density(profile, profile.values, psi, b, chi, 1.5)
    rho = FOUR_PI * SQRT2 * _shell_density(profile, profile.values, psi, b, chi, 0.5)
    drift = b * chi_values(chi, r) * r
    return psi.grid.integrate_volume(w2 + drift * drift * rho)


@dataclass(frozen=True)
class Moments:
    mass: float
    casimir: float
    kinetic: float

    @property
    def energy_norm(self) -> float:
        return self.mass + self.casimir + self.kinetic


def measure(profile: EnergyProfile, j: CasimirSpec) -> Moments:
    return Moments(mass(density_from_profile(profile)), casimir_mass(profile, j=j),
                   kinetic_energy(profile))


@dataclass(eq=False)
class DistributionCurve:
    """mu(lambda) = meas{f > lambda} tabulated on ascending levels."""
    levels: np.ndarray = field(default_factory=lambda: np.zeros(1))
    volumes: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.volumes = np.asarray(self.volumes, dtype=float)

    @property
    def sup(self) -> float:
        return float(self.levels[-1])

    def at(self, levels) -> np.ndarray:
        return np.interp(levels, self.levels, self.volumes, right=0.0)

    def layer_cake(self) -> float:
        """int_0^inf mu(lambda) d lambda, the L^1 norm of the source."""
        return float(trapezoid(self.volumes, self.levels))

    @classmethod
    def from_samples(cls, values: np.ndarray, volumes: np.ndarray) -> "DistributionCurve":
        """Curve of a function given as cells of value ``values`` and measure ``volumes``."""
        values = np.asarray(values, dtype=float)
        volumes = np.asarray(volumes, dtype=float)
        keep = values > 0
        if not np.any(keep):
            return cls()
        order = np.argsort(values[keep])[::-1]
        v = values[keep][order]
        cumulative = np.cumsum(volumes[keep][order])
        levels, first = np.unique(v, return_index=True)
        # meas{f > level} excludes the cells sitting exactly at the level
        above = np.concatenate([[0.0], cumulative])[first]
        return cls(np.concatenate([[0.0], levels]), np.concatenate([[cumulative[-1]], above]))


def distribution_curve(profile: EnergyProfile, potential: typing.Optional[RadialField] = None,
                       b: typing.Optional[float] = None,
                       chi: typing.Optional[CutoffSpec] = None) -> DistributionCurve:
    from manevkit.rearrangement import JacobianContext, jacobian_a

    if profile.is_zero:
        return DistributionCurve()
    psi, b, chi = _resolve(profile, potential, b, chi)
    ctx = JacobianContext(psi, b, chi)
    values = profile.values
    positive = np.nonzero(values > 0)[0]
    last = positive[-1]
    zero_at = min(last + 1, values.size - 1)
    # left endpoint of every flat stretch
    keep = [k for k in range(last + 1) if k == 0 or values[k] < values[k - 1]]
    energies = profile.energies[keep]
    volumes = jacobian_a(energies, ctx)
    volumes[0] = 0.0
    support = float(jacobian_a(profile.energies[zero_at], ctx))
    levels = np.concatenate([[0.0], values[keep][::-1]])
    volumes = np.concatenate([[support], volumes[::-1]])
    return DistributionCurve(levels, volumes)


def equimeasurability_distance(first: DistributionCurve, second: DistributionCurve,
                               samples: int = 4096) -> float:
    """L^1 distance of the two curves over the levels, relative to the first curve."""
    top = max(first.sup, second.sup)
    if top <= 0:
        return 0.0
    levels = np.unique(np.concatenate([first.levels, second.levels,
                                       np.linspace(0.0, top, samples)]))
    mu1, mu2 = first.at(levels), second.at(levels)
    norm = float(trapezoid(mu1, levels))
    gap = float(trapezoid(np.abs(mu1 - mu2), levels))
    if norm == 0.0:
        return 0.0 if gap == 0.0 else math.inf
    return gap / norm
