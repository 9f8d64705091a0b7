"""Radial Poisson and Manev potentials, potential energies and the energy functionals.

Both potentials are negative-definite convolutions of the density:

    phi^P(r) = -[ (1/r) int_0^r rho s^2 ds + int_r^inf rho s ds ]
    phi^M(r) = -(1/pi) int rho(s) (s/r) ln|(r+s)/(r-s)| ds

so that phi^P(r) = -M/(4 pi r) and phi^M(r) ~ -M/(2 pi^2 r^2) outside the support.
Densities are piecewise linear on their grid and both integrals are exact for them.
"""
import logging
import math
import typing
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from manevkit import kernels
from manevkit.exc import ConstraintError, GridError
from manevkit.phase_space import (CasimirSpec, EnergyProfile, ModelParams, PowerLaw,
                                  RadialDensity, RadialField, casimir_mass,
                                  density_from_profile, kinetic_energy)

logger = logging.getLogger(__name__)

POISSON_PREFACTOR = 1.0
MANEV_PREFACTOR = 1.0 / math.pi


@dataclass(eq=False)
class RadialPotential(RadialField):
    """Combined potential delta phi^P + kappa phi^M with its two components kept."""
    poisson: typing.Optional[np.ndarray] = None
    manev: typing.Optional[np.ndarray] = None
    delta: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        zeros = np.zeros(self.grid.size)
        self.poisson = zeros if self.poisson is None else np.asarray(self.poisson, float)
        self.manev = zeros if self.manev is None else np.asarray(self.manev, float)

    @property
    def tag(self) -> str:
        if self.kappa == 0:
            return "poisson"
        if self.delta == 0:
            return "manev"
        return "combined"

    @property
    def derivative(self) -> np.ndarray:
        return force(self)


def _check_grid(first: RadialField, second: RadialField) -> None:
    if first.grid != second.grid:
        raise GridError("fields live on different grids")


def poisson_potential(density: RadialDensity) -> RadialPotential:
    grid = density.grid
    rho = density.values
    l2, r2 = grid.hat_moments(2)
    l1, r1 = grid.hat_moments(1)
    inner_cells = l2 * rho[:-1] + r2 * rho[1:]
    outer_cells = l1 * rho[:-1] + r1 * rho[1:]
    inner = np.concatenate([[0.0], np.cumsum(inner_cells)])
    outer = np.concatenate([np.cumsum(outer_cells[::-1])[::-1], [0.0]])
    r = grid.nodes
    values = -outer
    values[1:] -= inner[1:] / r[1:]
    values *= POISSON_PREFACTOR
    return RadialPotential(grid, values, poisson=values, delta=1.0, kappa=0.0)


def manev_potential(density: RadialDensity) -> RadialPotential:
    values = -MANEV_PREFACTOR * (kernels.manev_matrix(density.grid) @ density.values)
    return RadialPotential(density.grid, values, manev=values, delta=0.0, kappa=1.0)


def combined_potential(density: RadialDensity, params: ModelParams) -> RadialPotential:
    poisson = poisson_potential(density).values if params.delta else np.zeros(density.grid.size)
    manev = manev_potential(density).values if params.kappa else np.zeros(density.grid.size)
    values = params.delta * poisson + params.kappa * manev
    return RadialPotential(density.grid, values, poisson=poisson, manev=manev,
                           delta=params.delta, kappa=params.kappa)


def pairing(density: RadialDensity, values: np.ndarray) -> float:
    """int rho g dx for the piecewise-linear interpolants of both tables."""
    grid = density.grid
    x, w = leggauss(3)
    a, b = grid.nodes[:-1], grid.nodes[1:]
    h = b - a
    r = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x
    t = (r - a[:, None]) / h[:, None]
    rho = density.values[:-1, None] * (1 - t) + density.values[1:, None] * t
    g = values[:-1, None] * (1 - t) + values[1:, None] * t
    return float(4.0 * math.pi * (0.5 * h[:, None] * w * rho * g * r * r).sum())


def poisson_energy(density: RadialDensity) -> float:
    """E^P = -int phi^P rho = 8 pi int rho(r) r m(r) dr with m(r) = int_0^r rho s^2 ds."""
    grid = density.grid
    rho = density.values
    a, b = grid.nodes[:-1], grid.nodes[1:]
    h = b - a
    slope = np.diff(rho) / h
    base = rho[:-1] - slope * a
    l2, r2 = grid.hat_moments(2)
    m_left = np.concatenate([[0.0], np.cumsum(l2 * rho[:-1] + r2 * rho[1:])])[:-1]
    x, w = leggauss(4)
    r = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x
    m = (m_left[:, None] + base[:, None] * (r ** 3 - a[:, None] ** 3) / 3.0
         + slope[:, None] * (r ** 4 - a[:, None] ** 4) / 4.0)
    rho_q = base[:, None] + slope[:, None] * r
    total = (0.5 * h[:, None] * w * rho_q * r * m).sum()
    return float(8.0 * math.pi * POISSON_PREFACTOR * total)


@dataclass(frozen=True)
class PotentialEnergy:
    total: float
    poisson: float
    manev: float


def potential_energy(density: RadialDensity, potential: RadialPotential) -> PotentialEnergy:
    """E_pot = -int phi rho = delta E^P + kappa E^M."""
    _check_grid(density, potential)
    e_p = poisson_energy(density) if potential.delta else 0.0
    e_m = -pairing(density, potential.manev) if potential.kappa else 0.0
    return PotentialEnergy(potential.delta * e_p + potential.kappa * e_m, e_p, e_m)


def force(potential: RadialField) -> np.ndarray:
    """phi'(r) by second-order differences, one-sided at both ends."""
    return np.gradient(potential.values, potential.grid.nodes, edge_order=2)


@dataclass(frozen=True)
class Energies:
    mass: float
    kinetic: float
    poisson: float
    manev: float
    potential: float

    @property
    def hamiltonian(self) -> float:
        return self.kinetic - self.potential


def energies(profile: EnergyProfile, params: ModelParams) -> Energies:
    density = density_from_profile(profile)
    phi = combined_potential(density, params)
    pot = potential_energy(density, phi)
    return Energies(density.mass, kinetic_energy(profile), pot.poisson, pot.manev, pot.total)


def hamiltonian(profile: EnergyProfile, params: ModelParams) -> float:
    """H(f) = int |v|^2 f - E_pot(f)."""
    return energies(profile, params).hamiltonian


def _manev_energy(profile: EnergyProfile) -> typing.Tuple[float, float]:
    if profile.is_zero:
        raise ConstraintError("the functionals are undefined for f = 0")
    density = density_from_profile(profile)
    e_m = -pairing(density, manev_potential(density).values)
    if not e_m > 0:
        raise ConstraintError("Manev energy is not positive")
    return kinetic_energy(profile), e_m


def functional_K(profile: EnergyProfile) -> float:
    """K(f) = int |v|^2 f / E^M(f)."""
    kinetic, e_m = _manev_energy(profile)
    return kinetic / e_m


def kjm_weight(m1: float, mj: float, p: float) -> float:
    """M1^((p-3)/(3(p-1))) (M1 + Mj)^(2/(3(p-1)))."""
    return m1 ** ((p - 3.0) / (3.0 * (p - 1.0))) * (m1 + mj) ** (2.0 / (3.0 * (p - 1.0)))


def functional_KjM(profile: EnergyProfile, j: CasimirSpec) -> float:
    kinetic, e_m = _manev_energy(profile)
    m1 = density_from_profile(profile).mass
    mj = casimir_mass(profile, j=j)
    return kinetic * kjm_weight(m1, mj, j.exponents[0]) / e_m


def interpolation_ratios(profile: EnergyProfile, p: float) -> typing.Tuple[float, float]:
    """E^P and E^M over the right-hand sides of the two interpolation inequalities.

    Norms are taken with ||f||_p = (int f^p)^(1/p), so both ratios are invariant under
    every rescaling gamma f(x/lambda, mu v).
    """
    if profile.is_zero:
        raise ConstraintError("the interpolation ratios are undefined for f = 0")
    density = density_from_profile(profile)
    kinetic = kinetic_energy(profile)
    m1 = density.mass
    norm_p = casimir_mass(profile, j=PowerLaw(p)) ** (1.0 / p)
    e_p = poisson_energy(density)
    e_m = -pairing(density, manev_potential(density).values)
    rhs_p = (math.sqrt(kinetic) * m1 ** ((7 * p - 9) / (6 * (p - 1)))
             * norm_p ** (p / (3 * (p - 1))))
    rhs_m = kinetic * m1 ** ((p - 3) / (3 * (p - 1))) * norm_p ** (2 * p / (3 * (p - 1)))
    return e_p / rhs_p, e_m / rhs_m


def decay_constants(density: RadialDensity, energy_norm: float,
                    alpha: float = 0.5) -> typing.Tuple[float, float]:
    """Smallest C, C_alpha with |phi^P| <= C M/r and |phi^M| <= C_alpha ||f|| / r^(1+alpha)."""
    r = density.grid.nodes[1:]
    phi_p = poisson_potential(density).values[1:]
    phi_m = manev_potential(density).values[1:]
    c_p = float(np.max(np.abs(phi_p) * r)) / density.mass
    c_m = float(np.max(np.abs(phi_m) * r ** (1.0 + alpha))) / energy_norm
    return c_p, c_m
