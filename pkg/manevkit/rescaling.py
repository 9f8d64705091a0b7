"""Scaling algebra of f -> gamma f(x/lambda, mu v) and two-constraint fitting."""
import logging
import math
import typing
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from manevkit.exc import BracketError, ConfigError, ConstraintError
from manevkit.phase_space import (CasimirSpec, EnergyProfile, RadialField, casimir_mass,
                                  density_from_profile)

logger = logging.getLogger(__name__)

# casimir is a (low, high) bracket; equal ends when the Casimir is a pure power
ScaleFactors = namedtuple(
    "ScaleFactors",
    "mass casimir kinetic poisson_energy manev_energy poisson_potential manev_potential")


@dataclass(frozen=True)
class RescaleParams:
    gamma: float = 1.0
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.lam > 0 and self.mu > 0):
            raise ConfigError("rescaling parameters must be positive")

    def then(self, other: "RescaleParams") -> "RescaleParams":
        """Parameters of applying ``self`` and then ``other``."""
        return RescaleParams(self.gamma * other.gamma, self.lam * other.lam, self.mu * other.mu)

    @property
    def is_identity(self) -> bool:
        return self.gamma == 1.0 and self.lam == 1.0 and self.mu == 1.0


def rescale_factors(params: RescaleParams, j: typing.Optional[CasimirSpec] = None) -> ScaleFactors:
    g, l, m = params.gamma, params.lam, params.mu
    volume = l ** 3 / m ** 3
    if j is None:
        casimir = (math.nan, math.nan)
    else:
        p, q = j.exponents
        ends = sorted([g ** p * volume, g ** q * volume])
        casimir = (ends[0], ends[1])
    return ScaleFactors(
        mass=g * volume,
        casimir=casimir,
        kinetic=g * l ** 3 / m ** 5,
        poisson_energy=g * g * l ** 5 / m ** 6,
        manev_energy=g * g * l ** 4 / m ** 6,
        poisson_potential=g * l * l / m ** 3,
        manev_potential=g * l / m ** 3,
    )


def apply_rescale(profile: EnergyProfile, params: RescaleParams) -> EnergyProfile:
    """gamma f(x/lambda, mu v), i.e. F -> gamma F(mu^2 e) against psi(x/lambda)/mu^2."""
    g, l, m = params.gamma, params.lam, params.mu
    grid = profile.grid.scaled(l)
    potential = RadialField(grid, profile.potential.values / (m * m))
    chi = None if profile.chi is None else profile.chi.scaled(l)
    return EnergyProfile(profile.energies / (m * m), g * profile.values, potential,
                         profile.b / (l * m), chi, profile.has_jump)


def constraint_rescale(gamma: float, lam: float) -> RescaleParams:
    """gamma f(gamma^(1/3) lam^(-1/3) x, v) written as a (gamma, lambda, mu) rescaling."""
    return RescaleParams(gamma, (lam / gamma) ** (1.0 / 3.0), 1.0)


@dataclass(frozen=True)
class ConstraintFit:
    gamma: float
    lam: float
    ratio: float
    bracket: typing.Tuple[float, float]

    @property
    def params(self) -> RescaleParams:
        return constraint_rescale(self.gamma, self.lam)


def fit_constraints(profile: EnergyProfile, target, j: CasimirSpec,
                    xtol: float = 1e-14) -> ConstraintFit:
    """Unique (gamma, lambda) putting gamma f(gamma^(1/3) lambda^(-1/3) x, v) in F(M1, Mj).

    lambda = M1/||f|| in closed form; gamma solves h(gamma) = Mj ||f|| / (M1 ||j(f)||) with
    h(gamma) = ||j(gamma f)|| / (gamma ||j(f)||), which is increasing under the growth bounds.
    """
    if profile.is_zero:
        raise ConstraintError("cannot fit constraints for f = 0")
    if not (target.m1 > 0 and target.mj > 0):
        raise ConstraintError("targets must be positive")
    m1 = density_from_profile(profile).mass
    mj = casimir_mass(profile, j=j)
    ratio = target.mj * m1 / (target.m1 * mj)
    lam = target.m1 / m1
    p, q = j.exponents
    ends = [ratio ** (1.0 / (p - 1.0)), ratio ** (1.0 / (q - 1.0))]
    bracket = (min(ends), max(ends))
    if j.is_power_law:
        return ConstraintFit(ends[0], lam, ratio, bracket)

    def h(gamma: float) -> float:
        scaled = profile.with_values(gamma * profile.values)
        return math.log(casimir_mass(scaled, j=j) / (gamma * mj)) - math.log(ratio)

    lo, hi = bracket
    if lo == hi:
        lo, hi = lo * (1 - 1e-12), hi * (1 + 1e-12)
    f_lo, f_hi = h(lo), h(hi)
    if f_lo * f_hi > 0:
        tiny = 1e-9
        if abs(f_lo) < tiny:
            return ConstraintFit(lo, lam, ratio, bracket)
        if abs(f_hi) < tiny:
            return ConstraintFit(hi, lam, ratio, bracket)
        raise BracketError("no root of h(gamma) = %.6g in [%.6g, %.6g]; the Casimir violates "
                           "its growth bounds" % (ratio, lo, hi))
    gamma = brentq(h, lo, hi, xtol=xtol * max(1.0, hi), rtol=4 * np.finfo(float).eps)
    logger.debug("constraint fit: gamma=%.12g lambda=%.12g", gamma, lam)
    return ConstraintFit(gamma, lam, ratio, bracket)


def h_ratio(profile: EnergyProfile, j: CasimirSpec, gamma: float) -> float:
    """||j(gamma f)|| / (gamma ||j(f)||)."""
    base = casimir_mass(profile, j=j)
    return casimir_mass(profile.with_values(gamma * profile.values), j=j) / (gamma * base)
