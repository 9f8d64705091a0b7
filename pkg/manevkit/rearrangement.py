"""Phase-space volume of energy sublevel sets and rearrangement along it.

The Jacobian a(e) = meas{|v|^2/2 + b chi x.v + phi < e} maps energies onto phase-space
volumes. Composing the Schwarz profile Q*(s) of a function with a gives the unique
function of the microscopic energy that shares its distribution curve.
"""
import logging
import math
import typing
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import UnivariateSpline
from scipy.optimize import brentq
from scipy.special import roots_jacobi

from manevkit import settings
from manevkit.exc import BracketError, DomainError, GridError
from manevkit.phase_space import (SQRT2, CutoffSpec, DistributionCurve, EnergyProfile,
                                  ModelParams, RadialField, chi_values,
                                  density_from_profile, distribution_curve, energy_nodes,
                                  kinetic_energy)
from manevkit.potentials import combined_potential, potential_energy

logger = logging.getLogger(__name__)

A_PREFACTOR = 32.0 * math.pi ** 2 * SQRT2 / 3.0
A_PRIME_PREFACTOR = 16.0 * math.pi ** 2 * SQRT2
ABEL_PREFACTOR = 4.0 * math.pi * SQRT2
INVERSE_PREFACTOR = 2.0 * math.pi ** 2 * SQRT2
# energies per vectorized block of the Jacobian
ENERGY_BLOCK = 64


@dataclass(eq=False)
class JacobianContext:
    """Drift b, cut-off chi and potential phi defining the sublevel sets."""
    potential: RadialField
    b: float = 0.0
    chi: typing.Optional[CutoffSpec] = None

    def __post_init__(self):
        if self.b < 0:
            raise DomainError("drift parameter must be nonnegative")

    @cached_property
    def phi_eff(self) -> RadialField:
        r = self.potential.grid.nodes
        drift = self.b * chi_values(self.chi, r) * r
        return RadialField(self.potential.grid, self.potential.values - 0.5 * drift * drift)

    @property
    def e_min(self) -> float:
        # tabulated potentials are bounded, so the infimum is always finite
        return float(self.phi_eff.values.min())

    @property
    def e_max(self) -> float:
        """Largest energy whose sublevel set stays on the grid."""
        return min(float(self.phi_eff.values[-1]), 0.0)

    def scaled(self, nu: float) -> "JacobianContext":
        return JacobianContext(self.potential.scaled(nu), self.b, self.chi)


@lru_cache(None)
def _jacobi_rule(power: float, left: bool):
    # weight (1 - x)^power when the integrand vanishes at the right end of the segment
    if left:
        return roots_jacobi(3, power, 0.0)
    return roots_jacobi(3, 0.0, power)


def _sublevel_integral(e: np.ndarray, ctx: JacobianContext, power: float) -> np.ndarray:
    """int (e - phi_eff(r))_+^power r^2 dr per energy, exact crossing of every cell."""
    r = ctx.phi_eff.grid.nodes
    phi = ctx.phi_eff.values
    a, b = r[:-1], r[1:]
    h = b - a
    x, w = leggauss(8)
    xl, wl = _jacobi_rule(power, True)
    xr, wr = _jacobi_rule(power, False)
    out = np.zeros(e.size)
    for start in range(0, e.size, ENERGY_BLOCK):
        ee = e[start:start + ENERGY_BLOCK, None]
        ga = ee - phi[:-1]
        gb = ee - phi[1:]
        total = np.zeros(ee.shape[0])

        inside = (ga > 0) & (gb > 0)
        if np.any(inside):
            i, c = np.nonzero(inside)
            rq = 0.5 * (a[c] + b[c])[:, None] + 0.5 * h[c][:, None] * x
            t = (rq - a[c][:, None]) / h[c][:, None]
            g = ga[i, c][:, None] * (1 - t) + gb[i, c][:, None] * t
            cells = 0.5 * h[c] * (w * g ** power * rq * rq).sum(1)
            np.add.at(total, i, cells)

        crossing = (ga > 0) != (gb > 0)
        if np.any(crossing):
            i, c = np.nonzero(crossing)
            g0, g1 = ga[i, c], gb[i, c]
            slope = np.abs(g1 - g0) / h[c]
            rc = a[c] + g0 / (g0 - g1) * h[c]
            falling = g0 > 0
            lo = np.where(falling, a[c], rc)
            hi = np.where(falling, rc, b[c])
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            rq_l = mid[:, None] + half[:, None] * xl
            rq_r = mid[:, None] + half[:, None] * xr
            moment = np.where(falling, (wl * rq_l * rq_l).sum(1), (wr * rq_r * rq_r).sum(1))
            cells = slope ** power * half ** (power + 1.0) * moment
            np.add.at(total, i, cells)
        out[start:start + ENERGY_BLOCK] = total
    return out


def _energies(e, ctx: JacobianContext) -> np.ndarray:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if np.any(e >= 0):
        raise DomainError("the Jacobian is defined on negative energies only")
    if np.any(e > ctx.phi_eff.values[-1]):
        raise GridError("energy %.6g reaches beyond the grid extent %.6g"
                        % (e.max(), ctx.potential.grid.extent))
    return e


def _shape_like(e, values: np.ndarray):
    return float(values[0]) if np.ndim(e) == 0 else values.reshape(np.shape(e))


def jacobian_a(e, ctx: JacobianContext):
    """a(e) = (32 pi^2 sqrt 2 / 3) int (e - phi_eff(r))_+^(3/2) r^2 dr."""
    energies = _energies(e, ctx)
    return _shape_like(e, A_PREFACTOR * _sublevel_integral(energies, ctx, 1.5))


def jacobian_a_prime(e, ctx: JacobianContext):
    """a'(e) = 16 pi^2 sqrt 2 int (e - phi_eff(r))_+^(1/2) r^2 dr."""
    energies = _energies(e, ctx)
    return _shape_like(e, A_PRIME_PREFACTOR * _sublevel_integral(energies, ctx, 0.5))


def jacobian_inverse(s, ctx: JacobianContext):
    """The energy e with a(e) = s."""
    volumes = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(volumes <= 0):
        raise DomainError("phase-space volume must be positive")
    lo, hi = ctx.e_min, ctx.e_max
    if hi >= 0:
        hi = -1e-15 * max(1.0, abs(lo))
    top = jacobian_a(hi, ctx)
    if np.any(volumes > top):
        raise GridError("volume %.6g exceeds the largest resolvable volume %.6g"
                        % (volumes.max(), top))
    out = np.empty(volumes.size)
    for k, target in enumerate(volumes):
        out[k] = brentq(lambda en: jacobian_a(en, ctx) - target, lo, hi,
                        xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    return _shape_like(s, out)


def level_measure(potential: RadialField, levels) -> np.ndarray:
    """mu_psi(w) = meas{x : psi(|x|) < w} for a nondecreasing radial psi."""
    psi = np.maximum.accumulate(potential.values)
    r = potential.grid.nodes
    levels = np.asarray(levels, dtype=float)
    # beyond the grid psi keeps rising towards 0; the table cannot resolve those levels
    if np.any(levels > psi[-1]):
        raise GridError("level above the potential at the grid edge")
    radius = np.interp(levels, psi, r, left=0.0)
    return 4.0 * math.pi / 3.0 * radius ** 3


@dataclass(eq=False)
class SchwarzProfile:
    """Nonincreasing Q*(s) on phase-space volumes, piecewise linear between breakpoints.

    Consecutive breakpoints may share a volume; Q* jumps there and takes the lower value.
    """
    volumes: np.ndarray = field(default_factory=lambda: np.zeros(1))
    values: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.volumes = np.asarray(self.volumes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)

    @property
    def support_volume(self) -> float:
        return float(self.volumes[-1])

    @property
    def sup(self) -> float:
        return float(self.values[0])

    def _interp(self, s, side: str) -> np.ndarray:
        shape = np.shape(s)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        vol, val = self.volumes, self.values
        idx = np.searchsorted(vol, s, side=side)
        out = np.zeros(s.shape)
        inside = (idx > 0) & (idx < vol.size)
        k = idx[inside]
        left_v, right_v = vol[k - 1], vol[k]
        t = (s[inside] - left_v) / (right_v - left_v)
        out[inside] = val[k - 1] * (1 - t) + val[k] * t
        out[idx == 0] = val[0]
        return out.reshape(shape)

    def at(self, s) -> np.ndarray:
        """Q*(s) = inf{lambda : mu(lambda) <= s}."""
        return self._interp(s, "right")

    def left_limit(self, s) -> np.ndarray:
        return self._interp(s, "left")

    def curve(self) -> DistributionCurve:
        return DistributionCurve(self.values[::-1], self.volumes[::-1])


def schwarz_profile(source) -> SchwarzProfile:
    """Schwarz symmetrization of an ``EnergyProfile`` or of a ``DistributionCurve``."""
    curve = source if isinstance(source, DistributionCurve) else distribution_curve(source)
    if curve.sup <= 0:
        return SchwarzProfile()
    return SchwarzProfile(curve.volumes[::-1], curve.levels[::-1])


def energy_rearrangement(qstar: SchwarzProfile, ctx: JacobianContext,
                         count: int = settings.ENERGY_NODES) -> EnergyProfile:
    """Q*(a(e)) on negative energies, the rearrangement of Q* along the microscopic energy."""
    if qstar.sup <= 0:
        raise DomainError("cannot rearrange the zero function")
    e_star = float(jacobian_inverse(qstar.support_volume, ctx))
    nodes = energy_nodes(ctx.e_min, e_star, count)
    volumes = np.concatenate([[0.0], jacobian_a(nodes[1:], ctx)])
    values = qstar.at(volumes)
    values[0] = qstar.sup
    values = np.minimum.accumulate(values)
    edge = float(qstar.left_limit(qstar.support_volume))
    values[-1] = min(edge, values[-2])
    return EnergyProfile(nodes, values, ctx.potential, ctx.b, ctx.chi, has_jump=bool(values[-1] > 0))


def potential_l3_norm(potential: RadialField) -> float:
    return potential.grid.integrate_volume(np.abs(potential.values) ** 3) ** (1.0 / 3.0)


def kinetic_bound_constant(profile: EnergyProfile) -> float:
    """kinetic / (||phi||_3^2 + b^2) for a rearranged profile."""
    scale = potential_l3_norm(profile.potential) ** 2 + profile.b ** 2
    return kinetic_energy(profile) / scale


def _self_potential_energy(profile: EnergyProfile, params: ModelParams) -> float:
    density = density_from_profile(profile)
    return potential_energy(density, combined_potential(density, params)).total


@dataclass(frozen=True)
class NuTuning:
    nu: float
    profile: EnergyProfile
    potential_energy: float
    bracket: typing.Tuple[float, float]
    evaluations: int


def tune_nu(qstar: SchwarzProfile, b: float, potential: RadialField, target: float,
            chi: typing.Optional[CutoffSpec] = None, params: ModelParams = ModelParams(),
            bracket: typing.Tuple[float, float] = settings.NU_BRACKET,
            tolerance: float = settings.NU_TOLERANCE) -> NuTuning:
    """nu with E_pot(Q^{*b, nu phi}) = target, bracketed by doubling/halving from nu = 1."""
    if not np.any(potential.values != 0):
        raise DomainError("cannot tune against a vanishing potential")
    base = JacobianContext(potential, b, chi)
    trace = {}

    def gap(log_nu: float) -> float:
        nu = math.exp(log_nu)
        try:
            profile = energy_rearrangement(qstar, base.scaled(nu))
            e_pot = _self_potential_energy(profile, params)
        except GridError as err:
            raise BracketError("rearrangement at nu=%.6g is not resolvable: %s" % (nu, err))
        trace[log_nu] = (profile, e_pot)
        return e_pot / target - 1.0

    lo_cap, hi_cap = (math.log(x) for x in bracket)
    lo = hi = 0.0
    g_lo = g_hi = gap(0.0)
    step = math.log(2.0)
    if g_lo < 0:
        while g_hi < 0:
            lo, g_lo = hi, g_hi
            hi += step
            if hi > hi_cap:
                raise BracketError("no nu in [1, %.3g] reaches the target potential energy"
                                   % bracket[1])
            g_hi = gap(hi)
    elif g_lo > 0:
        while g_lo > 0:
            hi, g_hi = lo, g_lo
            lo -= step
            if lo < lo_cap:
                raise BracketError("no nu in [%.3g, 1] reaches the target potential energy"
                                   % bracket[0])
            g_lo = gap(lo)
    if g_lo == 0.0 or g_hi == 0.0:
        root = lo if g_lo == 0.0 else hi
    else:
        root = brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    if root not in trace:
        gap(root)
    profile, e_pot = trace[root]
    if abs(e_pot / target - 1.0) > tolerance:
        logger.warning("nu tuning stopped at relative gap %.3g", abs(e_pot / target - 1.0))
    logger.debug("tuned nu=%.12g in [%.6g, %.6g] after %d evaluations",
                 math.exp(root), math.exp(lo), math.exp(hi), len(trace))
    return NuTuning(math.exp(root), profile, e_pot, (math.exp(lo), math.exp(hi)), len(trace))


def _abel_matrix(w: np.ndarray, tau: np.ndarray) -> np.ndarray:
    # integral of sqrt(tau - s) over every cell [w_k, w_k+1] cut at tau
    d0 = np.clip(tau[:, None] - w[None, :-1], 0.0, None)
    d1 = np.clip(tau[:, None] - w[None, 1:], 0.0, None)
    return ABEL_PREFACTOR * 2.0 / 3.0 * (d0 ** 1.5 - d1 ** 1.5)


def abel_forward(w: np.ndarray, mu: np.ndarray, tau: typing.Optional[np.ndarray] = None) -> np.ndarray:
    """a(tau) = 4 pi sqrt 2 int mu(w) sqrt(tau - w) dw with mu constant on each cell.

    ``mu`` is tabulated on the nodes ``w``; cell k carries the value at its left node.
    """
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float)
    tau = w if tau is None else np.asarray(tau, dtype=float)
    return _abel_matrix(w, tau) @ mu[:-1]


def _abel_moment(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    # int_{w_0}^{w_i} a(tau) (w_i - tau)^(-1/2) dtau with a linear on each cell
    a = a - a[0]
    slopes = np.diff(a) / np.diff(w)
    d0 = np.clip(w[:, None] - w[None, :-1], 0.0, None)
    d1 = np.clip(w[:, None] - w[None, 1:], 0.0, None)
    flat = 2.0 * (np.sqrt(d0) - np.sqrt(d1))
    ramp = d0 * flat - 2.0 / 3.0 * (d0 ** 1.5 - d1 ** 1.5)
    return flat @ a[:-1] + ramp @ slopes


def _abel_spline(w, a) -> UnivariateSpline:
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    if w.size < 5:
        raise GridError("the Abel inversion needs at least five nodes")
    moment = _abel_moment(w, a)
    # noise level of the moment table from its fourth differences
    noise = float(np.median(np.abs(np.diff(moment, 4)))) / (0.6745 * math.sqrt(70.0))
    return UnivariateSpline(w, moment, k=3, s=w.size * noise ** 2)


def abel_cumulative(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """int_{w_0}^{w_i} mu from a tabulated on the nodes ``w``; a is taken relative to a(w_0).

    ``a`` is integrated exactly against (lambda - tau)^(-1/2) as a piecewise-linear
    function, the result is smoothed with a spline sized to its noise, and the cumulative is
    that spline's derivative over 2 pi^2 sqrt 2.
    """
    w = np.asarray(w, dtype=float)
    return _abel_spline(w, a).derivative()(w) / INVERSE_PREFACTOR


def abel_invert(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Cell values of mu from a on the same nodes: the derivative of ``abel_cumulative``
    taken at the cell midpoints. The last value repeats the last cell."""
    w = np.asarray(w, dtype=float)
    spline = _abel_spline(w, a)
    cells = spline.derivative(2)(0.5 * (w[:-1] + w[1:])) / INVERSE_PREFACTOR
    return np.concatenate([cells, cells[-1:]])


def abel_level_measure(ctx: JacobianContext, nodes: int = 401, fraction: float = 0.9):
    """(w, mu_psi) recovered from a = jacobian_a on [e_min, e_min + fraction (e_max - e_min)]."""
    if not 0.0 < fraction < 1.0:
        raise DomainError("fraction must lie in (0, 1)")
    w = np.linspace(ctx.e_min, ctx.e_min + fraction * (ctx.e_max - ctx.e_min), nodes)
    a = np.concatenate([[0.0], jacobian_a(w[1:], ctx)])
    return w, abel_invert(w, a)


def level_measure_distance(first, second) -> float:
    """L1 distance of two (w, mu) cell tables over the first one's cells, relative to it."""
    w1, mu1 = (np.asarray(v, dtype=float) for v in first)
    w2, mu2 = (np.asarray(v, dtype=float) for v in second)
    mids = 0.5 * (w1[:-1] + w1[1:])
    other = np.interp(mids, 0.5 * (w2[:-1] + w2[1:]), mu2[:-1])
    widths = np.diff(w1)
    return float(np.sum(np.abs(other - mu1[:-1]) * widths) / np.sum(np.abs(mu1[:-1]) * widths))


def bathtub_gap(qstar: SchwarzProfile, ctx: JacobianContext, rng: np.random.Generator,
                cells: int = 256, swaps: typing.Optional[int] = None) -> float:
    """int e (Q^{*} - g) over equal-volume cells for a shuffled equimeasurable g; never > 0."""
    edges = np.linspace(0.0, qstar.support_volume, cells + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    q = qstar.at(mids)
    e_star = float(jacobian_inverse(qstar.support_volume, ctx))
    e_tab = energy_nodes(ctx.e_min, e_star, 4 * cells)
    a_tab = np.concatenate([[0.0], jacobian_a(e_tab[1:], ctx)])
    energy = np.interp(mids, a_tab, e_tab)
    g = q.copy()
    if swaps is None:
        g = rng.permutation(g)
    else:
        for _ in range(swaps):
            i, k = rng.integers(0, cells, size=2)
            g[i], g[k] = g[k], g[i]
    volume = edges[1] - edges[0]
    return float(np.sum(energy * (q - g)) * volume)
