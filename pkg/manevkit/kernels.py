import logging
import typing
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import xlogy

from manevkit import settings
from manevkit.phase_space import RadialGrid

logger = logging.getLogger(__name__)


def _log_ratio(t: np.ndarray) -> np.ndarray:
    """ln|(1 + t)/(1 - t)| away from t = 1."""
    inner = np.where(t < 1.0, t, 1.0 / t)
    return 2.0 * np.arctanh(inner)


def _m1(t: np.ndarray) -> np.ndarray:
    # antiderivative of t ln|(1 + t)/(1 - t)|
    half = 0.5 * (t * t - 1.0)
    return xlogy(half, np.abs(1.0 + t)) - xlogy(half, np.abs(1.0 - t)) + t


def _m2(t: np.ndarray) -> np.ndarray:
    # antiderivative of t^2 ln|(1 + t)/(1 - t)|
    t3 = t * t * t
    return (xlogy((t3 + 1.0) / 3.0, np.abs(1.0 + t))
            + xlogy((1.0 - t3) / 3.0, np.abs(1.0 - t)) + t * t / 3.0)


def _manev_rows(nodes: np.ndarray, rows: np.ndarray) -> np.ndarray:
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    x, w = leggauss(settings.GAUSS_POINTS)
    s = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x
    ws = 0.5 * h[:, None] * w
    right_hat = (s - a[:, None]) / h[:, None]

    r = nodes[rows][:, None, None]
    t = s[None] / r
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = t * _log_ratio(t) * ws
    left = (kernel * (1.0 - right_hat)).sum(-1)
    right = (kernel * right_hat).sum(-1)

    # cells meeting [r/2, 2r] carry the logarithmic singularity: integrate them exactly
    r2 = nodes[rows][:, None]
    near = (b[None] > 0.5 * r2) & (a[None] < 2.0 * r2)
    i, c = np.nonzero(near)
    rr = r2[i, 0]
    ta, tb = a[c] / rr, b[c] / rr
    d1 = _m1(tb) - _m1(ta)
    d2 = _m2(tb) - _m2(ta)
    scale = rr / h[c]
    left[i, c] = scale * (b[c] * d1 - rr * d2)
    right[i, c] = scale * (rr * d2 - a[c] * d1)

    out = np.zeros((rows.size, nodes.size))
    out[:, :-1] += left
    out[:, 1:] += right
    return out


@lru_cache(None)
def _unit_manev_matrix(shape_key: typing.Tuple) -> np.ndarray:
    size, edge, inner = shape_key
    grid = RadialGrid(1.0, size, edge, inner if edge is not None else None)
    nodes = grid.nodes
    matrix = np.zeros((size, size))
    # the r -> 0 limit of the kernel is 2
    matrix[0] = 2.0 * grid.weights
    block = settings.KERNEL_BLOCK_ROWS
    for start in range(1, size, block):
        rows = np.arange(start, min(start + block, size))
        matrix[rows] = _manev_rows(nodes, rows)
    logger.debug("built %dx%d Manev kernel for grid shape %r", size, size, shape_key)
    matrix.setflags(write=False)
    return matrix


def manev_matrix(grid: RadialGrid) -> np.ndarray:
    """A with (A rho)_i = int rho(s) (s/r_i) ln|(r_i+s)/(r_i-s)| ds for piecewise-linear rho.

    The kernel is homogeneous of degree one under dilations, so one matrix per grid shape
    is cached and scaled by the extent.
    """
    return grid.extent * _unit_manev_matrix(grid.shape_key)


def clear_cache() -> None:
    _unit_manev_matrix.cache_clear()
