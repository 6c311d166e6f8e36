"""Fractional calculus on a uniform time grid.

The Caputo derivative uses the L1 scheme and the Riemann-Liouville integral
uses product integration of the piecewise-linear interpolant, which is the
matched pair the forward and inverse solvers rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError, ShapeMismatchError
from .mlf import MlParams, ml_eval


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_i = i*T/N`` of ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"grid needs N >= 2 steps, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def __len__(self):
        return self.N + 1

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


@dataclass(frozen=True, eq=False)
class CoefficientPath:
    """Scalar function of time sampled on a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.grid.N + 1:
            raise ShapeMismatchError(
                f"path has shape {v.shape}, grid expects ({self.grid.N + 1},)"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "CoefficientPath":
        return cls(grid, np.broadcast_to(fn(grid.nodes), (grid.N + 1,)))

    @classmethod
    def constant(cls, grid: TimeGrid, c: float) -> "CoefficientPath":
        return cls(grid, np.full(grid.N + 1, float(c)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values) -> "CoefficientPath":
        return CoefficientPath(self.grid, values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _check_alpha_open(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def l1_weights(alpha: float, n: int) -> np.ndarray:
    """L1 history weights ``b_j = (j+1)^(1-a) - j^(1-a)`` for ``j < n``."""
    j = np.arange(n, dtype=np.float64)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


def l1_scale(alpha: float, h: float) -> float:
    return h ** (-alpha) / math.gamma(2.0 - alpha)


def caputo_l1(path: CoefficientPath, alpha: float) -> CoefficientPath:
    """L1 approximation of the Caputo derivative at every node.

    The value at ``t_0`` is set to 0. Exact for paths affine in ``t``.
    """
    _check_alpha_open(alpha)
    v = path.values
    n = v.shape[0]
    dv = np.diff(v)
    d = np.zeros(n)
    d[1:] = l1_scale(alpha, path.grid.h) * _backend.history_convolve(l1_weights(alpha, n - 1), dv)
    return path.with_values(d)


def rl_weights(alpha: float, n: int):
    """Product-trapezoid weights for the Riemann-Liouville integral.

    Returns ``(a, a0)``: ``a[l]`` weights the sample at lag ``l`` and
    ``a0[n]`` replaces ``a[n]`` for the sample at ``t_0``. Both still need the
    factor ``h^alpha / Gamma(alpha + 2)``.
    """
    p = alpha + 1.0
    ell = np.arange(n, dtype=np.float64)
    a = np.empty(n)
    a[0] = 1.0
    a[1:] = (ell[1:] + 1.0) ** p - 2.0 * ell[1:] ** p + (ell[1:] - 1.0) ** p
    a0 = np.zeros(n)
    a0[1:] = (ell[1:] - 1.0) ** p - (ell[1:] - 1.0 - alpha) * ell[1:] ** alpha
    return a, a0


def rl_integral(path: CoefficientPath, alpha: float) -> CoefficientPath:
    """Riemann-Liouville integral ``I^alpha`` of the piecewise-linear interpolant."""
    if not (alpha > 0.0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be positive, got {alpha}")
    v = path.values
    n = v.shape[0]
    a, a0 = rl_weights(alpha, n)
    acc = _backend.history_convolve(a, v) + (a0 - a) * v[0]
    acc[0] = 0.0
    return path.with_values(acc * path.grid.h**alpha / math.gamma(alpha + 2.0))


def composition_check(path: CoefficientPath, alpha: float) -> float:
    """Max-norm residual of ``I^a D^a v - (v - v(0))`` on the grid."""
    back = rl_integral(caputo_l1(path, alpha), alpha).values
    return float(np.max(np.abs(back - (path.values - path.values[0]))))


def gronwall_bound(z: float, c: float, alpha: float, t) -> float:
    """Fractional Gronwall majorant ``z * E_{a,1}(c * Gamma(a) * t^a)``.

    Raises :class:`~fracinv.errors.SeriesOverflowError` when the argument is
    too large for the series.
    """
    if z < 0 or c < 0 or np.any(np.asarray(t) < 0):
        raise DomainError("gronwall_bound needs nonnegative z, c and t")
    _check_alpha_open(alpha) if alpha != 1.0 else None
    if z == 0:
        return 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t))
    arg = c * math.gamma(alpha) * np.asarray(t, dtype=np.float64) ** alpha
    return z * ml_eval(MlParams(alpha, 1.0), arg)
