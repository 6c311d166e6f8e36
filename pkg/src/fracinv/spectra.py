"""Discrete spectra, observation weights and problem data.

Modes are indexed ``xi = 1..n``. The Dirichlet basis on ``(0, 1)`` is
``sqrt(2) sin(k pi x)`` with eigenvalues ``(k pi)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft

from .errors import DomainError, ResolutionError, ShapeMismatchError
from .fraccalc import CoefficientPath, TimeGrid, rl_integral

WEIGHT_KINDS = ("mean_value", "point", "boundary_flux")


def _check_count(n_modes):
    if int(n_modes) != n_modes or n_modes < 1:
        raise DomainError(f"need at least one mode, got {n_modes}")
    return int(n_modes)


def dirichlet_laplacian_modes(n_modes: int) -> np.ndarray:
    """Eigenvalues ``(k pi)^2`` of ``-d^2/dx^2`` on ``(0, 1)`` with Dirichlet ends."""
    k = np.arange(1, _check_count(n_modes) + 1, dtype=np.float64)
    return (np.pi * k) ** 2


def involution_modes(n_modes: int, eps: float) -> np.ndarray:
    """Eigenvalues of ``-u''(x) + eps*u''(-x)`` in index order.

    Odd ``xi`` gives ``(1 - eps) xi^2``, even ``xi`` gives ``(1 + eps) xi^2``,
    so the sequence is not sorted when ``eps > 0``.
    """
    if not abs(eps) < 1.0:
        raise DomainError(f"|eps| must be < 1, got {eps}")
    xi = np.arange(1, _check_count(n_modes) + 1, dtype=np.float64)
    return np.where(xi % 2 == 1, 1.0 - eps, 1.0 + eps) * xi**2


def harmonic_oscillator_modes(n_modes: int) -> np.ndarray:
    """One-dimensional harmonic oscillator eigenvalues ``2k + 1``, ``k = 0..n-1``."""
    return 2.0 * np.arange(_check_count(n_modes), dtype=np.float64) + 1.0


def _raw_weights(kind, n, x_star):
    k = np.arange(1, n + 1, dtype=np.float64)
    if kind == "mean_value":
        return math.sqrt(2.0) * (1.0 + (-1.0) ** (k + 1)) / (k * np.pi)
    if kind == "point":
        if x_star is None or not (0.0 < x_star < 1.0):
            raise DomainError(f"point functional needs 0 < x* < 1, got {x_star}")
        w = math.sqrt(2.0) * np.sin(k * np.pi * x_star)
        # sin(k pi / 2) and friends should vanish exactly, not at 1e-16
        w[np.abs(w) < 1e-14] = 0.0
        return w
    if kind == "boundary_flux":
        return math.sqrt(2.0) * k * np.pi * np.cos(k * np.pi)
    raise DomainError(f"unknown functional kind {kind!r}; expected one of {WEIGHT_KINDS}")


def functional_weights(kind: str, n_modes: int, x_star: float | None = None, return_signs=False):
    """Weights ``phi_k = F[sqrt(2) sin(k pi x)]`` made nonnegative.

    Negative weights are flipped by flipping the sign of the eigenfunction.
    With ``return_signs`` the flip pattern is returned too; coefficients of
    ``h`` and ``f`` in the original sine basis must be multiplied by it.
    """
    raw = _raw_weights(kind, _check_count(n_modes), x_star)
    signs = np.where(raw < 0, -1.0, 1.0)
    w = raw * signs
    if not np.any(w > 0):
        raise DomainError(f"{kind} weights vanish on the first {n_modes} modes")
    return (w, signs) if return_signs else w


@dataclass(frozen=True)
class AdmissibilityReport:
    gamma: float
    dyadic_m: np.ndarray
    partial_sums: np.ndarray
    exponent: float
    admissible: bool


def gamma_admissibility(weights, eigenvalues, gamma: float) -> AdmissibilityReport:
    """Numerical check that ``phi_xi / mu_xi^gamma`` is square summable.

    Fits the decay of block increments ``S_{2m} - S_m`` of the partial sums
    over dyadic ``m``; increments ``~ m^(1-p)`` correspond to terms
    ``~ m^-p``. The sequence is judged admissible when the fitted ``p > 1``.
    """
    phi = np.asarray(weights, dtype=np.float64)
    mu = np.asarray(eigenvalues, dtype=np.float64)
    if phi.shape != mu.shape:
        raise ShapeMismatchError("weights and eigenvalues differ in length")
    if phi.shape[0] < 8:
        raise ResolutionError("gamma_admissibility needs at least 8 modes")
    if np.any(mu <= 0) and gamma > 0:
        raise DomainError("eigenvalues must be positive for gamma > 0")
    terms = (phi / mu**gamma) ** 2
    S = np.cumsum(terms)
    m = 2 ** np.arange(int(math.log2(phi.shape[0])) + 1)
    sums = S[m - 1]
    # skip the first two blocks, they are dominated by the leading terms
    lo = m[2:-1]
    inc = S[2 * lo - 1] - S[lo - 1]
    keep = inc > 0
    if not np.any(keep):
        exponent = math.inf
    elif keep.sum() == 1:
        exponent = 1.0 - math.log(inc[keep][0] / terms[lo[keep][0] - 1]) / math.log(lo[keep][0])
    else:
        slope = np.polyfit(np.log(lo[keep]), np.log(inc[keep]), 1)[0]
        exponent = 1.0 - float(slope)
    return AdmissibilityReport(float(gamma), m, sums, float(exponent), bool(exponent > 1.0))


def sobolev_norm(coeffs, eigenvalues, rho: float) -> float:
    """Truncated ``H^rho`` norm ``sqrt(sum ((1 + mu)^rho c)^2)``."""
    c = np.asarray(coeffs, dtype=np.float64)
    mu = np.asarray(eigenvalues, dtype=np.float64)
    if c.shape[-1] != mu.shape[0]:
        raise ShapeMismatchError("coefficients and eigenvalues differ in length")
    return np.sqrt(np.sum(((1.0 + mu) ** rho * c) ** 2, axis=-1))


def sine_projection(samples, n_modes: int) -> np.ndarray:
    """Coefficients of ``g`` in the basis ``sqrt(2) sin(k pi x)``.

    ``samples`` are values at ``x_j = j/J``, ``j = 0..J``, endpoints included.
    The trapezoid rule on this grid is exactly the type-I DST, under which
    the discrete sine vectors are orthonormal for ``k < J``.
    """
    g = np.asarray(samples, dtype=np.float64)
    n_modes = _check_count(n_modes)
    J = g.shape[-1] - 1
    if g.shape[-1] < 2 * n_modes or n_modes >= J:
        raise ResolutionError(
            f"{g.shape[-1]} samples cannot resolve {n_modes} modes (need >= {2 * n_modes})"
        )
    y = fft.dst(g[..., 1:-1], type=1, axis=-1)
    return (math.sqrt(2.0) / (2.0 * J)) * y[..., :n_modes]


def sine_synthesis(coeffs, x) -> np.ndarray:
    """Evaluate ``sum_k c_k sqrt(2) sin(k pi x)``."""
    c = np.asarray(coeffs, dtype=np.float64)
    k = np.arange(1, c.shape[-1] + 1)
    return math.sqrt(2.0) * np.sin(np.pi * np.outer(np.asarray(x, dtype=np.float64), k)) @ c


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Truncated spectrum with observation weights.

    ``labels`` default to ``1..n``. Eigenvalues need not be sorted;
    :meth:`sorted` returns an index-sorted copy.
    """

    eigenvalues: np.ndarray
    weights: np.ndarray
    gamma: float = 0.0
    labels: tuple = field(default=None)

    def __post_init__(self):
        mu = np.array(self.eigenvalues, dtype=np.float64).ravel()
        phi = np.array(self.weights, dtype=np.float64).ravel()
        if mu.shape != phi.shape or mu.size == 0:
            raise ShapeMismatchError(
                f"eigenvalues ({mu.size}) and weights ({phi.size}) must be nonempty and equal length"
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(phi))):
            raise DomainError("mode data must be finite")
        if np.any(mu < 0):
            raise DomainError("eigenvalues must be nonnegative")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")
        labels = tuple(range(1, mu.size + 1)) if self.labels is None else tuple(self.labels)
        if len(labels) != mu.size:
            raise ShapeMismatchError("labels and eigenvalues differ in length")
        mu.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "eigenvalues", mu)
        object.__setattr__(self, "weights", phi)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.eigenvalues.shape[0]

    @property
    def positive_spectrum(self) -> bool:
        return bool(np.min(self.eigenvalues) > 0)

    @property
    def weights_normalized(self) -> bool:
        return bool(np.all(self.weights >= 0) and np.any(self.weights > 0))

    def sorted(self) -> "ModeSet":
        order = np.argsort(self.eigenvalues, kind="stable")
        return ModeSet(
            self.eigenvalues[order], self.weights[order], self.gamma,
            tuple(self.labels[i] for i in order),
        )

    def normalized(self):
        """Copy with nonnegative weights and the sign flips that produced it."""
        signs = np.where(self.weights < 0, -1.0, 1.0)
        return ModeSet(self.eigenvalues, self.weights * signs, self.gamma, self.labels), signs

    def admissibility(self) -> AdmissibilityReport:
        return gamma_admissibility(self.weights, self.eigenvalues, self.gamma)


def load_mode_table(path, gamma: float = 0.0) -> ModeSet:
    """Read a two-column ``(mu, phi)`` table, comma or whitespace separated.

    Lines starting with ``#`` and a non-numeric header row are skipped.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ShapeMismatchError(f"{path}: empty mode table")
    delim = "," if "," in lines[0] else None
    try:
        float(lines[0].split(delim)[0])
    except ValueError:
        lines = lines[1:]
    data = np.loadtxt(lines, delimiter=delim, ndmin=2)
    if data.shape[1] < 2:
        raise ShapeMismatchError(f"{path}: mode table needs two columns (mu, phi)")
    return ModeSet(data[:, 0], data[:, 1], gamma)


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Mode set, initial and source coefficients, order and time grid.

    ``f`` has one row per mode, sampled on ``grid``.
    """

    modes: ModeSet
    h: np.ndarray
    f: np.ndarray
    alpha: float
    grid: TimeGrid

    def __post_init__(self):
        n = len(self.modes)
        h = np.array(self.h, dtype=np.float64).ravel()
        f = np.array(self.f, dtype=np.float64)
        if f.ndim == 1:
            f = np.broadcast_to(f, (n, f.shape[0])).copy()
        if h.shape[0] != n or f.shape != (n, self.grid.N + 1):
            raise ShapeMismatchError(
                f"expected h of length {n} and f of shape {(n, self.grid.N + 1)}, "
                f"got {h.shape} and {f.shape}"
            )
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(f))):
            raise DomainError("h and f must be finite")
        h.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def f_path(self, i: int) -> CoefficientPath:
        return CoefficientPath(self.grid, self.f[i])

    def source_observation(self) -> np.ndarray:
        """``F[f(t)] = sum_xi phi_xi f_xi(t)`` on the grid."""
        return self.modes.weights @ self.f


def tail_bound(phi_next: float, h_next: float, f_next, alpha: float, grid: TimeGrid) -> float:
    """Bound on the first neglected mode's contribution to the observation.

    Uses ``0 <= v_xi <= h_xi + I^a f_xi`` for nonnegative data, and the same
    with absolute values otherwise.
    """
    f_next = np.broadcast_to(np.abs(np.asarray(f_next, dtype=np.float64)), (grid.N + 1,))
    box = abs(h_next) + rl_integral(CoefficientPath(grid, f_next), alpha).values
    return float(abs(phi_next) * np.max(box))
