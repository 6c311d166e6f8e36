"""Per-mode forward solver for ``D^a v + mu*sigma(t)*v = f``, ``v(0) = h``.

Two independent discretizations are provided:

``picard``
    Fixed-point iteration of the Volterra form

        v(t) = h E_{a,1}(-lam t^a)
               + int_0^t K(t-s) [f(s) + mu (M - sigma(s)) v(s)] ds,

    with ``lam = mu*M`` and ``K(t) = t^(a-1) E_{a,a}(-lam t^a)``. The bracket
    is interpolated between nodes and integrated exactly against ``K``
    (product integration). High modes relax on a time scale far below one
    step, so on an initial window the unknown is interpolated in
    ``span{1, rho}`` with ``rho(t) = E_{a,1}(-mu sigma(0) t^a)``, which holds
    the initial layer exactly. Beyond the window the hats are piecewise
    linear. Both hat families are nonnegative partitions of unity, so every
    weight is nonnegative and the discrete map contracts with factor at most
    ``(M - m)/M``.

``l1``
    Implicit L1 time stepping, used as an independent check.
"""

from __future__ import annotations

import functools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import roots_legendre

from . import _backend
from .errors import ConvergenceError, DomainError, NonContractionError, ShapeMismatchError
from .fraccalc import CoefficientPath, TimeGrid, l1_scale, l1_weights
from .mlf import MlParams, ml_eval
from .spectra import ModeSet, ProblemData

METHODS = ("picard", "l1")


@functools.lru_cache(maxsize=512)
def kernel_moments(alpha: float, lam: float, h: float, n: int):
    """Antiderivatives of the kernel at ``tau_m = m*h``, ``m = 0..n``.

    ``P(tau) = int_0^tau K = tau^a E_{a,a+1}(-lam tau^a)`` and
    ``Q(tau) = int_0^tau P = tau^(a+1) E_{a,a+2}(-lam tau^a)``.
    """
    tau = h * np.arange(n + 1, dtype=np.float64)
    z = -lam * tau**alpha
    P = tau**alpha * ml_eval(MlParams(alpha, alpha + 1.0), z)
    Q = tau ** (alpha + 1.0) * ml_eval(MlParams(alpha, alpha + 2.0), z)
    P.setflags(write=False)
    Q.setflags(write=False)
    return P, Q


@functools.lru_cache(maxsize=512)
def product_weights(alpha: float, lam: float, h: float, n: int):
    """Lag weights ``w`` and left-end correction ``wcorr`` for ``n + 1`` nodes.

    ``int_0^{t_k} K(t_k - s) g(s) ds ~ sum_j w[k-j] g_j - wcorr[k] g_0`` for
    piecewise-linear ``g``.
    """
    P, Q = kernel_moments(alpha, lam, h, n)
    dQ = np.diff(Q) / h
    # interval m covers lags tau in [(m-1)h, mh]; its hat functions put
    # `outer` on lag m and `inner` on lag m-1
    outer = P[1:] - dQ
    inner = dQ - P[:-1]
    w = np.zeros(n + 1)
    w[1:] += outer
    w[:-1] += inner
    # at node k the sample g_0 sits at lag k but only interval k touches it
    wcorr = np.zeros(n + 1)
    wcorr[:-1] = inner
    w.setflags(write=False)
    wcorr.setflags(write=False)
    return w, wcorr


@functools.lru_cache(maxsize=512)
def relaxation(alpha: float, lam: float, T: float, n: int) -> np.ndarray:
    """``E_{a,1}(-lam t^a)`` on the grid nodes."""
    t = np.linspace(0.0, T, n + 1)
    out = ml_eval(MlParams(alpha, 1.0), -lam * t**alpha)
    out.setflags(write=False)
    return out


# fraction of the horizon covered by layer-adapted hats
LAYER_WINDOW = 0.25
# below this relative drop of rho over a step the linear hats are kept
_MIN_DROP = 1e-4
_KERNEL_NODES = 16
_QUAD_NODES = 24
_GEOMETRIC_LEVELS = 60


def _lagrange_matrix(y, c):
    """``L[k, i] = l_i(y_k)`` for the Lagrange basis on nodes ``c``."""
    diff = c[:, None] - c[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / np.prod(diff, axis=1)
    d = y[:, None] - c[None, :]
    exact = d == 0.0
    d[exact] = 1.0
    terms = bw[None, :] / d
    L = terms / terms.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    L[rows] = exact[rows].astype(np.float64)
    return L


_XK = (roots_legendre(_KERNEL_NODES)[0] + 1.0) / 2.0
_XG, _WG = roots_legendre(_QUAD_NODES)
_XG = (_XG + 1.0) / 2.0
_WG = _WG / 2.0
_LG = _lagrange_matrix(_XG, _XK)


@functools.lru_cache(maxsize=256)
def _kernel_table(alpha: float, lam: float, h: float, n: int) -> np.ndarray:
    """``K(lag*h - c_i)`` for lags ``2..n`` at the interpolation nodes ``c_i``."""
    lags = np.arange(2, n + 1, dtype=np.float64)
    tau = h * (lags[:, None] - _XK[None, :])
    K = tau ** (alpha - 1.0) * ml_eval(MlParams(alpha, alpha), -lam * tau**alpha)
    K.setflags(write=False)
    return K


def _graded_rule(h, levels):
    """Composite Gauss rule on ``(0, h]`` with panels halving toward 0."""
    edges = np.concatenate([[0.0], h * 0.5 ** np.arange(levels)[::-1]])
    lo, width = edges[:-1], np.diff(edges)
    x = (lo[:, None] + width[:, None] * _XG[None, :]).ravel()
    w = (width[:, None] * _WG[None, :]).ravel()
    return x, w


def _full_convolution(alpha, lam, lam_r, t):
    """``int_0^t K(t-s) rho(s) ds`` in closed form."""
    if abs(lam - lam_r) <= 1e-8 * lam:
        return t**alpha / alpha * ml_eval(MlParams(alpha, alpha), -lam * t**alpha)
    ml = MlParams(alpha, 1.0)
    return (ml_eval(ml, -lam_r * t**alpha) - ml_eval(ml, -lam * t**alpha)) / (lam - lam_r)


@dataclass(frozen=True, eq=False)
class LayerMoments:
    """Window weights of the layer-adapted rule, split by coefficient node.

    On interval ``j`` the unknown is interpolated in ``span{1, rho}`` and the
    coefficient linearly, so the contribution to node ``k`` is bilinear:
    ``sum_{a,b} coef_a v_b int K theta_a phi_b``. ``ll[k, j-1]`` holds the
    ``(left coef, left v)`` weight minus the linear-hat weight it replaces,
    and likewise ``rl``, ``lr`` and ``rr``.
    """

    J: int
    ll: np.ndarray
    rl: np.ndarray
    lr: np.ndarray
    rr: np.ndarray

    def correction(self, coef, wcorr) -> np.ndarray:
        """Dense correction acting on ``v[:J+1]`` for the given coefficient."""
        coef = np.asarray(coef, dtype=np.float64)
        J = self.J
        C = np.zeros((wcorr.shape[0], J + 1))
        C[:, 0] = -wcorr * coef[0]
        if J:
            cl, cr = coef[:J], coef[1 : J + 1]
            C[:, :J] += cl * self.ll + cr * self.rl
            C[:, 1:] += cl * self.lr + cr * self.rr
        return C


@functools.lru_cache(maxsize=32)
def layer_moments(alpha: float, lam: float, lam_r: float, h: float, n: int,
                  window: float = LAYER_WINDOW) -> LayerMoments:
    """Layer-adapted weights for the first ``J`` intervals.

    ``rho(t) = E_{a,1}(-lam_r t^a)``. ``J`` stops at ``window * n`` or where
    ``rho`` drops by less than a relative ``1e-4`` over a step; ``J = 0``
    leaves plain linear hats.
    """
    t = h * np.arange(n + 1, dtype=np.float64)
    ml = MlParams(alpha, 1.0)
    J = 0
    if lam_r > 0:
        jmax = int(math.ceil(window * n))
        rho = ml_eval(ml, -lam_r * t[: jmax + 1] ** alpha)
        drop = rho[:-1] - rho[1:]
        good = drop > _MIN_DROP * rho[:-1]
        J = jmax if good.all() else int(np.argmin(good))
    if J == 0:
        z = np.zeros((n + 1, 0))
        return LayerMoments(0, z, z, z, z)

    P, Q = kernel_moments(alpha, lam, h, n)
    dQ = np.diff(Q) / h
    outer = P[1:] - dQ  # int K (1 - theta)
    inner = dQ - P[:-1]  # int K theta
    m0 = np.diff(P)

    # moments of rho * l_i and rho * theta * l_i on each interval; rho has a
    # t^a cusp at 0, so interval 1 uses a graded rule
    s1, w1 = _graded_rule(h, _GEOMETRIC_LEVELS)
    rho1 = ml_eval(ml, -lam_r * s1**alpha)
    L1 = _lagrange_matrix(s1 / h, _XK)
    rm = np.empty((J, _KERNEL_NODES))
    rmt = np.empty((J, _KERNEL_NODES))
    rm[0] = (w1 * rho1) @ L1
    rmt[0] = (w1 * rho1 * s1 / h) @ L1
    vals = None
    if J > 1:
        s = h * (np.arange(1, J)[:, None] + _XG[None, :])
        vals = ml_eval(ml, -lam_r * s**alpha)
        rm[1:] = h * (vals * _WG[None, :]) @ _LG
        rmt[1:] = h * (vals * (_WG * _XG)[None, :]) @ _LG

    # off-diagonal: K(t_k - s) is smooth on interval j < k, interpolate it
    Ktab = _kernel_table(alpha, lam, h, n)
    G = Ktab @ rm.T
    Gt = Ktab @ rmt.T
    R = np.zeros((n + 1, J))
    Rt = np.zeros((n + 1, J))
    kk, jj = np.meshgrid(np.arange(n + 1), np.arange(1, J + 1), indexing="ij")
    below = kk > jj
    src = (kk[below] - jj[below] - 1, jj[below] - 1)
    R[kk[below], jj[below] - 1] = G[src]
    Rt[kk[below], jj[below] - 1] = Gt[src]

    # diagonal of int K rho from the closed-form convolution
    full = _full_convolution(alpha, lam, lam_r, t[1 : J + 1])
    for j in range(1, J + 1):
        R[j, j - 1] = full[j - 1] - R[j, : j - 1].sum()
    # diagonal of int K theta rho: theta = 1 - u/h with u = t_j - s, and
    # u K(u) = u^a E_{a,a}(-lam u^a) is bounded with a cusp at u = 0
    u, wu = _graded_rule(h, _GEOMETRIC_LEVELS)
    kt = wu * u**alpha * ml_eval(MlParams(alpha, alpha), -lam * u**alpha)
    D = np.empty(J)
    half_s, half_w = _graded_rule(0.5 * h, _GEOMETRIC_LEVELS)
    s_all = np.concatenate([half_s, h - half_s])
    w_all = np.concatenate([half_w, half_w])
    ut = h - s_all
    D[0] = np.sum(w_all * ut**alpha * ml_eval(MlParams(alpha, alpha), -lam * ut**alpha)
                  * ml_eval(ml, -lam_r * s_all**alpha))
    if J > 1:
        D[1:] = vals @ (kt @ _lagrange_matrix(1.0 - u / h, _XG))
    for j in range(1, J + 1):
        Rt[j, j - 1] = R[j, j - 1] - D[j - 1] / h

    ll, rl, lr, rr = (np.zeros((n + 1, J)) for _ in range(4))
    for j in range(1, J + 1):
        k = slice(j, n + 1)
        i1, it = m0[: n + 1 - j], inner[: n + 1 - j]
        d = drop[j - 1]
        a_rl = (Rt[k, j - 1] - rho[j] * it) / d
        a_ll = (R[k, j - 1] - rho[j] * i1) / d - a_rl
        a_rr = (rho[j - 1] * it - Rt[k, j - 1]) / d
        a_lr = (rho[j - 1] * i1 - R[k, j - 1]) / d - a_rr
        ll[k, j - 1] = a_ll - outer[: n + 1 - j]
        rl[k, j - 1] = a_rl
        lr[k, j - 1] = a_lr
        rr[k, j - 1] = a_rr - it
    for a in (ll, rl, lr, rr):
        a.setflags(write=False)
    return LayerMoments(J, ll, rl, lr, rr)


@dataclass(frozen=True)
class PicardControls:
    """Stopping rule and splitting constant for the Picard iteration.

    ``M_sigma=None`` selects ``overshoot * max(sigma)`` rounded up to the
    nearest power of ``2^(1/32)``.
    """

    tol: float = 1e-10
    max_iter: int = 200
    M_sigma: float | None = None
    overshoot: float = 1.05

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.overshoot <= 1.0:
            raise DomainError("need tol > 0, max_iter >= 1 and overshoot > 1")

    def splitting(self, sigma_max: float) -> float:
        if self.M_sigma is None:
            # round up to a ladder 2^(k/32) so nearby coefficients share cached weights
            M = 2.0 ** (math.ceil(32.0 * math.log2(self.overshoot * sigma_max)) / 32.0)
        else:
            M = float(self.M_sigma)
        if not M > sigma_max:
            raise DomainError(f"M_sigma={M} must exceed max sigma={sigma_max}")
        return M


@dataclass(frozen=True)
class ModeDiagnostics:
    label: object
    iterations: int
    residual: float
    contraction: float
    bound: float
    status: str


@dataclass(frozen=True, eq=False)
class VolterraMode:
    """Discrete Volterra map of one mode.

    ``v -> base + T_w (coef * v) + corr @ v[:J+1]`` where ``T_w`` is the
    lag-Toeplitz product-integration matrix and ``corr`` the window
    correction; ``base`` holds the initial-value and source terms. ``apply``
    is one Picard step.
    """

    base: np.ndarray
    w: np.ndarray
    corr: np.ndarray
    coef: np.ndarray
    bound: float

    @classmethod
    def build(cls, mu, sigma, f, h0, alpha, M):
        grid = sigma.grid
        alpha, mu, M = float(alpha), float(mu), float(M)
        lam = mu * M
        w, wcorr = product_weights(alpha, lam, grid.h, grid.N)
        f = np.asarray(f, dtype=np.float64)
        # the source is smooth in t: plain linear hats
        base = (float(h0) * relaxation(alpha, lam, grid.T, grid.N)
                + _backend.history_convolve(w, f) - wcorr * f[0])
        coef = mu * (M - sigma.values)
        layer = layer_moments(alpha, lam, mu * float(sigma.values[0]), grid.h, grid.N)
        corr = layer.correction(coef, wcorr)
        m = float(np.min(sigma.values))
        return cls(base, w, corr, coef, (M - m) / M)

    @property
    def window(self) -> int:
        return self.corr.shape[1] - 1

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        return (self.base + _backend.history_convolve(self.w, self.coef * v)
                + self.corr @ v[: self.corr.shape[1]])

    def solve(self, tol, max_iter, v0=None):
        v0 = self.base if v0 is None else v0
        return _backend.picard_mode(self.base, self.w, self.corr, self.coef, v0, tol, max_iter)


def _as_path(grid, values, name):
    if isinstance(values, CoefficientPath):
        if values.grid != grid:
            raise ShapeMismatchError(f"{name} lives on a different grid")
        return values.values
    arr = np.broadcast_to(np.asarray(values, dtype=np.float64), (grid.N + 1,))
    return arr


def _check_sigma(sigma: CoefficientPath):
    if np.min(sigma.values) <= 0:
        raise DomainError(f"sigma must be positive on the grid, min is {np.min(sigma.values):.3g}")


def solve_mode_picard(mu, sigma: CoefficientPath, f, h0, alpha, controls=None, v0=None, label=None):
    """Picard solution of one mode; returns ``(v, ModeDiagnostics)``."""
    controls = controls or PicardControls()
    _check_sigma(sigma)
    if mu < 0:
        raise DomainError("eigenvalue must be nonnegative")
    M = controls.splitting(float(np.max(sigma.values)))
    f = _as_path(sigma.grid, f, "f")
    if h0 == 0 and not np.any(f):
        # zero data: the solution is identically zero
        bound = (M - float(np.min(sigma.values))) / M
        return np.zeros(sigma.grid.N + 1), ModeDiagnostics(label, 1, 0.0, 0.0, bound, "converged")
    op = VolterraMode.build(mu, sigma, f, h0, alpha, M)
    v, iters, diffs, status = op.solve(controls.tol, controls.max_iter, v0)
    v[0] = h0  # the map gives h0 up to roundoff
    ratio = float(diffs[-1] / diffs[-2]) if len(diffs) > 1 and diffs[-2] > 0 else 0.0
    diag = ModeDiagnostics(label, int(iters), float(diffs[-1]), ratio, op.bound,
                           {0: "converged", 1: "max_iter", 2: "diverging"}[status])
    if status == _backend.DIVERGING:
        raise NonContractionError(
            f"mode {label}: Picard updates grew for 5 consecutive iterations; check M_sigma",
            best=v, diagnostics=diag,
        )
    if status == _backend.MAX_ITER:
        raise ConvergenceError(
            f"mode {label}: Picard tolerance not reached in {iters} iterations "
            f"(last update {diffs[-1]:.2e})",
            best=v, diagnostics=diag,
        )
    return v, diag


def solve_mode_l1(mu, sigma: CoefficientPath, f, h0, alpha):
    """Implicit L1 time stepping for one mode."""
    _check_sigma(sigma)
    if mu < 0:
        raise DomainError("eigenvalue must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    grid = sigma.grid
    fv = _as_path(grid, f, "f")[None, :]
    b = l1_weights(alpha, grid.N + 1)
    return _backend.l1_march([float(mu)], sigma.values, fv, [float(h0)], l1_scale(alpha, grid.h), b)[0]


@dataclass(frozen=True, eq=False)
class ForwardProblem:
    data: ProblemData
    sigma: CoefficientPath
    method: str = "picard"
    controls: PicardControls = field(default_factory=PicardControls)
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.sigma.grid != self.data.grid:
            raise ShapeMismatchError("sigma and problem data use different grids")
        _check_sigma(self.sigma)
        self.controls.splitting(float(np.max(self.sigma.values)))

    @property
    def m_sigma(self) -> float:
        return float(np.min(self.sigma.values))

    @property
    def M_sigma(self) -> float:
        return self.controls.splitting(float(np.max(self.sigma.values)))


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Mode trajectories ``v[xi, i]`` and Caputo derivatives on a grid."""

    grid: TimeGrid
    alpha: float
    labels: tuple
    eigenvalues: np.ndarray
    v: np.ndarray
    dalpha: np.ndarray
    method: str
    diagnostics: tuple = ()
    parts: dict | None = None

    @property
    def n_modes(self) -> int:
        return self.v.shape[0]

    def observe(self, weights) -> np.ndarray:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.n_modes,):
            raise ShapeMismatchError(f"{w.shape[0]} weights for {self.n_modes} modes")
        return w @ self.v

    def sobolev_norms(self, rho: float) -> np.ndarray:
        """``H^rho`` norm of ``v(t_i)`` at every node."""
        return np.sqrt(np.sum(((1.0 + self.eigenvalues[:, None]) ** rho * self.v) ** 2, axis=0))

    def metadata(self) -> dict:
        return {
            "alpha": self.alpha,
            "T": self.grid.T,
            "N": self.grid.N,
            "n_modes": self.n_modes,
            "method": self.method,
            "diagnostics": [asdict(d) for d in self.diagnostics],
        }

    def to_csv(self, path, observation=None):
        """One row per node: ``t, v_1..v_n`` and ``E`` when given."""
        cols = [self.grid.nodes[:, None], self.v.T]
        header = ["t"] + [f"v_{lab}" for lab in self.labels]
        if observation is not None:
            cols.append(np.asarray(observation, dtype=np.float64)[:, None])
            header.append("E")
        np.savetxt(path, np.hstack(cols), delimiter=",", header=",".join(header), comments="", fmt="%.17g")

    def write(self, directory, observation=None):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.to_csv(d / "data.csv", observation)
        (d / "solution_meta.json").write_text(json.dumps(self.metadata(), indent=2, default=str))


def _run_modes(fn, n, workers):
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def _solve_picard_all(data, sigma, controls, h, f, workers, initial=None):
    labels = data.modes.labels

    def one(i):
        v0 = None if initial is None else initial[i]
        try:
            return solve_mode_picard(data.modes.eigenvalues[i], sigma, f[i], h[i], data.alpha,
                                     controls, v0=v0, label=labels[i])
        except ConvergenceError as exc:
            raise type(exc)(str(exc), best=exc.best, diagnostics=exc.diagnostics) from exc

    out = _run_modes(one, data.n_modes, workers)
    return np.array([o[0] for o in out]), tuple(o[1] for o in out)


def _solve_l1_all(data, sigma, h, f):
    b = l1_weights(data.alpha, data.grid.N + 1)
    return _backend.l1_march(data.modes.eigenvalues, sigma.values, f, h,
                             l1_scale(data.alpha, data.grid.h), b)


def _solve(problem, h, f, initial=None):
    d = problem.data
    if problem.method == "picard":
        return _solve_picard_all(d, problem.sigma, problem.controls, h, f, problem.workers, initial)
    return _solve_l1_all(d, problem.sigma, h, f), ()


def solve_forward(problem: ForwardProblem, split: bool = False, initial=None) -> SolutionField:
    """Solve every mode and assemble a :class:`SolutionField`.

    The Caputo derivative is recovered from the equation,
    ``D^a v = f - mu*sigma*v``, not by differencing. With ``split`` the
    homogeneous (``f = 0``) and zero-data (``h = 0``) parts are also solved
    and stored in ``parts``. ``initial`` warm-starts the Picard iteration.
    """
    d = problem.data
    v, diags = _solve(problem, d.h, d.f, initial)
    v[:, 0] = d.h
    mu = d.modes.eigenvalues
    dalpha = d.f - mu[:, None] * problem.sigma.values[None, :] * v
    parts = None
    if split:
        vh, _ = _solve(problem, d.h, np.zeros_like(d.f))
        vf, _ = _solve(problem, np.zeros_like(d.h), d.f)
        parts = {"homogeneous": vh, "source": vf}
    return SolutionField(d.grid, d.alpha, d.modes.labels, mu, v, dalpha, problem.method, diags, parts)


def observe(field: SolutionField, modes: ModeSet) -> CoefficientPath:
    """Observation ``E(t) = sum_xi phi_xi v_xi(t)``."""
    if len(modes) != field.n_modes:
        raise ShapeMismatchError(f"{len(modes)} modes for a field with {field.n_modes}")
    return CoefficientPath(field.grid, field.observe(modes.weights))


@dataclass(frozen=True)
class BoundCheckReport:
    max_violation_homogeneous: float
    max_violation_source: float
    m_sigma: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return max(self.max_violation_homogeneous, self.max_violation_source) <= self.tolerance


def comparison_bound_check(field: SolutionField, problem: ForwardProblem, tolerance: float = 1e-3):
    """Check the parts of the solution against the constant-coefficient majorants.

    ``|v^h| <= |h| E_{a,1}(-mu m t^a)`` and
    ``|v^f| <= int K_m(t-s)|f(s)| ds`` with ``m = min sigma``. Violations are
    measured relative to each mode's largest bound value.
    """
    parts = field.parts
    if parts is None:
        parts = solve_forward(problem, split=True).parts
    d = problem.data
    grid = d.grid
    m = problem.m_sigma
    worst_h = worst_f = 0.0
    for i, mu in enumerate(d.modes.eigenvalues):
        lam = float(mu) * m
        bh = abs(d.h[i]) * relaxation(d.alpha, lam, grid.T, grid.N)
        w, wcorr = product_weights(d.alpha, lam, grid.h, grid.N)
        af = np.abs(d.f[i])
        bf = _backend.history_convolve(w, af) - wcorr * af[0]
        for v, b, key in ((parts["homogeneous"][i], bh, "h"), (parts["source"][i], bf, "f")):
            scale = float(np.max(b))
            if scale <= 0:
                viol = float(np.max(np.abs(v))) > 0 and math.inf or 0.0
            else:
                viol = max(0.0, float(np.max(np.abs(v) - b)) / scale)
            if key == "h":
                worst_h = max(worst_h, viol)
            else:
                worst_f = max(worst_f, viol)
    return BoundCheckReport(worst_h, worst_f, m, tolerance)


def holder_modulus(field_or_v, alpha: float, grid: TimeGrid | None = None) -> float:
    """Empirical ``alpha``-Holder seminorm ``max |v(t_i) - v(t_j)| / |t_i - t_j|^alpha``."""
    if isinstance(field_or_v, SolutionField):
        v, grid = field_or_v.v, field_or_v.grid
    else:
        v = np.atleast_2d(np.asarray(field_or_v, dtype=np.float64))
        if grid is None:
            raise DomainError("a grid is needed for raw trajectories")
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    best = 0.0
    for lag in range(1, v.shape[1]):
        diff = np.max(np.abs(v[:, lag:] - v[:, :-lag]))
        best = max(best, float(diff) / (lag * grid.h) ** alpha)
    return best
