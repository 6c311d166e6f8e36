"""Recovery of the time-dependent coefficient ``sigma(t)`` from ``E(t) = F[v(t)]``.

The coefficient is a fixed point of

    P[sigma](t) = (F[f(t)] - D^a E(t)) / sum_xi mu_xi phi_xi v_xi(t; sigma),

which maps the interval ``[C0/C3, C1/C2]`` into itself. The fixed point is
found by damped iteration with clamping to that interval.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDenominatorError,
    DomainError,
    InadmissibleProblemError,
    ShapeMismatchError,
)
from .forward import ForwardProblem, PicardControls, SolutionField, solve_forward
from .fraccalc import CoefficientPath, caputo_l1, rl_integral
from .spectra import ProblemData, sobolev_norm

START_POLICIES = ("midpoint", "lower", "upper")


@dataclass(frozen=True)
class InverseControls:
    """Iteration settings for :func:`solve_inverse`.

    ``start`` is a policy name from ``START_POLICIES`` or a constant value
    inside the bracket.
    """

    tol: float = 1e-8
    max_iter: int = 200
    damping: float = 1.0
    start: str | float = "midpoint"
    margin: float = 1e-12
    denominator_floor: float = 1e-12
    forward: PicardControls = field(default_factory=lambda: PicardControls(tol=1e-12, max_iter=1000))

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise DomainError("need tol > 0 and max_iter >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise DomainError(f"damping must lie in (0, 1], got {self.damping}")
        if isinstance(self.start, str) and self.start not in START_POLICIES:
            raise DomainError(f"start must be one of {START_POLICIES} or a number")


@dataclass(frozen=True, eq=False)
class InverseProblem:
    """Mode data, observation ``E`` and controls.

    ``dalpha_E`` overrides the L1 derivative of ``E`` when the exact Caputo
    derivative is known.
    """

    data: ProblemData
    E: CoefficientPath
    controls: InverseControls = field(default_factory=InverseControls)
    dalpha_E: np.ndarray | None = None
    method: str = "picard"
    workers: int = 1

    def __post_init__(self):
        if self.E.grid != self.data.grid:
            raise ShapeMismatchError("observation and problem data use different grids")
        if np.min(self.data.modes.eigenvalues) <= 0:
            raise DomainError("the inverse problem needs a strictly positive spectrum")
        d = self.dalpha_E
        if d is None:
            d = caputo_l1(self.E, self.data.alpha).values
        else:
            d = np.array(d, dtype=np.float64)
            if d.shape != self.E.values.shape:
                raise ShapeMismatchError(f"dalpha_E has shape {d.shape}, expected {self.E.values.shape}")
            d.setflags(write=False)
        object.__setattr__(self, "dalpha_E", d)

    @property
    def grid(self):
        return self.data.grid

    @property
    def numerator(self) -> np.ndarray:
        """``F[f(t)] - D^a E(t)`` on the grid."""
        return self.data.source_observation() - self.dalpha_E

    def with_controls(self, **kw) -> "InverseProblem":
        return replace(self, controls=replace(self.controls, **kw))


def normalize_signs(data: ProblemData) -> ProblemData:
    """Flip eigenfunction signs so that every weight is nonnegative.

    The coefficients of ``h`` and ``f`` flip with their eigenfunction, so the
    physical problem is unchanged.
    """
    modes, signs = data.modes.normalized()
    return ProblemData(modes, data.h * signs, data.f * signs[:, None], data.alpha, data.grid)


@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    witness: object = None
    detail: str = ""


@dataclass(frozen=True)
class AdmissibilityResult:
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failed(self):
        return [c for c in self.clauses if not c.passed]

    def __getitem__(self, name):
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)


def admissibility_check(problem: InverseProblem) -> AdmissibilityResult:
    """Check the data assumptions clause by clause.

    ``sign``: weights nonnegative and not all zero. ``I``/``II``: ``h_xi`` and
    ``f_xi`` nonnegative wherever ``phi_xi != 0``. ``III``: some observed mode
    has ``h > 0`` and ``f > 0`` at every node. ``IV``: ``E > 0`` and
    ``D^a E < F[f]`` at every node. Strict inequalities use ``controls.margin``.
    """
    d = problem.data
    phi = d.modes.weights
    labels = d.modes.labels
    eps = problem.controls.margin
    seen = phi != 0
    out = []

    neg = np.flatnonzero(phi < 0)
    ok = neg.size == 0 and bool(seen.any())
    out.append(Clause("sign", ok, labels[neg[0]] if neg.size else None,
                      "" if ok else "weights must be nonnegative and not all zero"))

    bad = np.flatnonzero(seen & (d.h < 0))
    out.append(Clause("I", bad.size == 0, labels[bad[0]] if bad.size else None,
                      "" if bad.size == 0 else f"h = {d.h[bad[0]]:.3g} < 0"))

    fneg = seen[:, None] & (d.f < 0)
    if fneg.any():
        i, n = np.argwhere(fneg)[0]
        out.append(Clause("II", False, (labels[i], int(n)), f"f = {d.f[i, n]:.3g} < 0"))
    else:
        out.append(Clause("II", True))

    cand = np.flatnonzero(seen & (d.h > eps) & np.all(d.f > eps, axis=1))
    out.append(Clause("III", cand.size > 0, labels[cand[0]] if cand.size else None,
                      "" if cand.size else "no observed mode with h > 0 and f > 0 throughout"))

    E = problem.E.values
    gap = problem.dalpha_E - d.source_observation()
    if np.min(E) <= eps:
        n = int(np.argmin(E))
        out.append(Clause("IV", False, n, f"E = {E[n]:.3g} is not positive"))
    elif np.max(gap) >= -eps:
        n = int(np.argmax(gap))
        out.append(Clause("IV", False, n, f"D^a E - F[f] = {gap[n]:.3g} is not negative"))
    else:
        out.append(Clause("IV", True))
    return AdmissibilityResult(tuple(out))


@dataclass(frozen=True)
class DomainBracket:
    C0: float
    C1: float
    C2: float
    C3: float

    @property
    def lower(self) -> float:
        return self.C0 / self.C3

    @property
    def upper(self) -> float:
        return self.C1 / self.C2

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, values, slack: float = 0.0) -> bool:
        v = np.asarray(values)
        return bool(np.all(v >= self.lower - slack) and np.all(v <= self.upper + slack))

    def to_dict(self):
        return {**asdict(self), "lower": self.lower, "upper": self.upper}


def domain_bounds(problem: InverseProblem) -> DomainBracket:
    """The four constants of the invariant interval, evaluated on the grid."""
    d = problem.data
    num = problem.numerator
    mu, phi = d.modes.eigenvalues, d.modes.weights
    C0, C1 = float(np.min(num)), float(np.max(num))
    C2 = float(np.min(mu) * np.min(problem.E.values))
    weighted_f = CoefficientPath(d.grid, (mu * phi) @ d.f)
    C3 = float((mu * phi) @ d.h + np.max(rl_integral(weighted_f, d.alpha).values))
    consts = {"C0": C0, "C1": C1, "C2": C2, "C3": C3}
    bad = [k for k, v in consts.items() if not v > 0]
    if bad:
        raise InadmissibleProblemError(
            "bracket constants must be positive: " + ", ".join(f"{k}={consts[k]:.3g}" for k in bad)
        )
    return DomainBracket(C0, C1, C2, C3)


def _forward(problem: InverseProblem, sigma: CoefficientPath, initial=None) -> SolutionField:
    fp = ForwardProblem(problem.data, sigma, problem.method, problem.controls.forward, problem.workers)
    return solve_forward(fp, initial=initial)


def _apply(problem, sigma, floor, initial=None):
    fld = _forward(problem, sigma, initial)
    d = problem.data
    den = (d.modes.eigenvalues * d.modes.weights) @ fld.v
    n = int(np.argmin(den))
    if not den[n] > floor:
        raise DegenerateDenominatorError(
            f"denominator {den[n]:.3g} at t={sigma.grid.nodes[n]:.4g} is below the floor {floor:.3g}"
        )
    return problem.numerator / den, fld, float(den[n])


def apply_P(problem: InverseProblem, sigma: CoefficientPath, bracket: DomainBracket | None = None):
    """One evaluation of the coefficient map at ``sigma``."""
    if np.min(sigma.values) <= 0:
        raise DomainError("sigma must be positive on the grid")
    bracket = bracket or domain_bounds(problem)
    P, _, _ = _apply(problem, sigma, problem.controls.denominator_floor * bracket.C2)
    return sigma.with_values(P)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    update: float
    min_denominator: float
    clamped: int
    forward_iterations: int
    damping: float
    sigma_min: float
    sigma_max: float


@dataclass
class InverseDiagnostics:
    bracket: DomainBracket
    records: list = field(default_factory=list)
    status: str = "running"
    residual: float = math.nan
    start: float = math.nan

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def updates(self) -> np.ndarray:
        return np.array([r.update for r in self.records])

    def to_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual": self.residual,
            "start": self.start,
            "bracket": self.bracket.to_dict(),
            "records": [asdict(r) for r in self.records],
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _start_value(controls, bracket):
    s = controls.start
    if isinstance(s, str):
        return {"midpoint": bracket.midpoint, "lower": bracket.lower, "upper": bracket.upper}[s]
    s = float(s)
    if not bracket.lower <= s <= bracket.upper:
        raise DomainError(f"start {s} lies outside the bracket [{bracket.lower:.6g}, {bracket.upper:.6g}]")
    return s


def _forward_iterations(fld):
    return int(sum(d.iterations for d in fld.diagnostics))


def solve_inverse(problem: InverseProblem, check: bool = True):
    """Damped, clamped fixed-point iteration for the coefficient.

    Returns ``(sigma, field, diagnostics)`` where ``field`` is the forward
    solution at the returned ``sigma``. The damping halves whenever the update
    norm grows twice in a row.
    """
    if check:
        adm = admissibility_check(problem)
        if not adm.passed:
            c = adm.failed()[0]
            raise InadmissibleProblemError(f"clause {c.name} fails at {c.witness!r}: {c.detail}")
    ctl = problem.controls
    bracket = domain_bounds(problem)
    floor = ctl.denominator_floor * bracket.C2
    start = _start_value(ctl, bracket)
    diag = InverseDiagnostics(bracket, start=start)
    sigma = CoefficientPath.constant(problem.grid, start)
    omega = ctl.damping
    growth = 0
    prev = math.inf
    initial = None
    for k in range(ctl.max_iter):
        P, fld, den_min = _apply(problem, sigma, floor, initial)
        clamped = np.clip(P, bracket.lower, bracket.upper)
        n_clamped = int(np.count_nonzero(clamped != P))
        new = (1.0 - omega) * sigma.values + omega * clamped
        update = float(np.max(np.abs(new - sigma.values)))
        diag.records.append(IterationRecord(k + 1, update, den_min, n_clamped,
                                            _forward_iterations(fld), omega,
                                            float(np.min(new)), float(np.max(new))))
        sigma = sigma.with_values(new)
        initial = fld.v
        if update <= ctl.tol:
            break
        growth = growth + 1 if update > prev else 0
        if growth >= 2:
            omega *= 0.5
            growth = 0
        prev = update
    else:
        diag.status = "max_iter"
        raise ConvergenceError(
            f"coefficient update {update:.3e} above tolerance {ctl.tol:.1e} after {ctl.max_iter} iterations",
            best=sigma, diagnostics=diag,
        )
    P, fld, _ = _apply(problem, sigma, floor, initial)
    diag.residual = float(np.max(np.abs(P - sigma.values)))
    diag.status = "converged"
    return sigma, fld, diag


@dataclass(frozen=True)
class StabilityRow:
    scale_h: float
    scale_f: float
    scale_E: float
    input_h: float
    input_f: float
    input_E: float
    sigma_deviation: float
    v_deviation: float
    note: str = ""

    @property
    def input_size(self) -> float:
        return self.input_h + self.input_f + self.input_E


@dataclass(frozen=True)
class StabilityTable:
    rows: tuple
    slope: float
    constant: float

    def to_csv(self, path):
        names = [f.name for f in StabilityRow.__dataclass_fields__.values()] + ["input_size"]
        lines = [",".join(names)]
        for r in self.rows:
            vals = [getattr(r, n) for n in names]
            lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in vals))
        Path(path).write_text("\n".join(lines) + "\n")


def _sup_sobolev(coeffs, mu, rho):
    return float(np.max(sobolev_norm(coeffs.T, mu, rho)))


def perturb(problem: InverseProblem, scale_h=0.0, scale_f=0.0, scale_E=0.0) -> InverseProblem:
    """Relative perturbation of the data.

    ``h -> h(1 + s_h)``, ``f -> f(1 + s_f t/T)`` and ``E -> E(1 + s_E t/T)``.
    The time profile leaves ``f(0)`` and ``E(0)`` untouched.
    """
    d = problem.data
    ramp = d.grid.nodes / d.grid.T
    data = ProblemData(d.modes, d.h * (1.0 + scale_h), d.f * (1.0 + scale_f * ramp), d.alpha, d.grid)
    E = problem.E.with_values(problem.E.values * (1.0 + scale_E * ramp))
    return InverseProblem(data, E, problem.controls, None, problem.method, problem.workers)


def stability_experiment(problem: InverseProblem, perturbations, workers: int = 1,
                         baseline=None) -> StabilityTable:
    """Sensitivity of the recovered coefficient to relative data perturbations.

    ``perturbations`` is a sequence of ``(s_h, s_f, s_E)`` scales for
    :func:`perturb`. Input sizes use ``H^(2+g)`` for ``h``, ``sup_t H^(3/2+g)``
    for ``f`` and ``sup|.| + sup|D^a .|`` for ``E``; outputs are the sup-norm
    deviation of ``sigma`` and ``sup_t`` of the ``H^1`` deviation of ``v``.
    The slope is a least-squares fit of ``log(output)`` on ``log(input)``.
    """
    sigma0, field0, _ = baseline or solve_inverse(problem)
    d = problem.data
    mu, gamma = d.modes.eigenvalues, d.modes.gamma

    def one(scales):
        sh, sf, sE = (float(s) for s in scales)
        pp = perturb(problem, sh, sf, sE)
        din_h = float(sobolev_norm(pp.data.h - d.h, mu, 2.0 + gamma))
        din_f = _sup_sobolev((pp.data.f - d.f), mu, 1.5 + gamma)
        dE = pp.E.values - problem.E.values
        din_E = float(np.max(np.abs(dE)) + np.max(np.abs(pp.dalpha_E - problem.dalpha_E)))
        if sh == sf == sE == 0.0:
            return StabilityRow(sh, sf, sE, 0.0, 0.0, 0.0, 0.0, 0.0)
        adm = admissibility_check(pp)
        if not adm.passed:
            c = adm.failed()[0]
            return StabilityRow(sh, sf, sE, din_h, din_f, din_E, math.nan, math.nan,
                                f"skipped: clause {c.name} fails")
        sig, fld, _ = solve_inverse(pp, check=False)
        dv = _sup_sobolev(fld.v - field0.v, mu, 1.0)
        return StabilityRow(sh, sf, sE, din_h, din_f, din_E,
                            float(np.max(np.abs(sig.values - sigma0.values))), dv)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, perturbations))
    else:
        rows = [one(p) for p in perturbations]
    usable = [r for r in rows if r.input_size > 0 and r.sigma_deviation > 0]
    slope = constant = math.nan
    if len(usable) >= 2:
        x = np.log([r.input_size for r in usable])
        y = np.log([r.sigma_deviation for r in usable])
        slope = float(np.polyfit(x, y, 1)[0])
    if usable:
        constant = max(r.sigma_deviation / r.input_size for r in usable)
    return StabilityTable(tuple(rows), slope, constant)


__all__ = [
    "InverseControls",
    "InverseProblem",
    "InverseDiagnostics",
    "IterationRecord",
    "DomainBracket",
    "Clause",
    "AdmissibilityResult",
    "StabilityRow",
    "StabilityTable",
    "admissibility_check",
    "domain_bounds",
    "apply_P",
    "solve_inverse",
    "perturb",
    "normalize_signs",
    "stability_experiment",
]
