"""Command-line front end: ``fracinv {run,describe,verify} --scenario FILE``.

Exit codes: 0 success, 1 validation error, 2 solver failure, 3 failed
verification or expectation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import _backend
from .errors import FracInvError, ResolutionError, ScenarioError
from .forward import ForwardProblem, PicardControls, VolterraMode, solve_forward, solve_mode_l1
from .fraccalc import CoefficientPath, caputo_l1, composition_check, rl_integral
from .inverse import (
    InverseControls,
    InverseProblem,
    admissibility_check,
    apply_P,
    domain_bounds,
    solve_inverse,
    stability_experiment,
)
from .mlf import MlParams, ml_eval
from .scenario import Resolved, Scenario, load_scenario, resolve

log = logging.getLogger("fracinv")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _csv(path, header, columns):
    arr = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
    np.savetxt(path, arr, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def forward_controls(sc: Scenario) -> PicardControls:
    c = sc.controls
    return PicardControls(
        tol=float(c.get("tol", 1e-10)),
        max_iter=int(c.get("max_iter", 200)),
        M_sigma=c.get("M_sigma"),
        overshoot=float(c.get("overshoot", 1.05)),
    )


def inverse_controls(sc: Scenario) -> InverseControls:
    c = sc.controls
    return InverseControls(
        tol=float(c.get("inverse_tol", 1e-8)),
        max_iter=int(c.get("inverse_max_iter", 200)),
        damping=float(c.get("damping", 1.0)),
        start=c.get("start", "midpoint"),
        forward=PicardControls(tol=float(c.get("tol", 1e-12)), max_iter=1000,
                               overshoot=float(c.get("overshoot", 1.05))),
    )


def inverse_problem(res: Resolved) -> InverseProblem:
    sc = res.scenario
    return InverseProblem(res.data, res.E, inverse_controls(sc), method=sc.method,
                          workers=int(sc.controls.get("workers", 1)))


def _manifest(res: Resolved, files, seed, extra=None):
    m = {
        "package": "fracinv",
        "version": _version(),
        "backend": _backend.NAME,
        "seed": seed,
        "scenario": res.scenario.to_dict(),
        "resolved": {
            "eigenvalues": res.data.modes.eigenvalues,
            "weights": res.data.modes.weights,
            "h": res.data.h,
            "sign_flips": [int(i) for i in np.flatnonzero(res.signs < 0)],
        },
        "files": sorted(files),
    }
    m.update(extra or {})
    return m


def run_forward(res: Resolved, out: Path, seed):
    sc = res.scenario
    problem = ForwardProblem(res.data, res.sigma, sc.method, forward_controls(sc),
                             int(sc.controls.get("workers", 1)))
    fld = solve_forward(problem)
    E = fld.observe(res.data.modes.weights)
    t = res.data.grid.nodes
    fld.to_csv(out / "data.csv", observation=E)
    _csv(out / "observation.csv", ["t", "E"], [t, E])
    _csv(out / "sigma.csv", ["t", "sigma"], [t, res.sigma.values])
    diag = {"status": "ok", "metadata": fld.metadata()}
    _json(out / "diagnostics.json", diag)
    return EXIT_OK, ["data.csv", "observation.csv", "sigma.csv", "diagnostics.json"], {}


def _expectation(sc, res, sigma):
    if res.sigma_true is None:
        return None
    err = float(np.max(np.abs(sigma.values - res.sigma_true.values)))
    tol = sc.expect.get("tolerance")
    ok = True if tol is None else err <= float(tol)
    return {"sigma_error": err, "tolerance": tol, "passed": ok}


def run_inverse(res: Resolved, out: Path, seed):
    sc = res.scenario
    problem = inverse_problem(res)
    sigma, fld, diag = solve_inverse(problem)
    t = res.data.grid.nodes
    E_model = fld.observe(res.data.modes.weights)
    fld.to_csv(out / "data.csv", observation=E_model)
    _csv(out / "observation.csv", ["t", "E", "E_model", "residual"],
         [t, res.E.values, E_model, E_model - res.E.values])
    cols, header = [t, sigma.values], ["t", "sigma"]
    if res.sigma_true is not None:
        cols.append(res.sigma_true.values)
        header.append("sigma_true")
    _csv(out / "sigma.csv", header, cols)
    report = diag.to_dict()
    report["observation_residual"] = float(np.max(np.abs(E_model - res.E.values)))
    exp = _expectation(sc, res, sigma)
    if exp is not None:
        report["expectation"] = exp
    _json(out / "diagnostics.json", report)
    code = EXIT_OK if exp is None or exp["passed"] else EXIT_VERIFY
    return code, ["data.csv", "observation.csv", "sigma.csv", "diagnostics.json"], {}


def _perturbation_list(spec):
    rows = []
    for key, slot in (("scales_h", 0), ("scales_f", 1), ("scales_E", 2)):
        for s in spec.get(key, []):
            row = [0.0, 0.0, 0.0]
            row[slot] = float(s)
            rows.append(tuple(row))
    return rows


def run_stability(res: Resolved, out: Path, seed):
    sc = res.scenario
    problem = inverse_problem(res)
    base = solve_inverse(problem)
    table = stability_experiment(problem, _perturbation_list(sc.stability), baseline=base)
    table.to_csv(out / "stability.csv")
    t = res.data.grid.nodes
    _csv(out / "sigma.csv", ["t", "sigma"], [t, base[0].values])
    _csv(out / "observation.csv", ["t", "E"], [t, res.E.values])
    base[1].to_csv(out / "data.csv", observation=base[1].observe(res.data.modes.weights))
    report = {"slope": table.slope, "constant": table.constant, "baseline": base[2].to_dict()}
    lo, hi = sc.expect.get("slope", [-math.inf, math.inf])
    report["slope_ok"] = bool(lo <= table.slope <= hi)
    _json(out / "diagnostics.json", report)
    code = EXIT_OK if report["slope_ok"] else EXIT_VERIFY
    return code, ["data.csv", "observation.csv", "sigma.csv", "stability.csv", "diagnostics.json"], {}


# -- verification ---------------------------------------------------------------

def _check(name, passed, value=None, detail=""):
    return {"check": name, "passed": bool(passed), "value": value, "detail": detail}


def verify_suite(res: Resolved, seed: int = 0, pairs: int = 20):
    """Run the invariant checks of every module on the scenario configuration."""
    sc = res.scenario
    rng = np.random.default_rng(seed)
    d = res.data
    alpha, grid = d.alpha, d.grid
    out = []

    z = np.geomspace(1e-3, 1e3, 200)
    e = ml_eval(MlParams(alpha, 1.0), -z)
    out.append(_check("mlf.range", np.all((e > 0) & (e < 1)), float(np.max(e))))
    out.append(_check("mlf.monotone", np.all(np.diff(e) <= 0), float(np.max(np.diff(e)))))

    a, b = rng.normal(size=2)
    p1 = CoefficientPath(grid, rng.normal(size=grid.N + 1))
    p2 = CoefficientPath(grid, rng.normal(size=grid.N + 1))
    comb = p1.with_values(a * p1.values + b * p2.values)
    lin = max(
        float(np.max(np.abs(op(comb, alpha).values - a * op(p1, alpha).values - b * op(p2, alpha).values)))
        for op in (caputo_l1, rl_integral)
    )
    out.append(_check("fraccalc.linearity", lin <= 1e-9 * (1 + abs(a) + abs(b)) * grid.N, lin))
    sq = CoefficientPath.from_function(grid, lambda t: (t / grid.T) ** 2)
    res_c = composition_check(sq, alpha)
    out.append(_check("fraccalc.composition", res_c <= 1e-2, res_c, "I^a D^a t^2 vs t^2"))

    needed = sc.mode in ("inverse", "stability")
    try:
        rep = d.modes.admissibility()
        out.append(_check("spectra.gamma_admissibility", rep.admissible or not needed, rep.exponent,
                          f"gamma={rep.gamma}, admissible={rep.admissible}"))
    except ResolutionError as exc:
        # a finite weight list is trivially square-summable
        out.append(_check("spectra.gamma_admissibility", True, None, f"undetermined: {exc}"))

    sigma = res.sigma if res.sigma is not None else res.sigma_true
    if sigma is None:
        sigma = CoefficientPath.constant(grid, 1.0)
    if np.min(sigma.values) > 0:
        ctl = forward_controls(sc)
        fld = solve_forward(ForwardProblem(d, sigma, "picard", ctl))
        out.append(_check("forward.initial_condition", np.array_equal(fld.v[:, 0], d.h)))
        nonneg = np.all(d.h >= 0) and np.all(d.f >= 0)
        if nonneg:
            vmin = float(np.min(fld.v))
            out.append(_check("forward.positivity", vmin >= -1e-10, vmin))
            box = d.h[:, None] + np.array([rl_integral(d.f_path(i), alpha).values for i in range(d.n_modes)])
            excess = float(np.max(fld.v - box))
            out.append(_check("forward.box", excess <= 1e-6, excess))
        M = ctl.splitting(float(np.max(sigma.values)))
        i = int(np.argmax(np.abs(d.h) + np.max(np.abs(d.f), axis=1)))
        op = VolterraMode.build(d.modes.eigenvalues[i], sigma, d.f[i], d.h[i], alpha, M)
        ratio = 0.0
        for _ in range(pairs):
            u, w = rng.normal(size=(2, grid.N + 1))
            du = float(np.max(np.abs(op.apply(u) - op.apply(w))))
            ratio = max(ratio, du / float(np.max(np.abs(u - w))))
        out.append(_check("forward.contraction", ratio <= op.bound + 0.05, ratio, f"bound {op.bound:.4f}"))
        vl = solve_mode_l1(d.modes.eigenvalues[i], sigma, d.f[i], d.h[i], alpha)
        gap = float(np.max(np.abs(vl - fld.v[i])))
        scale = max(float(np.max(np.abs(fld.v[i]))), 1e-300)
        out.append(_check("forward.method_agreement", gap <= 0.05 * scale, gap, "picard vs l1, largest mode"))

    if res.E is not None:
        problem = inverse_problem(res)
        adm = admissibility_check(problem)
        for c in adm.clauses:
            out.append(_check(f"inverse.admissibility.{c.name}", c.passed, None,
                              c.detail + (f" at {c.witness!r}" if c.witness is not None else "")))
        if adm.passed:
            br = domain_bounds(problem)
            out.append(_check("inverse.bracket", 0 < br.lower <= br.upper, [br.lower, br.upper]))
            mid = CoefficientPath.constant(grid, br.midpoint)
            P = apply_P(problem, mid, br).values
            out.append(_check("inverse.P_maps_bracket", br.contains(P, 1e-6),
                              [float(P.min()), float(P.max())]))
    return out


def run_verify(res: Resolved, out: Path, seed):
    checks = verify_suite(res, seed)
    passed = all(c["passed"] for c in checks)
    _json(out / "verify.json", {"seed": seed, "passed": passed, "checks": checks})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}")
    return (EXIT_OK if passed else EXIT_VERIFY), ["verify.json"], {}


RUNNERS = {"forward": run_forward, "inverse": run_inverse, "stability": run_stability, "verify": run_verify}


# -- describe ---------------------------------------------------------------------

def _gamma_line(modes):
    try:
        rep = modes.admissibility()
    except ResolutionError as exc:
        return f"{modes.gamma}: undetermined ({exc})"
    verdict = "admissible" if rep.admissible else "not admissible"
    return f"{rep.gamma}: decay exponent {rep.exponent:.3f}, {verdict}"


def describe_text(sc: Scenario) -> str:
    res = resolve(sc)
    d = res.data
    mu, w = d.modes.eigenvalues, d.modes.weights
    lines = [
        f"scenario      {sc.name} ({sc.mode})",
        f"operator      {sc.operator}",
        f"functional    {sc.functional}",
        f"order alpha   {sc.alpha}",
        f"grid          T={sc.T}, N={sc.N}, h={sc.T / sc.N:.6g}",
        f"modes         {d.n_modes}, eigenvalues in [{mu.min():.6g}, {mu.max():.6g}]",
        f"weights       |phi| in [{np.abs(w).min():.6g}, {np.abs(w).max():.6g}], "
        f"nonzero {int(np.count_nonzero(w))}/{w.size}",
        f"gamma         {_gamma_line(d.modes)}",
        f"method        {sc.method}",
    ]
    if res.E is not None:
        try:
            br = domain_bounds(inverse_problem(res))
            lines.append(f"bracket       [{br.lower:.7g}, {br.upper:.7g}] "
                         f"(C0={br.C0:.6g}, C1={br.C1:.6g}, C2={br.C2:.6g}, C3={br.C3:.6g})")
        except FracInvError as exc:
            lines.append(f"bracket       unavailable: {exc}")
    work = d.n_modes * (sc.N + 1) ** 2
    lines.append(f"cost          ~{work / 1e6:.3g} M kernel products per Picard sweep")
    return "\n".join(lines)


# -- entry point --------------------------------------------------------------------

def _execute(verb, path, args):
    try:
        sc = load_scenario(path).with_overrides(args.modes, args.grid, args.method)
        if verb == "describe":
            print(describe_text(sc))
            return EXIT_OK
        res = resolve(sc)
    except ScenarioError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FracInvError as exc:
        print(f"error: {path}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out = Path(args.out) if args.out else Path(sc.output or Path("runs") / sc.name)
    if len(args.scenario) > 1:
        out = out / sc.name
    out.mkdir(parents=True, exist_ok=True)
    runner = run_verify if verb == "verify" else RUNNERS[sc.mode]
    try:
        code, files, extra = runner(res, out, args.seed)
    except FracInvError as exc:
        print(f"error: {sc.name}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        _json(out / "diagnostics.json", {"status": "failed", "error": str(exc), "type": type(exc).__name__})
        return EXIT_SOLVER
    _json(out / "manifest.json", _manifest(res, files + ["manifest.json"], args.seed, extra))
    print(f"{sc.name}: {'ok' if code == EXIT_OK else 'failed'} -> {out}")
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="fracinv", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=("run", "describe", "verify"))
    p.add_argument("--scenario", action="append", required=True, help="scenario file (repeatable)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--modes", type=int, help="override n_modes")
    p.add_argument("--grid", type=int, help="override N")
    p.add_argument("--method", choices=("picard", "l1"), help="override the forward method")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    p.add_argument("--jobs", type=int, default=1, help="scenarios to run concurrently")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs > 1 and len(args.scenario) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            codes = list(ex.map(lambda s: _execute(args.verb, s, args), args.scenario))
    else:
        codes = [_execute(args.verb, s, args) for s in args.scenario]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
