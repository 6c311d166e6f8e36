"""Scenario documents: parsing, validation and resolution into solver inputs.

A scenario is a YAML mapping. Example::

    name: dirichlet-h-sine
    mode: forward
    operator: {kind: dirichlet}
    functional: {kind: mean_value}
    alpha: 0.5
    T: 1.0
    N: 256
    n_modes: 16
    data:
      h: {function: "x*(1-x)"}
      f: {constant: 0}
      sigma: {expression: "1 + 0.5*sin(2*pi*t)"}

Expressions are restricted arithmetic over numpy functions and a small set
of names (``t``, ``x``, ``mu``, ``k``, ``h``, ``phi``, ``pi``, ``e``).
"""

from __future__ import annotations

import ast
import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import FracInvError, ScenarioError
from .fraccalc import CoefficientPath, TimeGrid
from .spectra import (
    ModeSet,
    ProblemData,
    dirichlet_laplacian_modes,
    functional_weights,
    harmonic_oscillator_modes,
    involution_modes,
    load_mode_table,
    sine_projection,
)

MODES = ("forward", "inverse", "stability", "verify")
OPERATORS = ("dirichlet", "involution", "oscillator", "table")
FUNCTIONALS = ("mean_value", "point", "boundary_flux", "table")
TOP_KEYS = {
    "name", "mode", "operator", "functional", "alpha", "T", "N", "n_modes",
    "data", "controls", "expect", "stability", "output", "description",
}
DATA_KEYS = {"h", "f", "sigma", "E"}
CONTROL_KEYS = {
    "method", "tol", "max_iter", "overshoot", "M_sigma", "workers",
    "inverse_tol", "inverse_max_iter", "damping", "start", "x_samples",
}

_FUNCS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh",
                 "arctan", "minimum", "maximum", "where", "ones_like", "zeros_like")
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


def compile_expression(text: str, names, where: str):
    """Compile ``text`` after checking it only uses arithmetic and known names."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ScenarioError(f"cannot parse expression {text!r}: {exc.msg}", where) from None
    allowed = set(names) | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ScenarioError(f"{type(node).__name__} is not allowed in expressions", where)
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ScenarioError(f"unknown name {node.id!r} (allowed: {sorted(allowed)})", where)
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ScenarioError("only numpy functions may be called", where)
    code = compile(tree, "<scenario>", "eval")

    def fn(**env):
        with np.errstate(all="ignore"):
            return eval(code, {"__builtins__": {}}, {**_FUNCS, **_CONSTS, **env})

    return fn


def _line_index(text):
    """Map key paths like ``data.h`` to 1-based line numbers."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    walk(root, "")
    return out


@dataclass
class Scenario:
    """Validated scenario document with command-line overrides applied."""

    name: str
    mode: str
    operator: dict
    functional: dict
    alpha: float
    T: float
    N: int
    n_modes: int
    data: dict
    controls: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)
    output: str | None = None
    description: str = ""
    source: str | None = None
    lines: dict = field(default_factory=dict, repr=False)

    def where(self, path):
        line = self.lines.get(path)
        return f"{path} (line {line})" if line else path

    def with_overrides(self, modes=None, grid=None, method=None) -> "Scenario":
        s = copy.deepcopy(self)
        if modes is not None:
            s.n_modes = _positive_int(modes, "n_modes")
        if grid is not None:
            s.N = _positive_int(grid, "N", minimum=2)
        if method is not None:
            if method not in ("picard", "l1"):
                raise ScenarioError(f"unknown method {method!r}", "method")
            s.controls["method"] = method
        return s

    def to_dict(self) -> dict:
        keys = ("name", "mode", "operator", "functional", "alpha", "T", "N", "n_modes",
                "data", "controls", "expect", "stability", "output", "description")
        return {k: copy.deepcopy(getattr(self, k)) for k in keys}

    @property
    def method(self) -> str:
        return self.controls.get("method", "picard")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)


def _positive_int(v, name, minimum=1):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < minimum:
        raise ScenarioError(f"must be an integer >= {minimum}, got {v!r}", name)
    return int(v)


def _positive_float(v, name, upper=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
        raise ScenarioError(f"must be a positive number, got {v!r}", name)
    if upper is not None and v >= upper:
        raise ScenarioError(f"must be < {upper}, got {v!r}", name)
    return float(v)


def _kind_spec(raw, name, kinds, where):
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ScenarioError("expected a mapping with a 'kind' key", where(name))
    if raw["kind"] not in kinds:
        raise ScenarioError(f"unknown kind {raw['kind']!r}; expected one of {kinds}", where(f"{name}.kind"))
    return dict(raw)


def parse_scenario(text: str, source=None) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}" if mark is not None else None
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", loc) from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping at the top level")
    lines = _line_index(text)

    def where(path):
        return f"{path} (line {lines[path]})" if path in lines else path

    unknown = set(raw) - TOP_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ScenarioError(f"unknown key; expected one of {sorted(TOP_KEYS)}", where(k))
    for key in ("name", "mode", "alpha", "N", "n_modes", "operator", "functional", "data"):
        if key not in raw:
            raise ScenarioError("required field is missing", key)
    if raw["mode"] not in MODES:
        raise ScenarioError(f"unknown mode {raw['mode']!r}; expected one of {MODES}", where("mode"))
    alpha = _positive_float(raw["alpha"], where("alpha"), upper=1.0)
    T = _positive_float(raw.get("T", 1.0), where("T"))
    N = _positive_int(raw["N"], where("N"), minimum=2)
    n_modes = _positive_int(raw["n_modes"], where("n_modes"))
    op = _kind_spec(raw["operator"], "operator", OPERATORS, where)
    fn = _kind_spec(raw["functional"], "functional", FUNCTIONALS, where)
    if op["kind"] == "involution" and "eps" not in op:
        raise ScenarioError("involution operator needs 'eps'", where("operator"))
    if fn["kind"] == "point" and "x" not in fn:
        raise ScenarioError("point functional needs 'x'", where("functional"))
    data = raw["data"]
    if not isinstance(data, dict):
        raise ScenarioError("expected a mapping", where("data"))
    bad = set(data) - DATA_KEYS
    if bad:
        raise ScenarioError(f"unknown data key; expected {sorted(DATA_KEYS)}", where(f"data.{sorted(bad)[0]}"))
    if "h" not in data:
        raise ScenarioError("required field is missing", where("data") + ".h")
    mode = raw["mode"]
    if mode == "forward":
        if "sigma" not in data:
            raise ScenarioError("forward scenarios require sigma", where("data") + ".sigma")
        if "E" in data:
            raise ScenarioError("forward scenarios must not give E", where("data.E"))
    if mode in ("inverse", "stability"):
        if "E" not in data:
            raise ScenarioError(f"{mode} scenarios require E", where("data") + ".E")
        if "sigma" in data:
            raise ScenarioError(f"{mode} scenarios must not give sigma", where("data.sigma"))
    controls = raw.get("controls") or {}
    if not isinstance(controls, dict):
        raise ScenarioError("expected a mapping", where("controls"))
    bad = set(controls) - CONTROL_KEYS
    if bad:
        raise ScenarioError(f"unknown control; expected {sorted(CONTROL_KEYS)}", where(f"controls.{sorted(bad)[0]}"))
    if controls.get("method", "picard") not in ("picard", "l1"):
        raise ScenarioError("method must be picard or l1", where("controls.method"))
    if mode == "stability" and not raw.get("stability"):
        raise ScenarioError("stability scenarios need a 'stability' section", "stability")
    name = str(raw["name"])
    return Scenario(
        name=name, mode=mode, operator=op, functional=fn, alpha=alpha, T=T, N=N,
        n_modes=n_modes, data=dict(data), controls=dict(controls),
        expect=dict(raw.get("expect") or {}), stability=dict(raw.get("stability") or {}),
        output=raw.get("output"), description=str(raw.get("description", "")),
        source=str(source) if source else None, lines=lines,
    )


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return parse_scenario(text, source=p)


# -- resolution ---------------------------------------------------------------

def _resolve_path(sc: Scenario, rel):
    p = Path(rel)
    if not p.is_absolute() and sc.source:
        p = Path(sc.source).parent / p
    return p


def build_modes(sc: Scenario) -> ModeSet:
    """Eigenvalues and observation weights for the first ``n_modes`` modes."""
    op, fn, n = sc.operator, sc.functional, sc.n_modes
    table = None
    if op["kind"] == "table":
        table = _load_table(sc, op, "operator")
        if len(table) < n:
            raise ScenarioError(f"table has {len(table)} modes, scenario asks for {n}", sc.where("operator"))
        mu = table.eigenvalues[:n]
    elif op["kind"] == "dirichlet":
        mu = dirichlet_laplacian_modes(n)
    elif op["kind"] == "involution":
        mu = involution_modes(n, float(op["eps"]))
    else:
        mu = harmonic_oscillator_modes(n)
    if fn["kind"] == "table":
        if "weights" in fn:
            w = np.asarray(fn["weights"], dtype=np.float64)
        elif table is not None:
            w = table.weights
        else:
            raise ScenarioError("table functional needs 'weights' or a table operator", sc.where("functional"))
        if w.shape[0] < n:
            raise ScenarioError(f"{w.shape[0]} weights for {n} modes", sc.where("functional"))
        w = w[:n]
    else:
        # physical weights in the sqrt(2) sin(k pi x) basis; inverse runs
        # normalize signs together with h and f in resolve()
        w, signs = functional_weights(fn["kind"], n, fn.get("x"), return_signs=True)
        w = w * signs
    gamma = float(fn.get("gamma", 0.0))
    return ModeSet(mu, w, gamma)


def _load_table(sc, spec, name):
    if "eigenvalues" in spec:
        mu = np.asarray(spec["eigenvalues"], dtype=np.float64)
        w = np.asarray(spec.get("weights", np.zeros_like(mu)), dtype=np.float64)
        if w.shape != mu.shape:
            raise ScenarioError("eigenvalues and weights differ in length", sc.where(name))
        return ModeSet(mu, w)
    if "path" not in spec:
        raise ScenarioError("table needs 'path' or inline 'eigenvalues'", sc.where(name))
    try:
        return load_mode_table(_resolve_path(sc, spec["path"]))
    except OSError as exc:
        raise ScenarioError(f"cannot read table: {exc.strerror}", sc.where(name)) from None


def _coefficients(sc, spec, name, modes):
    n = len(modes)
    if "coefficients" in spec:
        c = np.asarray(spec["coefficients"], dtype=np.float64)
        if c.shape != (n,):
            raise ScenarioError(f"expected {n} coefficients, got {c.size}", sc.where(name))
        return c
    if "constant" in spec:
        return np.full(n, float(spec["constant"]))
    if "function" in spec:
        if sc.operator["kind"] != "dirichlet":
            raise ScenarioError("spatial functions are projected on the Dirichlet sine basis only", sc.where(name))
        J = int(sc.controls.get("x_samples", 4096))
        x = np.linspace(0.0, 1.0, J + 1)
        g = compile_expression(spec["function"], ("x",), sc.where(name))(x=x)
        return sine_projection(np.broadcast_to(g, x.shape), n)
    if "expression" in spec:
        k = np.arange(1, n + 1, dtype=np.float64)
        fn = compile_expression(spec["expression"], ("mu", "k", "phi"), sc.where(name))
        return np.broadcast_to(fn(mu=modes.eigenvalues, k=k, phi=modes.weights), (n,)).astype(np.float64)
    raise ScenarioError("expected one of coefficients, constant, function, expression", sc.where(name))


def _source(sc, spec, modes, h, grid):
    n, t = len(modes), grid.nodes
    name = "data.f"
    if spec is None:
        return np.zeros((n, t.size))
    if "constant" in spec:
        return np.full((n, t.size), float(spec["constant"]))
    if "coefficients" in spec:
        return np.repeat(_coefficients(sc, spec, name, modes)[:, None], t.size, axis=1)
    if "expression" in spec:
        k = np.arange(1, n + 1, dtype=np.float64)[:, None]
        fn = compile_expression(spec["expression"], ("mu", "k", "phi", "h", "t"), sc.where(name))
        out = fn(mu=modes.eigenvalues[:, None], k=k, phi=modes.weights[:, None], h=h[:, None], t=t[None, :])
        return np.broadcast_to(out, (n, t.size)).astype(np.float64)
    if "function" in spec:
        if sc.operator["kind"] != "dirichlet":
            raise ScenarioError("spatial functions are projected on the Dirichlet sine basis only", sc.where(name))
        J = int(sc.controls.get("x_samples", 4096))
        x = np.linspace(0.0, 1.0, J + 1)
        fn = compile_expression(spec["function"], ("x", "t"), sc.where(name))
        g = np.broadcast_to(fn(x=x[None, :], t=t[:, None]), (t.size, x.size))
        return sine_projection(g, n).T.copy()
    raise ScenarioError("expected one of constant, coefficients, expression, function", sc.where(name))


def _time_path(sc, spec, name, grid) -> CoefficientPath:
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        spec = {"constant": spec}
    if not isinstance(spec, dict):
        raise ScenarioError("expected a mapping", sc.where(name))
    t = grid.nodes
    if "constant" in spec:
        return CoefficientPath.constant(grid, float(spec["constant"]))
    if "expression" in spec:
        fn = compile_expression(spec["expression"], ("t",), sc.where(name))
        return CoefficientPath(grid, np.broadcast_to(fn(t=t), t.shape))
    if "values" in spec:
        v = np.asarray(spec["values"], dtype=np.float64)
        if v.shape != t.shape:
            raise ScenarioError(f"expected {t.size} values, got {v.size}", sc.where(name))
        return CoefficientPath(grid, v)
    if "file" in spec:
        try:
            arr = np.loadtxt(_resolve_path(sc, spec["file"]), delimiter=",", skiprows=1, ndmin=2)
        except OSError as exc:
            raise ScenarioError(f"cannot read file: {exc.strerror}", sc.where(name)) from None
        if arr.shape[0] != t.size or not np.allclose(arr[:, 0], t, rtol=0, atol=1e-12 * grid.T):
            raise ScenarioError("file nodes do not match the scenario grid", sc.where(name))
        return CoefficientPath(grid, arr[:, -1])
    raise ScenarioError("expected one of constant, expression, values, file", sc.where(name))


@dataclass(frozen=True, eq=False)
class Resolved:
    """Solver inputs built from a scenario."""

    scenario: Scenario
    data: ProblemData
    sigma: CoefficientPath | None
    E: CoefficientPath | None
    sigma_true: CoefficientPath | None
    signs: np.ndarray


def resolve(sc: Scenario, normalize: bool | None = None) -> Resolved:
    """Build :class:`ProblemData` and the time paths of a scenario.

    Scenarios with an observation have their weight signs normalized (the
    flips are kept in ``signs``). ``E: {generate: {sigma: ..., method: ...}}``
    produces the observation by a forward solve.
    """
    from .forward import ForwardProblem, PicardControls, solve_forward

    grid = sc.grid
    try:
        modes = build_modes(sc)
        h = _coefficients(sc, sc.data["h"] if isinstance(sc.data["h"], dict) else {"constant": sc.data["h"]},
                          "data.h", modes)
        f_spec = sc.data.get("f")
        if isinstance(f_spec, (int, float)) and not isinstance(f_spec, bool):
            f_spec = {"constant": f_spec}
        f = _source(sc, f_spec, modes, h, grid)
        data = ProblemData(modes, h, f, sc.alpha, grid)
    except ScenarioError:
        raise
    except FracInvError as exc:
        raise ScenarioError(str(exc), sc.where("data")) from exc
    signs = np.ones(len(modes))
    if normalize is None:
        normalize = sc.mode in ("inverse", "stability") or "E" in sc.data
    if normalize:
        from .inverse import normalize_signs

        signs = np.where(modes.weights < 0, -1.0, 1.0)
        data = normalize_signs(data)
    sigma = _time_path(sc, sc.data["sigma"], "data.sigma", grid) if "sigma" in sc.data else None
    E = sigma_true = None
    if "E" in sc.data:
        spec = sc.data["E"]
        if isinstance(spec, dict) and "generate" in spec:
            gen = spec["generate"]
            if not isinstance(gen, dict) or "sigma" not in gen:
                raise ScenarioError("generate needs a sigma", sc.where("data.E"))
            sigma_true = _time_path(sc, gen["sigma"], "data.E.generate.sigma", grid)
            ctl = PicardControls(tol=float(sc.controls.get("tol", 1e-12)), max_iter=1000)
            fld = solve_forward(ForwardProblem(data, sigma_true, gen.get("method", "l1"), ctl))
            E = CoefficientPath(grid, fld.observe(data.modes.weights))
        else:
            E = _time_path(sc, spec, "data.E", grid)
    if "sigma" in sc.expect:
        sigma_true = _time_path(sc, sc.expect["sigma"], "expect.sigma", grid)
    return Resolved(sc, data, sigma, E, sigma_true, signs)
