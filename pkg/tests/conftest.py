import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def _roundtrip(N, n_modes=16, sigma=lambda t: 1 + 0.25 * np.cos(np.pi * t), alpha=0.5, method="l1"):
    """Dirichlet modes, mean-value observation, E generated by a forward solve.

    ``h`` is the projection of ``x(1-x)`` and ``f = 1.25 mu h (1 + t/2)``, so
    that ``f(0) = mu sigma(0) h`` and the data carry no initial layer.
    """
    from fracinv.forward import ForwardProblem, solve_forward
    from fracinv.fraccalc import CoefficientPath, TimeGrid
    from fracinv.inverse import InverseProblem
    from fracinv.spectra import ModeSet, ProblemData, dirichlet_laplacian_modes, functional_weights

    g = TimeGrid(1.0, N)
    mu = dirichlet_laplacian_modes(n_modes)
    phi = functional_weights("mean_value", n_modes)
    k = np.arange(1, n_modes + 1)
    h = np.where(k % 2 == 1, 8 * np.sqrt(2) / (k * np.pi) ** 3, 0.0)
    f = (mu * h)[:, None] * 1.25 * (1 + 0.5 * g.nodes)[None, :]
    data = ProblemData(ModeSet(mu, phi), h, f, alpha, g)
    s = CoefficientPath.from_function(g, sigma)
    fld = solve_forward(ForwardProblem(data, s, method=method))
    return InverseProblem(data, CoefficientPath(g, fld.observe(phi))), s


@pytest.fixture(scope="session")
def roundtrip():
    return _roundtrip


def _constant_state(N=64, g_of_t=None, mu=1.0, alpha=0.5):
    """Single mode with ``v = 1``: ``h = 1``, ``f = g(t)``, ``E = 1``."""
    from fracinv.fraccalc import CoefficientPath, TimeGrid
    from fracinv.inverse import InverseProblem
    from fracinv.spectra import ModeSet, ProblemData

    grid = TimeGrid(1.0, N)
    gt = np.ones(N + 1) if g_of_t is None else g_of_t(grid.nodes)
    data = ProblemData(ModeSet([mu], [1.0]), [1.0], gt, alpha, grid)
    return InverseProblem(data, CoefficientPath.constant(grid, 1.0))


@pytest.fixture(scope="session")
def constant_state():
    return _constant_state


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def verdict():
    """Record one clause of an acceptance criterion; a criterion passes when all its clauses do."""

    def record(number, title, ok, detail):
        entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "details": []})
        entry["ok"] = entry["ok"] and bool(ok)
        entry["details"].append(detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} [{number:2d}] {e['title']}: {'; '.join(e['details'])}")
