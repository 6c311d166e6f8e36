import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracinv.errors import (
    ConvergenceError,
    DegenerateDenominatorError,
    DomainError,
    InadmissibleProblemError,
    ShapeMismatchError,
)
from fracinv.forward import ForwardProblem, solve_mode_picard, PicardControls
from fracinv.fraccalc import CoefficientPath, TimeGrid
from fracinv.inverse import (
    DomainBracket,
    InverseControls,
    InverseProblem,
    admissibility_check,
    apply_P,
    domain_bounds,
    normalize_signs,
    perturb,
    solve_inverse,
    stability_experiment,
)
from fracinv.spectra import ModeSet, ProblemData

SIN = lambda t: 1 + 0.5 * np.sin(2 * np.pi * t)  # noqa: E731


def test_constant_state_admissible(constant_state):
    res = admissibility_check(constant_state())
    assert res.passed
    assert [c.name for c in res.clauses] == ["sign", "I", "II", "III", "IV"]


def test_negative_observation_fails_clause_iv(constant_state):
    p = constant_state()
    bad = InverseProblem(p.data, p.E.with_values(-np.ones_like(p.E.values)))
    res = admissibility_check(bad)
    assert res.failed()[0].name == "IV"
    assert res.failed()[0].witness == 0
    with pytest.raises(InadmissibleProblemError):
        solve_inverse(bad)


def test_clause_witnesses():
    g = TimeGrid(1.0, 8)
    data = ProblemData(ModeSet([1.0, 2.0], [1.0, 0.0]), [1.0, -1.0], np.ones(9), 0.5, g)
    E = CoefficientPath.constant(g, 1.0)
    assert admissibility_check(InverseProblem(data, E)).passed  # h < 0 only on an unobserved mode
    f = np.ones((2, 9))
    f[0, 3] = -0.5
    data = ProblemData(ModeSet([1.0, 2.0], [1.0, 1.0]), [1.0, 1.0], f, 0.5, g)
    failed = admissibility_check(InverseProblem(data, E)).failed()
    assert failed[0].name == "II" and failed[0].witness == (1, 3)


def test_roundtrip_data_admissible(roundtrip):
    p, _ = roundtrip(64, 8)
    assert admissibility_check(p).passed


def test_bracket_constant_state(constant_state):
    b = domain_bounds(constant_state())
    assert (b.C0, b.C1, b.C2) == pytest.approx((1.0, 1.0, 1.0), abs=1e-15)
    assert b.C3 == pytest.approx(1 + 1 / math.gamma(1.5), rel=1e-12)
    assert b.lower == pytest.approx(0.4698411, abs=1e-7)
    assert b.upper == pytest.approx(1.0)
    assert b.contains([0.5, 1.0]) and not b.contains([1.01])


def test_bracket_zero_source():
    # f = 0: C3 reduces to sum mu phi h; D^a E is supplied directly
    g = TimeGrid(1.0, 16)
    data = ProblemData(ModeSet([2.0, 5.0], [1.0, 0.5]), [1.0, 0.4], np.zeros(17), 0.5, g)
    E = CoefficientPath(g, np.exp(-g.nodes))
    b = domain_bounds(InverseProblem(data, E, dalpha_E=-np.ones(17)))
    assert b.C3 == 2.0 * 1.0 + 5.0 * 0.5 * 0.4
    assert b.C0 == b.C1 == 1.0


def test_bracket_scaling(roundtrip):
    p, _ = roundtrip(32, 4)
    lam = 2.5
    d = p.data
    q = InverseProblem(ProblemData(d.modes, d.h, lam * d.f, d.alpha, d.grid), p.E.with_values(lam * p.E.values))
    b, c = domain_bounds(p), domain_bounds(q)
    assert (c.C0, c.C1, c.C2) == pytest.approx((lam * b.C0, lam * b.C1, lam * b.C2), rel=1e-12)
    base = float((d.modes.eigenvalues * d.modes.weights) @ d.h)
    assert c.C3 - base == pytest.approx(lam * (b.C3 - base), rel=1e-12)


def test_bracket_rejects_nonpositive(constant_state):
    p = constant_state()
    with pytest.raises(InadmissibleProblemError):
        domain_bounds(InverseProblem(p.data, p.E, dalpha_E=np.full(65, 2.0)))


def test_apply_fixed_point(constant_state):
    p = constant_state()
    P = apply_P(p, CoefficientPath.constant(p.grid, 1.0))
    np.testing.assert_allclose(P.values, 1.0, atol=1e-12)


def test_apply_against_forward_oracle(constant_state):
    p = constant_state()
    sigma = CoefficientPath.constant(p.grid, 2.0)
    v, _ = solve_mode_picard(1.0, sigma, 1.0, 1.0, 0.5, PicardControls(tol=1e-12, max_iter=1000))
    P = apply_P(p, sigma)
    np.testing.assert_allclose(P.values, 1.0 / v, rtol=1e-10)
    # sigma = 2 lies above the bracket, so P is not confined to it: v <= 1 gives P >= 1
    assert np.all(P.values >= 1.0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.5, 8.0))
def test_apply_maps_bracket(a, b, freq):
    p = _small_problem()
    br = domain_bounds(p)
    t = p.grid.nodes
    vals = br.lower + (br.upper - br.lower) * (a + (b - a) * (0.5 + 0.5 * np.sin(freq * t)))
    P = apply_P(p, CoefficientPath(p.grid, vals), br)
    assert br.contains(P.values, slack=1e-6)


_CACHE = {}


def _small_problem():
    if "p" not in _CACHE:
        from conftest import _roundtrip
        _CACHE["p"] = _roundtrip(32, 4)[0]
    return _CACHE["p"]


def test_apply_rejects_nonpositive(constant_state):
    p = constant_state()
    with pytest.raises(DomainError):
        apply_P(p, CoefficientPath.constant(p.grid, 0.0))


def test_degenerate_denominator():
    g = TimeGrid(1.0, 8)
    data = ProblemData(ModeSet([1.0], [1.0]), [0.0], np.zeros(9), 0.5, g)
    p = InverseProblem(data, CoefficientPath.constant(g, 1.0), dalpha_E=-np.ones(9))
    with pytest.raises(DegenerateDenominatorError):
        apply_P(p, CoefficientPath.constant(g, 1.0), DomainBracket(1.0, 1.0, 1.0, 1.0))


def test_constant_state_recovered(constant_state):
    sigma, fld, diag = solve_inverse(constant_state())
    np.testing.assert_allclose(sigma.values, 1.0, atol=1e-8)
    np.testing.assert_allclose(fld.v, 1.0, atol=1e-8)
    assert diag.status == "converged"
    assert diag.residual <= 1e-8


@pytest.mark.parametrize("mu,alpha", [(1.0, 0.5), (2.0, 0.3)])
def test_manufactured_variable(constant_state, mu, alpha):
    p = constant_state(128, lambda t: mu * SIN(t), mu, alpha)
    sigma, _, diag = solve_inverse(p.with_controls(tol=1e-10))
    assert np.max(np.abs(sigma.values - SIN(p.grid.nodes))) <= 1e-6


def test_roundtrip_small(roundtrip):
    p, truth = roundtrip(128, 8)
    sigma, _, diag = solve_inverse(p)
    br = diag.bracket
    assert np.max(np.abs(sigma.values - truth.values)) <= 5e-3
    assert all(r.min_denominator > 0 for r in diag.records)
    assert br.contains(sigma.values, slack=1e-9)


@pytest.mark.parametrize("start", ["lower", "upper", 0.8])
def test_starts_agree(constant_state, start):
    p = constant_state(64, SIN)
    ref, _, _ = solve_inverse(p.with_controls(tol=1e-10))
    other, _, diag = solve_inverse(p.with_controls(tol=1e-10, start=start))
    assert np.max(np.abs(ref.values - other.values)) <= 1e-9
    if not isinstance(start, str):
        assert diag.start == 0.8


def test_start_outside_bracket(constant_state):
    with pytest.raises(DomainError):
        solve_inverse(constant_state().with_controls(start=5.0))


def test_max_iterations_carries_best(constant_state):
    p = constant_state(64, SIN).with_controls(max_iter=3, tol=1e-14)
    with pytest.raises(ConvergenceError) as exc:
        solve_inverse(p)
    assert isinstance(exc.value.best, CoefficientPath)
    assert exc.value.diagnostics.iterations == 3


def test_damping_and_diagnostics(constant_state, tmp_path):
    p = constant_state(64, SIN).with_controls(damping=0.5, tol=1e-9)
    sigma, _, diag = solve_inverse(p)
    assert all(r.damping <= 0.5 for r in diag.records)
    assert diag.residual <= 1e-9 / 0.5
    diag.write(tmp_path / "d.json")
    data = json.loads((tmp_path / "d.json").read_text())
    assert data["status"] == "converged" and data["iterations"] == diag.iterations
    assert data["bracket"]["lower"] == pytest.approx(diag.bracket.lower)


def test_controls_validation():
    with pytest.raises(DomainError):
        InverseControls(damping=0.0)
    with pytest.raises(DomainError):
        InverseControls(start="middle")
    with pytest.raises(DomainError):
        InverseControls(tol=-1.0)


def test_problem_validation(constant_state):
    p = constant_state()
    with pytest.raises(ShapeMismatchError):
        InverseProblem(p.data, CoefficientPath.constant(TimeGrid(1.0, 8), 1.0))
    with pytest.raises(ShapeMismatchError):
        InverseProblem(p.data, p.E, dalpha_E=np.zeros(3))
    zero = ProblemData(ModeSet([0.0], [1.0]), [1.0], np.ones(65), 0.5, p.grid)
    with pytest.raises(DomainError):
        InverseProblem(zero, p.E)


def test_normalize_signs():
    g = TimeGrid(1.0, 4)
    data = ProblemData(ModeSet([1.0, 4.0], [-1.0, 2.0]), [0.5, 0.25], np.ones((2, 5)), 0.5, g)
    n = normalize_signs(data)
    np.testing.assert_array_equal(n.modes.weights, [1.0, 2.0])
    np.testing.assert_array_equal(n.h, [-0.5, 0.25])
    np.testing.assert_array_equal(n.source_observation(), data.source_observation())


def test_perturb_profile(constant_state):
    p = constant_state()
    q = perturb(p, 0.1, 0.2, 0.3)
    assert q.E.values[0] == 1.0 and q.E.values[-1] == pytest.approx(1.3)
    assert q.data.h[0] == pytest.approx(1.1)
    assert q.data.f[0, -1] == pytest.approx(1.2)


def test_stability_zero_and_h_only(constant_state, tmp_path):
    p = constant_state(64, SIN).with_controls(tol=1e-11)
    table = stability_experiment(p, [(0, 0, 0), (1e-3, 0, 0), (1e-2, 0, 0)])
    zero = table.rows[0]
    assert zero.sigma_deviation == 0.0 and zero.v_deviation == 0.0
    for r in table.rows[1:]:
        assert r.sigma_deviation <= table.constant * r.input_size * (1 + 1e-12)
        assert r.sigma_deviation > 0
    table.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("scale_h,scale_f,scale_E")
    assert len(lines) == 4


def test_stability_skips_inadmissible(constant_state):
    p = constant_state()
    table = stability_experiment(p, [(0, 0, -2.0)])
    assert table.rows[0].note.startswith("skipped")
    assert math.isnan(table.slope)
