import textwrap

import numpy as np
import pytest

from fracinv.errors import ScenarioError
from fracinv.scenario import build_modes, compile_expression, load_scenario, parse_scenario, resolve

BASE = """\
name: demo
mode: forward
operator: {kind: dirichlet}
functional: {kind: mean_value}
alpha: 0.5
N: 16
n_modes: 4
data:
  h: {constant: 1}
  sigma: {constant: 1}
"""


def parse(text):
    return parse_scenario(textwrap.dedent(text))


def test_minimal_forward():
    sc = parse(BASE)
    assert (sc.name, sc.mode, sc.T, sc.N) == ("demo", "forward", 1.0, 16)
    res = resolve(sc)
    np.testing.assert_array_equal(res.data.h, np.ones(4))
    np.testing.assert_array_equal(res.sigma.values, np.ones(17))


@pytest.mark.parametrize("edit,field", [
    (("alpha: 0.5\n", ""), "alpha"),
    (("alpha: 0.5", "alpha: 1.5"), "alpha"),
    (("N: 16", "N: 1"), "N"),
    (("mode: forward", "mode: sideways"), "mode"),
    (("{kind: dirichlet}", "{kind: laplace}"), "operator"),
    (("  sigma: {constant: 1}\n", ""), "data"),
    (("n_modes: 4", "n_modes: 4\ncolour: red"), "colour"),
])
def test_validation_errors(edit, field):
    with pytest.raises(ScenarioError) as exc:
        parse(BASE.replace(*edit))
    assert field in str(exc.value)


def test_error_reports_line():
    with pytest.raises(ScenarioError) as exc:
        parse(BASE.replace("N: 16", "N: -3"))
    assert "line 6" in str(exc.value)


def test_yaml_syntax_error():
    with pytest.raises(ScenarioError):
        parse("name: [unclosed\n")


def test_forward_rejects_observation():
    with pytest.raises(ScenarioError):
        parse(BASE + "  E: {constant: 1}\n")


def test_inverse_requires_observation():
    with pytest.raises(ScenarioError):
        parse(BASE.replace("mode: forward", "mode: inverse"))


def test_expression_sandbox():
    fn = compile_expression("1 + 0.5*sin(2*pi*t)", ["t"], "x")
    np.testing.assert_allclose(fn(t=np.array([0.25])), [1.5])
    for bad in ["__import__('os')", "t.real", "open('f')", "[t for t in t]"]:
        with pytest.raises(ScenarioError):
            compile_expression(bad, ["t"], "x")
    with pytest.raises(ScenarioError):
        compile_expression("q + 1", ["t"], "x")


def test_overrides():
    sc = parse(BASE).with_overrides(modes=8, grid=32, method="l1")
    assert (sc.n_modes, sc.N, sc.method) == (8, 32, "l1")


def test_operator_kinds(tmp_path):
    sc = parse(BASE.replace("{kind: dirichlet}", "{kind: involution, eps: 0.5}"))
    np.testing.assert_allclose(build_modes(sc).eigenvalues, [0.5, 6.0, 4.5, 24.0])
    sc = parse(BASE.replace("{kind: dirichlet}", "{kind: oscillator}"))
    np.testing.assert_allclose(build_modes(sc).eigenvalues, [1, 3, 5, 7])
    (tmp_path / "m.csv").write_text("mu,phi\n2,1\n3,0.5\n")
    text = BASE.replace("{kind: dirichlet}", "{kind: table, path: m.csv}").replace(
        "{kind: mean_value}", "{kind: table}").replace("n_modes: 4", "n_modes: 2")
    path = tmp_path / "s.yaml"
    path.write_text(text)
    modes = build_modes(load_scenario(path))
    np.testing.assert_allclose(modes.weights, [1.0, 0.5])


def test_sign_normalization_for_inverse():
    text = BASE.replace("mode: forward", "mode: inverse").replace(
        "{kind: mean_value}", "{kind: boundary_flux}").replace(
        "  sigma: {constant: 1}\n", "  f: {constant: 1}\n  E: {constant: 1}\n")
    res = resolve(parse(text))
    assert np.all(res.data.modes.weights >= 0)
    np.testing.assert_array_equal(res.signs, [-1, 1, -1, 1])
    np.testing.assert_array_equal(res.data.h, [-1, 1, -1, 1])


def test_generated_observation():
    text = BASE.replace("mode: forward", "mode: inverse").replace(
        "  sigma: {constant: 1}\n",
        "  f: {expression: \"mu*h*(1 + t)\"}\n  E:\n    generate: {sigma: {constant: 1.2}}\n")
    res = resolve(parse(text))
    assert res.E.values[0] == pytest.approx(res.data.modes.weights @ res.data.h)


def test_shipped_scenarios_parse():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "scenarios"
    for path in sorted(root.glob("*.yaml")):
        if path.name.startswith("malformed"):
            with pytest.raises(ScenarioError):
                load_scenario(path)
        else:
            assert load_scenario(path).name == path.stem
