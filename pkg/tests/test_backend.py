import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracinv import _backend, _pycore
from fracinv.fraccalc import CoefficientPath, TimeGrid, l1_weights
from fracinv.forward import PicardControls, VolterraMode
from fracinv.mlf import _series_coefficients

try:
    from fracinv import _core
except ImportError:  # pragma: no cover - exercised only without a compiler
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled core not built")


def test_backend_name():
    assert _backend.NAME in ("compiled", "python")


def test_force_python_backend():
    out = subprocess.run(
        [sys.executable, "-c", "from fracinv import _backend; print(_backend.NAME)"],
        env={"FRACINV_BACKEND": "python", "PATH": ""}, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@needs_core
@given(arrays(np.float64, 40, elements=st.floats(-5, 5)), arrays(np.float64, 40, elements=st.floats(-5, 5)))
def test_convolve_equivalent(w, g):
    np.testing.assert_allclose(_core.history_convolve(w, g), _pycore.history_convolve(w, g),
                               rtol=1e-12, atol=1e-11)


@needs_core
def test_series_equivalent():
    logc, sign = _series_coefficients(0.4, 1.0, 400)
    # arguments where the series is well conditioned
    z = -np.geomspace(1e-3, 1.5, 200)
    a, sa = _core.series_eval(z, logc, sign)
    b, sb = _pycore.series_eval(z, logc, sign)
    np.testing.assert_allclose(a, b, rtol=1e-13)
    np.testing.assert_allclose(sa, sb, rtol=1e-13)


@needs_core
def test_l1_march_equivalent(rng):
    n = 64
    mu = np.array([1.0, 10.0, 300.0])
    sigma = 1 + 0.5 * rng.random(n + 1)
    f = rng.random((3, n + 1))
    h0 = np.array([1.0, 0.5, 0.0])
    args = (mu, sigma, f, h0, 12.0, l1_weights(0.4, n + 1))
    np.testing.assert_allclose(_core.l1_march(*args), _pycore.l1_march(*args), rtol=1e-13, atol=1e-15)


@needs_core
@pytest.mark.parametrize("alpha", [0.3, 0.8])
def test_picard_equivalent(alpha):
    g = TimeGrid(1.0, 96)
    sigma = CoefficientPath(g, 1 + 0.5 * np.sin(2 * np.pi * g.nodes))
    M = PicardControls().splitting(1.5)
    op = VolterraMode.build(7.0, sigma, 1 + g.nodes, 1.0, alpha, M)
    args = (op.base, op.w, op.corr, op.coef, op.base, 1e-12, 300)
    va, ia, da, sa = _core.picard_mode(*args)
    vb, ib, db, sb = _pycore.picard_mode(*args)
    assert (ia, sa) == (ib, sb)
    np.testing.assert_allclose(va, vb, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(da, db, rtol=1e-8, atol=1e-15)


@needs_core
def test_picard_reports_max_iter():
    g = TimeGrid(1.0, 32)
    sigma = CoefficientPath(g, 1 + 0.5 * np.sin(2 * np.pi * g.nodes))
    op = VolterraMode.build(50.0, sigma, np.zeros(33), 1.0, 0.5, 1.6)
    for core in (_core, _pycore):
        _, iters, _, status = core.picard_mode(op.base, op.w, op.corr, op.coef, op.base, 1e-15, 3)
        assert (iters, status) == (3, _pycore.MAX_ITER)
