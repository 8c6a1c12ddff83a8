import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudo_occ.kernels import IDENTITY, LEAKY_RELU, RELU, SIGMOID, TANH, TANH2, load

NP = load("numpy")
NB = load("numba")
CODES = [IDENTITY, TANH, TANH2, SIGMOID, LEAKY_RELU, RELU]


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        load("cuda")


@pytest.mark.parametrize("code", CODES)
def test_activation_derivative_matches_central_difference(code):
    rng = np.random.default_rng(code)
    z = rng.uniform(-3, 3, size=(100, 1))
    if code in (LEAKY_RELU, RELU):
        z = z[np.abs(z[:, 0]) > 1e-3]  # skip the kink
    h = 1e-6
    for mod in (NP, NB):
        a = mod.activate(z, code, 0.1)
        analytic = mod.activation_grad(np.ones_like(z), z, a, code, 0.1)
        numeric = (mod.activate(z + h, code, 0.1) - mod.activate(z - h, code, 0.1)) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=0, atol=1e-8)


@pytest.mark.parametrize("code,lo,hi", [(TANH, -1, 1), (TANH2, -2, 2), (SIGMOID, 0, 1)])
def test_bounded_activation_ranges(code, lo, hi):
    z = np.linspace(-30, 30, 601).reshape(-1, 1)
    for mod in (NP, NB):
        a = mod.activate(z, code, 0.0)
        assert a.min() >= lo and a.max() <= hi
        mid = mod.activate(np.array([[-5.0, 0.0, 5.0]]), code, 0.0)
        assert lo < mid.min() and mid.max() < hi


def test_sigmoid_stable_for_large_inputs():
    z = np.array([[-800.0, 800.0]])
    for mod in (NP, NB):
        a = mod.activate(z, SIGMOID, 0.0)
        assert np.isfinite(a).all()
        assert a[0, 0] == 0.0 and a[0, 1] == 1.0


def test_leaky_relu_derivative_at_zero_is_slope():
    z = np.zeros((1, 1))
    for mod in (NP, NB):
        g = mod.activation_grad(np.ones_like(z), z, mod.activate(z, LEAKY_RELU, 0.2), LEAKY_RELU, 0.2)
        assert g[0, 0] == 0.2


shapes = st.tuples(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9))


@given(shapes, st.sampled_from(CODES), st.integers(0, 2**32 - 1))
def test_dense_backends_agree(shape, code, seed):
    n, k, m = shape
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, k))
    w = rng.normal(size=(m, k))
    b = rng.normal(size=m)
    z1, a1 = NP.dense_forward(x, w, b, code, 0.05)
    z2, a2 = NB.dense_forward(x, w, b, code, 0.05)
    np.testing.assert_allclose(z1, z2, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a1, a2, rtol=1e-12, atol=1e-12)
    ga = rng.normal(size=(n, m))
    for r1, r2 in zip(NP.dense_backward(x, w, z1, a1, ga, code, 0.05),
                      NB.dense_backward(x, w, z1, a1, ga, code, 0.05)):
        np.testing.assert_allclose(r1, r2, rtol=1e-12, atol=1e-12)


@given(st.integers(1, 30), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_adam_backends_agree(n, t, seed):
    rng = np.random.default_rng(seed)
    p, g = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    m, v = rng.normal(size=(n, 3)), rng.uniform(size=(n, 3))
    pairs = [(p.copy(), m.copy(), v.copy()) for _ in range(2)]
    NP.adam_update(pairs[0][0], g, pairs[0][1], pairs[0][2], 1e-3, 0.9, 0.999, 1e-8, t)
    NB.adam_update(pairs[1][0], g, pairs[1][1], pairs[1][2], 1e-3, 0.9, 0.999, 1e-8, t)
    for a, b in zip(*pairs):
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


@given(st.integers(1, 20), st.integers(1, 6), st.integers(0, 2**32 - 1),
       st.sampled_from([(0.0, 1.0), (-1.0, 1.0), (-np.inf, np.inf)]))
def test_clip_recompute_backends_agree_bitwise(n, d, seed, bounds):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(n, d))
    raw = rng.normal(scale=0.7, size=(n, d))
    r1 = NP.clip_recompute(x, raw, *bounds)
    r2 = NB.clip_recompute(x, raw, *bounds)
    for a, b in zip(r1, r2):
        assert np.array_equal(a, b)
    xp, delta, _ = r1
    assert np.array_equal(xp, x + delta)


def test_row_sq_norms_matches_definition(rng):
    a = rng.normal(size=(7, 5))
    for mod in (NP, NB):
        np.testing.assert_allclose(mod.row_sq_norms(a), (a ** 2).sum(axis=1), rtol=1e-14)


@pytest.mark.parametrize("name", ["numpy", "numba"])
def test_env_flag_selects_backend(name):
    out = subprocess.run([sys.executable, "-c", "import pseudo_occ; print(pseudo_occ.BACKEND)"],
                         env=dict(os.environ, PSEUDO_OCC_BACKEND=name), capture_output=True,
                         text=True)
    assert out.stdout.strip() == name


def test_env_flag_rejects_unknown_backend():
    out = subprocess.run([sys.executable, "-c", "import pseudo_occ"],
                         env=dict(os.environ, PSEUDO_OCC_BACKEND="fortran"), capture_output=True,
                         text=True)
    assert out.returncode != 0 and "unknown backend" in out.stderr
