import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ouregularity import models as M
from ouregularity import transition as T
from ouregularity.fields import const, cosine, gaussian_bump, linear, quadratic, step
from ouregularity.gaussian import smoothing_bundle
from ouregularity.quadrature import Budget

SECOND_MOMENT = math.exp(-2) + (1 - math.exp(-2)) / 2


def test_second_moment_closed_form(scalar):
    phi = quadratic([[1.0]])
    assert T.apply_P(scalar, phi, 0.0, 1.0, [1.0]).value == pytest.approx(SECOND_MOMENT, rel=1e-12)
    d = T.derivative_P(scalar, phi, 0.0, 1.0, [1.0], [[1.0]])
    assert d.value == pytest.approx(2 * math.exp(-2), rel=1e-10)


@pytest.mark.parametrize("name", ["scalarOU", "dense2", "example1", "heat2d"])
def test_constant_is_preserved_and_has_no_derivatives(name):
    model = M.BUILTIN_MODELS[name]()
    N = model.dimension
    x = np.linspace(-1, 1, N)
    assert T.apply_P(model, const(1.0), 0.1, 0.6, x).value == pytest.approx(1.0, abs=1e-12)
    for n in (1, 2, 3):
        H = np.ones((n, N)) / math.sqrt(N)
        assert abs(T.derivative_P(model, const(1.0), 0.1, 0.6, x, H).value) <= 1e-12
        mc = T.derivative_P(model, const(1.0), 0.1, 0.6, x, H, method="monteCarlo",
                            budget=Budget(samples=2**12, scale_with_lambda=False))
        assert mc.value == 0.0


def test_linear_functional_maps_to_mean(dense2):
    c = np.array([0.7, -1.2])
    b = smoothing_bundle(dense2, 0.2, 0.8)
    x = np.array([0.3, 0.4])
    assert T.apply_P(dense2, linear(c), 0.2, 0.8, x).value == pytest.approx(c @ b.mean(x), rel=1e-12)
    h = np.array([1.0, 2.0])
    d = T.derivative_P_transfer(dense2, linear(c), 0.2, 0.8, x, [h])
    assert d.value == pytest.approx(c @ (b.U @ h), rel=1e-12)


def test_weight_low_orders(dense2):
    b = smoothing_bundle(dense2, 0.0, 0.5)
    y = np.array([[0.1, -0.2], [0.0, 0.0]])
    h1, h2 = np.array([1.0, 0.0]), np.array([0.3, 1.0])
    w1 = b.law.root.pinv_sqrt(y) @ (b.lam @ h1)
    w2 = b.law.root.pinv_sqrt(y) @ (b.lam @ h2)
    g12 = (b.lam @ h1) @ (b.lam @ h2)
    np.testing.assert_allclose(T.weight_I_n(b, y, [h1]), w1, rtol=1e-13)
    np.testing.assert_allclose(T.weight_I_n(b, y, [h1, h2]), w1 * w2 - g12, rtol=1e-12)
    assert T.weight_I_n(b, y[1], [h1, h2]) == pytest.approx(-g12, rel=1e-13)


def test_equal_times_are_the_identity(dense2):
    phi = cosine([1.0, 0.5])
    x = np.array([0.2, -0.1])
    h = np.array([[1.0, 0.0]])
    assert T.apply_P(dense2, phi, 0.4, 0.4, x).value == phi(x[None])[0]
    assert T.derivative_P_transfer(dense2, phi, 0.4, 0.4, x, h).value == \
        pytest.approx(phi.directional(1, x[None], h)[0], rel=1e-14)
    with pytest.raises(T.TransitionError):
        T.derivative_P(dense2, phi, 0.4, 0.4, x, h)


SMOOTH = {1: [cosine([1.3], 0.2), gaussian_bump([0.3])],
          2: [cosine([1.0, -0.7], 0.4), gaussian_bump([0.2, -0.1], 0.8)],
          3: [cosine([0.8, 0.5, -0.6], 0.1), gaussian_bump([0.1, 0.0, -0.2], 1.1)]}
MODELS = {1: M.make_scalar, 2: M.make_dense_example,
          3: lambda: M.make_example1(M.Example1Params(N=3))}


@given(st.integers(1, 3), st.integers(0, 1), st.integers(1, 3), st.integers(0, 2**16))
def test_three_derivative_formulas_agree(N, which, order, seed):
    rng = np.random.default_rng(seed)
    model, phi = MODELS[N](), SMOOTH[N][which]
    x = rng.uniform(-1, 1, N)
    H = rng.standard_normal((order, N))
    s, t = 0.1, 0.1 + rng.uniform(0.05, 0.8)
    values = {}
    for k in range(order + 1):
        e = T.derivative_P_mixed(model, phi, s, t, x, H[:k], H[k:])
        values[k] = e
    for a in values:
        for b in values:
            tol = max(3 * math.hypot(values[a].stderr, values[b].stderr), 1e-4)
            assert abs(values[a].value - values[b].value) <= tol


def test_finite_difference_oracle_cosine_three_dims():
    model = M.make_example1(M.Example1Params(N=3))
    phi = cosine([0.8, 0.5, -0.6])
    x = np.array([0.1, 0.3, -0.2])
    H = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]])
    d = T.derivative_P(model, phi, 0.0, 0.4, x, H)
    fd = T.finite_difference_P(model, phi, 0.0, 0.4, x, H)
    assert abs(d.value - fd.value) <= max(3 * math.hypot(d.stderr, fd.stderr), 1e-4)


def test_weight_estimator_on_step_matches_finite_differences(dense2):
    phi = step([1.0, 0.5])
    x = np.array([0.05, 0.1])
    h = np.array([[1.0, 0.0]])
    d = T.derivative_P(dense2, phi, 0.0, 0.3, x, h)
    fd = T.finite_difference_P(dense2, phi, 0.0, 0.3, x, h)
    assert abs(d.value - fd.value) <= max(3 * math.hypot(d.stderr, fd.stderr), 1e-4)


def test_monte_carlo_agrees_with_quadrature(dense2):
    phi = cosine([1.0, -0.7], 0.4)
    x = np.array([[0.2, 0.1], [-0.5, 0.3]])
    H = np.array([[1.0, 0.0], [0.0, 1.0]])
    q = T.derivative_P(dense2, phi, 0.0, 0.5, x, H)
    mc = T.derivative_P(dense2, phi, 0.0, 0.5, x, H, method="monteCarlo", seed=4)
    assert np.all(np.abs(q.value - mc.value) <= 4 * mc.stderr + 1e-12)
    again = T.derivative_P(dense2, phi, 0.0, 0.5, x, H, method="monteCarlo", seed=4, workers=3)
    np.testing.assert_array_equal(mc.value, again.value)


def test_batch_equals_single_rows(dense2):
    phi = cosine([1.0, 2.0])
    X = np.array([[0.1, 0.2], [0.3, -0.4], [1.0, 0.0]])
    H = [[1.0, 1.0]]
    batch = T.derivative_P(dense2, phi, 0.0, 0.7, X, H).value
    for i, x in enumerate(X):
        assert T.derivative_P(dense2, phi, 0.0, 0.7, x, H).value == pytest.approx(batch[i], rel=1e-12)


def test_dimension_mismatch_rejected(dense2):
    with pytest.raises(T.TransitionError):
        T.apply_P(dense2, const(1.0), 0.0, 0.5, [1.0, 2.0, 3.0])
