import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ouregularity import kolmogorov as K
from ouregularity import models as M
from ouregularity.fields import const, cosine, holder_cusp, linear, quadratic, stationary_source, zero_source
from ouregularity.transition import apply_P


@given(st.floats(0.0, 0.95), st.integers(1, 64))
def test_mesh_nodes_and_rule(gamma, count):
    mesh = K.GradedTimeMesh(0.2, 1.0, gamma, count)
    nodes = mesh.nodes
    assert nodes[0] == 0.2 and nodes[-1] == pytest.approx(1.0)
    assert np.all(np.diff(nodes) > 0)
    sig, w = mesh.rule()
    assert np.all((sig > 0.2) & (sig < 1.0))
    # the rule integrates the kernel (sigma - s)^(-gamma) exactly
    exact = 0.8 ** (1 - gamma) / (1 - gamma)
    assert np.sum(w * (sig - 0.2) ** -gamma) == pytest.approx(exact, rel=1e-6)


def test_non_integrable_kernel_rejected():
    with pytest.raises(K.KolmogorovError):
        K.GradedTimeMesh(0.0, 1.0, 1.0, 8)
    heat = M.make_heat(1)
    with pytest.raises(K.KolmogorovError):
        K.derivative_u1(heat, stationary_source(holder_cusp(0.5)), 0.0, 1.0, [0.1],
                        [[1.0]] * 3, theta=0.5, formula="weight")


def test_scalar_source_closed_forms(scalar):
    psi = stationary_source(linear([1.0]))
    tab = K.solve_u(scalar, const(0.0), psi, 1.0, [0.0, 0.5], [[0.7], [-1.0]])
    for i, s in enumerate([0.0, 0.5]):
        np.testing.assert_allclose(tab.u1[i], -np.array([0.7, -1.0]) * (1 - math.exp(-(1 - s))),
                                   rtol=1e-9)
    d = K.derivative_u1(scalar, psi, 0.0, 1.0, [0.3], [[1.0]], formula="weight")
    assert d.value == pytest.approx(-(1 - math.exp(-1)), abs=1e-6)


def test_constant_source_and_zero_source(dense2):
    tab = K.solve_u(dense2, const(0.0), stationary_source(const(2.0)), 1.0, [0.25], [[0.1, 0.2]])
    assert tab.u1[0, 0] == pytest.approx(-2.0 * 0.75, rel=1e-10)
    phi = cosine([1.0, 0.5])
    tab = K.solve_u(dense2, phi, zero_source(2), 1.0, [0.25], [[0.1, 0.2]])
    assert tab.u[0, 0] == apply_P(dense2, phi, 0.25, 1.0, [0.1, 0.2]).value
    d = K.derivative_u1(dense2, stationary_source(const(2.0)), 0.0, 1.0, [0.0, 0.0], [[1.0, 0.0]])
    assert d.value == 0.0


def test_sup_bound_of_time_integral(dense2):
    psi = stationary_source(cosine([1.0, -1.0]))
    X = np.random.default_rng(0).uniform(-2, 2, (20, 2))
    tab = K.solve_u(dense2, const(0.0), psi, 1.0, [0.0, 0.4, 0.9], X)
    for i, s in enumerate(tab.s):
        assert np.max(np.abs(tab.u1[i])) <= (1.0 - s) * 1.0 + 1e-12


def test_heat_second_derivative_oracle():
    """For A = 0, B = sqrt 2 in 1-D the generator is d^2/dx^2, so D^2 u1 = psi - P psi."""
    heat = M.make_heat(1)
    f = holder_cusp(0.4, 0.0)
    X = np.array([[0.0], [1e-3], [0.25], [-0.8]])
    for s in (0.0, 0.5):
        d = K.derivative_u1(heat, stationary_source(f), s, 1.0, X, [[1.0], [1.0]], theta=0.5,
                            formula="weight", tol=1e-6)
        ref = f(X) - apply_P(heat, f, s, 1.0, X).value
        np.testing.assert_allclose(d.value, ref, atol=2e-5)


def test_weight_and_transfer_formulas_agree(dense2):
    psi = stationary_source(cosine([0.7, 0.4]))
    x = np.array([0.2, -0.3])
    H = [[0.5, 1.0]]
    a = K.derivative_u1(dense2, psi, 0.1, 0.9, x, H, formula="weight", tol=1e-7)
    b = K.derivative_u1(dense2, psi, 0.1, 0.9, x, H, formula="transfer", tol=1e-9)
    assert a.value == pytest.approx(b.value, abs=1e-5)


def test_first_derivative_matches_finite_difference_of_table(dense2):
    psi = stationary_source(cosine([0.7, 0.4]))
    x = np.array([0.2, -0.3])
    h = np.array([1.0, 0.0])
    eps = 1e-3
    tab = K.solve_u(dense2, const(0.0), psi, 1.0, [0.2], [x + eps * h, x - eps * h])
    fd = (tab.u1[0, 0] - tab.u1[0, 1]) / (2 * eps)
    d = K.derivative_u1(dense2, psi, 0.2, 1.0, x, [h], formula="weight", tol=1e-7)
    assert d.value == pytest.approx(fd, abs=1e-3)


def test_mesh_refinement_converges():
    heat = M.make_heat(1)
    psi = stationary_source(holder_cusp(0.4))
    x = np.array([[0.05]])
    a = K.derivative_u1(heat, psi, 0.0, 1.0, x, [[1.0], [1.0]], theta=0.5, formula="weight",
                        start_nodes=8, max_nodes=8)
    b = K.derivative_u1(heat, psi, 0.0, 1.0, x, [[1.0], [1.0]], theta=0.5, formula="weight",
                        start_nodes=16, max_nodes=16)
    assert abs(a.value - b.value) < 1e-4


def test_residual_quadratic_terminal(scalar):
    rep = K.pde_residual(scalar, quadratic([[1.0]]), zero_source(1), 1.0, [0.25, 0.5, 0.75],
                         [[-1.0], [0.0], [0.5], [1.5]])
    assert rep.max_residual <= 1e-3


def test_residual_constant_solution():
    model = M.make_scalar(-1.0, 1.0, 0.0)
    rep = K.pde_residual(model, const(3.0), zero_source(1), 1.0, [0.5], [[0.0]])
    assert rep.max_residual <= 1e-6


def test_residual_dense_model_with_source(dense2):
    rep = K.pde_residual(dense2, cosine([0.5, 0.3]), stationary_source(cosine([0.2, 0.4])),
                         1.0, [0.5], [[0.1, 0.2], [-0.3, 0.4]])
    assert rep.max_residual <= 1e-2


def test_residual_restricted_to_small_dimension():
    model = M.make_example1(M.Example1Params(N=4))
    with pytest.raises(K.KolmogorovError):
        K.pde_residual(model, const(1.0), zero_source(4), 1.0, [0.5], [[0.0] * 4])
