import numpy as np
import pytest
from hypothesis import given, strategies as st

from ouregularity import fields as F

SMOOTH_BUILDERS = ["const", "linear", "quadratic", "cosine", "sine", "gaussianBump"]


def _fd(f, k, x, H, eps=1e-3):
    if k == 0:
        return f(x)
    h = H[0]
    return (_fd(f, k - 1, x + eps * h, H[1:], eps) - _fd(f, k - 1, x - eps * h, H[1:], eps)) / (2 * eps)


@given(st.sampled_from(SMOOTH_BUILDERS), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 2**16))
def test_declared_derivatives_match_differences(name, N, k, seed):
    rng = np.random.default_rng(seed)
    f = F.field_from_description(name, N)
    if k > f.max_derivative:
        return
    x = rng.uniform(-1, 1, (4, N))
    H = rng.standard_normal((k, N))
    np.testing.assert_allclose(f.directional(k, x, H), _fd(f, k, x, H), atol=1e-4 * 10**k)


def test_polynomial_partials():
    f = F.polynomial({(2, 1): 3.0, (0, 0): 1.0})
    x = np.array([[1.0, 2.0]])
    assert f(x)[0] == 7.0
    assert f.directional(1, x, [[1.0, 0.0]])[0] == pytest.approx(12.0)
    assert f.directional(2, x, [[1.0, 0.0], [0.0, 1.0]])[0] == pytest.approx(6.0)


def test_cusp_has_unit_seminorm_and_singular_breakpoint():
    f = F.holder_cusp(0.4, 0.0)
    assert f.declared_class == "Calpha" and f.declared_seminorm == 1.0
    assert any(b.singular and b.value == 0.0 for b in f.breakpoints)
    d = 1e-3
    assert f(np.array([[d]]))[0] - f(np.array([[0.0]]))[0] == pytest.approx(d**0.4)


def test_step_and_checker_values():
    s = F.step([1.0, 0.0], 0.5)
    np.testing.assert_array_equal(s(np.array([[0.4, 9.0], [0.6, -9.0]])), [0.0, 1.0])
    c = F.checker()
    assert c(np.array([[1.0, 1.0]]))[0] == -c(np.array([[-1.0, 1.0]]))[0]
    assert c.sup_bound == 1.0


def test_scaling_is_linear():
    f = F.cosine([1.0, 2.0])
    g = f.scaled(2.0)
    x = np.array([[0.3, 0.1]])
    assert g(x)[0] == 2 * f(x)[0]
    assert g.directional(1, x, [[1.0, 0.0]])[0] == pytest.approx(2 * f.directional(1, x, [[1.0, 0.0]])[0])


def test_descriptions_reject_unknown_names_and_parameters():
    with pytest.raises(F.FieldError):
        F.field_from_description("wiggle", 1)
    with pytest.raises(F.FieldError):
        F.field_from_description({"name": "cosine", "params": {"frequency": 2}}, 1)
    with pytest.raises(F.FieldError):
        F.source_from_description({"name": "zero", "params": {"x": 1}}, 1)


def test_sources():
    z = F.zero_source(2)
    assert z.is_zero
    m = F.modulated_source(F.cosine([1.0]), amplitude=0.5, frequency=1.0)
    y = np.array([[0.2]])
    assert m(0.0, y)[0] != m(1.0, y)[0] or m.sup_bound(1.0) > 0
    st_ = F.stationary_source(F.holder_cusp(0.3))
    assert st_.declared_class == "C0alpha" and st_.alpha == 0.3
    np.testing.assert_array_equal(st_(0.7, y), F.holder_cusp(0.3)(y))
