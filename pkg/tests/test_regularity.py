import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ouregularity import models as M
from ouregularity import regularity as R
from ouregularity.fields import absolute, holder_cusp, quadratic
from ouregularity.suites import holder_transfer_check

PROBES_1D = R.ProbeSet.seeded(1, P=6, D=1, L=10, seed=3, extra_points=[[0.0]])


def test_sqrt_has_half_holder_seminorm_one():
    rep = R.holder_seminorm(holder_cusp(0.5), 0.5, PROBES_1D)
    assert rep.global_estimate == pytest.approx(1.0, rel=1e-12)
    assert rep.verdict == "bounded"


def test_square_has_zygmund_quotient_two_delta():
    f = quadratic([[1.0]])
    rep = R.zygmund_seminorm(f, PROBES_1D)
    # |f(x+2d) - 2f(x+d) + f(x)| = 2 d^2, so the quotient is 2 d
    np.testing.assert_allclose(rep.per_scale_sup, 2 * PROBES_1D.magnitudes, rtol=1e-6)


def test_absolute_value_second_difference_is_two_at_kink():
    centred = R.ProbeSet([[0.0]], [[1.0]], PROBES_1D.magnitudes)
    vals = R.stencil_values(absolute([1.0]), centred, (-1, 0, 1))
    second = np.abs(vals[..., 2] - 2 * vals[..., 1] + vals[..., 0])[0, 0] / centred.magnitudes
    np.testing.assert_allclose(second, 2.0, rtol=1e-12)
    rep = R.zygmund_seminorm(absolute([1.0]), PROBES_1D)
    assert rep.global_estimate <= 2.0 + 1e-12


def test_rough_holder_quotient_grows():
    rep = R.holder_seminorm(holder_cusp(0.3), 0.6, PROBES_1D)
    assert rep.verdict == "growing"
    assert rep.slope == pytest.approx(-0.3, abs=0.02)


def test_heat_theta_is_one_half():
    fit = R.estimate_theta(M.make_heat(1), R.default_time_pairs(M.make_heat(1)))
    assert fit.theta == pytest.approx(0.5, abs=1e-10)
    assert fit.residual <= 1e-10


def test_scalar_ou_theta_near_one_half(scalar):
    fit = R.estimate_theta(scalar, R.default_time_pairs(scalar, gap_min=1e-5, gap_max=1e-2))
    assert fit.theta == pytest.approx(0.5, abs=0.01)


def test_theta_needs_two_decades(scalar):
    with pytest.raises(ValueError):
        R.estimate_theta(scalar, R.default_time_pairs(scalar, gap_min=1e-2, gap_max=1e-1))


def test_optimality_refuses_unsaturated_example():
    model = M.make_example1(M.Example1Params(N=128, a=1.0, b=1.0))
    with pytest.raises(R.InsufficientModes):
        R.theta_optimality(model, R.default_time_pairs(model))


@given(st.integers(0, 2**16), st.floats(0.1, 0.9))
def test_more_probes_never_lower_the_estimate(seed, alpha):
    f = holder_cusp(alpha, 0.2)
    a = R.ProbeSet.seeded(1, P=3, D=2, L=6, seed=seed)
    b = R.ProbeSet.seeded(1, P=3, D=2, L=6, seed=seed + 1)
    ra = R.holder_seminorm(f, alpha, a)
    rab = R.holder_seminorm(f, alpha, a.union(b))
    assert rab.global_estimate >= ra.global_estimate - 1e-15


def test_probe_validation():
    with pytest.raises(ValueError):
        R.ProbeSet([[0.0]], [[2.0]], [1e-3, 1e-2])
    with pytest.raises(ValueError):
        R.ProbeSet([[0.0]], [[1.0]], [1e-2, 1e-3])


def test_holder_transfer_on_scalar_model(scalar):
    probes = R.ProbeSet.seeded(1, P=4, D=1, L=6, seed=0, extra_points=[[0.0]])
    out = holder_transfer_check(scalar, holder_cusp(0.5), 0.2, 0.8, probes)
    assert out["holds"]
    # contraction: U = e^{-0.6} < 1 so the transported seminorm shrinks
    assert out["measured"] <= 1.0


def test_combine_reports_is_pointwise_sup():
    a = R.make_report("holder", 0.5, [1e-3, 1e-2], [1.0, 3.0])
    b = R.make_report("holder", 0.5, [1e-3, 1e-2], [2.0, 1.0])
    c = R.combine_reports([a, b])
    np.testing.assert_array_equal(c.per_scale_sup, [2.0, 3.0])
    assert math.isclose(c.global_estimate, 3.0)
