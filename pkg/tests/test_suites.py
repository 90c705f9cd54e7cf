import numpy as np
import pytest
from hypothesis import given, strategies as st

from ouregularity import models as M
from ouregularity import suites as S
from ouregularity.fields import (const, cosine, gaussian_bump, holder_cusp, quadratic, sine,
                                 stationary_source, step, zero_source)
from ouregularity.regularity import ProbeSet

PROBES = ProbeSet.seeded(1, P=6, D=1, L=8, seed=0)


@given(st.floats(0.1, 50.0))
def test_interpolation_constant_is_scale_invariant(scale):
    family = [sine([float(c)]) for c in (1, 2, 4, 8)]
    a = S.interpolation_check(family, 0.0, 0.5, 1.0, PROBES)
    b = S.interpolation_check([f.scaled(scale) for f in family], 0.0, 0.5, 1.0, PROBES)
    assert b.info["C_fit"] == pytest.approx(a.info["C_fit"], rel=1e-9)
    assert a.passed


def test_interpolation_rejects_bad_exponents():
    with pytest.raises(ValueError):
        S.interpolation_check([sine([1.0])], 0.5, 0.5, 1.0, PROBES)


def test_theta_suite_on_example():
    model = M.make_example1(M.Example1Params(N=128, a=2.0, b=0.0))
    res = S.theta_suite(model)
    assert res.passed and abs(res.info["theta_hat"] - 0.5) <= 0.05


def test_routing_between_schauder_and_zygmund():
    heat = M.make_heat(1)
    psi = stationary_source(holder_cusp(0.999))
    with pytest.raises(S.RoutingError):
        S.schauder_suite(heat, const(0.0), psi, 0.0, 1.0, [0.0], PROBES, theta=0.5)
    with pytest.raises(S.RoutingError):
        S.zygmund_suite(heat, const(0.0), psi, 0.4, 1.0, [0.0], PROBES, theta=0.5)


def test_small_schauder_run_is_bounded():
    heat = M.make_heat(1)
    probes = ProbeSet.seeded(1, P=2, D=1, L=6, seed=0, extra_points=[[0.0]])
    res = S.schauder_suite(heat, const(0.0), stationary_source(holder_cusp(0.4)), 0.4, 1.0,
                           [0.5], probes, theta=0.5)
    assert res.passed
    assert res.info["derivative_order"] == 2
    assert res.info["holder_exponent"] == pytest.approx(0.4)
    assert res.info["seminorm_sup"] == pytest.approx(1.0, abs=0.05)


def test_solve_suite_terminal_row(scalar):
    res = S.solve_suite(scalar, quadratic([[1.0]]), zero_source(1), 1.0, [0.0, 1.0],
                        [[-1.0], [0.5]])
    assert res.passed and res.info["terminal_error"] == 0.0


def test_residual_suite(scalar):
    res = S.residual_suite(scalar, quadratic([[1.0]]), zero_source(1), 1.0, [0.5], [[0.3]])
    assert res.passed
    header, rows = res.tables["residual"]
    assert header == ["s", "x0", "residual"] and len(rows) == 1


def test_summary_is_json_plain(scalar):
    import json
    res = S.residual_suite(scalar, quadratic([[1.0]]), zero_source(1), 1.0, [0.5], [[0.3]])
    json.dumps(res.summary())
    assert res.summary()["theorem"] == "kolmogorov-equation-residual"


def test_aligned_step_saturates_normal_density_constants():
    """An aligned step gives R_n = sup |d^(n-1) of the standard normal density|."""
    model = M.make_example1(M.Example1Params(N=3))
    pairs = [(0.25, 0.25 + g) for g in (1e-3, 1e-2)]
    res = S.smoothing_suite(model, [step([1.0, 0.0, 0.0])], 2, pairs,
                            offsets=np.linspace(-2, 2, 41), method="tensorQuadrature")
    per = res.info["per_order"]
    assert per[1]["C_n"] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-3)
    assert per[2]["C_n"] == pytest.approx(np.exp(-0.5) / np.sqrt(2 * np.pi), rel=1e-2)


def test_align_ridge_keeps_profile():
    f = S.align_ridge(cosine([3.0, 4.0], 0.3), np.array([0.0, 1.0]))
    assert f.params["c"] == [0.0, 5.0] and f.params["phase"] == 0.3
    g = gaussian_bump([0.1, 0.2])
    assert S.align_ridge(g, np.array([1.0, 0.0])) is g
