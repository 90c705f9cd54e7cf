import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ouregularity import gaussian as G
from ouregularity import models as M
from ouregularity.fields import cosine
from conftest import random_psd

Q_SCALAR = (1 - math.exp(-2)) / 2


def test_scalar_covariance_mean_and_lambda(scalar):
    b = G.smoothing_bundle(scalar, 0.0, 1.0)
    assert b.U[0, 0] == pytest.approx(math.exp(-1), rel=1e-12)
    assert b.law.covariance[0, 0] == pytest.approx(Q_SCALAR, rel=1e-12)
    assert b.lam[0, 0] == pytest.approx(math.exp(-1) / math.sqrt(Q_SCALAR), rel=1e-12)


def test_forcing_offset_closed_form():
    m = M.make_scalar(-1.0, 1.0, 1.0)
    assert G.mean(m, [0.0], 0.0, 1.0)[0] == pytest.approx(1 - math.exp(-1), rel=1e-12)


def test_zero_interval_gives_zero_covariance(dense2):
    np.testing.assert_array_equal(G.covariance(dense2, 0.4, 0.4).covariance, np.zeros((2, 2)))


def test_example1_covariance_matches_mode_oracle():
    model = M.make_example1(M.Example1Params(N=8, a=2, b=1))
    np.testing.assert_allclose(np.diag(G.covariance(model, 0.0, 0.25).covariance),
                               G.diagonal_covariance_oracle(model, 0.0, 0.25),
                               rtol=1e-10)


def test_heat_lambda_is_inverse_root_gap():
    heat = M.make_heat(3)
    b = G.smoothing_bundle(heat, 0.2, 0.45)
    # B = sqrt(2) I, so Q = 2 (t - s) I
    np.testing.assert_allclose(b.lam, np.eye(3) / math.sqrt(2 * 0.25), rtol=1e-12)


def test_psd_sqrt_diagonal_case():
    r = G.psd_sqrt(np.diag([4.0, 1.0, 0.0]))
    np.testing.assert_allclose(r.sqrt_factor @ r.sqrt_factor.T, np.diag([4.0, 1.0, 0.0]),
                               atol=1e-15)
    np.testing.assert_allclose(r.pinv_sqrt(np.array([2.0, 1.0, 1.0])), [1.0, 1.0, 0.0])


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_psd_sqrt_reconstructs(N, seed):
    Q = random_psd(np.random.default_rng(seed), N)
    R = G.psd_sqrt(Q).sqrt_factor
    assert np.linalg.norm(R @ R.T - Q) <= 1e-10 * np.linalg.norm(Q)


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_pseudo_inverse_vanishes_on_kernel(N, seed):
    rng = np.random.default_rng(seed)
    Q = random_psd(rng, N, rank=N - 1)
    r = G.psd_sqrt(Q)
    assert r.effective_rank == N - 1
    w, V = np.linalg.eigh(Q)
    kernel = V[:, 0]
    assert np.linalg.norm(r.pinv_sqrt(kernel)) <= 1e-6


def test_indefinite_or_asymmetric_rejected():
    with pytest.raises(G.GaussianError):
        G.psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(G.GaussianError):
        G.psd_sqrt(np.diag([1.0, -1.0]))


@given(st.floats(0.0, 0.8), st.floats(0.05, 0.2))
def test_trace_nonincreasing_in_start_time(s, d):
    model = M.make_example1(M.Example1Params(N=6))
    t = 1.0
    later = min(s + d, t - 1e-3)
    assert G.covariance(model, s, t).trace >= G.covariance(model, later, t).trace - 1e-14


@given(st.floats(0.0, 0.7), st.floats(0.01, 0.3), st.sampled_from(["dense2", "example1", "heat2d"]))
def test_bundle_range_residual(s, gap, name):
    model = M.BUILTIN_MODELS[name]()
    b = G.smoothing_bundle(model, s, min(s + gap, model.horizon))
    R = b.law.root.sqrt_factor
    assert np.linalg.norm(R @ b.lam - b.U) <= 1e-6 * np.linalg.norm(b.U)


def test_degenerate_bundle_flagged():
    m = M.make_scalar(-1.0, 0.0, 0.0)
    b = G.smoothing_bundle(m, 0.0, 1.0)
    assert b.degenerate
    with pytest.raises(G.DegenerateBundle):
        b.require_nondegenerate()


def test_sample_moments_and_determinism():
    law = G.GaussianLaw.from_covariance(np.array([[Q_SCALAR]]))
    Y = G.sample(law, 10**5, seed=3)
    assert abs(Y.mean()) <= 4 * math.sqrt(Q_SCALAR / 1e5)
    np.testing.assert_array_equal(Y, G.sample(law, 10**5, seed=3, workers=4))
    zero = G.GaussianLaw.from_covariance(np.zeros((2, 2)))
    np.testing.assert_array_equal(G.sample(zero, 10, seed=1), np.zeros((10, 2)))


def test_sample_covariance_three_dimensional():
    Q = random_psd(np.random.default_rng(5), 3)
    law = G.GaussianLaw.from_covariance(Q)
    Y = G.sample(law, 10**5, seed=11)
    C = np.cov(Y.T)
    se = np.sqrt((Q**2 + np.outer(np.diag(Q), np.diag(Q))) / 1e5)
    assert np.all(np.abs(C - Q) <= 4 * se)


@given(st.floats(-2, 2), st.integers(0, 1000))
def test_cm_weight_has_unit_mean(eps, seed):
    model = M.make_dense_example()
    b = G.smoothing_bundle(model, 0.0, 0.5)
    Y = G.sample(b.law, 2**15, seed=seed)
    w = G.cm_weight(b, np.array([1.0, -0.5]), eps, Y)
    assert abs(w.mean() - 1) <= 4 * w.std() / math.sqrt(len(w))


def test_cm_weight_trivial_shift_and_change_of_variables(dense2):
    b = G.smoothing_bundle(dense2, 0.0, 0.5)
    Y = G.sample(b.law, 2**16, seed=2)
    h, eps = np.array([0.3, 1.0]), 0.7
    np.testing.assert_array_equal(G.cm_weight(b, h, 0.0, Y), np.ones(len(Y)))
    phi = cosine([1.0, 2.0])
    shifted = phi(Y + eps * (b.U @ h))
    weighted = phi(Y) * G.cm_weight(b, h, eps, Y)
    diff = shifted.mean() - weighted.mean()
    se = math.hypot(shifted.std(), weighted.std()) / math.sqrt(len(Y))
    assert abs(diff) <= 4 * se


def test_trace_truncation_curve():
    model = M.make_example1(M.Example1Params(N=64, a=2, b=1))
    curve = G.trace_truncation_curve(model, 0.0, 1.0, [1, 2, 4, 8, 16, 32, 64])
    traces = [v for _, v in curve]
    assert all(b >= a for a, b in zip(traces, traces[1:]))
    assert traces[-1] == pytest.approx(G.covariance(model, 0.0, 1.0).trace, rel=1e-14)
    # tail sum of beta_k^2 / (2 |lambda_k|) ~ sum k^-4: below 1e-6 from k = 70 on
    assert traces[-1] - traces[-2] < 1e-5
    flat = G.trace_truncation_curve(M.make_scalar(-1.0, 0.0), 0.0, 1.0, [1])
    assert flat == [(1, 0.0)]


def test_bundle_roundtrip(dense2):
    b = G.smoothing_bundle(dense2, 0.1, 0.6)
    c = G.SmoothingBundle.from_dict(b.to_dict())
    np.testing.assert_array_equal(c.lam, b.lam)
    np.testing.assert_array_equal(c.law.covariance, b.law.covariance)
