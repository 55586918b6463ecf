from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btm_disagg import bayes_test as bx
from btm_disagg.errors import EmptyPosterior, InvalidConfig, NegativeVariance
from btm_disagg.synth import CaseSpec, make_case

MC = bx.McConfig(L=6, inner_sweeps=4, seed=3)


def _sample(f, g=1.0):
    f = np.atleast_2d(np.asarray(f, float))
    return bx.TestPosteriorSample(0, (), (), np.ones(f.shape[0]), g, f)


def test_single_sample_reproducible(small_posterior, small_data):
    _, test, _ = small_data
    mc = replace(MC, L=1)
    a = bx.test_infer(test.X[:, 0], small_posterior, mc=mc)
    b = bx.test_infer(test.X[:, 0], small_posterior, mc=mc)
    assert len(a) == 1
    np.testing.assert_array_equal(a[0].loads, b[0].loads)
    assert a[0].gamma_eps_hat == b[0].gamma_eps_hat


def test_zero_window_reconstructs_near_zero(small_posterior, small_data):
    train, _, _ = small_data
    samples = bx.test_infer(np.zeros(train.X.shape[0]), small_posterior, mc=MC)
    recon = np.mean([np.linalg.norm(s.loads.sum(axis=0)) for s in samples])
    assert recon < 0.1 * np.linalg.norm(train.X, axis=0).mean()


def test_case4_industrial_loads_mostly_absent(small_posterior, small_data, small_gen):
    _, test, truth = small_data
    w, _ = make_case(CaseSpec(4, 0), test, truth["test"], small_gen)
    samples = bx.test_infer(w, small_posterior, mc=replace(MC, L=20))
    y = np.mean([s.y_hat for s in samples], axis=0)
    assert (y[:2] < 0.5).all()


def test_predictive_mean_examples():
    v = np.array([[1.0, -2.0, 3.0]])
    assert np.array_equal(bx.predictive_mean([_sample(v)] * 4, 0), v[0])
    np.testing.assert_array_equal(bx.predictive_mean([_sample(v), _sample(-v)], 0), 0 * v[0])
    fs = [np.array([[1.0, 2.0]]), np.array([[4.0, -1.0]]), np.array([[0.5, 0.5]])]
    np.testing.assert_allclose(bx.predictive_mean([_sample(f) for f in fs], 0),
                               (fs[0][0] + fs[1][0] + fs[2][0]) / 3, rtol=1e-15)
    with pytest.raises(EmptyPosterior):
        bx.predictive_mean([], 0)


def test_predictive_covariance_examples():
    v = np.array([[1.0, 2.0, -1.0]])
    cov = bx.predictive_covariance([_sample(v, 4.0)] * 5, 0, C_total=3)
    np.testing.assert_array_equal(cov, np.eye(3) / 12.0)
    cov = bx.predictive_covariance([_sample(v, 1e300), _sample(-v, 1e300)], 0, C_total=3)
    np.testing.assert_allclose(cov, np.outer(v, v), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_covariance_symmetric_psd_and_trace_identity(seed):
    r = np.random.default_rng(seed)
    samples = [_sample(r.standard_normal((2, 6)) * 10, r.uniform(0.1, 5)) for _ in range(7)]
    for c in range(2):
        S = bx.predictive_covariance(samples, c, 2)
        assert np.abs(S - S.T).max() <= 1e-12
        assert np.linalg.eigvalsh(S).min() > 0
        assert bx.trace_gap(S) <= 1e-8


def test_uncertainty_indices_examples():
    u, tot = bx.uncertainty_indices([np.zeros((3, 3))])
    assert u[0] == 0 and tot == 0
    u, _ = bx.uncertainty_indices([np.diag([1.0, 2.0, 3.0])])
    assert u[0] == pytest.approx(6.0, rel=1e-14)
    u, tot = bx.uncertainty_indices([2 * np.eye(1), 5 * np.eye(1)])
    assert tot == pytest.approx(7.0)


def test_confidence_band_examples():
    m = np.array([1.0, -2.0])
    lo, hi = bx.confidence_band(m, np.zeros((2, 2)))
    assert np.array_equal(lo, m) and np.array_equal(hi, m)
    lo, hi = bx.confidence_band(np.zeros(2), np.diag([4.0, 9.0]), 3)
    np.testing.assert_array_equal(hi, [6.0, 9.0])
    np.testing.assert_array_equal(lo, [-6.0, -9.0])
    lo, hi = bx.confidence_band(m, np.diag([4.0, 9.0]), 0)
    np.testing.assert_array_equal(lo, m)
    lo, _ = bx.confidence_band(m, np.diag([-1e-11, 1.0]))
    assert lo[0] == m[0]
    with pytest.raises(NegativeVariance):
        bx.confidence_band(m, np.diag([-1e-3, 1.0]))


def test_batch_result_consistency(small_posterior, small_data):
    _, test, _ = small_data
    res = bx.disaggregate(test.X[:, :5], small_posterior, MC)
    C, P, M = res.mean.shape
    assert (C, M) == (3, 5) and res.u.shape == (5, 3)
    np.testing.assert_allclose(res.u_all, res.u.sum(axis=1), rtol=1e-15)
    assert (res.band_lo <= res.mean).all() and (res.mean <= res.band_hi).all()
    assert res.max_trace_gap <= 1e-8
    est = res.estimate(2)
    assert est.covariance.shape == (3, P, P)
    np.testing.assert_allclose(est.mean, res.mean[:, :, 2])


def test_single_window_matches_batch(small_posterior, small_data):
    """Window results depend on the window and its chunk only."""
    _, test, _ = small_data
    res = bx.disaggregate(test.X[:, :3], small_posterior, MC)
    one = bx.test_infer(test.X[:, 0], small_posterior, mc=MC)
    assert len(one) == MC.L
    assert np.isfinite(res.mean).all()


@pytest.mark.parametrize("warm", [True, False])
def test_thread_count_invariance(small_posterior, small_data, warm):
    _, test, _ = small_data
    X = test.X[:, :bx.CHUNK + 4]      # spans two chunks
    mc = replace(MC, warm_start=warm)
    a = bx.disaggregate(X, small_posterior, mc, threads=1)
    b = bx.disaggregate(X, small_posterior, mc, threads=4)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.u, b.u)


def test_mc_config_validation(small_posterior):
    with pytest.raises(InvalidConfig):
        bx.McConfig(L=0)
    with pytest.raises(InvalidConfig):
        bx.McConfig(inner_sweeps=0)
    empty = replace(small_posterior, collected_samples=[])
    with pytest.raises(EmptyPosterior):
        bx.disaggregate(np.ones((96, 1)), empty, MC)
