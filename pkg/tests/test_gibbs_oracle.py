"""The sampler against exact enumeration on instances small enough to integrate."""
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btm_disagg import bayes_train as bt
from btm_disagg.core import LoadClassSpec

SPEC = [LoadClassSpec("a", 1, 1)]


def _log_normal(x, cov):
    sign, logdet = np.linalg.slogdet(cov)
    return -0.5 * (len(x) * np.log(2 * np.pi) + logdet + x @ np.linalg.solve(cov, x))


def _state(X, d, gamma_eps, gamma_s, pi, scheme="blocked", seed=0, sign=1):
    Y = np.ones((1, X.shape[1]), np.int8)
    hyper = bt.BayesHyper(K_init=[1], sample_blocks=("s", "z"), seed=seed, scheme=scheme)
    specs = [LoadClassSpec("a", sign, 1)]
    st_ = bt.init_state((X, Y, specs), hyper)
    st_.atoms = np.asarray(d, float).reshape(-1, 1)
    st_.gamma_eps = gamma_eps
    st_.gamma_s = np.array([gamma_s])
    st_.pi_z = np.array([pi])
    return st_, (X, Y, specs), hyper


def _joint_log(x, d, z, s, y, gamma_eps, pi, sign):
    """log p(x, z | s, y, rest) up to terms that do not depend on z."""
    r = x - sign * d * z * s * y
    return (-0.5 * gamma_eps * r @ r) + (np.log(pi) if z else np.log1p(-pi))


def test_logodds_matches_enumeration_p1():
    X = np.array([[1.7]])
    st_, data, _ = _state(X, [0.8], 2.5, 1.0, 0.3)
    st_.s[:] = 1.4
    st_.z[:] = 0.0
    got = bt.conditional_z_logodds(st_, data, 0, 0, 0)
    want = (_joint_log(X[:, 0], np.array([0.8]), 1, 1.4, 1, 2.5, 0.3, 1)
            - _joint_log(X[:, 0], np.array([0.8]), 0, 1.4, 1, 2.5, 0.3, 1))
    assert abs(got - want) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, -1]), st.sampled_from([0.0, 1.0]))
def test_logodds_matches_enumeration_random(seed, sign, z_now):
    """Any dimension, any current value of z, either class sign."""
    r = np.random.default_rng(seed)
    P = int(r.integers(1, 5))
    X = r.standard_normal((P, 2)) * 2
    d = r.standard_normal(P)
    st_, data, _ = _state(X, d, r.uniform(0.2, 5), r.uniform(0.2, 5), r.uniform(0.05, 0.95),
                          sign=sign)
    st_.s[:] = r.standard_normal((1, 2))
    st_.z[:] = z_now
    for j in range(2):
        got = bt.conditional_z_logodds(st_, data, 0, 0, j)
        x = X[:, j]
        want = (_joint_log(x, d, 1, st_.s[0, j], 1, st_.gamma_eps, st_.pi_z[0], sign)
                - _joint_log(x, d, 0, st_.s[0, j], 1, st_.gamma_eps, st_.pi_z[0], sign))
        assert abs(got - want) < 1e-10 * max(1.0, abs(want))


def test_zero_slab_or_absent_load_gives_prior_logodds():
    X = np.array([[1.0, -2.0], [0.5, 3.0]])
    st_, data, _ = _state(X, [0.6, 0.8], 3.0, 1.0, 0.2)
    prior = np.log(0.2) - np.log(0.8)
    st_.s[:] = 0.0
    assert bt.conditional_z_logodds(st_, data, 0, 0, 0) == prior
    st_.s[:] = 1.0
    st_.y[:] = 0.0
    assert bt.conditional_z_logodds(st_, data, 0, 0, 1) == prior


def test_index_checked():
    st_, data, _ = _state(np.ones((2, 2)), [0.6, 0.8], 1.0, 1.0, 0.5)
    with pytest.raises(bt.IndexOutOfRange):
        bt.conditional_z_logodds(st_, data, 0, 1, 0)


def _exact_z_posterior(x, d, gamma_eps, gamma_s, pi):
    """p(z = 1 | x) with the slab integrated out (both hypotheses Gaussian)."""
    P = len(x)
    c0 = np.eye(P) / gamma_eps
    c1 = c0 + np.outer(d, d) / gamma_s
    l1 = np.log(pi) + _log_normal(x, c1)
    l0 = np.log1p(-pi) + _log_normal(x, c0)
    return 1.0 / (1.0 + np.exp(l0 - l1))


# Windows chosen so the exact posterior of z sits well inside (0, 1).
TINY_X = np.array([[0.9, 0.2], [0.5, 0.6]])
TINY_D = np.array([0.6, 0.8])
TINY = dict(gamma_eps=4.0, gamma_s=1.0, pi=0.4)


def test_tiny_instance_is_informative():
    p = [_exact_z_posterior(TINY_X[:, j], TINY_D, **TINY) for j in range(2)]
    assert all(0.1 < v < 0.9 for v in p)
    assert abs(p[0] - p[1]) > 0.1


@pytest.mark.parametrize("scheme", ["blocked", "single-site"])
def test_long_run_z_matches_enumeration(scheme):
    sweeps = 50_000
    st_, data, hyper = _state(TINY_X, TINY_D, TINY["gamma_eps"], TINY["gamma_s"], TINY["pi"],
                              scheme=scheme, seed=2024)
    keys = bt.column_keys(data[0], data[1])
    total = np.zeros(2)
    t0 = time.perf_counter()
    for _ in range(sweeps):
        st_ = bt.gibbs_sweep(st_, data, hyper, keys)
        total += st_.z[0]
    elapsed = time.perf_counter() - t0
    want = np.array([_exact_z_posterior(TINY_X[:, j], TINY_D, **TINY) for j in range(2)])
    np.testing.assert_allclose(total / sweeps, want, atol=0.02)
    assert elapsed < 60.0
    # frozen blocks really stayed fixed
    np.testing.assert_array_equal(st_.atoms[:, 0], TINY_D)
    assert st_.gamma_eps == TINY["gamma_eps"]
