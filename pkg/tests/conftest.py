"""Shared fixtures: a small synthetic problem and models trained on it once."""
from __future__ import annotations

import numpy as np
import pytest

from btm_disagg import bayes_train, det_train
from btm_disagg.core import DataShape
from btm_disagg.det_disagg import DetTestConfig
from btm_disagg.synth import GeneratorConfig, generate_dataset

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_gen():
    return GeneratorConfig(shape=DataShape(P=96, N=150, M=30, C=3), seed=3, initial_atoms=6)


@pytest.fixture(scope="session")
def small_data(small_gen):
    return generate_dataset(small_gen)


@pytest.fixture(scope="session")
def small_det_model(small_data):
    train, _, _ = small_data
    cfg = det_train.DetTrainConfig(max_outer_iters=100, inner_iters=10)
    return det_train.train(train.X, train.Y, list(train.specs), cfg)


@pytest.fixture(scope="session")
def small_det_test_cfg():
    return DetTestConfig(q=100)


@pytest.fixture(scope="session")
def small_posterior(small_data):
    train, _, _ = small_data
    hyper = bayes_train.BayesHyper(burn_in=60, n_collect=8, thin=2, seed=1)
    return bayes_train.train_bayes(train, hyper)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
