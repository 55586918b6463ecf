"""Disaggregation error metrics: RMSE, clipped Total Error Rate, weighted RMSE.

Per-load arrays are laid out window-major: ``M x P`` for one load and
``C x M x P`` for all loads. Truth is unsigned (solar as a magnitude).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NonPositiveUncertainty, ZeroTruth


@dataclass(frozen=True)
class MetricReport:
    rmse: np.ndarray
    ter: float
    wrmse: Optional[np.ndarray] = None


def _pair(est, truth):
    est = np.atleast_2d(np.asarray(est, float))
    truth = np.atleast_2d(np.asarray(truth, float))
    if est.shape != truth.shape:
        raise DimensionMismatch(f"estimate {est.shape} vs truth {truth.shape}")
    return est, truth


def rmse_c(est, truth) -> float:
    est, truth = _pair(est, truth)
    M, P = est.shape
    return float(np.sqrt(((est - truth) ** 2).sum() / (P * M)))


def ter(est, truth) -> float:
    """Total Error Rate over ``C x M x P`` arrays, each (window, load) error
    clipped at the truth's L1 mass."""
    est, truth = np.asarray(est, float), np.asarray(truth, float)
    if est.shape != truth.shape:
        raise DimensionMismatch(f"estimate {est.shape} vs truth {truth.shape}")
    err = np.abs(est - truth).sum(axis=-1)
    mass = np.abs(truth).sum(axis=-1)
    denom = mass.sum()
    if denom <= 0:
        raise ZeroTruth("total ground-truth mass is zero")
    return float(np.minimum(err, mass).sum() / denom)


def wrmse_c(est, truth, u_values) -> float:
    est, truth = _pair(est, truth)
    u = np.asarray(u_values, float).ravel()
    if u.size != est.shape[0]:
        raise DimensionMismatch(f"{u.size} uncertainty values for {est.shape[0]} windows")
    if not (u > 0).all():
        raise NonPositiveUncertainty("uncertainty indices must be > 0")
    P = est.shape[1]
    sq = ((est - truth) ** 2).sum(axis=1)
    return float(np.sqrt((sq / u).sum() / (P * (1.0 / u).sum())))


def report(est, truth, u=None) -> MetricReport:
    """Metrics for ``C x M x P`` arrays; ``u`` is ``M x C`` uncertainty indices."""
    est, truth = np.asarray(est, float), np.asarray(truth, float)
    C = est.shape[0]
    r = np.array([rmse_c(est[c], truth[c]) for c in range(C)])
    w = None
    if u is not None:
        u = np.asarray(u, float)
        w = np.array([wrmse_c(est[c], truth[c], u[:, c]) for c in range(C)])
    return MetricReport(r, ter(est, truth), w)
