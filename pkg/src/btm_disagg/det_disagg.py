"""Test-stage disaggregation with a trained deterministic dictionary.

A test window is expressed as ``D_hat @ A_tilde @ w`` where the columns of
``A_tilde`` are representative training coefficient columns, and ``w >= 0``
minimises ``||x - D_hat A_tilde w||_2 + mu ||w||_1``.

By default the weights are kept nonnegative (``nonneg_weights``): each
representative is a plausible combination of loads, and letting it enter
with a negative weight flips the sign of every load it carries, so solar
and consumption cancel instead of being separated. With the switch off the
weights are unconstrained and per-load sign feasibility is only reported.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import CoefficientMatrix, DictionaryBank, DisaggregationEstimate, split_rows
from .errors import DimensionMismatch, EmptyCoefficients, InvalidConfig

SMOOTHING = 1e-8


@dataclass(frozen=True)
class DetTestConfig:
    """``support_threshold`` is relative to each column's largest class-block norm."""

    mu: float = 0.1
    q: int = 240
    support_threshold: float = 0.05
    max_iters: int = 30
    tol: float = 1e-8
    inner_iters: int = 50
    nonneg_weights: bool = True

    def __post_init__(self):
        if self.mu < 0:
            raise InvalidConfig("mu must be >= 0")
        if self.q < 1:
            raise InvalidConfig("q must be >= 1")


@dataclass(frozen=True)
class RepresentativeSet:
    columns: np.ndarray          # K x q
    source_indices: tuple
    sizes: tuple

    @property
    def q(self) -> int:
        return self.columns.shape[1]

    def blocks(self):
        return split_rows(self.columns, self.sizes)


def support_patterns(A: np.ndarray, sizes, threshold) -> np.ndarray:
    """``N x C`` boolean support, class active iff its block norm exceeds
    ``threshold`` times the column's largest block norm."""
    norms = np.stack([np.linalg.norm(b, axis=0) for b in split_rows(A, sizes)], axis=1)
    top = norms.max(axis=1, keepdims=True)
    return (norms > threshold * top) & (top > 0)


def _by_centrality(A, idx):
    cols = A[:, idx]
    dist = np.linalg.norm(cols[:, :, None] - cols[:, None, :], axis=0).sum(axis=1)
    order = np.lexsort((idx, dist))
    return [int(idx[i]) for i in order]


def select_representatives(A_hat, cfg: DetTestConfig, sizes=None) -> RepresentativeSet:
    """Pick ``q`` training columns covering the most frequent support patterns.

    Patterns are ranked by frequency (ties: lowest first column index). The
    medoid of each pattern is taken in rank order; further rounds take the
    next most central member of each pattern until ``q`` columns are chosen.
    """
    if isinstance(A_hat, CoefficientMatrix):
        sizes = A_hat.sizes
        A = A_hat.matrix
    else:
        A = np.asarray(A_hat, float)
    sizes = tuple(sizes)
    N = A.shape[1]
    if not np.any(A):
        raise EmptyCoefficients("all coefficients are zero")
    if cfg.q >= N:
        chosen = list(range(N))
    else:
        pats = support_patterns(A, sizes, cfg.support_threshold)
        groups = defaultdict(list)
        for j in range(N):
            if pats[j].any():
                groups[tuple(pats[j])].append(j)
        ranked = sorted(groups.values(), key=lambda g: (-len(g), g[0]))
        queues = [_by_centrality(A, np.array(g)) for g in ranked]
        chosen = []
        rnd = 0
        while len(chosen) < cfg.q and any(rnd < len(qu) for qu in queues):
            for qu in queues:
                if rnd < len(qu) and len(chosen) < cfg.q:
                    chosen.append(qu[rnd])
            rnd += 1
        chosen.sort()
    cols = A[:, chosen].copy()
    cols.setflags(write=False)
    return RepresentativeSet(cols, tuple(chosen), sizes)


def weights_objective(x, B, w, mu, smoothing=0.0) -> float:
    r = np.asarray(x) - B @ w
    return float(np.sqrt(r @ r + smoothing ** 2) + mu * np.abs(w).sum())


def _soft(v, t, nonneg=False):
    if nonneg:
        # prox of t*||w||_1 plus the indicator of w >= 0
        return np.maximum(v - t, 0.0)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _lasso(B, x, mu, eta, w, n_iter, L, nonneg=False):
    """Monotone FISTA on ``||x - Bw||^2 / (2 eta) + mu ||w||_1``."""
    step = eta / L

    def F(v):
        r = x - B @ v
        return (r @ r) / (2 * eta) + mu * np.abs(v).sum()

    y, w_prev, tk = w.copy(), w.copy(), 1.0
    Fw = F(w)
    for _ in range(n_iter):
        g = -(B.T @ (x - B @ y)) / eta
        z = _soft(y - step * g, step * mu, nonneg)
        Fz = F(z)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        if Fz <= Fw:
            w_prev, w, Fw = w, z, Fz
            y = w + ((tk - 1) / t_next) * (w - w_prev)
        else:
            y = w + (tk / t_next) * (z - w)
        tk = t_next
    return w


def solve_weights(x_test, D_hat, reps: RepresentativeSet, cfg: DetTestConfig,
                  return_trace=False):
    """Minimise ``sqrt(||x - Bw||^2 + eps^2) + mu ||w||_1`` with ``B = D_hat A_tilde``.

    Majorisation-minimisation: the smoothed norm is bounded by
    ``(||r||^2 + eps^2) / (2 eta) + eta / 2`` with equality at
    ``eta = sqrt(||r||^2 + eps^2)``; each surrogate is a lasso solved by
    soft-thresholding proximal gradient (projected onto ``w >= 0`` when
    ``cfg.nonneg_weights``). The best iterate is returned.
    """
    D = D_hat.matrix if isinstance(D_hat, DictionaryBank) else np.asarray(D_hat, float)
    x = np.asarray(x_test, float).ravel()
    if D.shape[0] != x.size or D.shape[1] != reps.columns.shape[0]:
        raise DimensionMismatch(
            f"x {x.shape}, D {D.shape}, representatives {reps.columns.shape}")
    B = D @ reps.columns
    L = max(np.linalg.norm(B, 2) ** 2, 1e-300)
    w = np.zeros(B.shape[1])
    obj = weights_objective(x, B, w, cfg.mu, SMOOTHING)
    best_w, best = w, obj
    trace = [obj]
    for _ in range(cfg.max_iters):
        r = x - B @ w
        eta = np.sqrt(r @ r + SMOOTHING ** 2)
        w = _lasso(B, x, cfg.mu, eta, w, cfg.inner_iters, L, cfg.nonneg_weights)
        obj = weights_objective(x, B, w, cfg.mu, SMOOTHING)
        trace.append(min(obj, best))
        if obj < best:
            gain = best - obj
            best_w, best = w, obj
            if gain <= cfg.tol * max(best, 1e-300):
                break
        else:
            break
    return (best_w, trace) if return_trace else best_w


def reconstruct_loads(D_hat: DictionaryBank, reps: RepresentativeSet, w) -> DisaggregationEstimate:
    """Unsigned per-load estimates ``sign_c * D_c A_tilde_c w``."""
    w = np.asarray(w, float)
    blocks = reps.blocks()
    loads = [spec.sign * (Dc @ (Ac @ w))
             for spec, Dc, Ac in zip(D_hat.class_specs, D_hat.blocks, blocks)]
    return DisaggregationEstimate(np.stack(loads), "deterministic")


def disaggregate(X_test, model, cfg: DetTestConfig = DetTestConfig(), reps=None,
                 threads: Optional[int] = None):
    """Disaggregate every column of ``X_test``; returns ``C x P x M`` estimates."""
    from .parallel import map_ordered

    X = np.asarray(getattr(X_test, "X", X_test), float)
    if X.ndim == 1:
        X = X[:, None]
    reps = reps or select_representatives(model.coefficients, cfg)

    def one(j):
        w = solve_weights(X[:, j], model.dictionary, reps, cfg)
        return reconstruct_loads(model.dictionary, reps, w).per_load

    out = map_ordered(one, range(X.shape[1]), threads)
    return np.stack(out, axis=-1)
