"""Deterministic dictionary learning from partially labeled aggregates.

Minimises::

    ||X - sum_c D_c A_c||_F^2
      + sum_c lam_c * sum_{j: class c not known present in j} ||A_c[:, j]||_2
      + lam_D * Tr(D Theta D^T)

subject to nonnegative atoms of norm <= 1 and ``sign_c * A_c >= 0``, by block
coordinate descent: proximal gradient on ``A`` and projected gradient on
``D``, each with a backtracking line search.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    ABSENT,
    PRESENT,
    UNKNOWN,
    CoefficientMatrix,
    DictionaryBank,
    PartialLabelMatrix,
    signs_of,
    split_cols,
    split_rows,
)
from .errors import DimensionMismatch, InvalidConfig, StepDiverged
from .io import fmt, read_kv, read_matrix, read_specs, write_matrix, write_specs, write_text

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-10


@dataclass(frozen=True)
class DetTrainConfig:
    """Hyper-parameters of the deterministic trainer.

    ``lambda_sparsity`` and ``lambda_incoherence`` are dimensionless when
    ``scale_penalties`` is on: the group weight is multiplied by the RMS
    window norm ``s`` and the incoherence weight by ``N * s**2 / K``, so the
    same values work for data in any unit. ``effective_weights`` gives the
    raw values that enter the objective.
    """

    lambda_sparsity: Sequence[float] | float = 0.5
    lambda_incoherence: float = 0.03
    max_outer_iters: int = 200
    inner_iters: int = 20
    step_size_rule: str = "backtracking"
    step_size: Optional[float] = None
    tol_objective: float = 1e-4
    seed: int = 0
    scale_penalties: bool = True

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambda_sparsity, float))
        if (lam < 0).any() or self.lambda_incoherence < 0:
            raise InvalidConfig("penalty weights must be >= 0")
        if self.tol_objective <= 0:
            raise InvalidConfig("tol_objective must be > 0")
        if self.step_size_rule not in ("fixed", "backtracking"):
            raise InvalidConfig(f"unknown step_size_rule {self.step_size_rule!r}")
        if self.max_outer_iters < 0 or self.inner_iters < 1:
            raise InvalidConfig("iteration counts must be nonnegative")

    def class_weights(self, C: int) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(self.lambda_sparsity, float))
        if lam.size == 1:
            return np.full(C, float(lam[0]))
        if lam.size != C:
            raise InvalidConfig(f"need {C} sparsity weights, got {lam.size}")
        return lam

    def effective_weights(self, X, C, K):
        """Return ``(lam_c, lam_D)`` in the units of ``X``."""
        lam = self.class_weights(C)
        if not self.scale_penalties:
            return lam, float(self.lambda_incoherence)
        X = np.asarray(X, float)
        N = X.shape[1]
        s2 = float((X ** 2).sum()) / N
        return lam * np.sqrt(s2), float(self.lambda_incoherence) * N * s2 / K


@dataclass(frozen=True)
class IncoherenceWeights:
    theta: np.ndarray

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "IncoherenceWeights":
        owner = np.repeat(np.arange(len(sizes)), sizes)
        theta = (owner[:, None] != owner[None, :]).astype(float)
        theta.setflags(write=False)
        return cls(theta)


@dataclass
class DetModel:
    dictionary: DictionaryBank
    coefficients: CoefficientMatrix
    trace: list = field(default_factory=list)
    config: Optional[DetTrainConfig] = None
    weights: tuple = ()


# --------------------------------------------------------------------------
# building blocks

def group_prox(v, tau):
    """Proximal map of ``tau * ||.||_2``: ``max(0, 1 - tau/||v||) * v``."""
    v = np.asarray(v, float)
    nrm = np.linalg.norm(v)
    if nrm <= tau:
        return np.zeros_like(v)
    return (1.0 - tau / nrm) * v


def _as_arrays(D, A):
    Dm = D.matrix if isinstance(D, DictionaryBank) else np.asarray(D, float)
    Am = A.matrix if isinstance(A, CoefficientMatrix) else np.asarray(A, float)
    return Dm, Am


def _labels(labels):
    return labels.entries if isinstance(labels, PartialLabelMatrix) else np.asarray(labels)


def penalty_mask(labels, sizes) -> np.ndarray:
    """``C x N`` boolean: True where the class block carries the group penalty."""
    return _labels(labels) != PRESENT


def incoherence(D, theta) -> float:
    """``Tr(D Theta D^T) = sum_{m,p} theta_mp <d_m, d_p>``."""
    D = np.asarray(D, float)
    return float((theta * (D.T @ D)).sum())


def _group_norms(A, sizes):
    return np.stack([np.linalg.norm(b, axis=0) for b in split_rows(A, sizes)])


def objective_value(X, D, A, labels, cfg: DetTrainConfig, sizes=None,
                    weights=None) -> float:
    """Evaluate the training objective.

    ``weights`` overrides ``(lam_c, lam_D)``; by default they come from
    ``cfg.effective_weights``.
    """
    X = np.asarray(getattr(X, "values", X), float)
    if sizes is None:
        sizes = D.sizes if isinstance(D, DictionaryBank) else A.sizes
    Dm, Am = _as_arrays(D, A)
    if Dm.shape[1] != Am.shape[0] or Dm.shape[0] != X.shape[0] or Am.shape[1] != X.shape[1]:
        raise DimensionMismatch(
            f"X {X.shape}, D {Dm.shape}, A {Am.shape} do not conform")
    Y = _labels(labels)
    if Y.shape != (len(sizes), X.shape[1]):
        raise DimensionMismatch(f"labels {Y.shape} do not match C={len(sizes)}, N={X.shape[1]}")
    lam, lam_D = weights if weights is not None else cfg.effective_weights(X, len(sizes), Dm.shape[1])
    R = X - Dm @ Am
    theta = IncoherenceWeights.from_sizes(sizes).theta
    group = (np.asarray(lam)[:, None] * _group_norms(Am, sizes) * penalty_mask(Y, sizes)).sum()
    return float((R ** 2).sum() + group + lam_D * incoherence(Dm, theta))


def _smooth_A(X, D, A):
    R = D @ A - X
    return float((R ** 2).sum()), 2.0 * D.T @ R


def _prox_A(V, sizes, signs, Y, tau):
    """Exact prox of group penalty + sign constraint + hard zeros.

    The sign projection is applied first; group shrinkage then scales the
    projected block by a nonnegative factor, so it stays feasible.
    """
    out = []
    for c, blk in enumerate(split_rows(V, sizes)):
        s = signs[c]
        blk = s * np.maximum(s * blk, 0.0)
        nrm = np.linalg.norm(blk, axis=0)
        factor = np.where(Y[c] == UNKNOWN,
                          np.maximum(0.0, 1.0 - tau[c] / np.maximum(nrm, 1e-300)), 1.0)
        factor = np.where(Y[c] == ABSENT, 0.0, factor)
        out.append(blk * factor)
    return np.vstack(out)


def _coef_iters(X, D, A, Y, sizes, signs, lam, n_iter, rule, t0):
    L = 2.0 * np.linalg.norm(D, 2) ** 2
    t = (t0 if t0 else 1.0 / max(L, 1e-12))
    penalized = Y == UNKNOWN

    def total(A_, f_):
        return f_ + float((lam[:, None] * _group_norms(A_, sizes) * penalized).sum())

    f, G = _smooth_A(X, D, A)
    F = total(A, f)
    for _ in range(n_iter):
        if rule == "backtracking":
            t = t * 2.0
            while True:
                An = _prox_A(A - t * G, sizes, signs, Y, t * lam)
                fn, Gn = _smooth_A(X, D, An)
                dA = An - A
                if fn <= f + (G * dA).sum() + (dA ** 2).sum() / (2 * t) + 1e-12 * abs(f):
                    break
                t *= 0.5
                if t < 1e-20:
                    An, fn, Gn = A, f, G
                    break
        else:
            An = _prox_A(A - t * G, sizes, signs, Y, t * lam)
            fn, Gn = _smooth_A(X, D, An)
        Fn = total(An, fn)
        if Fn > F + DESCENT_SLACK * max(1.0, abs(F)):
            raise StepDiverged(f"coefficient step increased objective {F:.6g} -> {Fn:.6g}")
        A, f, G, F = An, fn, Gn, Fn
    return A, t


def project_atoms(D):
    """Clip negatives to zero, then shrink atoms with norm > 1 onto the unit sphere."""
    D = np.maximum(np.asarray(D, float), 0.0)
    nrm = np.linalg.norm(D, axis=0)
    return D / np.maximum(nrm, 1.0)


def _smooth_D(X, D, A, theta, lam_D):
    R = D @ A - X
    f = float((R ** 2).sum()) + lam_D * incoherence(D, theta)
    G = 2.0 * R @ A.T + 2.0 * lam_D * D @ theta
    return f, G


def dictionary_gradient(X, D, A, theta, lam_D):
    """Gradient of the smooth objective with respect to ``D``."""
    return _smooth_D(np.asarray(X, float), np.asarray(D, float),
                     np.asarray(A, float), np.asarray(theta, float), lam_D)[1]


def coefficient_gradient(X, D, A):
    return _smooth_A(np.asarray(X, float), np.asarray(D, float), np.asarray(A, float))[1]


def _dict_iters(X, D, A, theta, lam_D, n_iter, rule, t0):
    L = 2.0 * np.linalg.norm(A, 2) ** 2 + 2.0 * lam_D * np.linalg.norm(theta, 2)
    t = t0 if t0 else 1.0 / max(L, 1e-12)
    f, G = _smooth_D(X, D, A, theta, lam_D)
    for _ in range(n_iter):
        if rule == "backtracking":
            t = t * 2.0
            while True:
                Dn = project_atoms(D - t * G)
                fn, Gn = _smooth_D(X, Dn, A, theta, lam_D)
                dD = Dn - D
                if fn <= f + (G * dD).sum() + (dD ** 2).sum() / (2 * t) + 1e-12 * abs(f):
                    break
                t *= 0.5
                if t < 1e-20:
                    Dn, fn, Gn = D, f, G
                    break
        else:
            Dn = project_atoms(D - t * G)
            fn, Gn = _smooth_D(X, Dn, A, theta, lam_D)
        if fn > f + DESCENT_SLACK * max(1.0, abs(f)):
            raise StepDiverged(f"dictionary step increased objective {f:.6g} -> {fn:.6g}")
        D, f, G = Dn, fn, Gn
    return D, t


def _ctx(X, labels, D, cfg, specs=None):
    X = np.asarray(getattr(X, "values", X), float)
    Y = _labels(labels)
    specs = specs if specs is not None else D.class_specs
    return X, Y, list(specs)


def coefficient_step(X, D: DictionaryBank, A: CoefficientMatrix, labels,
                     cfg: DetTrainConfig, step=None) -> CoefficientMatrix:
    """Run ``cfg.inner_iters`` proximal-gradient passes over all columns of ``A``."""
    X, Y, specs = _ctx(X, labels, D, cfg)
    sizes = D.sizes
    lam, _ = cfg.effective_weights(X, len(sizes), D.K)
    rule = cfg.step_size_rule
    t0 = step if step is not None else (cfg.step_size if rule == "fixed" else None)
    An, _ = _coef_iters(X, D.matrix, A.matrix, Y, sizes, signs_of(specs), lam,
                        cfg.inner_iters, rule, t0)
    return CoefficientMatrix(split_rows(An, sizes))


def dictionary_step(X, D: DictionaryBank, A: CoefficientMatrix, cfg: DetTrainConfig,
                    theta: Optional[IncoherenceWeights] = None, step=None) -> DictionaryBank:
    """Run ``cfg.inner_iters`` projected-gradient steps on ``D``."""
    X = np.asarray(getattr(X, "values", X), float)
    sizes = D.sizes
    theta = theta or IncoherenceWeights.from_sizes(sizes)
    _, lam_D = cfg.effective_weights(X, len(sizes), D.K)
    rule = cfg.step_size_rule
    t0 = step if step is not None else (cfg.step_size if rule == "fixed" else None)
    Dn, _ = _dict_iters(X, D.matrix, A.matrix, theta.theta, lam_D, cfg.inner_iters, rule, t0)
    return DictionaryBank(split_cols(Dn, sizes), D.class_specs)


def init_dictionary(P, specs, seed) -> DictionaryBank:
    rng = np.random.default_rng(seed)
    sizes = [s.initial_atoms for s in specs]
    D = project_atoms(np.abs(rng.standard_normal((P, sum(sizes)))))
    D = D / np.linalg.norm(D, axis=0)
    return DictionaryBank(split_cols(D, sizes), specs)


def train(X, labels, specs, cfg: DetTrainConfig = DetTrainConfig()) -> DetModel:
    """Alternate coefficient and dictionary updates until the objective stalls."""
    X = np.asarray(getattr(X, "values", X), float)
    Y = _labels(labels)
    specs = list(specs)
    if Y.shape != (len(specs), X.shape[1]):
        raise DimensionMismatch(f"labels {Y.shape} vs C={len(specs)}, N={X.shape[1]}")
    signs = signs_of(specs)
    bank = init_dictionary(X.shape[0], specs, cfg.seed)
    sizes = bank.sizes
    D = bank.matrix
    A = np.zeros((sum(sizes), X.shape[1]))
    theta = IncoherenceWeights.from_sizes(sizes).theta
    lam, lam_D = cfg.effective_weights(X, len(sizes), D.shape[1])
    weights = (lam, lam_D)
    rule = cfg.step_size_rule
    tA = tD = cfg.step_size if rule == "fixed" else None

    trace = [objective_value(X, D, A, Y, cfg, sizes, weights)]
    for it in range(cfg.max_outer_iters):
        A, tA = _coef_iters(X, D, A, Y, sizes, signs, lam, cfg.inner_iters, rule, tA)
        D, tD = _dict_iters(X, D, A, theta, lam_D, cfg.inner_iters, rule, tD)
        obj = objective_value(X, D, A, Y, cfg, sizes, weights)
        if obj > trace[-1] + DESCENT_SLACK:
            raise StepDiverged(f"outer iteration {it} increased objective")
        prev = trace[-1]
        trace.append(obj)
        log.debug("det-train iter %d objective %.6g", it, obj)
        if (prev - obj) <= cfg.tol_objective * max(abs(prev), 1e-300):
            break
    return DetModel(
        DictionaryBank(split_cols(D, sizes), specs),
        CoefficientMatrix(split_rows(A, sizes)),
        trace,
        cfg,
        (tuple(float(v) for v in lam), float(lam_D)),
    )


def reconstruction_error(X, model: DetModel) -> float:
    X = np.asarray(getattr(X, "values", X), float)
    R = X - model.dictionary.matrix @ model.coefficients.matrix
    return float((R ** 2).sum() / (X ** 2).sum())


# --------------------------------------------------------------------------
# serialization

def save_model(model: DetModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for c, (Dc, Ac) in enumerate(zip(model.dictionary.blocks, model.coefficients.blocks), 1):
        write_matrix(d / f"dict_{c}.csv", Dc)
        write_matrix(d / f"coef_{c}.csv", Ac)
    write_specs(d / "classes.csv", model.dictionary.class_specs)
    meta = []
    if model.config is not None:
        for k, v in asdict(model.config).items():
            meta.append(f"{k}={v}")
    if model.weights:
        meta.append(f"effective_lambda_sparsity={list(model.weights[0])}")
        meta.append(f"effective_lambda_incoherence={fmt(model.weights[1])}")
    meta.append(f"iterations={len(model.trace) - 1}")
    meta.append(f"final_objective={fmt(model.trace[-1])}")
    meta.append("trace=" + ",".join(fmt(v) for v in model.trace))
    write_text(d / "meta.txt", meta)


def load_model(directory) -> DetModel:
    d = Path(directory)
    specs = read_specs(d / "classes.csv")
    D = [read_matrix(d / f"dict_{c}.csv") for c in range(1, len(specs) + 1)]
    A = [read_matrix(d / f"coef_{c}.csv") for c in range(1, len(specs) + 1)]
    meta = read_kv(d / "meta.txt")
    trace = [float(v) for v in meta.get("trace", "").split(",") if v]
    return DetModel(DictionaryBank(D, specs), CoefficientMatrix(A), trace)
