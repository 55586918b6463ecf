"""Synthetic substation data: industrial loads plus behind-the-meter solar.

Load classes ``0 .. C-2`` are industrial and alternate between two template
families (square-wave duty cycles and multi-level step profiles). The last
class is solar, modelled as a truncated Gaussian bell and aggregated with a
negative sign.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    PRESENT,
    UNKNOWN,
    DataShape,
    LoadClassSpec,
    PartialLabelMatrix,
    default_specs,
    signs_of,
    validate_dataset,
)
from .errors import InvalidCase, InvalidConfig
from .io import read_dataset, write_dataset  # noqa: F401  (re-exported)


@dataclass(frozen=True)
class SquareWaveTemplate:
    base: float        # kW drawn while idle
    on: float          # kW added while running
    period: float      # fraction of P
    duty: float        # fraction of the period spent on
    phase: float       # fraction of P


@dataclass(frozen=True)
class StepTemplate:
    levels: tuple      # kW of each segment
    breaks: tuple      # interior breakpoints as fractions of P


@dataclass(frozen=True)
class SolarTemplate:
    peak: float        # kW
    center: float      # fraction of P
    width: float       # std-dev as a fraction of P


DEFAULT_SQUARE = (
    SquareWaveTemplate(20.0, 40.0, 0.25, 0.5, 0.0),
    SquareWaveTemplate(15.0, 45.0, 0.5, 0.4, 0.1),
    SquareWaveTemplate(25.0, 30.0, 1 / 6, 0.5, 0.05),
)
DEFAULT_STEPS = (
    StepTemplate((10.0, 45.0, 30.0, 12.0), (0.25, 0.5, 0.8)),
    StepTemplate((35.0, 15.0, 50.0, 20.0), (0.2, 0.45, 0.7)),
    StepTemplate((20.0, 40.0, 20.0), (0.35, 0.65)),
)


def default_solar_templates(peak=50.0, width=0.1):
    return (
        SolarTemplate(peak, 0.48, width),
        SolarTemplate(0.8 * peak, 0.52, 0.9 * width),
        SolarTemplate(1.1 * peak, 0.5, 1.1 * width),
    )


@dataclass(frozen=True)
class GeneratorConfig:
    shape: DataShape = DataShape(P=96, N=360, M=300, C=3)
    gamma: float = 0.7
    seed: int = 0
    noise_sigma: float = 1.0
    amplitude_jitter: float = 0.1
    timing_jitter: int = 2
    square_templates: tuple = DEFAULT_SQUARE
    step_templates: tuple = DEFAULT_STEPS
    solar_templates: Optional[tuple] = None
    solar_peak: float = 50.0
    solar_width: float = 0.1
    initial_atoms: int = 16

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidConfig(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be >= 0")
        if self.shape.N < self.shape.C:
            raise InvalidConfig("need at least one training window per class")
        if self.solar_templates is None:
            object.__setattr__(
                self, "solar_templates",
                default_solar_templates(self.solar_peak, self.solar_width),
            )
        if not self.solar_templates:
            raise InvalidConfig("at least one solar template is required")

    def specs(self) -> list[LoadClassSpec]:
        return default_specs(self.shape.C, self.initial_atoms)


@dataclass(frozen=True)
class CaseSpec:
    case_id: int
    base_seed: int = 0

    def __post_init__(self):
        if self.case_id not in (1, 2, 3, 4, 5):
            raise InvalidCase(f"case_id must be in 1..5, got {self.case_id}")


CASE_NOISE = {2: 4.0, 3: 6.0}


# --------------------------------------------------------------------------
# template rendering

def _square(t: SquareWaveTemplate, P, rng, amp_jit, time_jit):
    n = np.arange(P)
    period = max(2.0, t.period * P)
    shift = t.phase * P + rng.integers(-time_jit, time_jit + 1)
    on = ((n - shift) % period) < t.duty * period
    scale = 1.0 + amp_jit * rng.uniform(-1, 1)
    return scale * (t.base + t.on * on)


def _steps(t: StepTemplate, P, rng, amp_jit, time_jit):
    breaks = [int(round(b * P)) + int(rng.integers(-time_jit, time_jit + 1))
              for b in t.breaks]
    edges = np.clip(np.array([0, *breaks, P]), 0, P)
    out = np.empty(P)
    for lvl, a, b in zip(t.levels, edges[:-1], edges[1:]):
        out[a:b] = lvl
    out[edges[-2]:] = t.levels[-1]
    scale = 1.0 + amp_jit * rng.uniform(-1, 1)
    return scale * out


def solar_bell(peak, center, width, P):
    """Truncated Gaussian bell, zero beyond three widths from the center."""
    n = np.arange(P)
    mu, sd = center * P, max(width * P, 1e-9)
    out = peak * np.exp(-0.5 * ((n - mu) / sd) ** 2)
    out[np.abs(n - mu) > 3 * sd] = 0.0
    return out


def _solar(t: SolarTemplate, P, rng, amp_jit, time_jit):
    center = t.center + rng.integers(-time_jit, time_jit + 1) / P
    scale = 1.0 + amp_jit * rng.uniform(-1, 1)
    return solar_bell(scale * t.peak, center, t.width, P)


def ood_solar_template(cfg: GeneratorConfig) -> SolarTemplate:
    """Solar pattern unlike every training template.

    The peak is placed at least a quarter window away from all training
    centers and the width is 1.5x the widest training template.
    """
    centers = [t.center for t in cfg.solar_templates]
    lo, hi = min(centers), max(centers)
    center = hi + 0.27 if hi + 0.27 <= 0.95 else lo - 0.27
    width = 1.5 * max(t.width for t in cfg.solar_templates)
    peak = float(np.mean([t.peak for t in cfg.solar_templates]))
    return SolarTemplate(peak, center, width)


def render_load(cfg: GeneratorConfig, c: int, rng) -> np.ndarray:
    P, C = cfg.shape.P, cfg.shape.C
    aj, tj = cfg.amplitude_jitter, cfg.timing_jitter
    if c == C - 1:
        tpl = cfg.solar_templates[rng.integers(len(cfg.solar_templates))]
        return _solar(tpl, P, rng, aj, tj)
    if c % 2 == 0:
        tpl = cfg.square_templates[rng.integers(len(cfg.square_templates))]
        return _square(tpl, P, rng, aj, tj)
    tpl = cfg.step_templates[rng.integers(len(cfg.step_templates))]
    return _steps(tpl, P, rng, aj, tj)


def _compose(cfg, presence, rng):
    """Render truth (``C x P x n``) for a ``C x n`` boolean presence matrix."""
    C, n = presence.shape
    truth = np.zeros((C, cfg.shape.P, n))
    for j in range(n):
        for c in range(C):
            if presence[c, j]:
                truth[c, :, j] = render_load(cfg, c, rng)
    return truth


def aggregate(truth, signs) -> np.ndarray:
    """Signed sum over classes of a ``C x P x n`` truth array."""
    return np.tensordot(np.asarray(signs, float), truth, axes=(0, 0))


def generate_dataset(config: GeneratorConfig):
    """Generate ``(train, test, truth)``.

    ``truth`` is a dict with ``"train"`` (``C x P x N``) and ``"test"``
    (``C x P x M``) unsigned per-load ground truth.
    """
    cfg = config
    P, N, M, C = cfg.shape.P, cfg.shape.N, cfg.shape.M, cfg.shape.C
    rng = np.random.default_rng(cfg.seed)
    specs = cfg.specs()
    signs = signs_of(specs)

    # Training presence: every window carries exactly one PRESENT label.
    owner = np.arange(N) % C
    presence = np.zeros((C, N), dtype=bool)
    presence[owner, np.arange(N)] = True
    for c in range(C):
        idx = np.flatnonzero(owner == c)
        n_pure = int(round(cfg.gamma * len(idx)))
        others = [o for o in range(C) if o != c]
        subsets = [s for r in range(1, C) for s in itertools.combinations(others, r)]
        for j in idx[n_pure:]:
            for o in subsets[rng.integers(len(subsets))]:
                presence[o, j] = True
    perm = rng.permutation(N)
    owner, presence = owner[perm], presence[:, perm]

    labels = np.full((C, N), UNKNOWN, dtype=np.int8)
    labels[owner, np.arange(N)] = PRESENT
    truth_train = _compose(cfg, presence, rng)
    X = aggregate(truth_train, signs) + cfg.noise_sigma * rng.standard_normal((P, N))

    # Test windows: a uniformly chosen nonempty subset of classes each.
    subsets = [s for r in range(1, C + 1) for s in itertools.combinations(range(C), r)]
    tpres = np.zeros((C, M), dtype=bool)
    for j in range(M):
        tpres[list(subsets[rng.integers(len(subsets))]), j] = True
    truth_test = _compose(cfg, tpres, rng)
    Xt = aggregate(truth_test, signs) + cfg.noise_sigma * rng.standard_normal((P, M))

    train = validate_dataset(X, labels, specs)
    test = validate_dataset(Xt, PartialLabelMatrix.all_unknown(C, M), specs,
                            allow_unlabeled=True)
    return train, test, {"train": truth_train, "test": truth_test}


def purity(train_truth, labels) -> float:
    """Fraction of labeled windows that contain only their labeled class."""
    labels = np.asarray(labels)
    active = np.abs(train_truth).sum(axis=1) > 0
    pure = 0
    for j in range(labels.shape[1]):
        on = np.flatnonzero(labels[:, j] == PRESENT)
        pure += bool(active[:, j].sum() == len(on) and active[on, j].all())
    return pure / labels.shape[1]


def first_full_window(truth_test) -> int:
    active = np.abs(truth_test).sum(axis=1) > 0
    full = np.flatnonzero(active.all(axis=0))
    if not len(full):
        raise InvalidCase("test set has no window containing every load")
    return int(full[0])


def make_case(spec: CaseSpec, test, truth_test, config: GeneratorConfig,
              base_test_window: Optional[int] = None):
    """Build one case-study window.

    Returns ``(window, truth)`` with ``window`` of length ``P`` and ``truth``
    of shape ``C x P`` (unsigned).
    """
    X = test.X if hasattr(test, "X") else np.asarray(test)
    truth_test = np.asarray(truth_test)
    C, P = truth_test.shape[0], truth_test.shape[1]
    signs = signs_of(config.specs())
    j = first_full_window(truth_test) if base_test_window is None else base_test_window
    if not 0 <= j < X.shape[1]:
        raise InvalidCase(f"base_test_window {j} out of range")
    base_truth = truth_test[:, :, j].copy()
    if not (np.abs(base_truth).sum(axis=1) > 0).all():
        raise InvalidCase(f"test window {j} does not contain every load")
    base = X[:, j].copy()
    cid = spec.case_id
    if cid == 1:
        return base, base_truth
    if cid in CASE_NOISE:
        rng = np.random.default_rng([spec.base_seed, cid])
        return base + CASE_NOISE[cid] * rng.standard_normal(P), base_truth

    rng = np.random.default_rng([spec.base_seed, 4])
    ood = ood_solar_template(config)
    solar = solar_bell(ood.peak, ood.center, ood.width, P)
    if cid == 4:
        truth = np.zeros((C, P))
        truth[-1] = solar
        noise = config.noise_sigma * rng.standard_normal(P)
        return signs[-1] * solar + noise, truth
    truth = base_truth.copy()
    truth[-1] = solar
    window = base + signs[-1] * (solar - base_truth[-1])
    return window, truth


def with_noise(config: GeneratorConfig, sigma: float) -> GeneratorConfig:
    return replace(config, noise_sigma=sigma)
