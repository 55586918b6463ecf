"""Shared data model: measurement windows, partial labels, dictionaries,
coefficients and estimates.

Conventions
-----------
* Windows are stored column-wise: ``values[:, j]`` is the j-th window of
  length ``P``. The CSV layout is the transpose (one window per row).
* Labels are a ``C x N`` int8 matrix over ``{PRESENT, ABSENT, UNKNOWN}``.
* A generator (solar) class has ``sign = -1``. Per-load quantities are always
  stored unsigned; the aggregate is ``sum_c sign_c * load_c``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, FullyUnknownColumn, NonFiniteValue

PRESENT = 1
ABSENT = 0
UNKNOWN = -1

NORM_SLACK = 1e-9
NONNEG_SLACK = 1e-12
SIGN_SLACK = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataShape:
    P: int
    N: int
    M: int
    C: int

    def __post_init__(self):
        if self.P < 1 or self.N < 1 or self.M < 0 or self.C < 2:
            raise DimensionMismatch(
                f"invalid shape P={self.P} N={self.N} M={self.M} C={self.C}"
            )


@dataclass(frozen=True)
class WindowedSeries:
    """``P x N`` matrix of measurement windows (kW)."""

    values: np.ndarray
    timestamps: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise DimensionMismatch(f"windows must be 2-D, got ndim={v.ndim}")
        object.__setattr__(self, "values", _frozen(v))
        if self.timestamps is not None and len(self.timestamps) != v.shape[1]:
            raise DimensionMismatch("one timestamp per window required")

    @property
    def P(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def check_finite(self):
        bad = np.argwhere(~np.isfinite(self.values))
        if len(bad):
            r, c = bad[0]
            raise NonFiniteValue(int(r), int(c))


@dataclass(frozen=True)
class PartialLabelMatrix:
    """Ternary ``C x N`` label matrix; ``UNKNOWN`` marks the entries outside Omega."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2:
            raise DimensionMismatch("label matrix must be 2-D (C x N)")
        if not np.isin(e, (PRESENT, ABSENT, UNKNOWN)).all():
            raise ValueError("labels must be in {1, 0, -1 (unknown)}")
        object.__setattr__(self, "entries", _frozen(e, np.int8))

    @property
    def C(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]

    @property
    def known(self) -> np.ndarray:
        return self.entries != UNKNOWN

    def check_columns(self):
        empty = np.flatnonzero(~self.known.any(axis=0))
        if len(empty):
            raise FullyUnknownColumn(int(empty[0]))

    @classmethod
    def all_unknown(cls, C: int, N: int) -> "PartialLabelMatrix":
        return cls(np.full((C, N), UNKNOWN, dtype=np.int8))


@dataclass(frozen=True)
class LoadClassSpec:
    name: str
    sign: int = 1
    initial_atoms: int = 8

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.initial_atoms < 1:
            raise ValueError("initial_atoms must be >= 1")


def default_specs(C: int = 3, initial_atoms: int = 8) -> list[LoadClassSpec]:
    """Industrial loads followed by one solar (generator) class."""
    specs = [LoadClassSpec(f"load{c + 1}", 1, initial_atoms) for c in range(C - 1)]
    specs.append(LoadClassSpec("solar", -1, initial_atoms))
    return specs


def signs_of(specs: Sequence[LoadClassSpec]) -> np.ndarray:
    return np.array([s.sign for s in specs], dtype=float)


@dataclass(frozen=True)
class DictionaryBank:
    """Per-class blocks of nonnegative atoms, block ``c`` is ``P x K_c``."""

    blocks: tuple
    class_specs: tuple

    def __post_init__(self):
        blocks = tuple(_frozen(b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "class_specs", tuple(self.class_specs))
        if len(blocks) != len(self.class_specs):
            raise DimensionMismatch("one block per class spec required")
        if len({b.shape[0] for b in blocks}) > 1:
            raise DimensionMismatch("all blocks must share the window length P")

    @property
    def sizes(self) -> list[int]:
        return [b.shape[1] for b in self.blocks]

    @property
    def P(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def K(self) -> int:
        return sum(self.sizes)

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack(self.blocks)

    def is_feasible(self) -> bool:
        D = self.matrix
        return bool(
            (D >= -NONNEG_SLACK).all()
            and (np.linalg.norm(D, axis=0) <= 1 + NORM_SLACK).all()
        )


@dataclass(frozen=True)
class CoefficientMatrix:
    """Block-structured ``K x N`` coefficients, block ``c`` is ``K_c x N``."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(_frozen(b) for b in self.blocks)
        if len({b.shape[1] for b in blocks}) > 1:
            raise DimensionMismatch("all coefficient blocks must share N")
        object.__setattr__(self, "blocks", blocks)

    @property
    def sizes(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    @property
    def N(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack(self.blocks)

    def satisfies_signs(self, signs) -> bool:
        return all((s * b >= -SIGN_SLACK).all() for s, b in zip(signs, self.blocks))


def split_rows(A: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    return np.split(np.asarray(A), np.cumsum(sizes)[:-1], axis=0)


def split_cols(D: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    return np.split(np.asarray(D), np.cumsum(sizes)[:-1], axis=1)


@dataclass(frozen=True)
class DisaggregationEstimate:
    """Unsigned per-load estimates for one window (``C`` vectors of length ``P``)."""

    per_load: np.ndarray
    method_tag: str = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "per_load", _frozen(np.atleast_2d(self.per_load)))
        if not np.isfinite(self.per_load).all():
            raise ValueError("estimate contains non-finite entries")


@dataclass(frozen=True)
class UncertainEstimate:
    mean: np.ndarray          # C x P
    covariance: np.ndarray    # C x P x P
    u_per_load: np.ndarray    # C
    u_all: float
    band_lo: np.ndarray       # C x P
    band_hi: np.ndarray       # C x P

    def __post_init__(self):
        for name in ("mean", "covariance", "u_per_load", "band_lo", "band_hi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class Dataset:
    """Validated bundle of windows, labels and class specs."""

    windows: WindowedSeries
    labels: PartialLabelMatrix
    specs: tuple = field(default_factory=tuple)

    @property
    def X(self) -> np.ndarray:
        return self.windows.values

    @property
    def Y(self) -> np.ndarray:
        return self.labels.entries

    @property
    def C(self) -> int:
        return len(self.specs)

    @property
    def signs(self) -> np.ndarray:
        return signs_of(self.specs)


def validate_dataset(windows, labels, specs, allow_unlabeled=False) -> Dataset:
    """Check every invariant of the inputs and return an immutable handle.

    ``allow_unlabeled`` admits fully unknown columns, which is how test
    windows are represented.
    """
    if not isinstance(windows, WindowedSeries):
        windows = WindowedSeries(windows)
    if not isinstance(labels, PartialLabelMatrix):
        labels = PartialLabelMatrix(labels)
    specs = tuple(specs)
    if len(specs) < 2:
        raise DimensionMismatch(f"need at least 2 load classes, got {len(specs)}")
    if labels.C != len(specs):
        raise DimensionMismatch(
            f"labels have {labels.C} rows but {len(specs)} class specs were given"
        )
    if labels.N != windows.N:
        raise DimensionMismatch(
            f"labels have {labels.N} columns but there are {windows.N} windows"
        )
    windows.check_finite()
    if not allow_unlabeled:
        labels.check_columns()
    return Dataset(windows, labels, specs)


def known_mask(labels: PartialLabelMatrix):
    """Return ``(omega, omega_bar)`` as sorted lists of ``(class, window)`` pairs."""
    known = np.asarray(labels.known)
    omega = [tuple(int(i) for i in ix) for ix in np.argwhere(known)]
    omega_bar = [tuple(int(i) for i in ix) for ix in np.argwhere(~known)]
    return omega, omega_bar
