import numpy as np
import pytest

from btm_disagg.core import (ABSENT, PRESENT, UNKNOWN, CoefficientMatrix, DataShape,
                             DictionaryBank, LoadClassSpec, PartialLabelMatrix, WindowedSeries,
                             default_specs, known_mask, signs_of, validate_dataset)
from btm_disagg.errors import DimensionMismatch, FullyUnknownColumn, NonFiniteValue


def test_validate_consistent_inputs():
    X = np.arange(8.0).reshape(4, 2)
    Y = np.array([[1, -1], [-1, 0], [-1, 1]], dtype=np.int8)
    ds = validate_dataset(X, Y, default_specs(3))
    assert ds.X.shape == (4, 2) and ds.C == 3
    assert list(ds.signs) == [1, 1, -1]


def test_fully_unknown_column_rejected():
    X = np.ones((4, 2))
    Y = np.array([[1, -1], [-1, -1], [-1, -1]], dtype=np.int8)
    with pytest.raises(FullyUnknownColumn) as e:
        validate_dataset(X, Y, default_specs(3))
    assert e.value.col == 1


def test_unlabeled_allowed_for_test_windows():
    ds = validate_dataset(np.ones((4, 2)), PartialLabelMatrix.all_unknown(3, 2),
                          default_specs(3), allow_unlabeled=True)
    assert (ds.Y == UNKNOWN).all()


def test_nan_located():
    X = np.ones((4, 3))
    X[2, 1] = np.nan
    Y = np.full((3, 3), PRESENT, np.int8)
    with pytest.raises(NonFiniteValue) as e:
        validate_dataset(X, Y, default_specs(3))
    assert (e.value.row, e.value.col) == (2, 1)


def test_shape_mismatches():
    with pytest.raises(DimensionMismatch):
        validate_dataset(np.ones((4, 2)), np.ones((3, 3), np.int8), default_specs(3))
    with pytest.raises(DimensionMismatch):
        validate_dataset(np.ones((4, 2)), np.ones((2, 2), np.int8), default_specs(3))
    with pytest.raises(DimensionMismatch):
        DataShape(P=0, N=1, M=1, C=3)


def test_known_mask_example():
    Y = PartialLabelMatrix(np.array([[UNKNOWN], [UNKNOWN], [PRESENT]], np.int8))
    omega, omega_bar = known_mask(Y)
    assert omega == [(2, 0)]
    assert omega_bar == [(0, 0), (1, 0)]


def test_known_mask_all_known_and_one_unknown_row():
    Y = PartialLabelMatrix(np.array([[1, 0], [0, 1]], np.int8))
    assert known_mask(Y)[1] == []
    Y = PartialLabelMatrix(np.array([[1, 0], [-1, -1]], np.int8))
    assert known_mask(Y)[1] == [(1, 0), (1, 1)]


def test_label_alphabet():
    with pytest.raises(ValueError):
        PartialLabelMatrix(np.array([[2]]))


def test_spec_validation_and_signs():
    with pytest.raises(ValueError):
        LoadClassSpec("x", sign=0)
    assert list(signs_of(default_specs(4))) == [1, 1, 1, -1]


def test_dictionary_bank_feasibility():
    specs = default_specs(2, 1)
    ok = DictionaryBank([np.array([[0.6], [0.8]]), np.array([[1.0], [0.0]])], specs)
    assert ok.is_feasible() and ok.K == 2 and ok.P == 2
    bad = DictionaryBank([np.array([[0.9], [0.9]]), np.array([[1.0], [0.0]])], specs)
    assert not bad.is_feasible()
    with pytest.raises(DimensionMismatch):
        DictionaryBank([np.ones((2, 1)), np.ones((3, 1))], specs)


def test_coefficients_signs_and_immutability():
    A = CoefficientMatrix([np.array([[1.0, 0.0]]), np.array([[-2.0, 0.0]])])
    assert A.satisfies_signs([1, -1]) and not A.satisfies_signs([1, 1])
    with pytest.raises(ValueError):
        A.blocks[0][0, 0] = 5.0
    w = WindowedSeries(np.ones(3))
    assert w.values.shape == (3, 1)
    assert ABSENT == 0
