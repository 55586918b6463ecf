import filecmp

import numpy as np
import pytest

from btm_disagg.core import PRESENT, UNKNOWN, DataShape
from btm_disagg.errors import FormatError, InvalidCase, InvalidConfig
from btm_disagg.io import read_dataset, read_matrix, write_dataset, write_matrix
from btm_disagg.synth import (CaseSpec, GeneratorConfig, aggregate, first_full_window,
                              generate_dataset, make_case, ood_solar_template, purity)


def test_default_shapes_and_single_labels():
    cfg = GeneratorConfig()
    train, test, truth = generate_dataset(cfg)
    assert train.X.shape == (96, 360) and test.X.shape == (96, 300)
    assert ((train.Y == PRESENT).sum(axis=0) == 1).all()
    assert ((train.Y == UNKNOWN).sum(axis=0) == 2).all()
    assert truth["train"].shape == (3, 96, 360) and truth["test"].shape == (3, 96, 300)
    assert (truth["train"] >= 0).all()
    assert purity(truth["train"], train.Y) == pytest.approx(0.7, abs=0.01)


def test_pure_labels(small_gen):
    from dataclasses import replace
    train, _, truth = generate_dataset(replace(small_gen, gamma=1.0))
    T = truth["train"]
    for j in range(train.X.shape[1]):
        c = int(np.flatnonzero(train.Y[:, j] == PRESENT)[0])
        others = [o for o in range(3) if o != c]
        assert np.abs(T[others, :, j]).sum() == 0


def test_aggregate_is_signed_sum(small_data, small_gen):
    train, _, truth = small_data
    noiseless = aggregate(truth["train"], train.signs)
    resid = train.X - noiseless
    assert abs(resid.std() - small_gen.noise_sigma) < 0.1


def test_same_seed_same_bytes(tmp_path, small_gen):
    for name in ("a", "b"):
        tr, te, t = generate_dataset(small_gen)
        write_dataset(tr, t["train"], tmp_path / name)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only
    assert filecmp.cmp(tmp_path / "a" / "windows.csv", tmp_path / "b" / "windows.csv", shallow=False)


def test_round_trip(tmp_path, small_data):
    train, _, truth = small_data
    write_dataset(train, truth["train"], tmp_path / "d")
    ds, t = read_dataset(tmp_path / "d")
    np.testing.assert_array_equal(ds.X, train.X)
    np.testing.assert_array_equal(ds.Y, train.Y)
    np.testing.assert_array_equal(t, truth["train"])
    assert [s.sign for s in ds.specs] == [s.sign for s in train.specs]


def test_missing_truth_is_absent(tmp_path, small_data):
    train, _, _ = small_data
    write_dataset(train, None, tmp_path / "d")
    ds, t = read_dataset(tmp_path / "d")
    assert t is None and ds.X.shape == train.X.shape


def test_bad_label_cell_named(tmp_path, small_data):
    train, _, _ = small_data
    write_dataset(train, None, tmp_path / "d")
    p = tmp_path / "d" / "labels.csv"
    lines = p.read_text().splitlines()
    cells = lines[2].split(",")
    cells[1] = "2"
    lines[2] = ",".join(cells)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as e:
        read_dataset(tmp_path / "d")
    assert (e.value.row, e.value.col) == (2, 1)


def test_matrix_round_trip_exact(tmp_path, rng):
    M = rng.standard_normal((5, 7)) * 1e3
    write_matrix(tmp_path / "m.csv", M)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.csv"), M)


def test_non_numeric_cell(tmp_path):
    (tmp_path / "m.csv").write_text("a,b\n1,x\n")
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "m.csv")


class TestCases:
    def test_case1_identity(self, small_data, small_gen):
        _, test, truth = small_data
        j = first_full_window(truth["test"])
        w, t = make_case(CaseSpec(1, 0), test, truth["test"], small_gen, j)
        np.testing.assert_array_equal(w, test.X[:, j])
        np.testing.assert_array_equal(t, truth["test"][:, :, j])

    def test_case2_noise_variance(self):
        cfg = GeneratorConfig(shape=DataShape(P=2000, N=30, M=20, C=3))
        _, test, truth = generate_dataset(cfg)
        w1, _ = make_case(CaseSpec(1, 7), test, truth["test"], cfg)
        w2, _ = make_case(CaseSpec(2, 7), test, truth["test"], cfg)
        assert np.var(w2 - w1) == pytest.approx(16.0, rel=0.2)

    def test_case4_solar_only(self, small_data, small_gen):
        _, test, truth = small_data
        _, t = make_case(CaseSpec(4, 0), test, truth["test"], small_gen)
        assert np.abs(t[:2]).sum() == 0 and t[2].sum() > 0

    def test_case5_replaces_solar(self, small_data, small_gen):
        _, test, truth = small_data
        j = first_full_window(truth["test"])
        w, t = make_case(CaseSpec(5, 0), test, truth["test"], small_gen, j)
        np.testing.assert_array_equal(t[:2], truth["test"][:2, :, j])
        np.testing.assert_allclose(w, aggregate(t[:, :, None], test.signs)[:, 0]
                                   + (test.X[:, j] - aggregate(truth["test"][:, :, j:j + 1],
                                                               test.signs)[:, 0]))

    def test_ood_template_is_shifted(self, small_gen):
        ood = ood_solar_template(small_gen)
        for t in small_gen.solar_templates:
            assert abs(ood.center - t.center) >= 0.25
            assert ood.width >= 1.5 * t.width - 1e-12

    def test_bad_case(self, small_data, small_gen):
        with pytest.raises(InvalidCase):
            CaseSpec(6)
        _, test, truth = small_data
        empty = np.flatnonzero((np.abs(truth["test"]).sum(axis=1) == 0).any(axis=0))
        with pytest.raises(InvalidCase):
            make_case(CaseSpec(1), test, truth["test"], small_gen, int(empty[0]))


def test_generator_config_validation():
    with pytest.raises(InvalidConfig):
        GeneratorConfig(gamma=1.5)
    with pytest.raises(InvalidConfig):
        GeneratorConfig(noise_sigma=-1)
