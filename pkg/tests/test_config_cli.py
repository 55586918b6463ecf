import subprocess
import sys

import numpy as np
import pytest

from btm_disagg import cli
from btm_disagg.config import (KEYS, ToolkitConfig, dump_config, help_table, load_config,
                               parse_text)
from btm_disagg.errors import InvalidConfig
from btm_disagg.io import read_kv, read_matrix

SMALL = ["--p", "96", "--n", "90", "--m", "12", "--initial_atoms", "6"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_parse_and_defaults():
    cfg = parse_text("# comment\np = 48\ngamma = 0.5  # trailing\nscheme = single-site\n")
    assert cfg.p == 48 and cfg.gamma == 0.5 and cfg.scheme == "single-site"
    assert cfg.n == 360
    assert cfg.generator().shape.P == 48
    assert cfg.bayes().scheme == "single-site"


@pytest.mark.parametrize("text,line", [("p = 96\nbogus = 1\n", 2), ("gamma = x\n", 1),
                                       ("scheme = magic\n", 1), ("nonsense\n", 1)])
def test_bad_lines_name_their_number(text, line):
    with pytest.raises(InvalidConfig, match=f"line {line}"):
        parse_text(text)


def test_dump_round_trip(tmp_path):
    cfg = ToolkitConfig().with_overrides({"lambda_sparsity": "0.2,0.3,0.4", "k_init": "5",
                                          "warm_start": "false"})
    (tmp_path / "c.cfg").write_text(dump_config(cfg))
    back = load_config(tmp_path / "c.cfg")
    assert back.as_dict() == cfg.as_dict()
    assert back.det_train().lambda_sparsity == (0.2, 0.3, 0.4)
    assert back.bayes().K_init == [5]
    assert back.mc().warm_start is False


def test_typed_views_follow_keys():
    cfg = ToolkitConfig().with_overrides({"mu": "0.3", "q": "7", "mc_samples": "9",
                                          "nonneg_weights": "no"})
    assert cfg.det_test().mu == 0.3 and cfg.det_test().q == 7
    assert cfg.det_test().nonneg_weights is False
    assert cfg.mc(seed=4).L == 9 and cfg.mc(seed=4).seed == 4


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        run("--help")
    out = capsys.readouterr().out
    for k in KEYS:
        assert k.name in out
    assert out.count("default") >= len(KEYS)
    with pytest.raises(SystemExit):
        run("gen", "--help")
    sub = capsys.readouterr().out
    for k in KEYS:
        assert f"--{k.name}" in sub


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "btm_disagg.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "bench" in r.stdout


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """gen + both trainings + both disaggregations, once."""
    d = tmp_path_factory.mktemp("cli")
    assert run("gen", "--out", d / "data", *SMALL) == 0
    assert run("train-det", "--data", d / "data" / "train", "--out", d / "md",
               "--max_outer_iters", 30, *SMALL) == 0
    assert run("train-bayes", "--data", d / "data" / "train", "--out", d / "mb",
               "--burn_in", 50, "--n_collect", 50, "--thin", 1, *SMALL) == 0
    assert run("disagg-det", "--model", d / "md", "--data", d / "data" / "test",
               "--out", d / "ed", "--q", 60) == 0
    assert run("disagg-bayes", "--model", d / "mb", "--data", d / "data" / "test",
               "--out", d / "eb", "--mc_samples", 5, "--inner_sweeps", 3) == 0
    return d


def test_gen_layout_and_purity(tmp_path, capsys):
    assert run("gen", "--out", tmp_path / "g", "--gamma", 0.7, *SMALL) == 0
    out = capsys.readouterr().out
    assert "purity: 70.0%" in out
    for sub in ("train", "test", "truth"):
        assert (tmp_path / "g" / sub).is_dir()
    assert (tmp_path / "g" / "truth" / "test" / "load_3.csv").exists()
    assert (tmp_path / "g" / "test" / "truth" / "load_1.csv").exists()


def test_gen_bad_key_exit_2(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("p = 96\nwhatever = 3\n")
    assert run("gen", "--config", tmp_path / "bad.cfg", "--out", tmp_path / "x") == 2
    assert "line 2" in capsys.readouterr().err
    assert run("gen", "--out", tmp_path / "x", "--gamma", "lots") == 2


def test_gen_io_error_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert run("gen", "--out", blocker / "sub", *SMALL) == 3


def test_train_outputs(workdir):
    meta = read_kv(workdir / "md" / "meta.txt")
    trace = [float(v) for v in meta["trace"].split(",")]
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(trace, trace[1:]))
    snaps = sorted(p.name for p in (workdir / "mb").glob("snapshot_*"))
    assert len(snaps) == 50


def test_disagg_outputs(workdir):
    for c in (1, 2, 3):
        assert read_matrix(workdir / "ed" / f"load_{c}.csv").shape == (12, 96)
        for p in ("mean", "band_lo", "band_hi"):
            assert read_matrix(workdir / "eb" / f"{p}_{c}.csv").shape == (12, 96)
    u = read_matrix(workdir / "eb" / "uncertainty.csv")
    assert u.shape == (12, 4)
    np.testing.assert_allclose(u[:, 3], u[:, :3].sum(axis=1), rtol=1e-12)
    assert (workdir / "ed" / "meta.txt").exists()


def test_eval_metrics(workdir):
    assert run("eval", "--truth", workdir / "data" / "test", "--det", workdir / "ed",
               "--bayes", workdir / "eb", "--out", workdir / "ev") == 0
    lines = (workdir / "ev" / "metrics.csv").read_text().splitlines()
    assert lines[0] == "method,load,rmse,wrmse,ter"
    assert len(lines) == 1 + 2 * 4
    assert any(l.startswith("B-EDS,overall") for l in lines)


def test_eval_shape_mismatch_exit_5(workdir, capsys):
    assert run("eval", "--truth", workdir / "data" / "train", "--det", workdir / "ed",
               "--out", workdir / "ev2") == 5
    assert "shape" in capsys.readouterr().err


def test_missing_model_exit_5(workdir):
    assert run("disagg-det", "--model", workdir / "nope", "--data", workdir / "data" / "test",
               "--out", workdir / "x") == 5
    assert run("disagg-bayes", "--model", workdir / "nope", "--data",
               workdir / "data" / "test", "--out", workdir / "x") == 5


def test_wrong_window_length_exit_5(workdir, tmp_path):
    (tmp_path / "w.csv").write_text("a,b\n1,2\n")
    assert run("disagg-det", "--model", workdir / "md", "--data", tmp_path / "w.csv",
               "--out", tmp_path / "x") == 5


def test_report_svgs(workdir):
    assert run("report", "--truth", workdir / "data" / "test", "--det", workdir / "ed",
               "--bayes", workdir / "eb", "--windows", "0,2", "--out", workdir / "rep") == 0
    svgs = sorted((workdir / "rep").glob("*.svg"))
    assert len(svgs) == 2 * 3
    text = svgs[0].read_text()
    assert text.count("<polyline") == 3 and text.count('class="band"') == 1
    assert run("report", "--truth", workdir / "data" / "test", "--windows", "99",
               "--out", workdir / "rep2") == 5
