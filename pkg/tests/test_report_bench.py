import filecmp

import numpy as np
import pytest

from btm_disagg import bench, report
from btm_disagg.config import ToolkitConfig

TINY_BENCH = {"p": "96", "n": "120", "m": "40", "initial_atoms": "6", "max_outer_iters": "40",
              "q": "80", "burn_in": "40", "n_collect": "5", "mc_samples": "6",
              "inner_sweeps": "4", "coverage_windows": "10", "bench_seeds": "0,1"}


def test_window_svg_structure():
    t = np.linspace(0, 1, 20)
    svg = report.window_svg("w", {"truth": t, "bayes": t + 0.1, "det": t - 0.1},
                            (t - 0.5, t + 0.5))
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 3 and svg.count("<polygon") == 1
    svg = report.window_svg("flat", {"truth": np.zeros(5)})
    assert "nan" not in svg


def test_case_table_averages_seeds():
    rows = [("0", "1", "1", "2", "3", "6", "0.1", "0.2"),
            ("1", "1", "3", "2", "1", "6", "0.3", "0.2")]
    text = report.case_table(rows, 3)
    assert "| 1 | 2.00 | 2.00 | 2.00 | 6.00 | 0.2000 | 0.2000 |" in text


def test_baseline_splits_by_energy_share():
    T = np.zeros((2, 3, 4))
    T[0] = 3.0
    T[1] = 1.0
    est = bench.proportional_baseline(T, np.full((3, 2), 8.0))
    np.testing.assert_allclose(est[0], 6.0)
    np.testing.assert_allclose(est[1], 2.0)


def test_majority_threshold():
    assert bench._majority(5) == 4
    assert bench._majority(1) == 1


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    cfg = ToolkitConfig().with_overrides(TINY_BENCH)
    d = tmp_path_factory.mktemp("bench")
    a = bench.run_bench(cfg, d / "a", threads=1, scaling=False)
    bench.run_bench(cfg, d / "b", threads=4, scaling=False)
    return d, a


def test_bench_outputs_and_layout(tiny_runs):
    d, summary = tiny_runs
    for f in ("metrics.csv", "table.csv", "cases.csv", "checks.csv", "timing.txt"):
        assert (d / "a" / f).exists()
    table = (d / "a" / "table.csv").read_text().splitlines()
    assert table[0] == "method,RMSE_1,RMSE_2,RMSE_3,WRMSE_1,WRMSE_2,WRMSE_3,TER"
    assert [r.split(",")[0] for r in table[1:]] == ["B-EDS", "D-EDS", "baseline"]
    ids = [row[0] for row in summary.checks]
    assert ids == ["1", "1", "2", "3", "4", "5", "6", "9", "10"]
    cases = (d / "a" / "cases.csv").read_text().splitlines()
    assert len(cases) == 1 + 2 * 5


def test_bench_identical_across_thread_counts(tiny_runs):
    d, _ = tiny_runs
    for f in ("metrics.csv", "table.csv", "cases.csv", "checks.csv"):
        assert filecmp.cmp(d / "a" / f, d / "b" / f, shallow=False), f
