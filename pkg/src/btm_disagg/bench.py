"""Benchmark protocol: both engines plus a naive baseline over several seeds.

For each seed the synthetic substation data set is generated, both engines
are trained on the partially labelled windows and evaluated on the test
windows, and the five case-study windows are scored. Everything written to
``metrics.csv``, ``table.csv``, ``cases.csv`` and ``checks.csv`` is a
deterministic function of the configuration; wall-clock measurements go to
``timing.txt`` only.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bayes_test, bayes_train, det_disagg, det_train
from .config import ToolkitConfig
from .io import fmt, write_text
from .metrics import rmse_c, ter, wrmse_c
from .synth import CaseSpec, aggregate, first_full_window, generate_dataset, make_case

log = logging.getLogger(__name__)

METHODS = ("B-EDS", "D-EDS", "baseline")
CASES = (1, 2, 3, 4, 5)


def proportional_baseline(train_truth, X_test) -> np.ndarray:
    """Split ``|x|`` by each class's share of training energy (``C x P x M``)."""
    energy = np.abs(np.asarray(train_truth)).sum(axis=(1, 2))
    share = energy / energy.sum()
    return share[:, None, None] * np.abs(np.asarray(X_test))[None]


def _wm(a):
    """``C x P x M`` -> ``C x M x P`` as the metrics expect."""
    return np.asarray(a).transpose(0, 2, 1)


@dataclass
class SeedResult:
    seed: int
    rmse: dict = field(default_factory=dict)        # method -> C array
    wrmse: dict = field(default_factory=dict)       # method -> C array (B-EDS only)
    ter: dict = field(default_factory=dict)         # method -> float
    cases: list = field(default_factory=list)       # rows (case, U_1..U_C, U_all, ter_b, ter_d)
    coverage: float = float("nan")
    det_monotone: bool = True
    det_max_increase: float = 0.0
    max_trace_gap: float = 0.0
    timing: dict = field(default_factory=dict)


def run_seed(cfg: ToolkitConfig, seed: int, threads=None, coverage_windows=60) -> SeedResult:
    gen = cfg.generator(seed)
    train, test, truth = generate_dataset(gen)
    res = SeedResult(seed)
    T = truth["test"]
    C = train.C
    t0 = time.perf_counter()

    base = proportional_baseline(truth["train"], test.X)
    _score(res, "baseline", base, T)

    dcfg = cfg.det_train(seed)
    model = det_train.train(train.X, train.Y, list(train.specs), dcfg)
    tr = np.asarray(model.trace)
    inc = np.diff(tr)
    res.det_max_increase = float(max(inc.max(initial=0.0), 0.0))
    res.det_monotone = bool((inc <= 1e-10 * np.maximum(np.abs(tr[:-1]), 1.0)).all())
    dtest = cfg.det_test()
    reps = det_disagg.select_representatives(model.coefficients, dtest)
    est_d = det_disagg.disaggregate(test.X, model, dtest, reps, threads)
    _score(res, "D-EDS", est_d, T)
    t1 = time.perf_counter()
    res.timing["det_seconds"] = t1 - t0

    hyper = cfg.bayes(seed)
    post = bayes_train.train_bayes(train, hyper)
    mc = cfg.mc(seed)
    out_b = bayes_test.disaggregate(test.X, post, mc, hyper, threads, cfg.band_k)
    _score(res, "B-EDS", out_b.mean, T, out_b.u)
    res.max_trace_gap = out_b.max_trace_gap
    t2 = time.perf_counter()
    res.timing["bayes_seconds"] = t2 - t1
    res.timing["bayes_mean_sweep_seconds"] = float(np.mean(post.sweep_times))

    # coverage on noiseless versions of the first test windows
    n = min(coverage_windows, T.shape[2])
    clean = aggregate(T[:, :, :n], train.signs)
    cov = bayes_test.disaggregate(clean, post, mc, hyper, threads, cfg.band_k)
    inside = (cov.band_lo <= T[:, :, :n]) & (T[:, :, :n] <= cov.band_hi)
    res.coverage = float(inside.mean())
    res.max_trace_gap = max(res.max_trace_gap, cov.max_trace_gap)

    # case studies on one base window
    j = first_full_window(T) if cfg.base_window < 0 else cfg.base_window
    windows, truths = [], []
    for cid in CASES:
        w, t = make_case(CaseSpec(cid, seed), test, T, gen, j)
        windows.append(w)
        truths.append(t)
    W = np.stack(windows, axis=1)
    TT = np.stack(truths, axis=2)                       # C x P x 5
    case_b = bayes_test.disaggregate(W, post, mc, hyper, threads, cfg.band_k)
    case_d = det_disagg.disaggregate(W, model, dtest, reps, threads)
    res.max_trace_gap = max(res.max_trace_gap, case_b.max_trace_gap)
    for i, cid in enumerate(CASES):
        tb = ter(_wm(case_b.mean[:, :, i:i + 1]), _wm(TT[:, :, i:i + 1]))
        td = ter(_wm(case_d[:, :, i:i + 1]), _wm(TT[:, :, i:i + 1]))
        res.cases.append((cid, *case_b.u[i], float(case_b.u_all[i]), tb, td))
    res.timing["total_seconds"] = time.perf_counter() - t0
    log.info("seed %d: TER B %.4f D %.4f baseline %.4f", seed, res.ter["B-EDS"],
             res.ter["D-EDS"], res.ter["baseline"])
    return res


def _score(res: SeedResult, method, est, truth, u=None):
    C = truth.shape[0]
    E, T = _wm(est), _wm(truth)
    res.rmse[method] = np.array([rmse_c(E[c], T[c]) for c in range(C)])
    res.ter[method] = ter(E, T)
    if u is not None:
        res.wrmse[method] = np.array([wrmse_c(E[c], T[c], u[:, c]) for c in range(C)])


@dataclass
class BenchSummary:
    seeds: list
    results: list
    checks: list            # (id, name, value, threshold, verdict)

    def mean_ter(self, method) -> float:
        return float(np.mean([r.ter[method] for r in self.results]))


def evaluate_checks(results, max_seconds=None) -> list:
    """Bench-level acceptance quantities, one row per criterion."""
    rows = []
    ter_m = {m: float(np.mean([r.ter[m] for r in results])) for m in METHODS}
    for m in ("B-EDS", "D-EDS"):
        gain = 1.0 - ter_m[m] / ter_m["baseline"]
        ok = ter_m[m] < 0.20 and gain >= 0.30
        rows.append(("1", f"{m} TER < 0.20 and >= 30% below baseline",
                     f"TER={ter_m[m]:.4f} baseline={ter_m['baseline']:.4f} gain={gain:.3f}",
                     "TER<0.20, gain>=0.30", "PASS" if ok else "FAIL"))
    ratio = ter_m["B-EDS"] / ter_m["D-EDS"]
    verdict = "PASS" if ratio <= 1.2 else ("REPORT" if ratio <= 1.5 else "FAIL")
    rows.append(("2", "B-EDS TER / D-EDS TER", f"{ratio:.3f}", "<=1.2 (report to 1.5)", verdict))

    def u_of(r, cid):
        return next(c for c in r.cases if c[0] == cid)[-3]

    mono = sum(u_of(r, 1) < u_of(r, 2) < u_of(r, 3) for r in results)
    need = _majority(len(results))
    rows.append(("3", "U_all(Case1) < U_all(Case2) < U_all(Case3)",
                 f"{mono}/{len(results)} seeds", f">={need}", "PASS" if mono >= need else "FAIL"))
    ood = sum(u_of(r, 5) > u_of(r, 1) for r in results)
    rows.append(("4", "U_all(Case5) > U_all(Case1)", f"{ood}/{len(results)} seeds",
                 f">={need}", "PASS" if ood >= need else "FAIL"))
    worst = max(float((r.wrmse["B-EDS"] - r.rmse["B-EDS"]).max()) for r in results)
    rows.append(("5", "max_c (WRMSE_c - RMSE_c), B-EDS", f"{worst:.6g}", "<=1e-9",
                 "PASS" if worst <= 1e-9 else "FAIL"))
    cov = min(r.coverage for r in results)
    rows.append(("6", "3-sigma coverage on noiseless windows (worst seed)", f"{cov:.4f}",
                 ">=0.90", "PASS" if cov >= 0.90 else "FAIL"))
    mono_d = all(r.det_monotone for r in results)
    rows.append(("9", "deterministic objective trace monotone",
                 f"max increase {max(r.det_max_increase for r in results):.3g}",
                 "<=1e-10 relative", "PASS" if mono_d else "FAIL"))
    gap = max(r.max_trace_gap for r in results)
    rows.append(("10", "max relative |sum(sv) - trace|", f"{gap:.3g}", "<=1e-8",
                 "PASS" if gap <= 1e-8 else "FAIL"))
    return rows


def _majority(n):
    # "4 of 5" scaled to the number of seeds actually run
    return max(1, int(np.ceil(0.8 * n)))


def scaling_ratio(cfg: ToolkitConfig, seed=0, sweeps=10, repeats=5, warmup=20) -> tuple:
    """Per-sweep time at ``N`` and ``2N`` windows, and their ratio.

    After ``warmup`` sweeps, ``repeats`` blocks of ``sweeps`` sweeps are
    timed and the fastest block is kept: other processes only ever add time,
    so the minimum is the least noisy estimate of the sampler's own cost.
    """
    times = []
    for n in (cfg.n, 2 * cfg.n):
        gen = cfg.with_overrides({"n": str(n)}).generator(seed)
        train, _, _ = generate_dataset(gen)
        hyper = cfg.bayes(seed)
        st = bayes_train.init_state(train, hyper)
        keys = bayes_train.column_keys(train.X, train.Y)
        for _ in range(warmup):
            st = bayes_train.gibbs_sweep(st, train, hyper, keys)
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(sweeps):
                st = bayes_train.gibbs_sweep(st, train, hyper, keys)
            best = min(best, (time.perf_counter() - t0) / sweeps)
        times.append(best)
    return times[0], times[1], times[1] / times[0]


def run_bench(cfg: ToolkitConfig, out_dir, threads=None, scaling=True) -> BenchSummary:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    seeds = list(cfg.bench_seeds)
    results = [run_seed(cfg, s, threads, cfg.coverage_windows) for s in seeds]
    checks = evaluate_checks(results)
    summary = BenchSummary(seeds, results, checks)
    write_outputs(summary, out)
    timing = [f"seed_{r.seed}_{k}={fmt(v)}" for r in results for k, v in r.timing.items()]
    if scaling:
        a, b, ratio = scaling_ratio(cfg, seeds[0])
        timing += [f"sweep_seconds_N={fmt(a)}", f"sweep_seconds_2N={fmt(b)}",
                   f"sweep_ratio={fmt(ratio)}"]
    timing.append(f"bench_seconds={fmt(time.perf_counter() - t0)}")
    write_text(out / "timing.txt", timing)
    return summary


def write_outputs(summary: BenchSummary, out: Path):
    res = summary.results
    C = len(res[0].rmse["D-EDS"])
    lines = ["seed,method,load,rmse,wrmse,ter"]
    for r in res:
        for m in METHODS:
            for c in range(C):
                w = fmt(r.wrmse[m][c]) if m in r.wrmse else ""
                lines.append(f"{r.seed},{m},{c + 1},{fmt(r.rmse[m][c])},{w},")
            lines.append(f"{r.seed},{m},all,,,{fmt(r.ter[m])}")
    write_text(out / "metrics.csv", lines)

    head = (["method"] + [f"RMSE_{c + 1}" for c in range(C)]
            + [f"WRMSE_{c + 1}" for c in range(C)] + ["TER"])
    rows = [",".join(head)]
    for m in METHODS:
        rm = np.mean([r.rmse[m] for r in res], axis=0)
        wr = (np.mean([r.wrmse[m] for r in res], axis=0) if m in res[0].wrmse else None)
        cells = [m] + [f"{v:.4f}" for v in rm]
        cells += [f"{v:.4f}" for v in wr] if wr is not None else [""] * C
        cells.append(f"{np.mean([r.ter[m] for r in res]):.4f}")
        rows.append(",".join(cells))
    write_text(out / "table.csv", rows)

    head = (["seed", "case"] + [f"U_{c + 1}" for c in range(C)]
            + ["U_all", "ter_bayes", "ter_det"])
    lines = [",".join(head)]
    for r in res:
        for row in r.cases:
            lines.append(",".join([str(r.seed), str(row[0])] + [fmt(v) for v in row[1:]]))
    write_text(out / "cases.csv", lines)

    lines = ["criterion,name,value,threshold,verdict"]
    for row in summary.checks:
        lines.append(",".join(f'"{v}"' if "," in str(v) else str(v) for v in row))
    write_text(out / "checks.csv", lines)


def format_table(summary: BenchSummary) -> str:
    res = summary.results
    C = len(res[0].rmse["D-EDS"])
    head = f"{'method':<10}" + "".join(f"{'RMSE_' + str(c + 1):>10}" for c in range(C)) \
        + "".join(f"{'WRMSE_' + str(c + 1):>10}" for c in range(C)) + f"{'TER':>9}"
    lines = [head]
    for m in METHODS:
        rm = np.mean([r.rmse[m] for r in res], axis=0)
        line = f"{m:<10}" + "".join(f"{v:>10.3f}" for v in rm)
        if m in res[0].wrmse:
            wr = np.mean([r.wrmse[m] for r in res], axis=0)
            line += "".join(f"{v:>10.3f}" for v in wr)
        else:
            line += "".join(f"{'-':>10}" for _ in range(C))
        line += f"{np.mean([r.ter[m] for r in res]):>9.4f}"
        lines.append(line)
    return "\n".join(lines)
