"""Command-line interface: ``btm-disagg <command> [options] [--<key> <value> ...]``.

Commands
    gen           write synthetic train/test data sets with ground truth
    train-det     fit the deterministic dictionary model
    train-bayes   run the Gibbs sampler and store posterior snapshots
    disagg-det    per-load estimates for test windows
    disagg-bayes  per-load predictive mean, confidence band and uncertainty
    eval          RMSE / WRMSE / TER against ground truth
    report        SVG plots per (window, load) and a case-study table
    bench         the full multi-seed protocol with acceptance checks

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 solver error,
5 missing or mismatched model/data.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bayes_test, bayes_train, bench, det_disagg, det_train, report
from .config import KEYS, ToolkitConfig, help_table, load_config
from .errors import (DimensionMismatch, DisaggError, EmptyPosterior, FormatError, InvalidCase,
                     InvalidConfig, ZeroTruth)
from .io import fmt, read_dataset, read_kv, read_matrix, write_dataset, write_matrix, write_text
from .metrics import report as metric_report
from .synth import generate_dataset, purity

log = logging.getLogger("btm_disagg")

EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_DATA = 2, 3, 4, 5


class MissingInput(DisaggError, FileNotFoundError):
    """A model or data path named on the command line does not exist."""


def _need(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


# --------------------------------------------------------------------------
# argument parsing

def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    g = p.add_argument_group("configuration keys (override the config file)")
    for k in KEYS:
        g.add_argument(f"--{k.name}", dest=f"key_{k.name}", metavar="V",
                       help=f"{k.help} (default: {_default_text(k)})")


def _default_text(k) -> str:
    from .config import _render
    return _render(k.default).replace("%", "%%")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="btm-disagg", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Substation energy disaggregation with behind-the-meter solar.",
        epilog="configuration keys and defaults:\n" + help_table().replace("%", "%%"))
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, helptext):
        p = sub.add_parser(name, help=helptext, description=helptext)
        _add_config_args(p)
        return p

    p = cmd("gen", "generate synthetic train/test data sets")
    p.add_argument("--out", required=True)

    for name, what in (("train-det", "deterministic"), ("train-bayes", "Bayesian")):
        p = cmd(name, f"train the {what} engine")
        p.add_argument("--data", required=True, help="training data set directory")
        p.add_argument("--out", required=True, help="model directory")

    for name in ("disagg-det", "disagg-bayes"):
        p = cmd(name, "disaggregate test windows")
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True, help="data set directory or windows CSV")
        p.add_argument("--out", required=True)

    p = cmd("eval", "score estimates against ground truth")
    p.add_argument("--truth", required=True, help="data set directory or truth directory")
    p.add_argument("--det", help="disagg-det output directory")
    p.add_argument("--bayes", help="disagg-bayes output directory")
    p.add_argument("--out", required=True, help="output directory for metrics.csv")

    p = cmd("report", "render SVG plots and the case table")
    p.add_argument("--truth", required=True)
    p.add_argument("--det")
    p.add_argument("--bayes")
    p.add_argument("--windows", default="0", help="comma-separated window indices")
    p.add_argument("--cases", help="cases.csv written by bench")
    p.add_argument("--out", required=True)

    p = cmd("bench", "run the multi-seed protocol")
    p.add_argument("--out", required=True)
    p.add_argument("--no-scaling", action="store_true", help="skip the sweep-time scaling run")
    return ap


def resolve_config(args) -> ToolkitConfig:
    cfg = load_config(args.config) if args.config else ToolkitConfig()
    raw = {k.name: getattr(args, f"key_{k.name}") for k in KEYS
           if getattr(args, f"key_{k.name}", None) is not None}
    return cfg.with_overrides(raw)


def _threads(cfg):
    return cfg.threads if cfg.threads > 0 else None


# --------------------------------------------------------------------------
# input helpers

def _windows(path) -> np.ndarray:
    """``P x M`` windows from a data set directory or a bare windows CSV."""
    p = _need(path, "test data")
    if p.is_dir():
        p = _need(p / "windows.csv", "windows.csv")
    return read_matrix(p).T


def _truth(path, C=None) -> np.ndarray:
    """``C x P x M`` truth from a truth directory or a data set holding one."""
    p = _need(path, "truth")
    if (p / "truth").is_dir():
        p = p / "truth"
    files = sorted(p.glob("load_*.csv"), key=lambda f: int(f.stem.split("_")[1]))
    if not files:
        raise MissingInput(f"no load_<c>.csv truth files in {p}")
    return np.stack([read_matrix(f).T for f in files])


def _per_load(directory, prefix, C=None) -> np.ndarray:
    d = _need(directory, "estimate directory")
    files = sorted(d.glob(f"{prefix}_*.csv"), key=lambda f: int(f.stem.rsplit("_", 1)[1]))
    if not files:
        raise MissingInput(f"no {prefix}_<c>.csv files in {d}")
    return np.stack([read_matrix(f).T for f in files])


def _header(P):
    return [f"t{i}" for i in range(P)]


# --------------------------------------------------------------------------
# commands

def cmd_gen(args, cfg):
    gen = cfg.generator()
    train, test, truth = generate_dataset(gen)
    out = Path(args.out)
    write_dataset(train, truth["train"], out / "train")
    write_dataset(test, truth["test"], out / "test")
    for part in ("train", "test"):
        for c, tc in enumerate(truth[part], 1):
            write_matrix(out / "truth" / part / f"load_{c}.csv", tc.T, _header(gen.shape.P))
    print(f"train: {train.X.shape[1]} windows x {train.X.shape[0]} samples, {train.C} loads")
    print(f"test:  {test.X.shape[1]} windows x {test.X.shape[0]} samples")
    print(f"label purity: {100 * purity(truth['train'], train.Y):.1f}%")
    return 0


def cmd_train_det(args, cfg):
    ds, _ = read_dataset(_need(args.data, "training data"), allow_unlabeled=False)
    t0 = time.perf_counter()
    model = det_train.train(ds.X, ds.Y, list(ds.specs), cfg.det_train())
    secs = time.perf_counter() - t0
    det_train.save_model(model, args.out)
    print(f"iterations: {len(model.trace) - 1}")
    print(f"final objective: {model.trace[-1]:.6g}")
    print(f"wall-clock: {secs:.2f} s")
    return 0


def cmd_train_bayes(args, cfg):
    ds, _ = read_dataset(_need(args.data, "training data"), allow_unlabeled=False)
    t0 = time.perf_counter()
    post = bayes_train.train_bayes(ds, cfg.bayes())
    secs = time.perf_counter() - t0
    bayes_train.save_posterior(post, args.out)
    ll = post.loglik_trace
    print(f"sweeps: {len(ll)}, snapshots: {len(post.collected_samples)}, "
          f"atoms per load: {post.final_K}")
    print(f"log-likelihood: first {ll[0]:.6g}, last {ll[-1]:.6g}, max {max(ll):.6g}")
    print(f"per-sweep time: {np.mean(post.sweep_times) * 1e3:.2f} ms")
    print(f"wall-clock: {secs:.2f} s")
    return 0


def cmd_disagg_det(args, cfg):
    model = det_train.load_model(_need(args.model, "deterministic model"))
    X = _windows(args.data)
    if X.shape[0] != model.dictionary.matrix.shape[0]:
        raise DimensionMismatch(f"windows of length {X.shape[0]}, "
                                f"model atoms of length {model.dictionary.matrix.shape[0]}")
    tc = cfg.det_test()
    reps = det_disagg.select_representatives(model.coefficients, tc)
    est = det_disagg.disaggregate(X, model, tc, reps, _threads(cfg))
    out = Path(args.out)
    for c, e in enumerate(est, 1):
        write_matrix(out / f"load_{c}.csv", e.T, _header(X.shape[0]))
    signs = np.array([s.sign for s in model.dictionary.class_specs], float)
    infeasible = int((est < -1e-9).sum())
    write_text(out / "meta.txt", [
        "method=D-EDS", f"windows={X.shape[1]}", f"q={reps.q}",
        "representatives=" + ",".join(str(i) for i in reps.source_indices),
        f"mu={tc.mu}", f"nonneg_weights={tc.nonneg_weights}",
        f"negative_entries={infeasible}",
        "signs=" + ",".join(str(int(s)) for s in signs)])
    print(f"disaggregated {X.shape[1]} windows into {est.shape[0]} loads -> {out}")
    return 0


def cmd_disagg_bayes(args, cfg):
    post = bayes_train.load_posterior(_need(args.model, "Bayesian model"))
    X = _windows(args.data)
    P = post.collected_samples[0].atoms.shape[0] if post.collected_samples else None
    if P is not None and X.shape[0] != P:
        raise DimensionMismatch(f"windows of length {X.shape[0]}, model atoms of length {P}")
    res = bayes_test.disaggregate(X, post, cfg.mc(), post.hyper, _threads(cfg), cfg.band_k)
    out = Path(args.out)
    C = res.mean.shape[0]
    for c in range(C):
        write_matrix(out / f"mean_{c + 1}.csv", res.mean[c].T, _header(X.shape[0]))
        write_matrix(out / f"band_lo_{c + 1}.csv", res.band_lo[c].T, _header(X.shape[0]))
        write_matrix(out / f"band_hi_{c + 1}.csv", res.band_hi[c].T, _header(X.shape[0]))
    write_matrix(out / "uncertainty.csv", np.column_stack([res.u, res.u_all]),
                 [f"U_{c + 1}" for c in range(C)] + ["U_all"])
    write_text(out / "meta.txt", [
        "method=B-EDS", f"windows={X.shape[1]}", f"mc_samples={cfg.mc_samples}",
        f"inner_sweeps={cfg.inner_sweeps}", f"warm_start={cfg.warm_start}",
        f"band_k={cfg.band_k}", f"max_trace_gap={fmt(res.max_trace_gap)}"])
    print(f"disaggregated {X.shape[1]} windows into {C} loads -> {out}")
    print(f"mean U_all: {res.u_all.mean():.4g}")
    return 0


def _check_shape(est, truth, what):
    if est.shape != truth.shape:
        raise DimensionMismatch(f"{what} estimates have shape {est.shape} "
                                f"(loads x samples x windows), truth has {truth.shape}")


def cmd_eval(args, cfg):
    truth = _truth(args.truth)
    if not args.det and not args.bayes:
        raise MissingInput("eval needs --det and/or --bayes")
    lines = ["method,load,rmse,wrmse,ter"]
    summary = []
    for method, path in (("D-EDS", args.det), ("B-EDS", args.bayes)):
        if not path:
            continue
        if method == "D-EDS":
            est, u = _per_load(path, "load"), None
        else:
            est = _per_load(path, "mean")
            u = read_matrix(_need(Path(path) / "uncertainty.csv", "uncertainty.csv"))
            u = u[:, :truth.shape[0]]
        _check_shape(est, truth, method)
        if u is not None and u.shape[0] != truth.shape[2]:
            raise DimensionMismatch(f"{u.shape[0]} uncertainty rows, {truth.shape[2]} windows")
        m = metric_report(est.transpose(0, 2, 1), truth.transpose(0, 2, 1), u)
        for c in range(truth.shape[0]):
            w = fmt(m.wrmse[c]) if m.wrmse is not None else ""
            lines.append(f"{method},{c + 1},{fmt(m.rmse[c])},{w},")
        lines.append(f"{method},overall,,,{fmt(m.ter)}")
        summary.append(f"{method}: TER {m.ter:.4f}, RMSE " + " ".join(f"{v:.3f}" for v in m.rmse))
    out = Path(args.out)
    write_text(out / "metrics.csv", lines)
    print("\n".join(summary))
    return 0


def cmd_report(args, cfg):
    truth = _truth(args.truth)
    try:
        windows = [int(v) for v in args.windows.split(",") if v.strip()]
    except ValueError:
        raise InvalidConfig(f"--windows expects integers, got {args.windows!r}") from None
    M = truth.shape[2]
    bad = [j for j in windows if not 0 <= j < M]
    if bad:
        raise DimensionMismatch(f"windows {bad} outside 0..{M - 1}")
    det = bayes = None
    if args.det:
        det = _per_load(args.det, "load")
        _check_shape(det, truth, "D-EDS")
    if args.bayes:
        bayes = tuple(_per_load(args.bayes, p) for p in ("mean", "band_lo", "band_hi"))
        for b in bayes:
            _check_shape(b, truth, "B-EDS")
    out = Path(args.out)
    paths = report.render_windows(out, truth, windows, det, bayes)
    print(f"wrote {len(paths)} SVG plots to {out}")
    if args.cases:
        text = _need(args.cases, "cases table").read_text().splitlines()
        rows = [line.split(",") for line in text[1:] if line.strip()]
        C = len(text[0].split(",")) - 5
        table = report.case_table(rows, C)
        write_text(out / "cases.md", [table.rstrip("\n")])
        print(table, end="")
    return 0


def cmd_bench(args, cfg):
    summary = bench.run_bench(cfg, args.out, _threads(cfg), scaling=not args.no_scaling)
    print(bench.format_table(summary))
    for row in summary.checks:
        print(f"[{row[4]}] criterion {row[0]}: {row[1]}: {row[2]} (need {row[3]})")
    timing = read_kv(Path(args.out) / "timing.txt")
    print(f"bench wall-clock: {float(timing['bench_seconds']):.1f} s")
    return 0


COMMANDS = {
    "gen": cmd_gen, "train-det": cmd_train_det, "train-bayes": cmd_train_bayes,
    "disagg-det": cmd_disagg_det, "disagg-bayes": cmd_disagg_bayes, "eval": cmd_eval,
    "report": cmd_report, "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except InvalidConfig as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInput, DimensionMismatch, EmptyPosterior, ZeroTruth, InvalidCase) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DisaggError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
