"""Flat ``key = value`` configuration shared by every command.

One file covers the generator, both engines, the Monte Carlo stage and the
bench. Blank lines and ``#`` comments are ignored; unknown keys and bad
values are rejected with their line number. Any key can be overridden on
the command line with ``--<key> <value>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .bayes_test import McConfig
from .bayes_train import BayesHyper
from .core import DataShape
from .det_disagg import DetTestConfig
from .det_train import DetTrainConfig
from .errors import InvalidConfig
from .synth import GeneratorConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_ints(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else _ints(text)


def _choice(*options) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    parse.__name__ = "|".join(options)
    return parse


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any
    group: str
    help: str


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    return "auto" if v is None else str(v)


_G, _DT, _DD, _B, _MC = (GeneratorConfig(), DetTrainConfig(), DetTestConfig(),
                         BayesHyper(), McConfig())

KEYS = [
    Key("p", int, _G.shape.P, "generator", "window length (samples per window)"),
    Key("n", int, _G.shape.N, "generator", "training windows"),
    Key("m", int, _G.shape.M, "generator", "test windows"),
    Key("c", int, _G.shape.C, "generator", "load classes, solar last"),
    Key("gamma", float, _G.gamma, "generator", "label purity in [0, 1]"),
    Key("seed", int, _G.seed, "generator", "master seed for every random stream"),
    Key("noise_sigma", float, _G.noise_sigma, "generator", "measurement noise std (kW)"),
    Key("amplitude_jitter", float, _G.amplitude_jitter, "generator", "relative amplitude jitter"),
    Key("timing_jitter", int, _G.timing_jitter, "generator", "max timing shift (samples)"),
    Key("solar_peak", float, _G.solar_peak, "generator", "solar bell peak (kW)"),
    Key("solar_width", float, _G.solar_width, "generator", "solar bell width (fraction of P)"),
    Key("initial_atoms", int, _G.initial_atoms, "generator", "atoms per class for both engines"),

    Key("lambda_sparsity", _floats, (_DT.lambda_sparsity,), "det-train",
        "group-sparsity weight, one value or one per class"),
    Key("lambda_incoherence", float, _DT.lambda_incoherence, "det-train", "incoherence weight"),
    Key("max_outer_iters", int, _DT.max_outer_iters, "det-train", "block-coordinate rounds"),
    Key("inner_iters", int, _DT.inner_iters, "det-train", "gradient steps per block update"),
    Key("step_size_rule", _choice("backtracking", "fixed"), _DT.step_size_rule, "det-train",
        "step size rule"),
    Key("step_size", _opt_float, _DT.step_size, "det-train", "fixed step (auto = 1/Lipschitz)"),
    Key("tol_objective", float, _DT.tol_objective, "det-train", "relative decrease to stop"),
    Key("scale_penalties", _bool, _DT.scale_penalties, "det-train",
        "scale penalty weights by the data's RMS window norm"),

    Key("mu", float, _DD.mu, "det-test", "l1 weight of the test-stage weights"),
    Key("q", int, _DD.q, "det-test", "number of representative columns"),
    Key("support_threshold", float, _DD.support_threshold, "det-test",
        "class active iff block norm > this times the column's largest block norm"),
    Key("weight_max_iters", int, _DD.max_iters, "det-test", "majorise-minimise rounds"),
    Key("weight_inner_iters", int, _DD.inner_iters, "det-test", "lasso steps per round"),
    Key("weight_tol", float, _DD.tol, "det-test", "relative objective gain to stop"),
    Key("nonneg_weights", _bool, _DD.nonneg_weights, "det-test", "constrain weights to w >= 0"),

    Key("lambda_d", float, _B.lambda_d, "bayes", "atom prior precision"),
    Key("a_eps", float, _B.a_eps, "bayes", "noise precision Gamma shape"),
    Key("b_eps", float, _B.b_eps, "bayes", "noise precision Gamma rate"),
    Key("a_s", float, _B.a_s, "bayes", "slab precision Gamma shape"),
    Key("b_s", float, _B.b_s, "bayes", "slab precision Gamma rate"),
    Key("a_pi", float, _B.a_pi, "bayes", "atom usage Beta a"),
    Key("b_pi", float, _B.b_pi, "bayes", "atom usage Beta b"),
    Key("a_y", float, _B.a_y, "bayes", "load presence Beta a"),
    Key("b_y", float, _B.b_y, "bayes", "load presence Beta b"),
    Key("k_init", _opt_ints, None, "bayes", "atoms per class (auto = initial_atoms)"),
    Key("burn_in", int, _B.burn_in, "bayes", "sweeps before pruning"),
    Key("n_collect", int, _B.n_collect, "bayes", "posterior snapshots kept"),
    Key("thin", int, _B.thin, "bayes", "sweeps between snapshots"),
    Key("prune_threshold", float, _B.prune_threshold, "bayes", "minimum atom usage rate"),
    Key("scheme", _choice("blocked", "single-site"), _B.scheme, "bayes",
        "Gibbs update of indicators and labels"),

    Key("mc_samples", int, _MC.L, "mc", "Monte Carlo samples per test window"),
    Key("inner_sweeps", int, _MC.inner_sweeps, "mc", "Gibbs sweeps per Monte Carlo sample"),
    Key("warm_start", _bool, _MC.warm_start, "mc",
        "continue each window's chain from the previous sample"),
    Key("band_k", float, 3.0, "mc", "band half-width in standard deviations"),

    Key("bench_seeds", _ints, (0, 1, 2, 3, 4), "bench", "seeds averaged by the bench"),
    Key("base_window", int, -1, "bench",
        "test window used for the cases (-1 = first window holding every load)"),
    Key("coverage_windows", int, 60, "bench", "noiseless test windows used for band coverage"),
    Key("threads", int, 0, "bench", "worker threads (0 = BTM_DISAGG_THREADS or all cores)"),
]
KEY_MAP = {k.name: k for k in KEYS}


class ToolkitConfig:
    """Parsed configuration; attribute access by key name."""

    def __init__(self, values: dict | None = None):
        self._v = {k.name: k.default for k in KEYS}
        for name, val in (values or {}).items():
            if name not in KEY_MAP:
                raise InvalidConfig(f"unknown key {name!r}")
            self._v[name] = val

    def __getattr__(self, name):
        try:
            return self.__dict__["_v"][name]
        except KeyError:
            raise AttributeError(name) from None

    def as_dict(self) -> dict:
        return dict(self._v)

    def with_overrides(self, raw: dict) -> "ToolkitConfig":
        vals = dict(self._v)
        for name, text in raw.items():
            vals[name] = parse_value(name, text)
        return ToolkitConfig(vals)

    # --- typed views ----------------------------------------------------

    def generator(self, seed=None) -> GeneratorConfig:
        v = self._v
        return GeneratorConfig(
            shape=DataShape(P=v["p"], N=v["n"], M=v["m"], C=v["c"]),
            gamma=v["gamma"], seed=v["seed"] if seed is None else seed,
            noise_sigma=v["noise_sigma"], amplitude_jitter=v["amplitude_jitter"],
            timing_jitter=v["timing_jitter"], solar_peak=v["solar_peak"],
            solar_width=v["solar_width"], initial_atoms=v["initial_atoms"])

    def det_train(self, seed=None) -> DetTrainConfig:
        v = self._v
        lam = v["lambda_sparsity"]
        return DetTrainConfig(
            lambda_sparsity=lam[0] if len(lam) == 1 else lam,
            lambda_incoherence=v["lambda_incoherence"], max_outer_iters=v["max_outer_iters"],
            inner_iters=v["inner_iters"], step_size_rule=v["step_size_rule"],
            step_size=v["step_size"], tol_objective=v["tol_objective"],
            seed=v["seed"] if seed is None else seed, scale_penalties=v["scale_penalties"])

    def det_test(self) -> DetTestConfig:
        v = self._v
        return DetTestConfig(mu=v["mu"], q=v["q"], support_threshold=v["support_threshold"],
                             max_iters=v["weight_max_iters"], tol=v["weight_tol"],
                             inner_iters=v["weight_inner_iters"],
                             nonneg_weights=v["nonneg_weights"])

    def bayes(self, seed=None) -> BayesHyper:
        v = self._v
        return BayesHyper(
            lambda_d=v["lambda_d"], a_eps=v["a_eps"], b_eps=v["b_eps"], a_s=v["a_s"],
            b_s=v["b_s"], a_pi=v["a_pi"], b_pi=v["b_pi"], a_y=v["a_y"], b_y=v["b_y"],
            K_init=list(v["k_init"]) if v["k_init"] else None, burn_in=v["burn_in"],
            n_collect=v["n_collect"], thin=v["thin"], prune_threshold=v["prune_threshold"],
            seed=v["seed"] if seed is None else seed, scheme=v["scheme"])

    def mc(self, seed=None) -> McConfig:
        v = self._v
        return McConfig(L=v["mc_samples"], inner_sweeps=v["inner_sweeps"],
                        seed=v["seed"] if seed is None else seed, warm_start=v["warm_start"])


def parse_value(name: str, text: str, line: int | None = None):
    where = f" (line {line})" if line is not None else ""
    key = KEY_MAP.get(name)
    if key is None:
        raise InvalidConfig(f"unknown key {name!r}{where}")
    try:
        return key.parse(str(text))
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad value for {name!r}{where}: {exc}") from None


def parse_text(text: str) -> ToolkitConfig:
    values = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {i}: expected key = value, got {raw.strip()!r}")
        name, val = (p.strip() for p in line.split("=", 1))
        values[name] = parse_value(name, val, i)
    return ToolkitConfig(values)


def load_config(path=None) -> ToolkitConfig:
    if path is None:
        return ToolkitConfig()
    return parse_text(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ToolkitConfig) -> str:
    lines = []
    group = None
    for k in KEYS:
        if k.group != group:
            group = k.group
            lines.append(f"# {group}")
        lines.append(f"{k.name} = {_render(cfg.as_dict()[k.name])}")
    return "\n".join(lines) + "\n"


def help_table() -> str:
    """One line per key with its default, for ``--help``."""
    return "\n".join(f"  {k.name:<20} default {_render(k.default):<14} {k.help}" for k in KEYS)
