"""Gibbs sampler for Bayesian dictionary learning with partial labels.

Model, for window ``j`` and class ``c`` with sign ``sgn_c``::

    x_j = sum_c sgn_c * D_c (z_cj * s_cj) * y_cj + eps_j
    d_k ~ N(0, I / lambda_d)          eps_j ~ N(0, I / gamma_eps)
    s_cj ~ N(0, I / gamma_s[c])       z_kj ~ Bern(pi_z[k])   y_cj ~ Bern(pi_y[c])
    gamma_eps, gamma_s ~ Gamma        pi_z, pi_y ~ Beta

Known labels clamp ``y``. Carrying the class sign in the likelihood keeps
every per-load quantity unsigned (solar as a generation magnitude); since
the atom and slab priors are symmetric this is a relabelling of the
printed model, not a change to it.

All Bernoulli draws compare log-odds against a logistic variate, so no
probability is ever exponentiated.
"""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import PRESENT, UNKNOWN, Dataset, LoadClassSpec, split_cols, split_rows
from .errors import IndexOutOfRange, InvalidConfig, NumericalUnderflow
from .io import fmt, read_kv, read_matrix, read_specs, write_matrix, write_specs, write_text

log = logging.getLogger(__name__)

ALL_BLOCKS = ("atoms", "s", "z", "y", "noise", "slab", "pi_z", "pi_y")


@dataclass(frozen=True)
class BayesHyper:
    """Prior and sampler settings.

    ``sample_blocks`` selects which conditionals a sweep draws; the others
    stay fixed, which is how tiny instances are checked against exact
    enumeration.
    """

    lambda_d: float = 1.0
    a_eps: float = 1e-6
    b_eps: float = 1e-6
    a_s: float = 1e-6
    b_s: float = 1e-6
    a_pi: float = 1.0
    b_pi: float = 1.0
    a_y: float = 1.0
    b_y: float = 1.0
    K_init: Optional[Sequence[int]] = None
    burn_in: int = 600
    n_collect: int = 50
    thin: int = 2
    prune_threshold: float = 0.01
    seed: int = 0
    sample_blocks: tuple = ALL_BLOCKS
    scheme: str = "blocked"

    def __post_init__(self):
        pos = [self.lambda_d, self.a_eps, self.b_eps, self.a_s, self.b_s,
               self.a_pi, self.b_pi, self.a_y, self.b_y]
        if min(pos) <= 0:
            raise InvalidConfig("all prior shape/rate parameters must be > 0")
        if self.burn_in < 1 or self.n_collect < 1 or self.thin < 1:
            raise InvalidConfig("burn_in, n_collect and thin must be >= 1")
        if not 0 <= self.prune_threshold < 1:
            raise InvalidConfig("prune_threshold must lie in [0, 1)")
        if self.scheme not in ("blocked", "single-site"):
            raise InvalidConfig(f"unknown Gibbs scheme {self.scheme!r}")
        unknown = set(self.sample_blocks) - set(ALL_BLOCKS)
        if unknown:
            raise InvalidConfig(f"unknown sample blocks {sorted(unknown)}")

    def sizes(self, specs) -> list[int]:
        if self.K_init is None:
            return [s.initial_atoms for s in specs]
        k = list(np.atleast_1d(self.K_init).astype(int))
        return k * len(specs) if len(k) == 1 else k


@dataclass
class GibbsState:
    """Mutable sampler state; per-atom arrays are ordered class block by block."""

    atoms: np.ndarray        # P x K, unsigned
    sizes: list
    signs: np.ndarray        # C
    z: np.ndarray            # K x N (0/1 floats)
    s: np.ndarray            # K x N
    y: np.ndarray            # C x N (0/1 floats)
    gamma_eps: float
    gamma_s: np.ndarray      # C
    pi_z: np.ndarray         # K
    pi_y: np.ndarray         # C
    sweep: int = 0

    @property
    def owner(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.sizes)), self.sizes)

    @property
    def atom_signs(self) -> np.ndarray:
        return self.signs[self.owner]

    def omega(self) -> np.ndarray:
        """Effective coefficients ``z * s * y`` (K x N)."""
        return self.z * self.s * self.y[self.owner]

    def per_load(self) -> np.ndarray:
        """Unsigned per-class reconstructions, ``C x P x N``."""
        W = self.omega()
        return np.stack([Dc @ Wc for Dc, Wc in zip(split_cols(self.atoms, self.sizes),
                                                   split_rows(W, self.sizes))])

    def residual(self, X) -> np.ndarray:
        return X - (self.atoms * self.atom_signs) @ self.omega()

    def copy(self) -> "GibbsState":
        return replace(self, atoms=self.atoms.copy(), sizes=list(self.sizes),
                       z=self.z.copy(), s=self.s.copy(), y=self.y.copy(),
                       gamma_s=self.gamma_s.copy(), pi_z=self.pi_z.copy(),
                       pi_y=self.pi_y.copy())


@dataclass
class Snapshot:
    atoms: np.ndarray
    gamma_s: np.ndarray
    pi_z: np.ndarray
    pi_y: np.ndarray
    gamma_eps: float


@dataclass
class PosteriorSummary:
    collected_samples: list
    atom_usage: np.ndarray
    final_K: list
    specs: list
    sweep_times: list = field(default_factory=list)
    loglik_trace: list = field(default_factory=list)
    hyper: Optional[BayesHyper] = None

    @property
    def signs(self) -> np.ndarray:
        return np.array([s.sign for s in self.specs], dtype=float)

    def pi_y_mean(self) -> np.ndarray:
        return np.mean([s.pi_y for s in self.collected_samples], axis=0)

    def mean_atoms(self) -> np.ndarray:
        return np.mean([s.atoms for s in self.collected_samples], axis=0)


# --------------------------------------------------------------------------
# random streams

def column_keys(X, Y) -> np.ndarray:
    """Per-column stream keys derived from column content.

    Identical columns are told apart by their occurrence rank, so the keys
    permute along with the columns.
    """
    seen: dict = {}
    keys = []
    for j in range(X.shape[1]):
        h = hashlib.blake2b(np.ascontiguousarray(X[:, j]).tobytes()
                            + np.ascontiguousarray(Y[:, j]).astype(np.int8).tobytes(),
                            digest_size=8).digest()
        base = int.from_bytes(h, "little")
        n = seen.get(base, 0)
        seen[base] = n + 1
        keys.append((base + n * 0x9E3779B97F4A7C15) % 2**64)
    return np.array(keys, dtype=np.uint64)


def _column_draws(seed, sweep, keys, K, C, gamma_shape=None):
    """Per-column variates for one sweep.

    One stream per sweep is cut into per-column slices, the slice of a column
    fixed by the rank of its content key. Permuting the columns therefore
    permutes their variates with them, and no variate depends on the thread
    count. Logistic variates drive Bernoulli draws (``z = 1`` iff
    variate < log-odds); with ``gamma_shape`` each column also gets one
    standard Gamma variate.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    N = len(keys)
    rank = np.empty(N, dtype=np.intp)
    rank[np.argsort(keys, kind="stable")] = np.arange(N)
    g = np.random.default_rng([*_words(seed), sweep, 0xC011])
    normals = g.standard_normal((N, 3 * K))[rank].T
    u = g.random((N, K + C))[rank].T
    logistic = np.log(u) - np.log1p(-u)
    out = {"s": normals[:K], "zs": normals[K:2 * K], "ys": normals[2 * K:],
           "z": logistic[:K], "y": logistic[K:]}
    if gamma_shape is not None:
        out["gamma"] = g.standard_gamma(gamma_shape, N)[rank]
    return out


def _words(seed) -> list:
    """A seed or a tuple of seeds, as a list of nonnegative ints."""
    return [int(v) for v in np.atleast_1d(seed)]


def _global_rng(seed, sweep):
    return np.random.default_rng([*_words(seed), sweep, 0xA7035])


def _logit(p):
    return np.log(p) - np.log1p(-p)


# --------------------------------------------------------------------------
# state construction

def _xy(dataset):
    if isinstance(dataset, Dataset):
        return dataset.X, dataset.Y, list(dataset.specs)
    X, Y, specs = dataset
    return np.asarray(X, float), np.asarray(Y), list(specs)


def init_state(dataset, hyper: BayesHyper) -> GibbsState:
    """Draw atoms, indicators and slabs from the priors; labels start at
    their known values, unknown ones at absent.

    Precisions start at their prior means, capped to the data scale when the
    prior is so broad that its mean is meaningless.
    """
    X, Y, specs = _xy(dataset)
    P, N = X.shape
    C = len(specs)
    sizes = hyper.sizes(specs)
    K = sum(sizes)
    rng = np.random.default_rng([hyper.seed, 0x1A17])
    atoms = rng.standard_normal((P, K)) / np.sqrt(hyper.lambda_d)
    pi_z = np.full(K, hyper.a_pi / (hyper.a_pi + hyper.b_pi))
    pi_y = np.full(C, hyper.a_y / (hyper.a_y + hyper.b_y))
    z = (rng.random((K, N)) < pi_z[:, None]).astype(float)
    # unknown labels start absent: each class is first fitted to the windows
    # it is known to be in, and switched on elsewhere only when that helps
    y = (Y == PRESENT).astype(float)
    var = float(np.var(X)) if np.var(X) > 0 else 1.0
    gamma_eps = min(hyper.a_eps / hyper.b_eps, 1.0 / var)
    gamma_s = np.full(C, min(hyper.a_s / hyper.b_s, 1.0 / var))
    s = rng.standard_normal((K, N)) / np.sqrt(gamma_s[np.repeat(np.arange(C), sizes)])[:, None]
    signs = np.array([sp.sign for sp in specs], dtype=float)
    return GibbsState(atoms, list(sizes), signs, z, s, y, gamma_eps, gamma_s, pi_z, pi_y)


# --------------------------------------------------------------------------
# conditionals

def conditional_z_logodds(state: GibbsState, dataset, c: int, k: int, j: int) -> float:
    """``log p(z=1 | rest) - log p(z=0 | rest)`` for atom ``k`` of class ``c``
    in window ``j`` (``k`` indexes within the class block)."""
    X, _, _ = _xy(dataset)
    C = len(state.sizes)
    if not (0 <= c < C and 0 <= k < state.sizes[c] and 0 <= j < X.shape[1]):
        raise IndexOutOfRange(f"(c={c}, k={k}, j={j}) outside the state")
    g = int(np.sum(state.sizes[:c])) + k
    prior = float(_logit(state.pi_z[g]))
    if state.y[c, j] == 0:
        return prior
    d = state.atoms[:, g] * state.signs[c]
    r = state.residual(X)[:, j] + d * state.z[g, j] * state.s[g, j]
    sv = state.s[g, j]
    return prior - 0.5 * state.gamma_eps * (sv * sv * (d @ d) - 2.0 * sv * (d @ r))


def _check(v, what):
    if not np.all(np.isfinite(v)):
        raise NumericalUnderflow(f"non-finite values while sampling {what}")


def gibbs_sweep(state: GibbsState, dataset, hyper: BayesHyper, keys=None) -> GibbsState:
    """One systematic scan: atoms, slabs, indicators, load labels,
    precisions, then Bernoulli probabilities. Returns a new state.

    ``hyper.scheme`` picks how the discrete variables are drawn:

    ``"single-site"``
        ``z`` from :func:`conditional_z_logodds` given the current slab, and
        ``y`` given the current block ``(z, s)``.
    ``"blocked"``
        the dictionary is drawn as one block, the slabs of a class block
        jointly, and ``(z_kj, s_kj)`` and ``(y_cj, s_cj)`` jointly with the
        slab integrated out of the indicator's conditional. Same stationary
        distribution, but correlated atoms move together and an indicator
        that is off can switch back on without waiting for a lucky prior
        draw of its slab.
    """
    X, Y, _ = _xy(dataset)
    st = state.copy()
    st.sweep += 1
    P, N = X.shape
    C, K = len(st.sizes), sum(st.sizes)
    blocks = set(hyper.sample_blocks)
    if keys is None:
        keys = column_keys(X, Y)
    draws = _column_draws(hyper.seed, st.sweep, keys, K, C)
    grng = _global_rng(hyper.seed, st.sweep)
    blocked = hyper.scheme == "blocked"

    R = st.residual(X)
    if "atoms" in blocks:
        eps = grng.standard_normal((P, K))
        if blocked:
            R = _sample_dictionary(st, X, hyper, eps)
        else:
            R = _sample_atoms(st, R, hyper, eps)
    if "s" in blocks:
        R = _sample_slabs(st, R, draws["s"], joint=blocked)
    if "z" in blocks:
        R = _sample_z(st, R, draws["z"], draws["zs"] if blocked else None)
    if "y" in blocks:
        free = Y == UNKNOWN
        if blocked:
            R = _sample_y_blocked(st, R, free, draws["y"], draws["ys"])
        else:
            R = _sample_y(st, R, free, draws["y"])

    if "noise" in blocks:
        rate = hyper.b_eps + 0.5 * float((R * R).sum())
        st.gamma_eps = float(grng.gamma(hyper.a_eps + 0.5 * P * N, 1.0 / rate))
    if "slab" in blocks:
        for c, Sc in enumerate(split_rows(st.s, st.sizes)):
            rate = hyper.b_s + 0.5 * float((Sc * Sc).sum())
            st.gamma_s[c] = grng.gamma(hyper.a_s + 0.5 * Sc.size, 1.0 / rate)
    if "pi_z" in blocks:
        nz = st.z.sum(axis=1)
        st.pi_z = grng.beta(hyper.a_pi + nz, hyper.b_pi + N - nz)
    if "pi_y" in blocks:
        ny = st.y.sum(axis=1)
        st.pi_y = grng.beta(hyper.a_y + ny, hyper.b_y + N - ny)
    # keep the Bernoulli log-odds finite
    st.pi_z = np.clip(st.pi_z, 1e-12, 1 - 1e-12)
    st.pi_y = np.clip(st.pi_y, 1e-12, 1 - 1e-12)
    if not (np.isfinite(st.gamma_eps) and st.gamma_eps > 0 and np.all(st.gamma_s > 0)):
        raise NumericalUnderflow("precision left (0, inf)")
    return st


def _sample_atoms(st, R, hyper, eps):
    W = st.omega()
    sg = st.atom_signs
    ge = st.gamma_eps
    for k in range(W.shape[0]):
        w = W[k]
        nz = np.flatnonzero(w)
        d_old = st.atoms[:, k]
        ww = float(w[nz] @ w[nz])
        prec = hyper.lambda_d + ge * ww
        rw = R[:, nz] @ w[nz] + sg[k] * d_old * ww
        d_new = ge * sg[k] * rw / prec + eps[:, k] / np.sqrt(prec)
        if len(nz):
            R[:, nz] -= sg[k] * np.outer(d_new - d_old, w[nz])
        st.atoms[:, k] = d_new
    _check(st.atoms, "atoms")
    return R


def _sample_dictionary(st, X, hyper, eps):
    """All atoms at once: given the codes, the rows of the dictionary are
    independent Gaussians sharing one ``K x K`` precision."""
    W = st.omega() * st.atom_signs[:, None]
    K = W.shape[0]
    Lam = hyper.lambda_d * np.eye(K) + st.gamma_eps * (W @ W.T)
    L = np.linalg.cholesky(Lam)
    mean = st.gamma_eps * np.linalg.solve(Lam, W @ X.T).T       # P x K
    st.atoms = mean + np.linalg.solve(L.T, eps.T).T
    _check(st.atoms, "atoms")
    return X - st.atoms @ W


def _sample_slabs(st, R, normals, joint):
    """Slabs given everything else; ``joint`` draws each class block at once."""
    ge = st.gamma_eps
    starts = np.concatenate([[0], np.cumsum(st.sizes)])
    for c in range(len(st.sizes)):
        sl = slice(starts[c], starts[c + 1])
        E = st.signs[c] * st.atoms[:, sl]
        gs = st.gamma_s[c]
        if joint:
            active = st.z[sl] * st.y[c]                      # Kc x N
            old = st.s[sl] * active
            Rm = R + E @ old
            s_new = _gaussian_block(E, Rm, active, gs, ge, normals[sl])
            R = Rm - E @ (s_new * active)
            st.s[sl] = s_new
            continue
        for i, k in enumerate(range(starts[c], starts[c + 1])):
            d = E[:, i]
            active = (st.z[k] * st.y[c]) > 0
            dd = float(d @ d)
            prec = np.where(active, gs + ge * dd, gs)
            dr = d @ R + active * st.s[k] * dd
            mean = np.where(active, ge * dr / prec, 0.0)
            s_new = mean + normals[k] / np.sqrt(prec)
            idx = np.flatnonzero(active)
            if len(idx):
                R[:, idx] -= np.outer(d, s_new[idx] - st.s[k, idx])
            st.s[k] = s_new
    _check(st.s, "slabs")
    return R


def _block_posterior(E, Rm, active, gs, ge):
    """Batched Gaussian posterior of a class block's slabs, one per column.

    ``ge`` is the noise precision, a scalar or one value per column.

    Returns the Cholesky factors of the precisions, the means, and the log
    marginal-likelihood ratio (block on vs. block off) per column.
    """
    Kc = E.shape[1]
    G = E.T @ E
    A = active.T                                              # N x Kc
    ge = np.broadcast_to(np.asarray(ge, float), (A.shape[0],))
    Lam = ge[:, None, None] * A[:, :, None] * G[None] * A[:, None, :] + gs * np.eye(Kc)[None]
    b = ge[:, None] * (E.T @ Rm).T * A                        # N x Kc
    L = np.linalg.cholesky(Lam)
    mean = np.linalg.solve(Lam, b[:, :, None])[:, :, 0]
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    ratio = 0.5 * (b * mean).sum(axis=1) - 0.5 * logdet + 0.5 * Kc * np.log(gs)
    return L, mean, ratio


def _gaussian_block(E, Rm, active, gs, ge, normals):
    L, mean, _ = _block_posterior(E, Rm, active, gs, ge)
    noise = np.linalg.solve(np.swapaxes(L, 1, 2), normals.T[:, :, None])[:, :, 0]
    return (mean + noise).T


def _sample_z(st, R, logistic, normals=None):
    """Indicators; with ``normals`` the slab is integrated out then redrawn."""
    ge = st.gamma_eps
    sg = st.atom_signs
    y_of = st.y[st.owner]
    gs = st.gamma_s[st.owner]
    lp = _logit(st.pi_z)
    for k in range(st.z.shape[0]):
        d = st.atoms[:, k] * sg[k]
        on = y_of[k] > 0
        dd = float(d @ d)
        old = st.z[k] * st.s[k] * on
        r_dot = d @ R + old * dd
        if normals is None:
            sv = st.s[k]
            lo = lp[k] - 0.5 * ge * (sv * sv * dd - 2.0 * sv * r_dot)
            lo = np.where(on, lo, lp[k])
            z_new = (logistic[k] < lo).astype(float)
            s_new = sv
        else:
            prec = gs[k] + ge * dd
            lo = lp[k] + 0.5 * np.log(gs[k] / prec) + 0.5 * (ge * r_dot) ** 2 / prec
            lo = np.where(on, lo, lp[k])
            z_new = (logistic[k] < lo).astype(float)
            post = ge * r_dot / prec + normals[k] / np.sqrt(prec)
            s_new = np.where((z_new > 0) & on, post, normals[k] / np.sqrt(gs[k]))
        new = z_new * s_new * on
        idx = np.flatnonzero(new != old)
        if len(idx):
            R[:, idx] -= np.outer(d, new[idx] - old[idx])
        st.z[k] = z_new
        st.s[k] = s_new
    return R


def _sample_y(st, R, free, logistic):
    ge = st.gamma_eps
    lpy = _logit(st.pi_y)
    starts = np.concatenate([[0], np.cumsum(st.sizes)])
    for c in range(len(st.sizes)):
        sl = slice(starts[c], starts[c + 1])
        V = st.signs[c] * st.atoms[:, sl] @ (st.z[sl] * st.s[sl])
        Rm = R + V * st.y[c]
        lo = lpy[c] - 0.5 * ge * ((V * V).sum(axis=0) - 2.0 * (V * Rm).sum(axis=0))
        y_new = np.where(free[c], (logistic[c] < lo).astype(float), st.y[c])
        R = Rm - V * y_new
        st.y[c] = y_new
    return R


def _sample_y_blocked(st, R, free, logistic, normals):
    """Draw ``(y_cj, s_cj)`` jointly with the slab block integrated out."""
    ge = st.gamma_eps
    lpy = _logit(st.pi_y)
    starts = np.concatenate([[0], np.cumsum(st.sizes)])
    for c in range(len(st.sizes)):
        sl = slice(starts[c], starts[c + 1])
        E = st.signs[c] * st.atoms[:, sl]
        gs = st.gamma_s[c]
        zc = st.z[sl]
        Rm = R + E @ (zc * st.s[sl] * st.y[c])
        L, mean, ratio = _block_posterior(E, Rm, zc, gs, ge)
        y_new = np.where(free[c], (logistic[c] < lpy[c] + ratio).astype(float), st.y[c])
        noise = np.linalg.solve(np.swapaxes(L, 1, 2), normals[sl].T[:, :, None])[:, :, 0]
        post = (mean + noise).T
        prior = normals[sl] / np.sqrt(gs)
        s_new = np.where(y_new[None] > 0, np.where(zc > 0, post, prior), prior)
        R = Rm - E @ (zc * s_new * y_new)
        st.y[c] = y_new
        st.s[sl] = s_new
    return R


def log_likelihood(state: GibbsState, X) -> float:
    R = state.residual(X)
    n = R.size
    ge = state.gamma_eps
    return float(0.5 * n * (np.log(ge) - np.log(2 * np.pi)) - 0.5 * ge * (R * R).sum())


# --------------------------------------------------------------------------
# pruning and the training driver

def _prune_mask(usage, sizes, threshold):
    keep = usage >= threshold
    start = 0
    for Kc in sizes:
        blk = slice(start, start + Kc)
        if not keep[blk].any():
            keep[start + int(np.argmax(usage[blk]))] = True
        start += Kc
    return keep


def prune_atoms(state, hyper: BayesHyper, usage=None):
    """Drop atoms whose usage rate is below ``hyper.prune_threshold``.

    Works on a :class:`GibbsState` (usage defaults to ``mean(z)`` of the
    state) or a :class:`PosteriorSummary`. Each class keeps at least its
    most used atom.
    """
    if isinstance(state, PosteriorSummary):
        usage = state.atom_usage if usage is None else np.asarray(usage)
        sizes = list(state.final_K)
        keep = _prune_mask(usage, sizes, hyper.prune_threshold)
        owner = np.repeat(np.arange(len(sizes)), sizes)
        snaps = [replace(sn, atoms=sn.atoms[:, keep], pi_z=sn.pi_z[keep])
                 for sn in state.collected_samples]
        new_sizes = [int(keep[owner == c].sum()) for c in range(len(sizes))]
        return replace(state, collected_samples=snaps, atom_usage=usage[keep],
                       final_K=new_sizes)
    usage = state.z.mean(axis=1) if usage is None else np.asarray(usage, float)
    keep = _prune_mask(usage, state.sizes, hyper.prune_threshold)
    owner = state.owner
    new_sizes = [int(keep[owner == c].sum()) for c in range(len(state.sizes))]
    return replace(state, atoms=state.atoms[:, keep].copy(), sizes=new_sizes,
                   z=state.z[keep].copy(), s=state.s[keep].copy(),
                   pi_z=state.pi_z[keep].copy(), gamma_s=state.gamma_s.copy(),
                   y=state.y.copy(), pi_y=state.pi_y.copy())


def _snapshot(st: GibbsState) -> Snapshot:
    return Snapshot(st.atoms.copy(), st.gamma_s.copy(), st.pi_z.copy(),
                    st.pi_y.copy(), float(st.gamma_eps))


def train_bayes(dataset, hyper: BayesHyper = BayesHyper(), state=None) -> PosteriorSummary:
    """Burn in, prune once, then collect ``n_collect`` snapshots ``thin`` sweeps apart.

    Atom usage for pruning is averaged over the second half of burn-in.
    """
    X, Y, specs = _xy(dataset)
    st = init_state((X, Y, specs), hyper) if state is None else state
    keys = column_keys(X, Y)
    times, ll = [], []
    usage = np.zeros(sum(st.sizes))
    n_usage = 0
    for it in range(hyper.burn_in):
        t0 = time.perf_counter()
        st = gibbs_sweep(st, (X, Y, specs), hyper, keys)
        times.append(time.perf_counter() - t0)
        ll.append(log_likelihood(st, X))
        if it >= hyper.burn_in // 2:
            usage += st.z.mean(axis=1)
            n_usage += 1
    st = prune_atoms(st, hyper, usage / max(n_usage, 1))
    log.info("pruned to %s atoms per class", st.sizes)

    snaps = []
    usage = np.zeros(sum(st.sizes))
    for _ in range(hyper.n_collect):
        for _ in range(hyper.thin):
            t0 = time.perf_counter()
            st = gibbs_sweep(st, (X, Y, specs), hyper, keys)
            times.append(time.perf_counter() - t0)
            ll.append(log_likelihood(st, X))
        snaps.append(_snapshot(st))
        usage += st.z.mean(axis=1)
    return PosteriorSummary(snaps, usage / hyper.n_collect, list(st.sizes), list(specs),
                            times, ll, hyper)


def reconstruction_error(summary: PosteriorSummary, X, Y=None, sweeps=10, seed=0) -> float:
    """Relative error of reconstructing ``X`` with the posterior-mean atoms.

    Coefficients are re-sampled for ``X`` with the atoms held fixed.
    """
    X = np.asarray(X, float)
    N = X.shape[1]
    C = len(summary.specs)
    Y = np.full((C, N), UNKNOWN, np.int8) if Y is None else np.asarray(Y)
    base = summary.hyper or BayesHyper()
    hyper = replace(base, seed=seed, K_init=list(summary.final_K),
                    sample_blocks=("s", "z", "y", "noise"))
    st = init_state((X, Y, summary.specs), hyper)
    last = summary.collected_samples[-1]
    st.atoms = summary.mean_atoms()
    st.gamma_s, st.pi_z, st.pi_y = last.gamma_s.copy(), last.pi_z.copy(), last.pi_y.copy()
    st.gamma_eps = last.gamma_eps
    keys = column_keys(X, Y)
    for _ in range(sweeps):
        st = gibbs_sweep(st, (X, Y, summary.specs), hyper, keys)
    R = st.residual(X)
    return float((R ** 2).sum() / (X ** 2).sum())


# --------------------------------------------------------------------------
# serialization

def save_posterior(summary: PosteriorSummary, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    sizes = summary.final_K
    for t, sn in enumerate(summary.collected_samples):
        sd = d / f"snapshot_{t}"
        for c, Dc in enumerate(split_cols(sn.atoms, sizes), 1):
            write_matrix(sd / f"dict_{c}.csv", Dc)
        write_matrix(sd / "gamma.csv", [[*sn.gamma_s, sn.gamma_eps]],
                     [f"gamma_s_{c}" for c in range(1, len(sizes) + 1)] + ["gamma_eps"])
        write_matrix(sd / "pi.csv", [[*sn.pi_z, *sn.pi_y]],
                     [f"pi_z_{k}" for k in range(len(sn.pi_z))]
                     + [f"pi_y_{c}" for c in range(1, len(sizes) + 1)])
    write_matrix(d / "usage.csv", summary.atom_usage[:, None], ["usage"])
    write_specs(d / "classes.csv", summary.specs)
    meta = []
    if summary.hyper is not None:
        for k, v in vars(summary.hyper).items():
            meta.append(f"{k}={v}")
    meta.append("final_K=" + ",".join(str(k) for k in sizes))
    meta.append(f"snapshots={len(summary.collected_samples)}")
    if summary.sweep_times:
        meta.append(f"mean_sweep_seconds={fmt(np.mean(summary.sweep_times))}")
    meta.append("loglik_trace=" + ",".join(fmt(v) for v in summary.loglik_trace))
    write_text(d / "meta.txt", meta)


def load_posterior(directory) -> PosteriorSummary:
    d = Path(directory)
    specs = read_specs(d / "classes.csv")
    meta = read_kv(d / "meta.txt")
    sizes = [int(k) for k in meta["final_K"].split(",")]
    n = int(meta["snapshots"])
    C = len(specs)
    snaps = []
    for t in range(n):
        sd = d / f"snapshot_{t}"
        atoms = np.hstack([read_matrix(sd / f"dict_{c}.csv") for c in range(1, C + 1)])
        g = read_matrix(sd / "gamma.csv")[0]
        p = read_matrix(sd / "pi.csv")[0]
        snaps.append(Snapshot(atoms, g[:C], p[:-C], p[-C:], float(g[C])))
    usage = read_matrix(d / "usage.csv")[:, 0]
    hyper = _hyper_from_meta(meta)
    ll = [float(v) for v in meta.get("loglik_trace", "").split(",") if v]
    return PosteriorSummary(snaps, usage, sizes, specs, [], ll, hyper)


def _hyper_from_meta(meta) -> BayesHyper:
    kw = {}
    for f in ("lambda_d", "a_eps", "b_eps", "a_s", "b_s", "a_pi", "b_pi", "a_y", "b_y",
              "prune_threshold"):
        if f in meta:
            kw[f] = float(meta[f])
    for f in ("burn_in", "n_collect", "thin", "seed"):
        if f in meta:
            kw[f] = int(meta[f])
    if "scheme" in meta:
        kw["scheme"] = meta["scheme"]
    return BayesHyper(**kw)
