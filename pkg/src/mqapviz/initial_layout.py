"""Initial 2-D layout from the k-NN graph.

Stochastic edge sampling: each step pulls the endpoints of a uniformly drawn
edge together under the affinity ``1 / (1 + |y_p - y_q|^2)`` and pushes the
source away from a few vertices drawn with probability proportional to
``deg^0.75``. The learning rate decays linearly to zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .exceptions import ParameterError
from .io import Layout, read_layout

log = logging.getLogger(__name__)

ISOLATED_WEIGHT = 1e-12
GRAD_CLIP = 5.0


def alias_table(weights):
    """Walker/Vose alias table for O(1) draws proportional to ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    scaled = w * (n / w.sum())
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


class DegreeSampler:
    """Draw vertices with probability proportional to ``deg(v) ** 0.75``."""

    def __init__(self, degrees, random_state=0):
        deg = np.asarray(degrees, dtype=np.float64)
        if deg.ndim != 1 or len(deg) < 1:
            raise ValueError("need at least one vertex")
        self.weights = np.where(deg > 0, deg ** 0.75, ISOLATED_WEIGHT)
        self.prob, self.alias = alias_table(self.weights)
        self.rng = np.random.default_rng(random_state)

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def sample(self, size=None):
        n = len(self.weights)
        i = self.rng.integers(n, size=size)
        u = self.rng.random(size=size)
        return np.where(u < self.prob[i], i, self.alias[i])

    def __len__(self):
        return len(self.weights)


def build_degree_sampler(graph, random_state=0) -> DegreeSampler:
    return DegreeSampler(graph.degree, random_state)


@dataclass
class LayoutParams:
    """Hyper-parameters of the edge-sampling layout.

    ``n_samples`` is the total number of edge samples ``T``; ``None`` means
    100 per undirected edge.
    """

    n_samples: int | None = None
    rho0: float = 1.0
    neg_samples: int = 5
    gamma: float = 7.0
    random_state: int = 0
    n_workers: int = 1

    def validate(self):
        if self.n_samples is not None and self.n_samples < 1:
            raise ParameterError("n_samples (T) must be >= 1")
        if self.rho0 <= 0:
            raise ParameterError("rho0 must be > 0")
        if self.neg_samples < 0:
            raise ParameterError("neg_samples must be >= 0")
        if self.gamma < 0:
            raise ParameterError("gamma must be >= 0")
        return self


def learning_rate(t, T, rho0):
    return rho0 * (1.0 - t / T)


@njit(cache=True)
def _is_neighbor(indptr, indices, p, j):
    lo = indptr[p]
    hi = indptr[p + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        v = indices[mid]
        if v == j:
            return True
        if v < j:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True)
def _sgd_steps(Y, src, dst, indptr, indices, prob, alias, t_begin, t_end, T,
               rho0, neg_samples, gamma, seed):
    np.random.seed(seed)
    n = Y.shape[0]
    n_edges = src.shape[0]
    err = np.zeros(2)
    for t in range(t_begin, t_end):
        rho = rho0 * (1.0 - (t + 1.0) / T)
        e = np.random.randint(n_edges)
        p = src[e]
        q = dst[e]
        err[0] = 0.0
        err[1] = 0.0
        for s in range(neg_samples + 1):
            if s == 0:
                target = q
            else:
                target = -1
                for _ in range(10):
                    c = np.random.randint(n)
                    if np.random.random() >= prob[c]:
                        c = alias[c]
                    if c != p and c != q and not _is_neighbor(indptr, indices, p, c):
                        target = c
                        break
                if target < 0:
                    continue
            dx = Y[p, 0] - Y[target, 0]
            dy = Y[p, 1] - Y[target, 1]
            f = dx * dx + dy * dy
            if s == 0:
                g = -2.0 / (1.0 + f)
            else:
                g = 2.0 * gamma / ((1.0 + f) * (0.1 + f))
            for axis in range(2):
                diff = dx if axis == 0 else dy
                gg = g * diff
                if gg > GRAD_CLIP:
                    gg = GRAD_CLIP
                elif gg < -GRAD_CLIP:
                    gg = -GRAD_CLIP
                err[axis] += gg * rho
                Y[target, axis] -= gg * rho
        Y[p, 0] += err[0]
        Y[p, 1] += err[1]


@njit(cache=True, parallel=True)
def _sgd_parallel(Y, src, dst, indptr, indices, prob, alias, T, rho0, neg_samples, gamma,
                  seeds):
    # lock-free updates on shared Y; not reproducible run to run
    w = seeds.shape[0]
    chunk = (T + w - 1) // w
    for k in prange(w):
        lo = k * chunk
        hi = min(T, lo + chunk)
        _sgd_steps(Y, src, dst, indptr, indices, prob, alias, lo, hi, T, rho0,
                   neg_samples, gamma, seeds[k])


def fit_initial_layout(graph, params: LayoutParams | None = None) -> Layout:
    params = (params or LayoutParams()).validate()
    n = graph.n
    rng = np.random.default_rng(params.random_state)
    Y = rng.uniform(-1.0, 1.0, size=(n, 2))
    p, q, _ = graph.edges()
    if len(p) == 0:
        return Layout.from_array(Y)
    # both orientations, so a uniform draw picks an edge and a random source end
    src = np.concatenate([p, q])
    dst = np.concatenate([q, p])
    T = params.n_samples if params.n_samples is not None else 100 * len(p)
    sampler = build_degree_sampler(graph, params.random_state)
    seed = int(rng.integers(2**31 - 1))
    if params.n_workers <= 1:
        _sgd_steps(Y, src, dst, graph.indptr, graph.indices, sampler.prob, sampler.alias,
                   0, T, T, params.rho0, params.neg_samples, params.gamma, seed)
    else:
        seeds = rng.integers(2**31 - 1, size=params.n_workers)
        _sgd_parallel(Y, src, dst, graph.indptr, graph.indices, sampler.prob, sampler.alias,
                      T, params.rho0, params.neg_samples, params.gamma, seeds)
    log.info("initial layout: n=%d T=%d", n, T)
    return Layout.from_array(Y)


def load_or_fit(graph, layout_path=None, params: LayoutParams | None = None) -> Layout:
    if layout_path is None:
        return fit_initial_layout(graph, params)
    layout = read_layout(layout_path)
    missing = np.setdiff1d(np.arange(graph.n), layout.ids)
    if len(missing):
        shown = ", ".join(str(i) for i in missing[:20])
        more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
        raise ValueError(f"{layout_path}: layout is missing ids {shown}{more}")
    extra = layout.ids[layout.ids >= graph.n]
    if len(extra):
        raise ValueError(f"{layout_path}: ids out of range: {extra[:20].tolist()}")
    return layout
