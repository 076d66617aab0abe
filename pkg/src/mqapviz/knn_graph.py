"""Approximate k-nearest-neighbor graph construction.

A forest of random-projection trees supplies initial candidates, which are
then refined by rounds of neighbor-of-neighbor exploration with a bounded
max-heap per point. Ties are broken by smaller object id everywhere, so the
result depends only on the data, ``k`` and the seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .exceptions import FormatVersionError, LoadError, ParameterError

log = logging.getLogger(__name__)

GRAPH_FORMAT = "mqapviz-knng/1"


# ---------------------------------------------------------------------------
# data types


@dataclass
class RpTree:
    """Flattened random-projection tree.

    Internal node ``i`` splits on ``directions[i]`` at ``thresholds[i]``;
    ``children[i]`` holds (left, right) where a non-negative value is another
    internal node and ``-1 - j`` refers to leaf ``j``.
    """

    directions: np.ndarray
    thresholds: np.ndarray
    children: np.ndarray
    leaf_ptr: np.ndarray
    leaf_members: np.ndarray
    leaf_of: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ptr) - 1

    def leaf(self, j: int) -> np.ndarray:
        return self.leaf_members[self.leaf_ptr[j]:self.leaf_ptr[j + 1]]

    def leaves(self):
        return [self.leaf(j) for j in range(self.n_leaves)]


@dataclass
class RpForest:
    trees: list
    leaf_capacity: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)


@dataclass
class KnnGraph:
    """Undirected k-NN graph in CSR form.

    ``knn_indices`` / ``knn_distances`` keep the directed per-point lists the
    graph was symmetrized from (padded with -1 / inf); they are absent when the
    graph was loaded from an edge dump.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    distances: np.ndarray
    knn_indices: np.ndarray | None = field(default=None, repr=False)
    knn_distances: np.ndarray | None = field(default=None, repr=False)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def neighbor_distances(self, v: int) -> np.ndarray:
        return self.distances[self.indptr[v]:self.indptr[v + 1]]

    def edges(self):
        """Undirected edges as (p, q, distance) arrays with p < q, sorted."""
        src = np.repeat(np.arange(self.n), self.degree)
        keep = src < self.indices
        return src[keep], self.indices[keep], self.distances[keep]

    def edge_set(self) -> set:
        p, q, _ = self.edges()
        return set(zip(p.tolist(), q.tolist()))

    @classmethod
    def from_edges(cls, n, p, q, dist, knn_indices=None, knn_distances=None) -> "KnnGraph":
        p = np.asarray(p, dtype=np.int64)
        q = np.asarray(q, dtype=np.int64)
        dist = np.asarray(dist, dtype=np.float64)
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        keep = lo != hi
        lo, hi, dist = lo[keep], hi[keep], dist[keep]
        key = lo * n + hi
        key, first = np.unique(key, return_index=True)
        lo, hi, dist = lo[first], hi[first], dist[first]
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        dd = np.concatenate([dist, dist])
        order = np.lexsort((dst, src))
        src, dst, dd = src[order], dst[order], dd[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n, indptr, dst, dd, knn_indices, knn_distances)

    @classmethod
    def from_knn(cls, knn_indices, knn_distances) -> "KnnGraph":
        n, k = knn_indices.shape
        src = np.repeat(np.arange(n), k)
        dst = knn_indices.ravel()
        dist = knn_distances.ravel()
        ok = dst >= 0
        return cls.from_edges(n, src[ok], dst[ok], dist[ok], knn_indices, knn_distances)

    def write_tsv(self, path) -> None:
        """Edge dump: a format header, then ``p<TAB>q<TAB>distance`` with p < q."""
        p, q, d = self.edges()
        with open(path, "w") as fh:
            fh.write(f"# format={GRAPH_FORMAT}\tn={self.n}\n")
            for a, b, c in zip(p.tolist(), q.tolist(), d.tolist()):
                # repr round-trips exactly, so a reloaded graph behaves identically
                fh.write(f"{a}\t{b}\t{c!r}\n")

    @classmethod
    def read_tsv(cls, path) -> "KnnGraph":
        n = None
        ps, qs, ds = [], [], []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    meta = dict(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
                    fmt = meta.get("format")
                    if fmt != GRAPH_FORMAT:
                        raise FormatVersionError(
                            f"{path}:{lineno}: graph format {fmt!r}, expected {GRAPH_FORMAT!r}")
                    n = int(meta["n"])
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise LoadError(f"{path}:{lineno}: expected 'p<TAB>q<TAB>distance'")
                try:
                    a, b, c = int(parts[0]), int(parts[1]), float(parts[2])
                except ValueError as exc:
                    raise LoadError(f"{path}:{lineno}: {exc}") from None
                ps.append(a)
                qs.append(b)
                ds.append(c)
        if n is None:
            raise FormatVersionError(f"{path}: missing format header")
        return cls.from_edges(n, ps, qs, ds)


# ---------------------------------------------------------------------------
# random projection forest


def _split_direction(X, ids, rng, tries=8):
    for _ in range(tries):
        a, b = rng.choice(len(ids), size=2, replace=False)
        diff = X[ids[a]].astype(np.float64) - X[ids[b]]
        norm = np.linalg.norm(diff)
        if norm > 0:
            return diff / norm
    # every sampled pair coincided; a random direction still yields a valid median split
    diff = rng.standard_normal(X.shape[1])
    return diff / np.linalg.norm(diff)


def _build_tree(X, leaf_capacity, rng) -> RpTree:
    n = X.shape[0]
    directions, thresholds, children = [], [], []
    leaves = []

    def grow(ids):
        if len(ids) <= leaf_capacity:
            leaves.append(ids)
            return -len(leaves)
        node = len(directions)
        direction = _split_direction(X, ids, rng)
        proj = X[ids] @ direction
        order = np.lexsort((ids, proj))
        half = len(ids) // 2
        directions.append(direction)
        thresholds.append(float(proj[order[half]]))
        children.append([0, 0])
        left = np.sort(ids[order[:half]])
        right = np.sort(ids[order[half:]])
        children[node][0] = grow(left)
        children[node][1] = grow(right)
        return node

    grow(np.arange(n, dtype=np.int64))
    sizes = np.array([len(l) for l in leaves], dtype=np.int64)
    leaf_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    members = np.concatenate(leaves).astype(np.int64)
    leaf_of = np.empty(n, dtype=np.int64)
    leaf_of[members] = np.repeat(np.arange(len(leaves)), sizes)
    d = X.shape[1]
    return RpTree(
        np.array(directions, dtype=np.float64).reshape(-1, d),
        np.array(thresholds, dtype=np.float64),
        np.array(children, dtype=np.int64).reshape(-1, 2),
        leaf_ptr, members, leaf_of,
    )


def build_forest(X, n_trees: int = 8, leaf_capacity: int = 32, random_state=0) -> RpForest:
    """Grow ``n_trees`` trees, splitting at the median projection onto the
    normalized difference of two points drawn from the node."""
    if n_trees < 1:
        raise ParameterError(f"n_trees must be >= 1, got {n_trees}")
    if leaf_capacity < 1:
        raise ParameterError(f"leaf_capacity must be >= 1, got {leaf_capacity}")
    X = np.asarray(X)
    rng = np.random.default_rng(random_state)
    return RpForest([_build_tree(X, leaf_capacity, rng) for _ in range(n_trees)], leaf_capacity)


def _stack_forest(forest: RpForest):
    leaf_of = np.stack([t.leaf_of for t in forest.trees])
    ptrs, members = [], []
    offset = 0
    for t in forest.trees:
        ptrs.append(t.leaf_ptr + offset)
        members.append(t.leaf_members)
        offset += len(t.leaf_members)
    # per-tree leaf pointer tables have different lengths; pad into a 2-D array
    width = max(len(p) for p in ptrs)
    ptr = np.zeros((len(ptrs), width), dtype=np.int64)
    for i, p in enumerate(ptrs):
        ptr[i, :len(p)] = p
    return leaf_of, ptr, np.concatenate(members)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _dist(X, i, j):
    s = 0.0
    for t in range(X.shape[1]):
        diff = np.float64(X[i, t]) - np.float64(X[j, t])
        s += diff * diff
    return np.sqrt(s)


@njit(cache=True)
def _less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True)
def _heap_push(hd, hi, size, d, i, k):
    """Bounded max-heap keyed by (distance, id); returns the new size."""
    if size == k:
        if not _less(d, i, hd[0], hi[0]):
            return size
        # replace root and sift down
        hd[0] = d
        hi[0] = i
        pos = 0
        while True:
            left = 2 * pos + 1
            if left >= size:
                break
            big = left
            right = left + 1
            if right < size and _less(hd[left], hi[left], hd[right], hi[right]):
                big = right
            if _less(hd[pos], hi[pos], hd[big], hi[big]):
                hd[pos], hd[big] = hd[big], hd[pos]
                hi[pos], hi[big] = hi[big], hi[pos]
                pos = big
            else:
                break
        return size
    pos = size
    hd[pos] = d
    hi[pos] = i
    size += 1
    while pos > 0:
        parent = (pos - 1) // 2
        if _less(hd[parent], hi[parent], hd[pos], hi[pos]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            break
    return size


@njit(cache=True)
def _in_heap(hi, size, i):
    for t in range(size):
        if hi[t] == i:
            return True
    return False


@njit(cache=True)
def _emit_sorted(hd, hi, size, out_i, out_d, row):
    # heap contents sorted by (distance, id)
    order = np.argsort(hd[:size], kind="mergesort")
    sd = hd[:size][order]
    si = hi[:size][order]
    # resolve equal distances by id
    a = 0
    while a < size:
        b = a + 1
        while b < size and sd[b] == sd[a]:
            b += 1
        if b - a > 1:
            si[a:b] = np.sort(si[a:b])
        a = b
    for t in range(out_i.shape[1]):
        if t < size:
            out_i[row, t] = si[t]
            out_d[row, t] = sd[t]
        else:
            out_i[row, t] = -1
            out_d[row, t] = np.inf


@njit(cache=True, parallel=True)
def _forest_knn(X, leaf_of, leaf_ptr, members, k):
    n = X.shape[0]
    n_trees = leaf_of.shape[0]
    out_i = np.empty((n, k), dtype=np.int64)
    out_d = np.empty((n, k), dtype=np.float64)
    for i in prange(n):
        hd = np.empty(k, dtype=np.float64)
        hi = np.empty(k, dtype=np.int64)
        size = 0
        for t in range(n_trees):
            leaf = leaf_of[t, i]
            for s in range(leaf_ptr[t, leaf], leaf_ptr[t, leaf + 1]):
                j = members[s]
                if j == i or _in_heap(hi, size, j):
                    continue
                size = _heap_push(hd, hi, size, _dist(X, i, j), j, k)
        _emit_sorted(hd, hi, size, out_i, out_d, i)
    return out_i, out_d


@njit(cache=True, parallel=True)
def _descent_round(X, old_i, old_d, k):
    n = X.shape[0]
    kk = old_i.shape[1]
    out_i = np.empty((n, k), dtype=np.int64)
    out_d = np.empty((n, k), dtype=np.float64)
    for i in prange(n):
        hd = np.empty(k, dtype=np.float64)
        hi = np.empty(k, dtype=np.int64)
        size = 0
        # current neighbors stay eligible, which makes refinement monotone
        for a in range(kk):
            j = old_i[i, a]
            if j >= 0 and j != i and not _in_heap(hi, size, j):
                size = _heap_push(hd, hi, size, old_d[i, a], j, k)
        for a in range(kk):
            j = old_i[i, a]
            if j < 0:
                continue
            for b in range(kk):
                p = old_i[j, b]
                if p < 0 or p == i or _in_heap(hi, size, p):
                    continue
                size = _heap_push(hd, hi, size, _dist(X, i, p), p, k)
        _emit_sorted(hd, hi, size, out_i, out_d, i)
    return out_i, out_d


# ---------------------------------------------------------------------------
# public operations


def _as_matrix(X):
    X = getattr(X, "vectors", X)
    return np.ascontiguousarray(X, dtype=np.float32)


def forest_candidates(forest: RpForest, X, idx: int, k: int):
    """k closest co-members of ``idx`` across all trees' leaves, sorted by (distance, id)."""
    X = _as_matrix(X)
    cand = np.unique(np.concatenate([t.leaf(t.leaf_of[idx]) for t in forest.trees]))
    cand = cand[cand != idx]
    d = np.linalg.norm(X[cand].astype(np.float64) - X[idx].astype(np.float64), axis=1)
    order = np.lexsort((cand, d))[:k]
    return cand[order], d[order]


def forest_knn(forest: RpForest, X, k: int):
    """Run :func:`forest_candidates` for every id; rows padded with -1 / inf."""
    X = _as_matrix(X)
    leaf_of, ptr, members = _stack_forest(forest)
    return _forest_knn(X, leaf_of, ptr, members, k)


def nn_descent_round(X, knn_indices, knn_distances, k: int | None = None):
    """One neighbor-of-neighbor refinement round, reading only the old lists."""
    X = _as_matrix(X)
    k = knn_indices.shape[1] if k is None else k
    return _descent_round(X, np.ascontiguousarray(knn_indices, dtype=np.int64),
                          np.ascontiguousarray(knn_distances, dtype=np.float64), k)


def default_leaf_capacity(k: int) -> int:
    return max(2 * k, 32)


def build_knng(X, n_trees: int = 8, k: int = 30, n_iter: int = 5, random_state=0,
               leaf_capacity: int | None = None) -> KnnGraph:
    X = _as_matrix(X)
    n = X.shape[0]
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ParameterError(f"k must be smaller than the number of points ({k} >= {n})")
    if n_iter < 0:
        raise ParameterError(f"n_iter must be >= 0, got {n_iter}")
    if leaf_capacity is None:
        leaf_capacity = default_leaf_capacity(k)
    forest = build_forest(X, n_trees, leaf_capacity, random_state)
    idx, dist = forest_knn(forest, X, k)
    for _ in range(n_iter):
        idx, dist = _descent_round(X, idx, dist, k)
    graph = KnnGraph.from_knn(idx, dist)
    log.info("knn graph: n=%d k=%d edges=%d", n, k, graph.n_edges)
    return graph


def exact_knng(X, k: int, chunk: int = 1024) -> KnnGraph:
    """Brute-force k-NN graph (ties by smaller id); intended for n up to ~2e4."""
    X = _as_matrix(X).astype(np.float64)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"need 1 <= k < n, got k={k}, n={n}")
    sq = np.einsum("ij,ij->i", X, X)
    extra = min(n - 1, k + 16)
    out_i = np.empty((n, k), dtype=np.int64)
    out_d = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * X[start:stop] @ X.T
        rows = np.arange(stop - start)
        d2[rows, rows + start] = np.inf
        # shortlist with the fast formula, then rank exactly
        short = np.argpartition(d2, extra - 1, axis=1)[:, :extra]
        for r in range(stop - start):
            i = start + r
            cand = short[r]
            cand = cand[cand != i]
            d = np.sqrt(((X[cand] - X[i]) ** 2).sum(axis=1))
            order = np.lexsort((cand, d))[:k]
            out_i[i] = cand[order]
            out_d[i] = d[order]
    return KnnGraph.from_knn(out_i, out_d)


def recall(approx, exact) -> float:
    """Mean over points of |approx_knn(v) & exact_knn(v)| / k."""
    a = approx.knn_indices if isinstance(approx, KnnGraph) else np.asarray(approx)
    e = exact.knn_indices if isinstance(exact, KnnGraph) else np.asarray(exact)
    if a is None or e is None:
        raise ValueError("recall needs graphs that keep their per-point neighbor lists")
    k = e.shape[1]
    hits = 0
    for row_a, row_e in zip(a, e):
        hits += len(np.intersect1d(row_a[row_a >= 0], row_e))
    return hits / (k * len(e))
