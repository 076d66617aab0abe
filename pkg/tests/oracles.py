"""Independent straightforward re-implementations used as test oracles.

These deliberately share no code with the package: plain loops or dense
numpy over all pairs, ordered double sums halved, brute-force enumeration.
"""
import itertools
import math

import numpy as np


def cell_xy(grid, c):
    return grid.x0 + (c % grid.cols) * grid.sx, grid.y0 + (c // grid.cols) * grid.sy


def costs_ordered_halved(instance, assignment):
    """Ordered double sum over p != q, then halved."""
    p0 = np.asarray(instance.p0)
    xy = [cell_xy(instance.grid, int(c)) for c in assignment]
    n = len(assignment)
    c1 = c2 = 0.0
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            d = math.hypot(xy[p][0] - xy[q][0], xy[p][1] - xy[q][1])
            d1 = math.hypot(p0[p, 0] - xy[p][0], p0[p, 1] - xy[p][1])
            d2 = math.hypot(p0[q, 0] - xy[q][0], p0[q, 1] - xy[q][1])
            dx = math.hypot(p0[p, 0] - p0[q, 0], p0[p, 1] - p0[q, 1])
            c1 += d * instance.f1[p, q]
            c2 += d / (1.0 + (d1 + d2 + dx + d) / 4.0)
    return c1 / 2.0, c2 / 2.0


def brute_flows(points, k_star):
    """f1 and core distances by explicit loops over all pairs."""
    pts = [tuple(map(float, p)) for p in points]
    n = len(pts)
    core = []
    for i in range(n):
        ds = sorted(math.dist(pts[i], pts[j]) for j in range(n) if j != i)
        core.append(ds[min(k_star, len(ds)) - 1])
    f1 = np.zeros((n, n))
    dmr = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dmr[i, j] = max(core[i], core[j], math.dist(pts[i], pts[j]))
                f1[i, j] = 1.0 / (1.0 + math.exp(dmr[i, j]))
    return f1, np.array(core), dmr


def all_costs(instance, n_cells):
    """Cost vectors of every injective assignment, vectorised over permutations."""
    n = instance.n_objects
    perms = np.array(list(itertools.permutations(range(n_cells), n)), dtype=np.int64)
    xy = np.stack([cell_xy(instance.grid, np.arange(n_cells))[0],
                   cell_xy(instance.grid, np.arange(n_cells))[1]], axis=1)
    P = xy[perms]
    disp = np.linalg.norm(P - np.asarray(instance.p0)[None], axis=-1)
    dx = np.linalg.norm(instance.p0[:, None] - instance.p0[None], axis=-1)
    c1 = np.zeros(len(perms))
    c2 = np.zeros(len(perms))
    for a in range(n):
        for b in range(a + 1, n):
            d = np.linalg.norm(P[:, a] - P[:, b], axis=-1)
            c1 += d * instance.f1[a, b]
            c2 += d / (1 + (disp[:, a] + disp[:, b] + dx[a, b] + d) / 4)
    return np.stack([c1, c2], axis=1), perms


def pareto_set(C, rtol=1e-9):
    """Non-dominated cost vectors with dominance judged up to a relative
    tolerance, near-equal vectors collapsed; sorted by c1.

    Grid symmetries give assignments whose costs agree in exact arithmetic
    but differ in the last bits, so an exact comparison would be arbitrary.
    """
    C = np.asarray(C, dtype=np.float64)
    tol = rtol * np.abs(C).max()
    # exact sweep first to shrink the set
    C = C[np.lexsort((C[:, 1], C[:, 0]))]
    front = []
    best = np.inf
    for c in C:
        if c[1] < best:
            front.append(c)
            best = c[1]
    F = np.array(front)
    keep = [c for c in F
            if not np.any(np.all(F <= c + tol, axis=1) & np.any(F < c - tol, axis=1))]
    out = []
    for c in keep:
        if not out or np.any(np.abs(c - out[-1]) > tol):
            out.append(c)
    return np.array(out)


def same_front(A, B, rtol=1e-9):
    A, B = pareto_set(A, rtol), pareto_set(B, rtol)
    scale = max(np.abs(A).max(), np.abs(B).max())
    return A.shape == B.shape and bool(np.all(np.abs(A - B) <= rtol * scale))


def exact_knn(X, k):
    """k nearest ids per row, ties by smaller id, via a full distance matrix."""
    X = np.asarray(X, dtype=np.float64)
    D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    np.fill_diagonal(D, np.inf)
    n = len(X)
    order = np.lexsort((np.broadcast_to(np.arange(n), D.shape), D), axis=1)
    return order[:, :k]


def random_instance(n, seed, rows=50, cols=50, spread=10.0):
    """Random objects scattered in a box, flows from the package (flows have their own oracle)."""
    from mqapviz.instances import compute_flows, induce_grid
    from mqapviz.mqap import MqapInstance

    r = np.random.default_rng(seed)
    p0 = r.uniform(0, spread, size=(n, 2))
    grid = induce_grid(p0, rows, cols)
    if n == 1:
        return MqapInstance(0, np.arange(1), grid, np.zeros((1, 1)), p0)
    f1, core = compute_flows(p0, min(5, n - 1))
    return MqapInstance(0, np.arange(n), grid, f1, p0, core, 5)
