"""Seed sampling and construction of the per-seed mQAP sub-instances."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .exceptions import ParameterError
from .mqap import DEFAULT_COLS, DEFAULT_ROWS, GridSpec, MqapInstance

MAX_NEIGHBORS = DEFAULT_ROWS * DEFAULT_COLS - 1
MIN_SPACING = 1e-3


def seed_count(n_vertices: int, p_s: float) -> int:
    return int(np.floor(p_s * n_vertices + 0.5))


def sample_seed_vertices(graph, p_s: float, sampler, random_state=0) -> np.ndarray:
    """Distinct seed vertices drawn with probability proportional to the sampler's weights.

    Repeated draws that discard already-chosen vertices are equivalent to
    ordering vertices by exponential race keys ``E_v / w_v``; that form has no
    coupon-collector tail when ``p_s`` approaches 1.
    """
    if not 0 < p_s <= 1:
        raise ParameterError(f"p_s must be in (0, 1], got {p_s}")
    n = graph.n
    target = seed_count(n, p_s)
    rng = np.random.default_rng(random_state)
    keys = rng.standard_exponential(n) / sampler.weights
    order = np.lexsort((np.arange(n), keys))
    return order[:target].astype(np.int64)


def induce_grid(positions, rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> GridSpec:
    """Evenly spaced grid spanning the bounding box of ``positions``."""
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    w, h = hi - lo
    sx = w / (cols - 1) if cols > 1 else 0.0
    sy = h / (rows - 1) if rows > 1 else 0.0
    if sx <= 0 and sy <= 0:
        sx = sy = MIN_SPACING
    elif sx <= 0:
        sx = max(sy, MIN_SPACING)
    elif sy <= 0:
        sy = max(sx, MIN_SPACING)
    return GridSpec(float(lo[0]), float(lo[1]), float(sx), float(sy), rows, cols)


def core_distances(positions, k_star: int) -> np.ndarray:
    """Distance from each point to its ``k_star``-th nearest other point
    (the farthest one when fewer than ``k_star`` others exist)."""
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if k_star < 1:
        raise ParameterError("k_star must be >= 1")
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    rank = min(k_star, n - 1) - 1
    return np.partition(d, rank, axis=1)[:, rank]


def mutual_reachability(positions, core) -> np.ndarray:
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return np.maximum(np.maximum(core[:, None], core[None, :]), d)


def compute_flows(positions, k_star: int = 5):
    """Density-aware flow ``1 / (1 + exp(d_mr))`` over the given objects.

    Returns ``(f1, core_distances)``.
    """
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("flows need at least two objects")
    core = core_distances(pts, k_star)
    dmr = mutual_reachability(pts, core)
    # expit(-x) == 1/(1+exp(x)), accurate far into the tail
    f1 = np.maximum(expit(-dmr), np.finfo(np.float64).tiny)
    np.fill_diagonal(f1, 0.0)
    return f1, core


def instance_objects(graph, seed: int, max_neighbors: int = MAX_NEIGHBORS) -> np.ndarray:
    """Seed followed by its graph neighbors, nearest first (ties by id), capped."""
    nbrs = graph.neighbors(seed)
    dist = graph.neighbor_distances(seed)
    order = np.lexsort((nbrs, dist))[:max_neighbors]
    return np.concatenate([[seed], nbrs[order]]).astype(np.int64)


def build_instance(graph, layout0, seed: int, k_star: int = 5, rows: int = DEFAULT_ROWS,
                   cols: int = DEFAULT_COLS) -> MqapInstance:
    """Sub-instance induced by ``seed`` and its k-NN neighborhood in the initial layout."""
    coords = layout0 if isinstance(layout0, np.ndarray) else layout0.to_array(graph.n)
    objects = instance_objects(graph, int(seed), rows * cols - 1)
    p0 = coords[objects]
    grid = induce_grid(p0, rows, cols)
    if len(objects) == 1:
        return MqapInstance(int(seed), objects, grid, np.zeros((1, 1)), p0)
    f1, core = compute_flows(p0, k_star)
    return MqapInstance(int(seed), objects, grid, f1, p0, core, k_star)


def missing_vertices(instances, n_vertices: int) -> np.ndarray:
    """Vertices that appear in none of the given instances, ascending."""
    covered = np.zeros(n_vertices, dtype=bool)
    for inst in instances:
        covered[inst.objects] = True
    return np.flatnonzero(~covered).astype(np.int64)
