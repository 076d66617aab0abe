"""Bi-objective QAP instances on a rectangular grid.

Costs sum over unordered object pairs ``{p, q}``::

    c1 = sum d(p, q) * f1[p, q]
    c2 = sum d(p, q) / (1 + (d1 + d2 + dx + d(p, q)) / 4)

where ``d`` is the distance between assigned cells, ``d1``/``d2`` the distance
of each object's cell from its initial position and ``dx`` the distance between
the initial positions. The ordered double sum is exactly twice this, which
leaves dominance unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K

DEFAULT_ROWS = 50
DEFAULT_COLS = 50
DEFAULT_ARCHIVE_CAPACITY = 64


class CostVector(NamedTuple):
    c1: float
    c2: float


@dataclass(frozen=True)
class GridSpec:
    """``rows x cols`` cells; cell ``i`` sits at
    ``(x0 + (i % cols) * sx, y0 + (i // cols) * sy)``."""

    x0: float
    y0: float
    sx: float
    sy: float
    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise ValueError(f"grid spacing must be positive, got ({self.sx}, {self.sy})")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and column")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.sx, self.sy, self.rows, self.cols], dtype=np.float64)

    def cell_coords(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        x = self.x0 + (cells % self.cols) * self.sx
        y = self.y0 + (cells // self.cols) * self.sy
        return np.stack([x, y], axis=-1)

    def all_coords(self) -> np.ndarray:
        return self.cell_coords(np.arange(self.n_cells))


@dataclass(frozen=True, eq=False)
class MqapInstance:
    """One sub-problem: objects (seed first), their grid, flows and initial positions.

    A singleton instance (one object) is solved by direct placement.
    """

    seed: int
    objects: np.ndarray
    grid: GridSpec
    f1: np.ndarray = field(repr=False)
    p0: np.ndarray = field(repr=False)
    core_distances: np.ndarray | None = field(default=None, repr=False)
    k_star: int | None = None
    dx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        objects = np.asarray(self.objects, dtype=np.int64)
        p0 = np.ascontiguousarray(self.p0, dtype=np.float64).reshape(-1, 2)
        f1 = np.ascontiguousarray(self.f1, dtype=np.float64)
        n = len(objects)
        if n < 1:
            raise ValueError("instance needs at least one object")
        if n > self.grid.n_cells:
            raise ValueError(f"{n} objects do not fit on {self.grid.n_cells} cells")
        if p0.shape != (n, 2) or f1.shape != (n, n):
            raise ValueError("p0 / f1 shapes do not match the object list")
        if not np.array_equal(f1, f1.T):
            raise ValueError("f1 must be symmetric")
        if np.any(np.diag(f1) != 0):
            raise ValueError("f1 must have a zero diagonal")
        off = f1[~np.eye(n, dtype=bool)]
        if off.size and (off.min() <= 0 or off.max() > 0.5):
            raise ValueError("f1 off-diagonal entries must lie in (0, 0.5]")
        dx = np.sqrt(((p0[:, None, :] - p0[None, :, :]) ** 2).sum(-1))
        for name, val in (("objects", objects), ("p0", p0), ("f1", f1), ("dx", dx)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def is_singleton(self) -> bool:
        return self.n_objects == 1

    def kernel_args(self):
        return self.p0, self.f1, self.dx, self.grid.as_array()


def check_assignment(instance: MqapInstance, assignment) -> np.ndarray:
    pos = np.ascontiguousarray(assignment, dtype=np.int64)
    if pos.shape != (instance.n_objects,):
        raise ValueError(f"assignment has shape {pos.shape}, expected ({instance.n_objects},)")
    if pos.min() < 0 or pos.max() >= instance.grid.n_cells:
        raise ValueError("assignment refers to a cell outside the grid")
    if len(np.unique(pos)) != len(pos):
        raise ValueError("assignment is not injective")
    return pos


def flow2(d1: float, d2: float, dx: float, dy: float) -> float:
    """Second flow of a pair from the displacements ``d1``, ``d2`` of both objects,
    their initial distance ``dx`` and their assigned distance ``dy``."""
    return float(K.flow2(float(d1), float(d2), float(dx), float(dy)))


def evaluate_costs(instance: MqapInstance, assignment) -> CostVector:
    pos = check_assignment(instance, assignment)
    return CostVector(*K.full_cost(pos, *instance.kernel_args()))


def _state(instance, pos):
    p0, _, _, grid = instance.kernel_args()
    owner = np.full(instance.grid.n_cells, -1, dtype=np.int64)
    owner[pos] = np.arange(len(pos))
    xy = np.empty((len(pos), 2))
    disp = np.empty(len(pos))
    K.fill_state(pos, p0, grid, xy, disp)
    return owner, xy, disp


def delta_move(instance: MqapInstance, assignment, a: int, cell: int) -> CostVector:
    """Exact cost change of moving object ``a`` to ``cell`` (a swap if occupied)."""
    pos = check_assignment(instance, assignment)
    if not 0 <= cell < instance.grid.n_cells:
        raise ValueError(f"cell {cell} outside the grid")
    owner, xy, disp = _state(instance, pos)
    return CostVector(*K.delta_move(int(a), int(cell), pos, owner, xy, disp, *instance.kernel_args()))


def delta_swap(instance: MqapInstance, assignment, a: int, b: int) -> CostVector:
    """Cost change of exchanging the cells of objects ``a`` and ``b``."""
    if a == b:
        return CostVector(0.0, 0.0)
    pos = np.asarray(assignment)
    return delta_move(instance, assignment, a, int(pos[b]))


def delta_relocate(instance: MqapInstance, assignment, a: int, cell: int) -> CostVector:
    """Cost change of moving object ``a`` to an empty ``cell``."""
    pos = np.asarray(assignment)
    if cell in pos and pos[a] != cell:
        raise ValueError(f"cell {cell} is occupied")
    return delta_move(instance, assignment, a, cell)


def apply_move(assignment, a: int, cell: int) -> np.ndarray:
    """Return a copy with ``a`` moved to ``cell``, swapping with any occupant."""
    pos = np.array(assignment, dtype=np.int64)
    hit = np.flatnonzero(pos == cell)
    if len(hit):
        pos[hit[0]] = pos[a]
    pos[a] = cell
    return pos


def dominates(u, v) -> bool:
    return bool(K.dominates(float(u[0]), float(u[1]), float(v[0]), float(v[1])))


def crowding_distance(costs) -> np.ndarray:
    costs = np.ascontiguousarray(costs, dtype=np.float64).reshape(-1, 2)
    return K.crowding(costs, len(costs))


class ParetoArchive:
    """Bounded set of mutually non-dominated (assignment, cost) pairs.

    Over capacity, the member with the smallest crowding distance is dropped;
    the two extreme members have infinite crowding distance and always stay.
    """

    def __init__(self, n_objects: int, capacity: int = DEFAULT_ARCHIVE_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.n_objects = n_objects
        self.capacity = capacity
        self._cost = np.empty((capacity + 1, 2))
        self._pos = np.empty((capacity + 1, n_objects), dtype=np.int64)
        self._size = 0

    @classmethod
    def from_arrays(cls, costs, assignments, capacity=DEFAULT_ARCHIVE_CAPACITY) -> "ParetoArchive":
        assignments = np.asarray(assignments, dtype=np.int64)
        arch = cls(assignments.shape[1], max(capacity, len(assignments)))
        for c, a in zip(np.asarray(costs, dtype=np.float64), assignments):
            arch.insert(a, c)
        return arch

    def insert(self, assignment, cost) -> bool:
        pos = np.ascontiguousarray(assignment, dtype=np.int64)
        kept, self._size = K.archive_insert(self._cost, self._pos, self._size, self.capacity,
                                            float(cost[0]), float(cost[1]), pos)
        return bool(kept)

    def __len__(self):
        return self._size

    @property
    def costs(self) -> np.ndarray:
        return self._cost[:self._size].copy()

    @property
    def assignments(self) -> np.ndarray:
        return self._pos[:self._size].copy()

    def members(self):
        return [(self._pos[i].copy(), CostVector(*self._cost[i])) for i in range(self._size)]

    def __iter__(self):
        return iter(self.members())

    def __repr__(self):
        return f"ParetoArchive(size={self._size}, capacity={self.capacity})"


def archive_insert(archive: ParetoArchive, solution) -> bool:
    assignment, cost = solution
    return archive.insert(assignment, cost)


def non_dominated_mask(costs) -> np.ndarray:
    """Boolean mask of rows not dominated by any other row (O(n log n) for 2 objectives)."""
    costs = np.asarray(costs, dtype=np.float64).reshape(-1, 2)
    order = np.lexsort((costs[:, 1], costs[:, 0]))
    keep = np.zeros(len(costs), dtype=bool)
    best_c2 = np.inf
    prev = None
    for i in order:
        c = (costs[i, 0], costs[i, 1])
        if c[1] < best_c2:
            keep[i] = True
            best_c2 = c[1]
            prev = c
        elif prev is not None and c == prev:
            keep[i] = True
    return keep
