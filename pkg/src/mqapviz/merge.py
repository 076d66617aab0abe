"""Pick representative solutions from each front and merge them into global layouts."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .io import Layout, LabelSet, emit_svg, write_layout
from .mqap import CostVector, MqapInstance, ParetoArchive

log = logging.getLogger(__name__)

KINDS = ("top", "bottom", "median")
QUANTUM = 1e-6


@dataclass(frozen=True)
class Representatives:
    top: tuple
    bottom: tuple
    median: tuple

    def get(self, kind: str):
        if kind not in KINDS:
            raise ValueError(f"unknown representative kind {kind!r}")
        return getattr(self, kind)


def _members(front):
    if isinstance(front, ParetoArchive):
        return front.members()
    return [(np.asarray(a, dtype=np.int64), CostVector(*c)) for a, c in front]


def select_representatives(front) -> Representatives:
    """Best-in-c1, best-in-c2 and rank-median members of a non-empty front.

    Ties: the other objective, then the lexicographically smaller assignment.
    The median is the element at ``(len - 1) // 2`` after sorting by
    (c1 ascending, c2 descending).
    """
    members = _members(front)
    if not members:
        raise ValueError("cannot select representatives from an empty front")

    def key_top(m):
        return (m[1].c1, m[1].c2, tuple(m[0].tolist()))

    def key_bottom(m):
        return (m[1].c2, m[1].c1, tuple(m[0].tolist()))

    top = min(members, key=key_top)
    bottom = min(members, key=key_bottom)
    ordered = sorted(members, key=lambda m: (m[1].c1, -m[1].c2, tuple(m[0].tolist())))
    median = ordered[(len(ordered) - 1) // 2]
    return Representatives(top, bottom, median)


@dataclass
class InstanceSolution:
    instance: MqapInstance
    archive: ParetoArchive
    representatives: Representatives = field(init=False)

    def __post_init__(self):
        self.representatives = select_representatives(self.archive)


def _qkey(x, y):
    return (round(x / QUANTUM), round(y / QUANTUM))


class GlobalLayoutBuilder:
    """Places vertices one at a time on distinct quantized positions."""

    def __init__(self, n_vertices: int):
        self.n = n_vertices
        self.occupied = set()
        self.placed = {}
        self.conflict_count = 0

    def is_free(self, x, y) -> bool:
        return _qkey(x, y) not in self.occupied

    def _put(self, v, x, y):
        self.occupied.add(_qkey(x, y))
        self.placed[v] = (x, y)

    def place(self, v: int, cell: int, grid) -> None:
        if v in self.placed:
            return
        x, y = (float(c) for c in grid.cell_coords(cell))
        if self.is_free(x, y):
            self._put(v, x, y)
            return
        self.conflict_count += 1
        coords = grid.all_coords()
        d = (coords[:, 0] - x) ** 2 + (coords[:, 1] - y) ** 2
        for c in np.argsort(d, kind="stable"):
            cx, cy = float(coords[c, 0]), float(coords[c, 1])
            if self.is_free(cx, cy):
                self._put(v, cx, cy)
                return
        self._put(v, *self._spiral(x, y, grid.sx, grid.sy))

    def _spiral(self, x, y, sx, sy):
        # rings of grid-spacing multiples around the target, clockwise from the east
        ring = 1
        while True:
            for i, j in _ring_offsets(ring):
                cx, cy = x + i * sx, y + j * sy
                if self.is_free(cx, cy):
                    return cx, cy
            ring += 1

    def layout(self) -> Layout:
        missing = [v for v in range(self.n) if v not in self.placed]
        if missing:
            raise RuntimeError(f"{len(missing)} vertices were never placed, e.g. {missing[:10]}")
        return Layout.from_dict(self.placed)


def _ring_offsets(r):
    out = []
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            if max(abs(i), abs(j)) == r:
                out.append((i, j))
    out.sort(key=lambda ij: (ij[0] ** 2 + ij[1] ** 2, ij))
    return out


def merge_fronts(solutions, kind: str, n_vertices: int, return_builder: bool = False):
    """Merge the ``kind`` representative of every front into one layout.

    Seeds are visited in ascending id; within an instance the seed goes first,
    then the other objects by ascending id. A vertex keeps the first position it
    receives; an occupied target falls back to the nearest free cell of the
    same grid, then to a spiral search.
    """
    builder = GlobalLayoutBuilder(n_vertices)
    for seed in sorted(solutions):
        sol = solutions[seed]
        inst = sol.instance
        assignment, _ = sol.representatives.get(kind)
        builder.place(int(inst.objects[0]), int(assignment[0]), inst.grid)
        rest = np.argsort(inst.objects[1:], kind="stable") + 1
        for o in rest:
            builder.place(int(inst.objects[o]), int(assignment[o]), inst.grid)
    layout = builder.layout()
    log.info("merged %s layout: %d vertices, %d conflicts", kind, n_vertices, builder.conflict_count)
    if return_builder:
        return layout, builder
    return layout


def quantized_injective(layout: Layout) -> bool:
    keys = {_qkey(x, y) for x, y in layout.positions.tolist()}
    return len(keys) == len(layout)


def emit_all(layouts: dict, out_dir, labels: LabelSet | None = None) -> list:
    """Write ``layout_<kind>.tsv`` and ``layout_<kind>.svg`` for every kind."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for kind in KINDS:
        if kind not in layouts:
            continue
        tsv = os.path.join(out_dir, f"layout_{kind}.tsv")
        svg = os.path.join(out_dir, f"layout_{kind}.svg")
        write_layout(layouts[kind], tsv)
        emit_svg(layouts[kind], svg, labels)
        written += [tsv, svg]
    return written
