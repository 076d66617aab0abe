"""Readers and writers for vectors, labels, layouts and SVG renderings.

Formats
-------
raw-f32
    8-byte little-endian header ``(n: u32, d: u32)`` then ``n*d`` little-endian
    float32 values, row-major.
tsv vectors
    ``n`` lines of ``d`` tab-separated decimals.
labels
    ``id<TAB>class`` per line; class values are arbitrary integers and get
    remapped to ``0..c-1`` in first-occurrence order.
layout
    ``id<TAB>x<TAB>y`` per line, coordinates printed with 9 significant digits.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import LoadError

RAW_HEADER = struct.Struct("<II")

# tab20; class c gets PALETTE[c % 20]
PALETTE = (
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c",
    "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f",
    "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
)
UNLABELED_COLOR = "#808080"


@dataclass(frozen=True)
class Dataset:
    """Dense float32 vectors; object ids are the row indices."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"dataset must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.argwhere(~np.isfinite(v))[0, 0])
            raise ValueError(f"non-finite value in row {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class LabelSet:
    ids: np.ndarray
    classes: np.ndarray
    original: tuple = ()

    @property
    def class_count(self) -> int:
        return len(self.original)

    def __len__(self):
        return len(self.ids)

    def as_dict(self) -> dict:
        return dict(zip(self.ids.tolist(), self.classes.tolist()))

    def to_array(self, n: int) -> np.ndarray:
        """Dense per-object class array with -1 for unlabeled ids."""
        out = np.full(n, -1, dtype=np.int64)
        out[self.ids] = self.classes
        return out


@dataclass(frozen=True)
class Layout:
    """Mapping object id -> (x, y), stored as parallel arrays sorted by id."""

    ids: np.ndarray
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).ravel()
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if len(ids) != len(pos):
            raise ValueError("ids and positions differ in length")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate ids in layout")
        if np.any(ids < 0):
            raise ValueError("negative id in layout")
        if not np.all(np.isfinite(pos)):
            raise ValueError("non-finite coordinate in layout")
        order = np.argsort(ids, kind="stable")
        ids, pos = ids[order], np.ascontiguousarray(pos[order])
        ids.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_array(cls, coords) -> "Layout":
        coords = np.asarray(coords, dtype=np.float64)
        return cls(np.arange(len(coords)), coords)

    @classmethod
    def from_dict(cls, mapping) -> "Layout":
        ids = sorted(mapping)
        return cls(np.array(ids, dtype=np.int64),
                   np.array([mapping[i] for i in ids], dtype=np.float64).reshape(-1, 2))

    def __len__(self):
        return len(self.ids)

    def as_dict(self) -> dict:
        return {int(i): (float(x), float(y)) for i, (x, y) in zip(self.ids, self.positions)}

    def to_array(self, n: int | None = None) -> np.ndarray:
        """Dense (n, 2) array; requires the layout to cover 0..n-1."""
        n = len(self) if n is None else n
        if len(self) != n or (n and (self.ids[0] != 0 or self.ids[-1] != n - 1)):
            missing = np.setdiff1d(np.arange(n), self.ids)
            raise ValueError(f"layout does not cover ids 0..{n - 1}; missing {missing[:10].tolist()}")
        return np.array(self.positions)


# ---------------------------------------------------------------------------
# vectors


def load_vectors(path, format: str = "tsv") -> Dataset:
    if format in ("raw-f32", "raw", "f32"):
        return _load_raw(path)
    if format == "tsv":
        return _load_tsv(path)
    raise ValueError(f"unknown vector format {format!r}")


def _load_raw(path) -> Dataset:
    with open(path, "rb") as fh:
        head = fh.read(RAW_HEADER.size)
        if len(head) != RAW_HEADER.size:
            raise LoadError(f"{path}: truncated header at offset 0 ({len(head)} of 8 bytes)")
        n, d = RAW_HEADER.unpack(head)
        if n < 1 or d < 1:
            raise LoadError(f"{path}: malformed header at offset 0: n={n}, d={d}")
        body = fh.read()
    expected = 4 * n * d
    if len(body) != expected:
        raise LoadError(
            f"{path}: payload at offset 8 has {len(body)} bytes, header requires {expected}")
    vec = np.frombuffer(body, dtype="<f4").reshape(n, d)
    finite = np.isfinite(vec)
    if not finite.all():
        flat = int(np.argmin(finite.ravel()))
        raise LoadError(f"{path}: non-finite value at offset {8 + 4 * flat} (row {flat // d})")
    return Dataset(vec.astype(np.float32))


def _load_tsv(path) -> Dataset:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise LoadError(f"{path}:{lineno}: expected {width} columns, found {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise LoadError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise LoadError(f"{path}: no rows")
    return Dataset(np.array(rows, dtype=np.float32))


def write_vectors(dataset: Dataset, path, format: str = "raw-f32") -> None:
    vec = dataset.vectors
    if format in ("raw-f32", "raw", "f32"):
        with open(path, "wb") as fh:
            fh.write(RAW_HEADER.pack(*vec.shape))
            fh.write(vec.astype("<f4").tobytes())
    elif format == "tsv":
        with open(path, "w") as fh:
            for row in vec:
                fh.write("\t".join(format_float(float(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown vector format {format!r}")


# ---------------------------------------------------------------------------
# labels


def load_labels(path, n: int | None = None) -> LabelSet:
    ids, raw = [], []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LoadError(f"{path}:{lineno}: expected 'id<TAB>class'")
            try:
                oid, cls = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            if oid in seen:
                raise LoadError(f"{path}:{lineno}: duplicate id {oid}")
            if oid < 0 or (n is not None and oid >= n):
                raise LoadError(f"{path}:{lineno}: id {oid} out of range 0..{n - 1 if n else '?'}")
            seen.add(oid)
            ids.append(oid)
            raw.append(cls)
    remap = {}
    for c in raw:
        remap.setdefault(c, len(remap))
    classes = np.array([remap[c] for c in raw], dtype=np.int64)
    return LabelSet(np.array(ids, dtype=np.int64), classes, tuple(remap))


def write_labels(labels: LabelSet, path) -> None:
    """Writes the original class values when known, else the remapped ids."""
    names = labels.original or None
    with open(path, "w") as fh:
        for i, c in zip(labels.ids.tolist(), labels.classes.tolist()):
            fh.write(f"{i}\t{names[c] if names else c}\n")


# ---------------------------------------------------------------------------
# layouts


def format_float(x: float, digits: int = 9) -> str:
    return "%.*g" % (digits, x)


def write_layout(layout: Layout, path, digits: int = 9) -> None:
    """``id<TAB>x<TAB>y`` per line. ``digits=17`` makes the file round-trip float64 exactly."""
    if len(layout) == 0:
        raise ValueError("refusing to write an empty layout")
    with open(path, "w") as fh:
        for i, (x, y) in zip(layout.ids.tolist(), layout.positions.tolist()):
            fh.write(f"{i}\t{format_float(x, digits)}\t{format_float(y, digits)}\n")


def read_layout(path) -> Layout:
    ids, pos = [], []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LoadError(f"{path}:{lineno}: expected 'id<TAB>x<TAB>y'")
            try:
                oid, x, y = int(parts[0]), float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            if oid in seen:
                raise LoadError(f"{path}:{lineno}: duplicate id {oid}")
            if not (math.isfinite(x) and math.isfinite(y)):
                raise LoadError(f"{path}:{lineno}: non-finite coordinate")
            seen.add(oid)
            ids.append(oid)
            pos.append((x, y))
    return Layout(np.array(ids, dtype=np.int64), np.array(pos, dtype=np.float64).reshape(-1, 2))


# ---------------------------------------------------------------------------
# svg


def emit_svg(layout: Layout, path, labels: LabelSet | None = None, point_radius: float | None = None) -> None:
    """Render one circle per object; y grows upward as in the layout."""
    if len(layout) == 0:
        raise ValueError("refusing to render an empty layout")
    xs = layout.positions[:, 0]
    ys = -layout.positions[:, 1]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    w, h = x1 - x0, y1 - y0
    pad_x = 0.02 * w if w > 0 else 1.0
    pad_y = 0.02 * h if h > 0 else 1.0
    vb = (x0 - pad_x, y0 - pad_y, w + 2 * pad_x, h + 2 * pad_y)
    if point_radius is None:
        point_radius = 0.002 * max(vb[2], vb[3])
    lab = {} if labels is None else labels.as_dict()

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="%s %s %s %s">'
        % tuple(format_float(v) for v in vb),
    ]
    r = format_float(point_radius)
    for i, x, y in zip(layout.ids.tolist(), xs.tolist(), ys.tolist()):
        c = lab.get(i)
        fill = UNLABELED_COLOR if c is None else PALETTE[c % len(PALETTE)]
        out.append(f'<circle cx="{format_float(x)}" cy="{format_float(y)}" r="{r}" fill="{fill}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
