"""Layout quality as k-NN classification accuracy on the 2-D coordinates."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._seeding import derive_rng
from .exceptions import ParameterError

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.02, 0.05, 0.1, 0.2, 0.5)


@dataclass(frozen=True)
class AccuracyRow:
    fraction: float
    mean: float
    ci_half: float
    repeats: int
    k: int
    accuracies: tuple = ()


@dataclass(frozen=True)
class AccuracyReport:
    rows: tuple

    def __len__(self):
        return len(self.rows)

    def to_tsv(self) -> str:
        lines = ["fraction\tmean\tci_half\trepeats\tk"]
        for r in self.rows:
            lines.append(f"{r.fraction:.9g}\t{r.mean:.9g}\t{r.ci_half:.9g}\t{r.repeats}\t{r.k}")
        return "\n".join(lines) + "\n"

    def write_tsv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_tsv())


def stratified_split(y, train_fraction, rng):
    """Boolean train mask drawing ``round(fraction * count)`` per class (at least one,
    never all). Classes with fewer than two members are split without stratification."""
    y = np.asarray(y)
    train = np.zeros(len(y), dtype=bool)
    classes, counts = np.unique(y, return_counts=True)
    loose = []
    for c, cnt in zip(classes, counts):
        idx = np.flatnonzero(y == c)
        if cnt < 2:
            loose.append(idx)
            continue
        take = min(max(1, int(round(train_fraction * cnt))), cnt - 1)
        train[rng.permutation(idx)[:take]] = True
    if loose:
        small = classes[counts < 2].tolist()
        warnings.warn(f"classes {small} have fewer than 2 members; split without stratification")
        idx = np.concatenate(loose)
        train[idx[rng.random(len(idx)) < train_fraction]] = True
    return train


def knn_predict(train_xy, train_y, test_xy, k, chunk=None):
    """Majority vote among the k nearest training points.

    Equal distances resolve to the smaller training id; vote ties to the
    smallest class id.
    """
    n_classes = int(train_y.max()) + 1
    if chunk is None:
        chunk = max(1, 4_000_000 // max(1, len(train_xy)))
    out = np.empty(len(test_xy), dtype=np.int64)
    for s in range(0, len(test_xy), chunk):
        q = test_xy[s:s + chunk]
        d = ((q[:, None, :] - train_xy[None, :, :]) ** 2).sum(-1)
        # training points are in ascending id order, so a stable sort breaks ties by id
        nn = np.argsort(d, axis=1, kind="stable")[:, :k]
        votes = np.zeros((len(q), n_classes), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(len(q)), k), train_y[nn].ravel()), 1)
        out[s:s + chunk] = votes.argmax(axis=1)
    return out


def _coords(layout):
    if hasattr(layout, "positions"):
        return layout.ids, np.asarray(layout.positions)
    xy = np.asarray(layout, dtype=np.float64)
    return np.arange(len(xy)), xy


def _labels_for(ids, labels):
    if hasattr(labels, "to_array"):
        arr = labels.to_array(max(int(ids.max()), int(np.max(labels.ids, initial=-1))) + 1)
    else:
        arr = np.asarray(labels, dtype=np.int64)
    y = arr[ids]
    if np.any(y < 0):
        raise ValueError("labels do not cover every layout id")
    return y


def knn_accuracy(layout, labels, k: int = 500, train_fraction: float = 0.3, repeats: int = 30,
                 random_state=0) -> AccuracyRow:
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    ids, xy = _coords(layout)
    y = _labels_for(ids, labels)
    accs = []
    k_used = k
    for r in range(repeats):
        rng = derive_rng(random_state, "eval", float(train_fraction).hex(), r)
        train = stratified_split(y, train_fraction, rng)
        test = ~train
        k_used = min(k, int(train.sum()))
        pred = knn_predict(xy[train], y[train], xy[test], k_used)
        accs.append(float(np.mean(pred == y[test])))
    accs = np.array(accs)
    mean = float(accs.mean())
    ci = 1.96 * float(accs.std(ddof=1)) / math.sqrt(repeats) if repeats >= 2 else float("nan")
    return AccuracyRow(float(train_fraction), mean, ci, repeats, k_used, tuple(accs.tolist()))


def accuracy_curve(layout, labels, fractions=DEFAULT_FRACTIONS, k: int = 500, repeats: int = 30,
                   random_state=0) -> AccuracyReport:
    fractions = list(fractions)
    if not fractions:
        raise ParameterError("need at least one training fraction")
    return AccuracyReport(tuple(knn_accuracy(layout, labels, k, f, repeats, random_state)
                                for f in fractions))
