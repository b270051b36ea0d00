"""Datasets, loaders and non-IID client partitioners."""

import csv
from dataclasses import dataclass
from typing import List

import numpy as np

from . import rng as _rng
from .errors import (
    DivisibilityError,
    InfeasibleMinSize,
    LabelOutOfRange,
    ParseError,
)

MAX_DIRICHLET_ATTEMPTS = 1000


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or len(x) == 0:
            raise ValueError("features must be a nonempty n x input_dim array")
        if y.shape != (len(x),):
            raise ValueError("need exactly one label per row")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise LabelOutOfRange(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True, eq=False)
class Partition:
    """One index array per client, over rows of a single dataset."""

    assignments: List[np.ndarray]

    def __len__(self):
        return len(self.assignments)

    def sizes(self):
        return [len(a) for a in self.assignments]

    def check(self, n, cover=True, allow_empty=False):
        """Raise ``AssertionError`` unless the sets are disjoint and in range."""
        seen = np.zeros(n, dtype=bool)
        for k, idx in enumerate(self.assignments):
            assert allow_empty or len(idx) > 0, f"client {k} is empty"
            assert np.all((idx >= 0) & (idx < n)), f"client {k} has out-of-range indices"
            assert not np.any(seen[idx]), f"client {k} overlaps another client"
            assert len(np.unique(idx)) == len(idx), f"client {k} repeats an index"
            seen[idx] = True
        if cover:
            assert seen.all(), "partition does not cover every index"


def gen_blobs(num_classes, per_class, input_dim, spread=1.0, seed=0) -> Dataset:
    """Isotropic Gaussian clusters, one per class, with seed-fixed centres.

    Rows are grouped by class: ``per_class`` rows of class 0, then class 1...
    """
    if min(num_classes, per_class, input_dim) < 1:
        raise ValueError("num_classes, per_class and input_dim must be positive")
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    gen = _rng.generator(seed, _rng.DATA)
    centers = gen.normal(0.0, 1.0, (num_classes, input_dim))
    noise = gen.normal(0.0, 1.0, (num_classes, per_class, input_dim))
    x = (centers[:, None, :] + spread * noise).reshape(-1, input_dim)
    y = np.repeat(np.arange(num_classes), per_class)
    return Dataset(x, y, num_classes)


def gen_conflicting_quadratics(num_clients, dim, per_client=10, radius=1.0,
                               jitter=0.1, spread=0.0, num_outliers=1, seed=0) -> Dataset:
    """Point clouds for quadratic clients with conflicting minimisers.

    Client ``k``'s samples are stored with label ``k``.  The last
    ``num_outliers`` clients sit at ``-radius * u`` and the rest cluster around
    ``+radius * u``, so the sample-weighted average gradient points away from
    the outliers.  ``jitter`` perturbs each centre; ``spread`` scatters samples
    around it.
    """
    if num_clients < 1 or dim < 1 or per_client < 1:
        raise ValueError("num_clients, dim and per_client must be positive")
    if not 0 <= num_outliers < max(num_clients, 2):
        raise ValueError("num_outliers must leave at least one inlier")
    gen = _rng.generator(seed, _rng.DATA)
    u = np.zeros(dim)
    u[0] = 1.0
    side = np.ones(num_clients)
    if num_outliers:
        side[-num_outliers:] = -1.0
    centers = radius * (side[:, None] * u + jitter * gen.normal(0.0, 1.0, (num_clients, dim)))
    noise = gen.normal(0.0, 1.0, (num_clients, per_client, dim))
    x = (centers[:, None, :] + spread * noise).reshape(-1, dim)
    y = np.repeat(np.arange(num_clients), per_client)
    return Dataset(x, y, num_clients)


def load_delimited(path, num_classes) -> Dataset:
    """Read comma-separated rows whose final column is an integer label."""
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ParseError("need at least one feature and a label", row=lineno)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, found {len(row)}", row=lineno)
            try:
                feats = [float(cell) for cell in row[:-1]]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature ({exc})", row=lineno) from None
            try:
                label = int(row[-1].strip())
            except ValueError:
                raise ParseError(f"label {row[-1]!r} is not an integer", row=lineno) from None
            if not 0 <= label < num_classes:
                raise LabelOutOfRange(
                    f"row {lineno}: label {label} outside [0, {num_classes})"
                )
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    return Dataset(np.array(rows), np.array(labels), num_classes)


def shard_partition(ds: Dataset, num_clients, shards_per_client, seed) -> Partition:
    """Label-sorted equal shards, ``shards_per_client`` drawn per client."""
    num_shards = num_clients * shards_per_client
    if num_clients < 1 or shards_per_client < 1:
        raise ValueError("num_clients and shards_per_client must be positive")
    if len(ds) % num_shards:
        raise DivisibilityError(
            f"{len(ds)} samples cannot be cut into {num_shards} equal shards"
        )
    order = np.argsort(ds.labels, kind="stable")
    shards = order.reshape(num_shards, -1)
    perm = _rng.generator(seed, _rng.PARTITION).permutation(num_shards)
    return Partition([
        np.concatenate(shards[perm[k * shards_per_client:(k + 1) * shards_per_client]])
        for k in range(num_clients)
    ])


def largest_remainder(proportions, total):
    """Integer counts summing to ``total``; leftovers go to the largest
    fractional parts, ties to the lowest index."""
    raw = np.asarray(proportions, dtype=np.float64) * total
    counts = np.floor(raw).astype(np.int64)
    leftover = int(total - counts.sum())
    if leftover:
        frac = raw - counts
        winners = np.argsort(-frac, kind="stable")[:leftover]
        counts[winners] += 1
    return counts


def dirichlet_partition(ds: Dataset, num_clients, beta, seed, min_size=1) -> Partition:
    """Split every class across clients with Dirichlet(beta) proportions.

    Proportions come from normalised Gamma(beta, 1) draws.  The whole draw is
    repeated until each client holds at least ``min_size`` samples.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if num_clients < 1:
        raise ValueError("num_clients must be positive")
    gen = _rng.generator(seed, _rng.PARTITION)
    by_class = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]
    for _ in range(MAX_DIRICHLET_ATTEMPTS):
        buckets = [[] for _ in range(num_clients)]
        for idx in by_class:
            if len(idx) == 0:
                continue
            weights = gen.gamma(beta, 1.0, num_clients)
            total = weights.sum()
            if not total > 0:
                # every gamma draw underflowed; put the class on one client
                weights = np.eye(num_clients)[gen.integers(num_clients)]
                total = 1.0
            counts = largest_remainder(weights / total, len(idx))
            shuffled = gen.permutation(idx)
            start = 0
            for k, c in enumerate(counts):
                buckets[k].append(shuffled[start:start + c])
                start += c
        parts = [np.sort(np.concatenate(b)) if b else np.zeros(0, np.int64) for b in buckets]
        if min(len(p) for p in parts) >= min_size:
            return Partition(parts)
    raise InfeasibleMinSize(MAX_DIRICHLET_ATTEMPTS, min_size)


def label_partition(ds: Dataset, num_clients) -> Partition:
    """Client ``k`` receives every sample labelled ``k``."""
    if num_clients != ds.num_classes:
        raise ValueError("label partition needs one class per client")
    return Partition([np.flatnonzero(ds.labels == k) for k in range(num_clients)])


def train_test_split(indices, test_fraction, seed, client_id):
    """Seeded shuffle of one client's indices into (train, test)."""
    idx = np.asarray(indices, dtype=np.int64)
    perm = _rng.generator(seed, _rng.SPLIT, client_id).permutation(idx)
    n_test = int(round(test_fraction * len(idx)))
    if len(idx) > 1:
        n_test = min(max(n_test, 1 if test_fraction > 0 else 0), len(idx) - 1)
    else:
        n_test = 0
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
