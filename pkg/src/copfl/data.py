"""Synthetic Gaussian-mixture data and label-skew partitioning across clients."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import LabeledBatch


class CapacityError(ValueError):
    """The pool does not hold enough samples of some class for the partition."""


@dataclass(frozen=True)
class Pool:
    """A labeled sample pool from which client shards are cut."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int
    classes_per_client: int
    train_bound: int
    test_bound: int
    num_classes: int
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not 1 <= self.classes_per_client <= self.num_classes:
            raise ValueError("classes_per_client must lie in [1, num_classes]")
        if self.train_bound < 1 or self.test_bound < 1:
            raise ValueError("train_bound and test_bound must be >= 1")

    def assignments_per_class(self) -> int:
        """Upper bound on how many clients draw from any one class."""
        return math.ceil(self.num_clients * self.classes_per_client / self.num_classes)


@dataclass
class ClientDataset:
    train: LabeledBatch
    test: LabeledBatch
    class_set: frozenset
    train_idx: np.ndarray = field(repr=False)
    test_idx: np.ndarray = field(repr=False)


def gen_synthetic(
    num_classes: int,
    input_dim: int,
    samples_per_class: int,
    seed: int,
    noise_scale: float,
    mean_scale: float = 1.0,
    mean_rank: int | None = None,
    max_tries: int = 1000,
) -> Pool:
    """Draw an isotropic Gaussian cluster per class.

    Class means come from N(0, mean_scale^2 I) and are redrawn until every
    pair sits at least ``2 * noise_scale`` apart. With ``mean_rank`` the means
    are confined to a random ``mean_rank``-dimensional subspace (rescaled to
    keep their expected norm) while the noise stays full-dimensional.
    Samples are grouped by class.
    """
    if min(num_classes, input_dim, samples_per_class) < 1:
        raise ValueError("all counts must be >= 1")
    if mean_rank is not None and not 1 <= mean_rank <= input_dim:
        raise ValueError("mean_rank must lie in [1, input_dim]")
    rng = np.random.default_rng(seed)
    basis = None
    if mean_rank is not None:
        q, _ = np.linalg.qr(rng.normal(size=(input_dim, mean_rank)))
        basis = q.T * np.sqrt(input_dim / mean_rank)
    for _ in range(max_tries):
        if basis is None:
            means = rng.normal(0.0, mean_scale, size=(num_classes, input_dim))
        else:
            means = rng.normal(0.0, mean_scale, size=(num_classes, basis.shape[0])) @ basis
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        dist[np.diag_indices(num_classes)] = np.inf
        if dist.min() >= 2.0 * noise_scale:
            break
    else:
        raise ValueError(
            f"could not separate class means after {max_tries} tries; reduce noise_scale"
        )
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    noise = rng.normal(0.0, 1.0, size=(labels.shape[0], input_dim))
    inputs = means[labels] + noise_scale * noise
    return Pool(inputs, labels, num_classes)


def load_csv_pool(path) -> Pool:
    """Read ``label,feat_0,...,feat_{D-1}`` rows (header required)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0].strip() != "label":
            raise ValueError(f"{path}: first header column must be 'label'")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no samples")
    width = len(header)
    for lineno, row in enumerate(rows, start=2):
        if len(row) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    inputs = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    return Pool(inputs, labels, int(labels.max()) + 1)


def assign_classes(spec: PartitionSpec) -> list[list[int]]:
    """Round-robin over a seeded shuffle of the classes, ``s`` per client."""
    rng = np.random.default_rng([spec.seed, 0])
    order = rng.permutation(spec.num_classes)
    s, C = spec.classes_per_client, spec.num_classes
    return [[int(order[(n * s + j) % C]) for j in range(s)] for n in range(spec.num_clients)]


def partition(pool: Pool, spec: PartitionSpec) -> list[ClientDataset]:
    """Split ``pool`` so each client sees only its ``s`` assigned classes.

    Every (client, class) pair receives ``train_bound`` training and
    ``test_bound`` test samples, cut from disjoint slices of that class.
    """
    if pool.num_classes < spec.num_classes:
        raise ValueError("pool has fewer classes than the partition needs")
    assignment = assign_classes(spec)
    per_pair = spec.train_bound + spec.test_bound
    demand = np.zeros(spec.num_classes, dtype=int)
    for classes in assignment:
        for c in classes:
            demand[c] += 1
    rng = np.random.default_rng([spec.seed, 1])
    shuffled = {}
    for c in range(spec.num_classes):
        idx = np.flatnonzero(pool.labels == c)
        if idx.shape[0] < demand[c] * per_pair:
            raise CapacityError(
                f"class {c} has {idx.shape[0]} samples, needs {demand[c] * per_pair}"
            )
        shuffled[c] = rng.permutation(idx)

    cursor = np.zeros(spec.num_classes, dtype=int)
    clients = []
    for classes in assignment:
        train_parts, test_parts = [], []
        for c in classes:
            start = cursor[c]
            chunk = shuffled[c][start : start + per_pair]
            cursor[c] += per_pair
            train_parts.append(chunk[: spec.train_bound])
            test_parts.append(chunk[spec.train_bound :])
        tr = np.concatenate(train_parts)
        te = np.concatenate(test_parts)
        clients.append(
            ClientDataset(
                train=LabeledBatch(pool.inputs[tr], pool.labels[tr]),
                test=LabeledBatch(pool.inputs[te], pool.labels[te]),
                class_set=frozenset(classes),
                train_idx=tr,
                test_idx=te,
            )
        )
    return clients


def apply_feature_shift(clients: list[ClientDataset], seed: int, shift_scale: float) -> list[ClientDataset]:
    """Per-client affine input perturbation ``x * a_n + b_n``.

    ``a_n`` is uniform in [0.8, 1.2] and ``b_n`` ~ N(0, shift_scale^2 I),
    drawn once per client. Train and test of a client share the transform.
    """
    out = []
    for n, cd in enumerate(clients):
        rng = np.random.default_rng([seed, 2, n])
        dim = cd.train.inputs.shape[1]
        scale = rng.uniform(0.8, 1.2)
        offset = rng.normal(0.0, shift_scale, size=dim)
        out.append(
            ClientDataset(
                train=LabeledBatch(cd.train.inputs * scale + offset, cd.train.labels),
                test=LabeledBatch(cd.test.inputs * scale + offset, cd.test.labels),
                class_set=cd.class_set,
                train_idx=cd.train_idx,
                test_idx=cd.test_idx,
            )
        )
    return out


def class_overlap(clients: list[ClientDataset]) -> dict[int, int]:
    """How many clients hold each class."""
    counts: dict[int, int] = {}
    for cd in clients:
        for c in cd.class_set:
            counts[c] = counts.get(c, 0) + 1
    return dict(sorted(counts.items()))
