"""Datasets and the per-robot partitioners (IID, class skew, quantity skew)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .rng import SplitMix64, derive_seed

# derive_seed tags, so partition/split streams never collide
_TAG_IID = 1
_TAG_QUANTITY = 2
_TAG_CLASS = 3
_TAG_SPLIT = 4


@dataclass
class GlobalDataset:
    X: np.ndarray
    y: np.ndarray
    m: int

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (N, d) with one label per row")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.m):
            raise ValueError(f"labels must lie in [0, {self.m})")

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def class_indices(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.y == c) for c in range(self.m)]

    def subset(self, idx: np.ndarray) -> GlobalDataset:
        return GlobalDataset(self.X[idx], self.y[idx], self.m)


@dataclass
class ClientDataset:
    robot_id: int
    X: np.ndarray
    y: np.ndarray
    m: int
    # positions in the GlobalDataset this was cut from
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def from_indices(cls, robot_id: int, g: GlobalDataset, idx) -> ClientDataset:
        idx = np.asarray(sorted(idx), dtype=np.int64)
        return cls(robot_id, g.X[idx].reshape(len(idx), g.d), g.y[idx], g.m, idx)

    @property
    def total(self) -> int:
        return int(self.y.shape[0])

    @property
    def class_counts(self) -> list[int]:
        return np.bincount(self.y, minlength=self.m).tolist()


class Scheme(str, Enum):
    IID = "iid"
    CLASS_SKEW = "class_skew"
    QUANTITY_SKEW = "quantity_skew"


@dataclass(frozen=True)
class PartitionPlan:
    scheme: Scheme
    n: int
    j: int = 1
    alpha: float = 0.0
    beta: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.scheme is Scheme.QUANTITY_SKEW:
            if not 1 <= self.j < self.n:
                raise ValueError(f"quantity skew needs 1 <= j < n, got j={self.j}, n={self.n}")
            if not 0.0 <= self.beta <= 1.0:
                raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.scheme is Scheme.CLASS_SKEW and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")

    @property
    def label(self) -> str:
        if self.scheme is Scheme.IID:
            return "IID"
        if self.scheme is Scheme.CLASS_SKEW:
            return f"alpha={self.alpha:g}"
        return f"beta={self.beta:g}"

    def apply(self, g: GlobalDataset) -> list[ClientDataset]:
        if self.scheme is Scheme.IID:
            return partition_iid(g, self.n, self.seed)
        if self.scheme is Scheme.CLASS_SKEW:
            return partition_class_skew(g, self.n, self.alpha, self.seed)
        return partition_quantity_skew(g, self.n, self.j, self.beta, self.seed)


def generate_synthetic(m: int, d: int, per_class: int, separation: float, seed: int) -> GlobalDataset:
    """Unit-variance Gaussian clusters, one per class, in shuffled order.

    With ``m <= d`` the class means are ``separation / sqrt(2)`` times the
    first ``m`` basis vectors, so every pair of means is exactly
    ``separation`` apart. Otherwise the means sit on random directions at the
    same radius.
    """
    if m < 2:
        raise ValueError(f"need at least 2 classes, got {m}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    radius = separation / math.sqrt(2.0)
    if m <= d:
        means = np.eye(m, d) * radius
    else:
        dirs = rng.standard_normal((m, d))
        means = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * radius
    y = np.repeat(np.arange(m), per_class)
    X = means[y] + rng.standard_normal((m * per_class, d))
    order = rng.permutation(m * per_class)
    return GlobalDataset(X[order], y[order], m)


def _sort_labels(values: set[str]) -> list[str]:
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def load_csv(path, label_column: str = "label", feature_columns: list[str] | None = None) -> GlobalDataset:
    """Read a headed, comma-separated file.

    Labels map to ``0..m-1`` in sorted order of their distinct values
    (numeric order when every label parses as a number). Feature columns
    default to every column except the label.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: no data rows")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
        if feature_columns is None:
            feature_columns = [h for h in header if h != label_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise ValueError(f"{path}: feature columns {missing} not in header")
        fpos = [header.index(c) for c in feature_columns]
        lpos = header.index(label_column)

        feats: list[list[float]] = []
        raw_labels: list[str] = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {rowno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for col, p in zip(feature_columns, fpos):
                cell = row[p].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}: row {rowno}, column {col!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}: row {rowno}, column {col!r}: non-finite value {cell!r}")
                vals.append(v)
            feats.append(vals)
            raw_labels.append(row[lpos].strip())

    if not feats:
        raise ValueError(f"{path}: no data rows")
    classes = _sort_labels(set(raw_labels))
    lookup = {lab: k for k, lab in enumerate(classes)}
    y = np.array([lookup[lab] for lab in raw_labels], dtype=np.int64)
    return GlobalDataset(np.array(feats, dtype=float).reshape(len(feats), len(fpos)), y, len(classes))


def _even_split(count: int, k: int) -> list[int]:
    """Split ``count`` into ``k`` parts differing by at most one; extras go to the lowest indices."""
    base, extra = divmod(count, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def _deal(idx: np.ndarray, robots: list[int], buckets: list[list[int]]) -> None:
    off = 0
    for r, size in zip(robots, _even_split(len(idx), len(robots))):
        buckets[r].extend(idx[off : off + size].tolist())
        off += size


def _shuffled(idx: np.ndarray, seed: int) -> np.ndarray:
    idx = np.array(idx, dtype=np.int64, copy=True)
    SplitMix64(seed).shuffle(idx)
    return idx


def _build(g: GlobalDataset, buckets: list[list[int]]) -> list[ClientDataset]:
    return [ClientDataset.from_indices(r, g, b) for r, b in enumerate(buckets)]


def partition_iid(g: GlobalDataset, n: int, seed: int) -> list[ClientDataset]:
    """Seeded shuffle, then deal round-robin: sizes differ by at most one."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > len(g):
        raise ValueError(f"cannot split {len(g)} samples across {n} robots")
    order = _shuffled(np.arange(len(g)), derive_seed(seed, _TAG_IID))
    buckets: list[list[int]] = [[] for _ in range(n)]
    for pos, i in enumerate(order.tolist()):
        buckets[pos % n].append(i)
    return _build(g, buckets)


def partition_quantity_skew(g: GlobalDataset, n: int, j: int, beta: float, seed: int) -> list[ClientDataset]:
    """Per class, ``floor(beta * |D_c|)`` samples go to robots ``0..j-1``, the rest to ``j..n-1``.

    Both shares are split as evenly as possible, extras to the lowest index.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if not 1 <= j < n:
        raise ValueError(f"need 1 <= j < n, got j={j}, n={n}")
    top, low = list(range(j)), list(range(j, n))
    buckets: list[list[int]] = [[] for _ in range(n)]
    for c, idx in enumerate(g.class_indices()):
        idx = _shuffled(idx, derive_seed(seed, _TAG_QUANTITY, c))
        k = math.floor(beta * len(idx))
        _deal(idx[:k], top, buckets)
        _deal(idx[k:], low, buckets)
    return _build(g, buckets)


def partition_class_skew(g: GlobalDataset, n: int, alpha: float, seed: int) -> list[ClientDataset]:
    """Class ``c`` puts ``floor((1 - alpha) * |D_c|)`` samples on robot ``c mod n``.

    The rest of the class is split evenly over the other ``n - 1`` robots.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if g.m < 1:
        raise ValueError("dataset has no classes")
    buckets: list[list[int]] = [[] for _ in range(n)]
    for c, idx in enumerate(g.class_indices()):
        idx = _shuffled(idx, derive_seed(seed, _TAG_CLASS, c))
        owner = c % n
        k = math.floor((1.0 - alpha) * len(idx))
        buckets[owner].extend(idx[:k].tolist())
        _deal(idx[k:], [r for r in range(n) if r != owner], buckets)
    return _build(g, buckets)


def stratified_split(g: GlobalDataset, test_fraction: float, seed: int) -> tuple[GlobalDataset, GlobalDataset]:
    """Per-class seeded holdout of ``round(test_fraction * |D_c|)`` samples; order preserved."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    test_idx: list[int] = []
    for c, idx in enumerate(g.class_indices()):
        idx = _shuffled(idx, derive_seed(seed, _TAG_SPLIT, c))
        test_idx.extend(idx[: int(round(test_fraction * len(idx)))].tolist())
    mask = np.zeros(len(g), dtype=bool)
    mask[test_idx] = True
    return g.subset(np.flatnonzero(~mask)), g.subset(np.flatnonzero(mask))


@dataclass
class SkewRow:
    robot_id: int
    class_counts: list[int]
    total: int
    empty: bool


def skew_report(parts: list[ClientDataset]) -> list[SkewRow]:
    """Per-robot class-count matrix, empty robots flagged."""
    return [SkewRow(p.robot_id, p.class_counts, p.total, p.total == 0) for p in parts]
