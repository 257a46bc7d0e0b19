"""Binary transaction data: FIMI parsing, splitting and synthetic sampling."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParseError


class Itemset(NamedTuple):
    """A sorted tuple of item indices with its frequency or probability."""

    items: tuple[int, ...]
    measure: float


@dataclass(frozen=True)
class TransactionDataset:
    """N transactions over D items, each stored as a strictly ascending tuple.

    ``item_labels[i]`` is the original integer id of item ``i`` when the data
    came from a file; ``None`` means labels equal indices.
    """

    rows: tuple[tuple[int, ...], ...]
    n_items: int
    item_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_items < 0:
            raise ValueError("n_items must be non-negative")
        for mu, row in enumerate(self.rows):
            if any(b <= a for a, b in zip(row, row[1:])):
                raise ValueError(f"row {mu} is not strictly ascending")
            if row and (row[0] < 0 or row[-1] >= self.n_items):
                raise ValueError(f"row {mu} has an item outside [0, {self.n_items})")
        if self.item_labels is not None and len(self.item_labels) != self.n_items:
            raise ValueError("item_labels must have one entry per item")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], n_items: int | None = None,
                  item_labels=None) -> "TransactionDataset":
        """Build a dataset from arbitrary iterables of item indices (deduplicated, sorted)."""
        clean = tuple(tuple(sorted(set(int(i) for i in r))) for r in rows)
        if n_items is None:
            n_items = 1 + max((r[-1] for r in clean if r), default=-1)
        labels = tuple(item_labels) if item_labels is not None else None
        return cls(clean, n_items, labels)

    @classmethod
    def from_dense(cls, matrix) -> "TransactionDataset":
        x = np.asarray(matrix)
        if x.ndim != 2:
            raise ValueError("expected an N x D matrix")
        rows = tuple(tuple(int(i) for i in np.flatnonzero(r)) for r in x)
        return cls(rows, x.shape[1])

    @property
    def n_transactions(self) -> int:
        return len(self.rows)

    def __len__(self):
        return len(self.rows)

    @cached_property
    def _dense(self) -> np.ndarray:
        x = np.zeros((len(self.rows), self.n_items), dtype=np.uint8)
        for mu, row in enumerate(self.rows):
            x[mu, list(row)] = 1
        x.setflags(write=False)
        return x

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        """The N x D 0/1 matrix (a fresh array of ``dtype``)."""
        return self._dense.astype(dtype)

    def subset(self, indices) -> "TransactionDataset":
        return TransactionDataset(tuple(self.rows[i] for i in indices), self.n_items,
                                  self.item_labels)

    def label(self, item: int) -> int:
        return item if self.item_labels is None else self.item_labels[item]


def parse_fimi(text: str, n_items: int | None = None) -> TransactionDataset:
    """Parse FIMI text. See :func:`load_fimi`."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    raw_rows = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        row = set()
        for tok in tokens:
            if not tok.isdigit():
                raise ParseError(f"invalid item token {tok!r}", line=lineno)
            row.add(int(tok))
        raw_rows.append(row)
        seen.update(row)

    if n_items is not None:
        bad = [label for label in seen if label >= n_items]
        if bad:
            raise ParseError(f"item {min(bad)} is out of range for D={n_items}")
        rows = tuple(tuple(sorted(r)) for r in raw_rows)
        return TransactionDataset(rows, n_items)

    labels = sorted(seen)
    index = {label: i for i, label in enumerate(labels)}
    rows = tuple(tuple(sorted(index[label] for label in r)) for r in raw_rows)
    return TransactionDataset(rows, len(labels), tuple(labels))


def load_fimi(path, n_items: int | None = None) -> TransactionDataset:
    """Read a FIMI transaction file.

    Item ids are compacted to dense indices ``0..D-1`` in ascending label
    order and the original ids are kept in ``item_labels``. When ``n_items``
    is given, ids are used directly as indices and must be below it; this is
    how files written by :func:`write_fimi` round-trip with unseen items.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc})") from exc
    return parse_fimi(text, n_items=n_items)


def format_fimi(ds: TransactionDataset) -> str:
    return "".join(" ".join(str(ds.label(i)) for i in row) + "\n" for row in ds.rows)


def write_fimi(ds: TransactionDataset, path) -> None:
    Path(path).write_text(format_fimi(ds), encoding="utf-8")


def item_frequencies(ds: TransactionDataset) -> np.ndarray:
    """Fraction of transactions containing each item."""
    if ds.n_transactions == 0:
        raise ValueError("item frequencies are undefined for an empty dataset")
    counts = np.zeros(ds.n_items, dtype=np.int64)
    for row in ds.rows:
        counts[list(row)] += 1
    return counts / ds.n_transactions


def split(ds: TransactionDataset, fraction: float, seed: int):
    """Seeded shuffle-and-cut into two disjoint parts.

    The first part holds ``round(fraction * N)`` rows. Each part keeps the
    original relative row order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n = ds.n_transactions
    perm = np.random.default_rng(seed).permutation(n)
    n_first = round(fraction * n)
    first = np.sort(perm[:n_first])
    second = np.sort(perm[n_first:])
    return ds.subset(first.tolist()), ds.subset(second.tolist())


def sample_from_model(model, n: int, seed: int) -> TransactionDataset:
    """Draw ``n`` transactions from a mixture: pick a component, then flip each item."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    phi = model.bernoulli
    z = rng.choice(model.K, size=n, p=model.weights)
    rows = []
    chunk = 4096
    for start in range(0, n, chunk):
        zz = z[start:start + chunk]
        u = rng.random((len(zz), model.D))
        x = u < phi[:, zz].T
        rows.extend(tuple(np.flatnonzero(r).tolist()) for r in x)
    return TransactionDataset(tuple(rows), model.D)
