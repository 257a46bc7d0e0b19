"""Frequent itemset mining over data (Eclat) or over any anti-monotone oracle.

Both miners share one depth-first search over prefix equivalence classes: a
class is a prefix plus the items that extend it frequently, and each member
is joined with its right-hand siblings to form the next class. What differs
is the per-node state carried down the search:

* exact data: the set of supporting transactions, kept as a Python ``int``
  bitset so that intersection is ``&`` and support is ``bit_count()``;
* a mixture model: the vector of per-component products prod_i phi_ik;
* a generic oracle: the itemset itself, measured from scratch.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Iterator, Protocol

import numpy as np

from .dataset import Itemset, TransactionDataset
from .errors import ContractViolation, ParseError
from .model import MixtureModel

SOURCES = ("data-exact", "model-predicted", "brute-force")


class FrequencyOracle(Protocol):
    """Anything that can report an anti-monotone measure in [0, 1] for an itemset."""

    item_count: int

    def measure(self, items: tuple[int, ...]) -> float: ...


@dataclass
class ItemsetCollection:
    """Frequent itemsets keyed by their sorted item tuple.

    Keys are kept ordered by length, then lexicographically.
    """

    minsup: float
    itemsets: dict[tuple[int, ...], float] = field(default_factory=dict)
    source: str = "data-exact"

    def __len__(self):
        return len(self.itemsets)

    def __iter__(self) -> Iterator[Itemset]:
        return (Itemset(k, v) for k, v in self.itemsets.items())

    def __contains__(self, items):
        return tuple(items) in self.itemsets

    def __eq__(self, other):
        if not isinstance(other, ItemsetCollection):
            return NotImplemented
        return (self.minsup == other.minsup and self.itemsets == other.itemsets
                and list(self.itemsets) == list(other.itemsets))

    def measure(self, items) -> float:
        return self.itemsets[tuple(items)]

    def counts_by_length(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for k in self.itemsets:
            counts[len(k)] = counts.get(len(k), 0) + 1
        return dict(sorted(counts.items()))

    def max_length(self) -> int:
        return max((len(k) for k in self.itemsets), default=0)


def sort_key(items: tuple[int, ...]):
    return (len(items), items)


def _ordered(found: dict) -> dict:
    return {k: found[k] for k in sorted(found, key=sort_key)}


def check_minsup(minsup: float) -> None:
    if not (isinstance(minsup, (int, float)) and 0.0 < minsup <= 1.0):
        raise ValueError(f"minsup must lie in (0, 1], got {minsup!r}")


def min_count(minsup: float, n: int) -> int:
    """Smallest integer support c with c / n >= minsup, using the decimal value of minsup."""
    frac = Fraction(repr(float(minsup)))
    return -(-(frac.numerator * n) // frac.denominator)


# -- search strategies -------------------------------------------------------

class _TidsetSearch:
    """Exact supports via bitset intersection."""

    def __init__(self, ds: TransactionDataset, minsup: float):
        self.n = ds.n_transactions
        self.cut = min_count(minsup, self.n)
        bits = [0] * ds.n_items
        for mu, row in enumerate(ds.rows):
            bit = 1 << mu
            for i in row:
                bits[i] |= bit
        self.singletons = bits

    def level_one(self, items):
        states = [self.singletons[i] for i in items]
        return [s.bit_count() for s in states], states

    def join(self, state, sib_items, sib_states):
        states = [state & s for s in sib_states]
        return [s.bit_count() for s in states], states

    def keep(self, key) -> bool:
        return key >= self.cut

    def value(self, key) -> float:
        return key / self.n


def _mine_mixture(model: MixtureModel, minsup: float, threads: int = 1,
                  chunk: int = 1 << 20) -> dict:
    """Prefix-class joins for a mixture model, one whole level at a time.

    Level L holds the frequent L-itemsets in lexicographic order, with the
    per-component products prod_i phi_ik as state and the [start, end) span
    of each member's prefix class. A member is joined with every later
    member of its class, exactly as in the depth-first search, so the
    visited candidates are the same; only the traversal order differs, and
    every level comes out already sorted.

    Products are not taken in log space here: every visited prefix already
    has probability >= minsup, so any component term small enough to
    underflow contributes nothing visible to the sum.
    """
    phi = np.asarray(model.bernoulli)
    pi = np.asarray(model.weights)
    cut = float(minsup)

    keys = phi @ pi
    first = np.flatnonzero(keys >= cut)
    items = first[:, None]
    states = phi[first]
    n = len(first)
    ends = np.full(n, n, dtype=np.int64)
    found = dict(zip(map(tuple, items.tolist()), np.minimum(keys[first], 1.0).tolist()))

    def join_block(lo, hi):
        counts = ends[lo:hi] - np.arange(lo, hi) - 1
        total = int(counts.sum())
        if total == 0:
            return None
        parent = np.repeat(np.arange(lo, hi), counts)
        offsets = np.cumsum(counts) - counts
        sibling = parent + 1 + np.arange(total) - np.repeat(offsets, counts)
        last = items[sibling, -1]
        child = states[parent] * phi[last]
        child_keys = child @ pi
        keep = np.flatnonzero(child_keys >= cut)
        return parent[keep], last[keep], child[keep], child_keys[keep]

    while len(items):
        # Blocks of parents sized so each block forms at most ~chunk candidates.
        per_parent = ends - np.arange(len(items)) - 1
        cum = np.cumsum(per_parent)
        bounds = [0]
        while bounds[-1] < len(items):
            base = cum[bounds[-1] - 1] if bounds[-1] else 0
            nxt = int(np.searchsorted(cum, base + chunk, side="right"))
            bounds.append(min(len(items), max(nxt, bounds[-1] + 1)))
        spans = list(zip(bounds[:-1], bounds[1:]))
        if threads > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda b: join_block(*b), spans))
        else:
            parts = [join_block(lo, hi) for lo, hi in spans]
        parts = [p for p in parts if p is not None and len(p[0])]
        if not parts:
            break
        parent = np.concatenate([p[0] for p in parts])
        last = np.concatenate([p[1] for p in parts])
        states = np.concatenate([p[2] for p in parts])
        new_keys = np.concatenate([p[3] for p in parts])
        items = np.hstack([items[parent], last[:, None]])
        ends = np.searchsorted(parent, parent, side="right")
        found.update(zip(map(tuple, items.tolist()), np.minimum(new_keys, 1.0).tolist()))
    return found


class _MeasureSearch:
    """Generic oracle: one measure() call per candidate itemset."""

    def __init__(self, oracle: FrequencyOracle, minsup: float):
        self.oracle = oracle
        self.cut = float(minsup)

    def _measure(self, items):
        v = float(self.oracle.measure(items))
        if not 0.0 <= v <= 1.0:
            raise ContractViolation(f"oracle returned {v!r} for {items}, outside [0, 1]")
        return v

    def level_one(self, items):
        states = [(int(i),) for i in items]
        return [self._measure(s) for s in states], states

    def join(self, state, sib_items, sib_states):
        states = [state + (int(j),) for j in sib_items]
        return [self._measure(s) for s in states], states

    def keep(self, key) -> bool:
        return key >= self.cut

    def value(self, key) -> float:
        return key


def _grow(search, prefix, items, states, keys, out):
    """Depth-first expansion of one equivalence class (all members already frequent)."""
    for pos, item in enumerate(items):
        itemset = prefix + (item,)
        out[itemset] = search.value(keys[pos])
        sib_items = items[pos + 1:]
        if not sib_items:
            continue
        child_keys, child_states = search.join(states[pos], sib_items, states[pos + 1:])
        keep = [j for j, k in enumerate(child_keys) if search.keep(k)]
        if keep:
            _grow(search, itemset,
                  [sib_items[j] for j in keep],
                  _take(child_states, keep),
                  [child_keys[j] for j in keep],
                  out)


def _take(states, idx):
    if isinstance(states, np.ndarray):
        return states[idx]
    return [states[j] for j in idx]


def _run(search, n_items: int, threads: int) -> dict:
    all_items = list(range(n_items))
    keys, states = search.level_one(all_items)
    keep = [j for j, k in enumerate(keys) if search.keep(k)]
    items = [all_items[j] for j in keep]
    states = _take(states, keep)
    keys = [keys[j] for j in keep]

    def one_class(pos):
        # A top-level class: item ``pos`` and every frequent superset starting with it.
        out: dict = {}
        out[(items[pos],)] = search.value(keys[pos])
        sib_items = items[pos + 1:]
        if sib_items:
            ck, cs = search.join(states[pos], sib_items, states[pos + 1:])
            sel = [j for j, k in enumerate(ck) if search.keep(k)]
            if sel:
                _grow(search, (items[pos],), [sib_items[j] for j in sel],
                      _take(cs, sel), [ck[j] for j in sel], out)
        return out

    found: dict = {}
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(one_class, range(len(items))):
                found.update(part)
    else:
        for pos in range(len(items)):
            found.update(one_class(pos))
    return _ordered(found)


def mine_exact(ds: TransactionDataset, minsup: float, threads: int = 1) -> ItemsetCollection:
    """Eclat: every itemset with frequency >= minsup, with exact frequencies."""
    check_minsup(minsup)
    if ds.n_transactions == 0:
        raise ValueError("cannot mine an empty dataset")
    found = _run(_TidsetSearch(ds, minsup), ds.n_items, threads)
    return ItemsetCollection(minsup, found, "data-exact")


def mine_oracle(oracle, minsup: float, threads: int = 1) -> ItemsetCollection:
    """Every itemset whose oracle measure is >= minsup, found with Apriori pruning.

    A :class:`MixtureModel` is searched level-wise with per-component running
    products; any other oracle is queried through ``oracle.measure(items)``
    once per visited candidate.
    """
    check_minsup(minsup)
    if isinstance(oracle, MixtureModel):
        found = _mine_mixture(oracle, minsup, threads)
    else:
        found = _run(_MeasureSearch(oracle, minsup), oracle.item_count, threads)
    return ItemsetCollection(minsup, found, "model-predicted")


class DataFrequencyOracle:
    """Exact data frequencies behind the generic oracle interface."""

    def __init__(self, ds: TransactionDataset):
        if ds.n_transactions == 0:
            raise ValueError("frequencies are undefined for an empty dataset")
        self.n = ds.n_transactions
        self.item_count = ds.n_items
        self._bits = _TidsetSearch(ds, 1.0).singletons

    def measure(self, items) -> float:
        bits = (1 << self.n) - 1
        for i in items:
            bits &= self._bits[i]
        return bits.bit_count() / self.n


def brute_force_frequencies(ds: TransactionDataset, max_len: int,
                            limit: int = 10**6) -> dict[tuple[int, ...], float]:
    """Frequency of every itemset of length 1..max_len by exhaustive counting."""
    if ds.n_transactions == 0:
        raise ValueError("frequencies are undefined for an empty dataset")
    d = ds.n_items
    total = sum(math.comb(d, k) for k in range(1, max_len + 1))
    if total > limit:
        raise ValueError(f"refusing to enumerate {total} itemsets (limit {limit})")
    x = ds.to_dense(np.int64)
    n = ds.n_transactions
    out = {}
    for k in range(1, max_len + 1):
        for combo in combinations(range(d), k):
            out[combo] = int(x[:, combo].prod(axis=1).sum()) / n
    return out


def is_downward_closed(coll: ItemsetCollection) -> bool:
    for items in coll.itemsets:
        if len(items) > 1:
            for sub in combinations(items, len(items) - 1):
                if sub not in coll.itemsets:
                    return False
    return True


# -- itemset files ------------------------------------------------------------

def format_itemsets(coll: ItemsetCollection, labels=None) -> str:
    lines = []
    for items, measure in coll.itemsets.items():
        names = items if labels is None else [labels[i] for i in items]
        lines.append(" ".join(str(v) for v in names) + f"\t{float(measure)!r}\n")
    return "".join(lines)


def write_itemsets(coll: ItemsetCollection, path, labels=None) -> None:
    Path(path).write_text(format_itemsets(coll, labels), encoding="utf-8")


def read_itemsets(path, minsup: float, source: str = "data-exact") -> ItemsetCollection:
    """Read an itemset file; item tuples hold the labels as written."""
    found = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            head, value = line.split("\t")
            items = tuple(sorted(int(t) for t in head.split()))
            found[items] = float(value)
        except ValueError as exc:
            raise ParseError(f"malformed itemset line ({exc})", line=lineno) from exc
    return ItemsetCollection(minsup, _ordered(found), source)
