"""Multiset relations with prefix indexes and heavy/light partitioning.

A :class:`Relation` stores tuple -> nonzero multiplicity entries in a hash
map and keeps, for every registered proper sub-schema, an index from
sub-tuple keys to the matching entries.  All primitives are constant time
(amortized) and each one bumps the owning :class:`~skewivm.metrics.Counters`
by exactly one, which is what the counter-based complexity tests measure.

Base relations only ever hold strictly positive multiplicities; views may go
negative transiently while a delta propagates.
"""

from __future__ import annotations

import math
from typing import Any, Iterable, Iterator

from .errors import ArityMismatchError, RejectedDeleteError, UnregisteredIndexError
from .metrics import Counters

Value = Any
Row = tuple


class Interner:
    """Dense-integer interning of input strings.

    Gives constant-time hashing/equality on opaque data values and keeps the
    reverse map for output formatting.
    """

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._strings: list[str] = []

    def intern(self, s: str) -> int:
        i = self._ids.get(s)
        if i is None:
            i = len(self._strings)
            self._ids[s] = i
            self._strings.append(s)
        return i

    def lookup(self, i: int) -> str:
        return self._strings[i]

    def __len__(self) -> int:
        return len(self._strings)


class Relation:
    """A multiset of fixed-arity tuples with registered prefix indexes."""

    __slots__ = ("name", "schema", "base", "entries", "indexes", "counters")

    def __init__(self, name: str, schema: tuple[str, ...], counters: Counters,
                 base: bool = False):
        self.name = name
        self.schema = schema
        self.base = base
        self.entries: dict[Row, int] = {}
        # positions tuple -> {key tuple -> {row -> None}}
        self.indexes: dict[tuple[int, ...], dict[Row, dict[Row, None]]] = {}
        self.counters = counters

    # -- schema helpers ----------------------------------------------------

    def positions(self, variables: Iterable[str]) -> tuple[int, ...]:
        """Positions of `variables` in schema order."""
        want = set(variables)
        return tuple(i for i, v in enumerate(self.schema) if v in want)

    def register_index(self, positions: tuple[int, ...]) -> None:
        if not positions or len(positions) == len(self.schema):
            return  # full-schema and empty lookups go through `entries`
        if positions in self.indexes:
            return
        index: dict[Row, dict[Row, None]] = {}
        for row in self.entries:
            index.setdefault(tuple(row[p] for p in positions), {})[row] = None
        self.indexes[positions] = index

    # -- primitives --------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.entries)

    def get(self, row: Row) -> int:
        self.counters.storage_ops += 1
        return self.entries.get(row, 0)

    def __contains__(self, row: Row) -> bool:
        self.counters.storage_ops += 1
        return row in self.entries

    def delta(self, row: Row, m: int) -> None:
        """Add multiplicity ``m`` to ``row``; drop the entry when it hits 0."""
        if m == 0:
            return
        if len(row) != len(self.schema):
            raise ArityMismatchError(
                f"{self.name}: tuple arity {len(row)} != schema arity {len(self.schema)}")
        self.counters.storage_ops += 1
        old = self.entries.get(row, 0)
        new = old + m
        if self.base and new < 0:
            raise RejectedDeleteError(
                f"{self.name}: delete of {row} by {m} would leave multiplicity {new}")
        if new == 0:
            del self.entries[row]
            for positions, index in self.indexes.items():
                self.counters.storage_ops += 1
                key = tuple(row[p] for p in positions)
                bucket = index[key]
                del bucket[row]
                if not bucket:
                    del index[key]
        else:
            self.entries[row] = new
            if old == 0:
                for positions, index in self.indexes.items():
                    self.counters.storage_ops += 1
                    index.setdefault(tuple(row[p] for p in positions), {})[row] = None

    def scan(self, positions: tuple[int, ...], key: Row) -> Iterator[tuple[Row, int]]:
        """Yield each entry whose projection on ``positions`` equals ``key``."""
        if not positions:
            for row, m in self.entries.items():
                self.counters.storage_ops += 1
                yield row, m
            return
        if len(positions) == len(self.schema):
            self.counters.storage_ops += 1
            m = self.entries.get(key, 0)
            if m:
                yield key, m
            return
        index = self.indexes.get(positions)
        if index is None:
            raise UnregisteredIndexError(f"{self.name}: no index on positions {positions}")
        self.counters.storage_ops += 1
        for row in index.get(key, ()):
            self.counters.storage_ops += 1
            yield row, self.entries[row]

    def count(self, positions: tuple[int, ...], key: Row) -> int:
        """|sigma_{positions=key}| in constant time."""
        self.counters.storage_ops += 1
        if not positions:
            return len(self.entries)
        if len(positions) == len(self.schema):
            return 1 if key in self.entries else 0
        index = self.indexes.get(positions)
        if index is None:
            raise UnregisteredIndexError(f"{self.name}: no index on positions {positions}")
        bucket = index.get(key)
        return len(bucket) if bucket else 0

    def has_key(self, positions: tuple[int, ...], key: Row) -> bool:
        return self.count(positions, key) > 0

    # -- bulk --------------------------------------------------------------

    def clear(self) -> None:
        self.entries.clear()
        for index in self.indexes.values():
            index.clear()

    def load(self, entries: dict[Row, int]) -> None:
        """Replace the whole content (used by materialization/rebalancing)."""
        self.clear()
        for row, m in entries.items():
            if m == 0:
                continue
            self.counters.storage_ops += 1
            self.entries[row] = m
            for positions, index in self.indexes.items():
                self.counters.storage_ops += 1
                index.setdefault(tuple(row[p] for p in positions), {})[row] = None

    def copy_from(self, other: "Relation") -> None:
        self.load(other.entries)

    def rebuilt_indexes(self) -> dict[tuple[int, ...], dict[Row, dict[Row, None]]]:
        """Fresh index structures recomputed from `entries` (test oracle)."""
        out: dict[tuple[int, ...], dict[Row, dict[Row, None]]] = {}
        for positions in self.indexes:
            index: dict[Row, dict[Row, None]] = {}
            for row in self.entries:
                index.setdefault(tuple(row[p] for p in positions), {})[row] = None
            out[positions] = index
        return out


def strict_partition(rel: Relation, positions: tuple[int, ...],
                     theta: float) -> dict[Row, int]:
    """Entries of the strict light part of ``rel`` on ``positions``.

    A key is light iff strictly fewer than ``theta`` distinct tuples of
    ``rel`` carry it; the returned dict holds exactly those tuples with their
    multiplicities.  Used at preprocessing time and by major rebalancing.
    """
    degrees: dict[Row, int] = {}
    for row in rel.entries:
        rel.counters.storage_ops += 1
        key = tuple(row[p] for p in positions)
        degrees[key] = degrees.get(key, 0) + 1
    light: dict[Row, int] = {}
    for row, m in rel.entries.items():
        rel.counters.storage_ops += 1
        if degrees[tuple(row[p] for p in positions)] < theta:
            light[row] = m
    return light


def iceil(x: float) -> int:
    """Ceiling with a guard against float noise just above an integer."""
    return math.ceil(x - 1e-9)
