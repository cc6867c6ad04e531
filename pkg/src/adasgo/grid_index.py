"""Multi-indices, downsets and covering elements.

Multi-indices are plain tuples of positive ints (level origin 1).  A
:class:`Downset` keeps its members in a set for membership tests and in an
insertion journal so that anything summed over it is reproducible.
"""

from __future__ import annotations

import itertools
import json
import math
from typing import Iterable, Iterator, Sequence

from .errors import DimensionMismatch, NotADownset

MultiIndex = tuple[int, ...]

__all__ = [
    "MultiIndex",
    "Downset",
    "as_index",
    "unit",
    "is_covering_element",
    "covering_elements",
    "full_box",
    "simplex_downset",
    "is_downward_closed",
]


def as_index(levels: Iterable[int]) -> MultiIndex:
    idx = tuple(int(v) for v in levels)
    if not idx:
        raise DimensionMismatch("multi-index must have at least one component")
    if min(idx) < 1:
        raise ValueError(f"multi-index components must be >= 1, got {idx}")
    return idx


def unit(d: int, k: int) -> MultiIndex:
    return tuple(1 if j == k else 0 for j in range(d))


def _predecessors(i: MultiIndex) -> Iterator[MultiIndex]:
    for k, v in enumerate(i):
        if v > 1:
            yield i[:k] + (v - 1,) + i[k + 1 :]


def _successors(i: MultiIndex) -> Iterator[MultiIndex]:
    for k, v in enumerate(i):
        yield i[:k] + (v + 1,) + i[k + 1 :]


class Downset:
    """A downward-closed set of multi-indices bounded by ``cap``.

    Insertion only accepts covering elements, so closure holds after every
    mutation.  ``from_members`` builds a downset from an arbitrary collection
    and validates closure once.
    """

    def __init__(self, cap: Sequence[int], members: Iterable[MultiIndex] = ()):
        self.cap = as_index(cap)
        self._members: set[MultiIndex] = set()
        self._journal: list[MultiIndex] = []
        for i in members:
            self.add(i)

    @classmethod
    def from_members(cls, members: Iterable[Sequence[int]], cap: Sequence[int] | None = None) -> Downset:
        members = [as_index(m) for m in members]
        if not members:
            raise NotADownset("a downset needs at least one member")
        d = len(members[0])
        if any(len(m) != d for m in members):
            raise DimensionMismatch("members have different dimensions")
        if cap is None:
            cap = tuple(max(m[k] for m in members) for k in range(d))
        if not is_downward_closed(members):
            raise NotADownset("member set is not downward closed")
        out = cls(cap)
        # insert in order of |i|_1 so every insertion is a covering element
        for m in sorted(dict.fromkeys(members), key=lambda m: (sum(m), m)):
            out.add(m)
        return out

    @property
    def dimension(self) -> int:
        return len(self.cap)

    @property
    def journal(self) -> list[MultiIndex]:
        return list(self._journal)

    def __contains__(self, i) -> bool:
        return tuple(i) in self._members

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._journal)

    def __eq__(self, other) -> bool:
        if isinstance(other, Downset):
            return self._members == other._members
        return NotImplemented

    def __repr__(self) -> str:
        return f"Downset(cap={self.cap}, n={len(self)})"

    def members(self) -> frozenset[MultiIndex]:
        return frozenset(self._members)

    def add(self, i: Sequence[int]) -> None:
        i = as_index(i)
        if len(i) != self.dimension:
            raise DimensionMismatch(f"index {i} has dimension {len(i)}, expected {self.dimension}")
        if any(a > b for a, b in zip(i, self.cap)):
            raise NotADownset(f"index {i} exceeds cap {self.cap}")
        if i in self._members:
            return
        if not self._members and i != (1,) * self.dimension:
            raise NotADownset("the first member of a downset must be (1, ..., 1)")
        if self._members and not is_covering_element(self, i):
            raise NotADownset(f"adding {i} would break downward closure")
        self._members.add(i)
        self._journal.append(i)

    def copy(self) -> Downset:
        out = Downset(self.cap)
        out._members = set(self._members)
        out._journal = list(self._journal)
        return out

    def to_json(self) -> str:
        return json.dumps([list(i) for i in self._journal])

    @classmethod
    def from_json(cls, text: str, cap: Sequence[int] | None = None) -> Downset:
        members = [tuple(m) for m in json.loads(text)]
        if cap is None:
            cap = tuple(max(m[k] for m in members) for k in range(len(members[0])))
        out = cls(cap)
        for m in members:
            out.add(m)
        return out


def is_downward_closed(members: Iterable[Sequence[int]]) -> bool:
    s = {tuple(m) for m in members}
    return all(p in s for m in s for p in _predecessors(m))


def is_covering_element(downset: Downset, i: Sequence[int]) -> bool:
    i = tuple(int(v) for v in i)
    if len(i) != downset.dimension:
        raise DimensionMismatch(f"index {i} has dimension {len(i)}, expected {downset.dimension}")
    if i in downset or min(i) < 1:
        return False
    return all(p in downset for p in _predecessors(i))


def covering_elements(downset: Downset) -> set[MultiIndex]:
    """Indices within the cap whose addition keeps ``downset`` closed."""
    out = set()
    for m in downset:
        for j in _successors(m):
            if j not in out and all(a <= b for a, b in zip(j, downset.cap)) and is_covering_element(downset, j):
                out.add(j)
    return out


def full_box(cap: Sequence[int]) -> Downset:
    cap = as_index(cap)
    members = itertools.product(*(range(1, c + 1) for c in cap))
    return Downset.from_members(members, cap)


def box_cardinality(cap: Sequence[int]) -> int:
    return math.prod(cap)


def simplex_downset(level: int, d: int) -> Downset:
    """``{i : |i|_1 <= level + d - 1}``, the classical sparse-grid index set."""
    if level < 1:
        raise ValueError("level must be >= 1")
    cap = (level,) * d
    out = Downset(cap)
    total = level + d - 1
    # breadth-first in |i|_1 keeps each insertion a covering element
    frontier = [(1,) * d]
    out.add(frontier[0])
    while frontier:
        nxt = []
        for m in frontier:
            for j in _successors(m):
                if sum(j) <= total and j not in out and is_covering_element(out, j):
                    out.add(j)
                    nxt.append(j)
        frontier = sorted(nxt)
    return out
