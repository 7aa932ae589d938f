"""Set partitions of ``{0, ..., n-1}`` and their refinement order."""
from __future__ import annotations

from itertools import product
from typing import Iterable, Iterator

from .errors import InvalidInputError


class Partition:
    """An immutable set partition of ``range(n)``.

    Blocks are stored as sorted tuples in order of their smallest element, so
    equal partitions compare and hash equal.
    """

    __slots__ = ("blocks", "n")

    def __init__(self, blocks: Iterable[Iterable[int]], n: int | None = None):
        bl = [tuple(sorted(set(b))) for b in blocks]
        if any(len(b) == 0 for b in bl):
            raise InvalidInputError("blocks must be non-empty")
        elems = [e for b in bl for e in b]
        if len(elems) != len(set(elems)):
            raise InvalidInputError("blocks must be disjoint")
        n = len(elems) if n is None else n
        if sorted(elems) != list(range(n)):
            raise InvalidInputError(f"blocks must cover 0..{n - 1}")
        self.blocks = tuple(sorted(bl))
        self.n = n

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Build from a block label per element (e.g. a restricted growth string)."""
        groups: dict = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        return cls(groups.values(), len(labels))

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        return cls([[i] for i in range(n)], n)

    @classmethod
    def indiscrete(cls, n: int) -> "Partition":
        return cls([range(n)], n)

    def block_of(self, i: int) -> tuple:
        for b in self.blocks:
            if i in b:
                return b
        raise InvalidInputError(f"{i} is not an element")

    def labels(self) -> tuple:
        lab = [0] * self.n
        for k, b in enumerate(self.blocks):
            for e in b:
                lab[e] = k
        return tuple(lab)

    def refines(self, other: "Partition") -> bool:
        """``self <= other``: every block of ``self`` lies inside a block of ``other``."""
        if self.n != other.n:
            return False
        lab = other.labels()
        return all(len({lab[e] for e in b}) == 1 for b in self.blocks)

    __le__ = refines

    def __ge__(self, other: "Partition") -> bool:
        return other.refines(self)

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and self.blocks == other.blocks and self.n == other.n

    def __hash__(self) -> int:
        return hash((self.blocks, self.n))

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def as_lists(self, one_based: bool = True) -> list:
        off = 1 if one_based else 0
        return [[e + off for e in b] for b in self.blocks]

    def __repr__(self) -> str:
        return "{" + ", ".join("{" + ",".join(str(e + 1) for e in b) + "}" for b in self.blocks) + "}"


def restricted_growth_strings(n: int) -> Iterator[tuple]:
    """All strings ``a`` with ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, mx):
        if i == n:
            yield tuple(a)
            return
        for v in range(mx + 2):
            a[i] = v
            yield from rec(i + 1, max(mx, v))

    yield from rec(1, 0)


def all_partitions(n: int) -> list[Partition]:
    return [Partition.from_labels(s) for s in restricted_growth_strings(n)]


def partitions_between(fine: Partition, coarse: Partition) -> list[Partition]:
    """All ``P`` with ``fine <= P <= coarse``.

    Each block of ``coarse`` is a union of blocks of ``fine``; the interval is
    the product, over coarse blocks, of the set partitions of the fine blocks
    it contains.
    """
    if not fine.refines(coarse):
        raise InvalidInputError("fine does not refine coarse")
    per_block = []
    for cb in coarse.blocks:
        inner = [fb for fb in fine.blocks if fb[0] in cb]
        options = []
        for rgs in restricted_growth_strings(len(inner)):
            groups: dict = {}
            for fb, lab in zip(inner, rgs):
                groups.setdefault(lab, []).extend(fb)
            options.append(list(groups.values()))
        per_block.append(options)
    return [Partition([b for part in choice for b in part], fine.n) for choice in product(*per_block)]
