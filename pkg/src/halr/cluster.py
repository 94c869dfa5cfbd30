"""Quad-tree clusters describing block partitions of a matrix.

A cluster is a quad tree over an index box.  Every node either is a leaf,
labeled ``dense`` or ``lowrank``, or carries exactly four children that tile
the node's box in the order (11, 12, 21, 22) = (top-left, top-right,
bottom-left, bottom-right).  Index boxes are 1-based and inclusive on both
ends.  A tree consisting of a single node has depth 1.

Trees are immutable; all algebra here (transpose, intersection, ordering,
normalization) returns new trees.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IncompatibleClusters

DENSE = "dense"
LOW_RANK = "lowrank"
SPLIT = "split"


@dataclass(frozen=True)
class IndexBox:
    """1-based, inclusive rectangle of row and column indices."""

    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int

    def __post_init__(self):
        if not (1 <= self.row_lo <= self.row_hi and 1 <= self.col_lo <= self.col_hi):
            raise ValueError(f"degenerate index box {self}")

    @property
    def rows(self) -> int:
        return self.row_hi - self.row_lo + 1

    @property
    def cols(self) -> int:
        return self.col_hi - self.col_lo + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def transposed(self) -> "IndexBox":
        return IndexBox(self.col_lo, self.col_hi, self.row_lo, self.row_hi)

    def as_list(self) -> list[int]:
        return [self.row_lo, self.row_hi, self.col_lo, self.col_hi]


def split_box(box: IndexBox) -> tuple[IndexBox, IndexBox, IndexBox, IndexBox]:
    """Midpoint split into (11, 12, 21, 22); first parts take ceil(size/2)."""
    m, n = box.shape
    if m < 2 or n < 2:
        raise ValueError(f"box {box} too small to split")
    m1 = (m + 1) // 2
    n1 = (n + 1) // 2
    rm = box.row_lo + m1 - 1
    cm = box.col_lo + n1 - 1
    b11 = IndexBox(box.row_lo, rm, box.col_lo, cm)
    b12 = IndexBox(box.row_lo, rm, cm + 1, box.col_hi)
    b21 = IndexBox(rm + 1, box.row_hi, box.col_lo, cm)
    b22 = IndexBox(rm + 1, box.row_hi, cm + 1, box.col_hi)
    return b11, b12, b21, b22


@dataclass(frozen=True)
class QuadTreeCluster:
    """Node of a quad-tree cluster; ``children`` is None exactly at leaves."""

    box: IndexBox
    kind: str
    children: tuple["QuadTreeCluster", ...] | None = None

    def __post_init__(self):
        if self.kind not in (DENSE, LOW_RANK, SPLIT):
            raise ValueError(f"unknown node kind {self.kind!r}")
        if (self.kind == SPLIT) != (self.children is not None):
            raise ValueError("split nodes and only split nodes carry children")
        if self.children is not None:
            _check_tiling(self.box, self.children)

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def shape(self) -> tuple[int, int]:
        return self.box.shape


def _check_tiling(box: IndexBox, children) -> None:
    if len(children) != 4:
        raise ValueError("split nodes carry exactly four children")
    c11, c12, c21, c22 = (c.box for c in children)
    ok = (
        c11.row_lo == box.row_lo == c12.row_lo
        and c11.col_lo == box.col_lo == c21.col_lo
        and c22.row_hi == box.row_hi == c21.row_hi
        and c22.col_hi == box.col_hi == c12.col_hi
        and c11.row_hi == c12.row_hi
        and c21.row_lo == c22.row_lo == c11.row_hi + 1
        and c11.col_hi == c21.col_hi
        and c12.col_lo == c22.col_lo == c11.col_hi + 1
        and c21.row_lo <= c21.row_hi
    )
    if not ok:
        raise ValueError("children do not tile the parent box")


def leaf(box: IndexBox, kind: str) -> QuadTreeCluster:
    return QuadTreeCluster(box, kind)


def branch(box: IndexBox, children) -> QuadTreeCluster:
    return QuadTreeCluster(box, SPLIT, tuple(children))


def root_box(m: int, n: int) -> IndexBox:
    return IndexBox(1, m, 1, n)


def depth(t: QuadTreeCluster) -> int:
    if t.is_leaf:
        return 1
    return 1 + max(depth(c) for c in t.children)


def leaves(t: QuadTreeCluster):
    """Yield leaf nodes in (11, 12, 21, 22) depth-first order."""
    if t.is_leaf:
        yield t
    else:
        for c in t.children:
            yield from leaves(c)


def transpose(t: QuadTreeCluster) -> QuadTreeCluster:
    """Mirror the tree across the diagonal; swaps the 12 and 21 subtrees."""
    if t.is_leaf:
        return QuadTreeCluster(t.box.transposed(), t.kind)
    c11, c12, c21, c22 = t.children
    kids = (transpose(c11), transpose(c21), transpose(c12), transpose(c22))
    return QuadTreeCluster(t.box.transposed(), SPLIT, kids)


def is_row_compatible(a: QuadTreeCluster, b: QuadTreeCluster) -> bool:
    """True when one tree's row splits refine into the other's at every level.

    Holds when either tree is a bare root with the same row count, or both
    split and all four child pairs are row-compatible.  Only shapes matter,
    not absolute box positions.
    """
    if a.box.rows != b.box.rows:
        return False
    if a.is_leaf or b.is_leaf:
        return True
    return all(is_row_compatible(x, y) for x, y in zip(a.children, b.children))


def is_col_compatible(a: QuadTreeCluster, b: QuadTreeCluster) -> bool:
    if a.box.cols != b.box.cols:
        return False
    if a.is_leaf or b.is_leaf:
        return True
    return all(is_col_compatible(x, y) for x, y in zip(a.children, b.children))


def is_compatible(a: QuadTreeCluster, b: QuadTreeCluster) -> bool:
    return is_row_compatible(a, b) and is_col_compatible(a, b)


def check_compatible(a: QuadTreeCluster, b: QuadTreeCluster) -> None:
    if not is_compatible(a, b):
        raise IncompatibleClusters(
            f"clusters over {a.box.shape} and {b.box.shape} are not compatible"
        )


def is_leq(a: QuadTreeCluster, b: QuadTreeCluster) -> bool:
    """Partial order: a <= b when b's partition is coarser/denser than a's.

    A low-rank root is below everything, a dense root above everything;
    otherwise compare children pairwise.  Antisymmetry holds up to
    ``normalize``.  Raises IncompatibleClusters on incompatible operands.
    """
    check_compatible(a, b)
    return _leq(a, b)


def _leq(a, b):
    if a.is_leaf and a.kind == LOW_RANK:
        return True
    if b.is_leaf and b.kind == DENSE:
        return True
    if not a.is_leaf and not b.is_leaf:
        return all(_leq(x, y) for x, y in zip(a.children, b.children))
    return False


def intersect(a: QuadTreeCluster, b: QuadTreeCluster) -> QuadTreeCluster:
    """Least structure refined by both operands (upper bound under is_leq).

    A low-rank root is neutral, a dense root absorbing; two splits recurse.
    Result nodes keep the boxes of the surviving operand.
    """
    check_compatible(a, b)
    return _meet(a, b)


def _meet(a, b):
    if a.is_leaf and a.kind == LOW_RANK:
        return b
    if b.is_leaf and b.kind == LOW_RANK:
        return a
    if a.is_leaf and a.kind == DENSE:
        return a
    if b.is_leaf and b.kind == DENSE:
        return b
    kids = tuple(_meet(x, y) for x, y in zip(a.children, b.children))
    return QuadTreeCluster(a.box, SPLIT, kids)


def normalize(t: QuadTreeCluster) -> QuadTreeCluster:
    """Collapse every split whose four children are dense leaves, bottom-up."""
    if t.is_leaf:
        return t
    kids = tuple(normalize(c) for c in t.children)
    if all(k.is_leaf and k.kind == DENSE for k in kids):
        return QuadTreeCluster(t.box, DENSE)
    return QuadTreeCluster(t.box, SPLIT, kids)


def structural_equal(a: QuadTreeCluster, b: QuadTreeCluster) -> bool:
    """Tree equality after normalization; compares shapes and labels."""
    return _same(normalize(a), normalize(b))


def _same(a, b):
    if a.box.shape != b.box.shape or a.kind != b.kind:
        return False
    if a.is_leaf:
        return True
    return all(_same(x, y) for x, y in zip(a.children, b.children))


def hodlr_cluster(n: int, levels: int) -> QuadTreeCluster:
    """HODLR tree of the given depth: off-diagonal low-rank leaves, diagonal
    blocks recursively split.  levels=1 returns a dense root."""
    return _hodlr(root_box(n, n), levels)


def _hodlr(box, levels):
    if levels <= 1 or min(box.shape) < 2:
        return QuadTreeCluster(box, DENSE)
    b11, b12, b21, b22 = split_box(box)
    kids = (
        _hodlr(b11, levels - 1),
        QuadTreeCluster(b12, LOW_RANK),
        QuadTreeCluster(b21, LOW_RANK),
        _hodlr(b22, levels - 1),
    )
    return QuadTreeCluster(box, SPLIT, kids)


def tree_to_dict(t: QuadTreeCluster, ranks: dict | None = None) -> dict:
    """JSON-ready structure dump.

    Schema: {"box": [row_lo, row_hi, col_lo, col_hi], "kind": ...,
    "rank": int (low-rank leaves, when known), "children": [11, 12, 21, 22]}.
    ``ranks`` optionally maps leaf boxes to integer ranks.
    """
    d: dict = {"box": t.box.as_list(), "kind": t.kind}
    if t.is_leaf:
        if t.kind == LOW_RANK and ranks is not None and t.box in ranks:
            d["rank"] = int(ranks[t.box])
    else:
        d["children"] = [tree_to_dict(c, ranks) for c in t.children]
    return d


def tree_from_dict(d: dict) -> QuadTreeCluster:
    box = IndexBox(*(int(v) for v in d["box"]))
    kind = d["kind"]
    if kind == SPLIT:
        kids = tuple(tree_from_dict(c) for c in d["children"])
        return QuadTreeCluster(box, SPLIT, kids)
    return QuadTreeCluster(box, kind)
