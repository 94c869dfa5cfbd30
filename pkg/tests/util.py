"""Randomized tree and matrix generators shared by the test modules.

All trees use the midpoint splitting rule, so any two trees drawn on the
same box are compatible by construction.
"""

from __future__ import annotations

from halr.cluster import (
    DENSE,
    LOW_RANK,
    SPLIT,
    IndexBox,
    QuadTreeCluster,
    root_box,
    split_box,
)
from halr.lowrank import FactoredLowRank
from halr.matrix import HalrMatrix


def random_tree(rng, box: IndexBox, max_depth: int = 4, p_split: float = 0.5) -> QuadTreeCluster:
    if max_depth > 1 and min(box.shape) >= 2 and rng.random() < p_split:
        kids = tuple(random_tree(rng, b, max_depth - 1, p_split) for b in split_box(box))
        return QuadTreeCluster(box, SPLIT, kids)
    kind = LOW_RANK if rng.random() < 0.5 else DENSE
    return QuadTreeCluster(box, kind)


def random_halr(rng, tree: QuadTreeCluster, rank: int = 5, scale: float = 1.0) -> HalrMatrix:
    """Fill a tree with random payloads; low-rank leaves get exact rank
    min(rank, min(m, n))."""
    m, n = tree.box.shape
    if tree.kind == DENSE:
        return HalrMatrix(tree.box, DENSE, dense=scale * rng.standard_normal((m, n)))
    if tree.kind == LOW_RANK:
        k = min(rank, m, n)
        f = FactoredLowRank(
            scale * rng.standard_normal((m, k)), rng.standard_normal((n, k))
        )
        return HalrMatrix(tree.box, LOW_RANK, factors=f)
    kids = tuple(random_halr(rng, c, rank, scale) for c in tree.children)
    return HalrMatrix(tree.box, SPLIT, children=kids)


def random_square_halr(rng, n: int, rank: int = 5, max_depth: int = 4) -> HalrMatrix:
    return random_halr(rng, random_tree(rng, root_box(n, n), max_depth), rank)
