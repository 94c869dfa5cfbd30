import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halr.cluster import (
    DENSE,
    LOW_RANK,
    SPLIT,
    IndexBox,
    QuadTreeCluster,
    depth,
    hodlr_cluster,
    intersect,
    is_compatible,
    is_leq,
    leaves,
    normalize,
    root_box,
    split_box,
    structural_equal,
    transpose,
    tree_from_dict,
    tree_to_dict,
)
from halr.errors import IncompatibleClusters
from util import random_tree


def test_split_box_midpoint_rule():
    b11, b12, b21, b22 = split_box(IndexBox(1, 7, 1, 5))
    assert b11 == IndexBox(1, 4, 1, 3)  # ceil(7/2)=4 rows, ceil(5/2)=3 cols
    assert b12 == IndexBox(1, 4, 4, 5)
    assert b21 == IndexBox(5, 7, 1, 3)
    assert b22 == IndexBox(5, 7, 4, 5)


def test_split_box_offset_box_keeps_absolute_indices():
    parts = split_box(IndexBox(9, 16, 17, 24))
    assert parts[0] == IndexBox(9, 12, 17, 20)
    assert parts[3] == IndexBox(13, 16, 21, 24)


def test_indexbox_rejects_empty():
    with pytest.raises(Exception):
        IndexBox(5, 4, 1, 2)


def test_depth_conventions():
    assert depth(QuadTreeCluster(root_box(8, 8), DENSE)) == 1
    t = random_tree(np.random.default_rng(3), root_box(16, 16), max_depth=3, p_split=1.0)
    assert depth(t) == 3


def test_hodlr_cluster_shape():
    t = hodlr_cluster(16, 3)
    assert depth(t) == 3
    kinds = [lf.kind for lf in leaves(t)]
    assert kinds.count(LOW_RANK) == 6  # two off-diagonal leaves per level
    assert kinds.count(DENSE) == 4


def test_transpose_involution(rng):
    t = random_tree(rng, root_box(12, 20))
    assert structural_equal(transpose(transpose(t)), t)


def test_normalize_merges_all_dense_split():
    box = root_box(8, 8)
    kids = tuple(QuadTreeCluster(b, DENSE) for b in split_box(box))
    t = QuadTreeCluster(box, SPLIT, kids)
    assert structural_equal(normalize(t), QuadTreeCluster(box, DENSE))


def test_incompatible_when_boxes_differ():
    a = QuadTreeCluster(root_box(8, 8), DENSE)
    b = QuadTreeCluster(root_box(8, 9), DENSE)
    assert not is_compatible(a, b)


def test_intersect_raises_on_mismatched_roots():
    a = QuadTreeCluster(root_box(8, 8), DENSE)
    b = QuadTreeCluster(root_box(4, 4), DENSE)
    with pytest.raises(IncompatibleClusters):
        intersect(a, b)


def test_intersect_algebra(rng):
    box = root_box(32, 32)
    lr_root = QuadTreeCluster(box, LOW_RANK)
    dense_root = QuadTreeCluster(box, DENSE)
    for _ in range(50):
        a = random_tree(rng, box)
        b = random_tree(rng, box)
        ab = intersect(a, b)
        assert structural_equal(ab, intersect(b, a))
        assert structural_equal(intersect(a, a), normalize(a))
        assert structural_equal(intersect(a, lr_root), normalize(a))
        assert structural_equal(intersect(a, dense_root), dense_root)
        # upper bound of both operands
        assert is_leq(a, ab) and is_leq(b, ab)


def test_is_leq_partial_order(rng):
    box = root_box(32, 32)
    trees = [normalize(random_tree(rng, box)) for _ in range(12)]
    for a in trees:
        assert is_leq(a, a)
        for b in trees:
            if is_leq(a, b) and is_leq(b, a):
                assert structural_equal(a, b)
            for c in trees:
                if is_leq(a, b) and is_leq(b, c):
                    assert is_leq(a, c)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 40), n=st.integers(2, 40))
def test_roundtrip_dict(seed, m, n):
    t = random_tree(np.random.default_rng(seed), root_box(m, n))
    assert structural_equal(tree_from_dict(tree_to_dict(t)), t)


def test_tree_to_dict_schema():
    t = hodlr_cluster(8, 2)
    d = tree_to_dict(t, ranks={lf.box: 3 for lf in leaves(t) if lf.kind == LOW_RANK})
    assert d["box"] == [1, 8, 1, 8]
    assert d["kind"] == SPLIT
    assert len(d["children"]) == 4
    off = d["children"][1]
    assert off["kind"] == LOW_RANK and off["rank"] == 3
