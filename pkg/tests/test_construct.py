import numpy as np

from halr.cluster import DENSE, LOW_RANK, hodlr_cluster, structural_equal
from halr.construct import (
    ConstructionParams,
    approximate_with_cluster,
    halr_adaptive,
    refine_cluster,
    relative_eps,
)
from halr.lowrank import DenseOracle, FunctionOracle
from util import random_square_halr


def gaussian_oracle(n):
    xs = (np.arange(1, n + 1) - 0.5) / n
    return FunctionOracle(lambda i, j: np.exp(-((xs[i - 1] - xs[j - 1]) ** 2)), n, n)


def step_oracle(n):
    """Rank-1 above the anti-diagonal, random below: one discontinuity line."""
    r = np.random.default_rng(5)
    noise = r.standard_normal((n, n))
    xs = np.arange(1, n + 1)

    def f(i, j):
        lowrank = np.exp(-(xs[i - 1] + xs[j - 1]) / n)
        return np.where(i + j <= n, lowrank, noise[i - 1, j - 1])

    return FunctionOracle(f, n, n)


def test_adaptive_smooth_single_lowrank_root():
    o = gaussian_oracle(256)
    a = halr_adaptive(o, ConstructionParams(50, relative_eps(o, 1e-8), n_min=64))
    assert a.kind == LOW_RANK
    assert np.linalg.norm(a.to_dense() - o.block(range(1, 257), range(1, 257))) <= 1e-6


def test_adaptive_noise_dense_root(rng):
    o = DenseOracle(rng.standard_normal((128, 128)))
    a = halr_adaptive(o, ConstructionParams(20, relative_eps(o, 1e-8), n_min=32))
    assert a.kind == DENSE
    assert np.array_equal(a.to_dense(), o.a)


def test_adaptive_rank_cap_and_tolerance():
    o = step_oracle(128)
    params = ConstructionParams(10, relative_eps(o, 1e-8), n_min=16)
    a = halr_adaptive(o, params)
    assert a.halr_rank() <= 10
    ref = o.block(range(1, 129), range(1, 129))
    # each leaf approximated at eps absolute; total within sqrt(#leaves) of it
    nleaves = sum(1 for _ in a.leaves())
    assert np.linalg.norm(a.to_dense() - ref) <= params.eps * np.sqrt(nleaves) * 10


def test_adaptive_mixed_structure_splits_on_discontinuity():
    o = step_oracle(128)
    a = halr_adaptive(o, ConstructionParams(10, relative_eps(o, 1e-8), n_min=16))
    kinds = {lf.kind for lf in a.leaves()}
    assert kinds == {DENSE, LOW_RANK}
    # no dense leaf may sit entirely in the smooth region i + j <= n
    for lf in a.leaves():
        if lf.kind == DENSE:
            b = lf.box
            assert b.row_hi + b.col_hi > 128


def test_lowrank_never_pays_more_than_dense(rng):
    o = DenseOracle(rng.standard_normal((64, 64)))
    a = halr_adaptive(o, ConstructionParams(50, relative_eps(o, 1e-8), n_min=16))
    for lf in a.leaves():
        if lf.kind == LOW_RANK:
            m, n = lf.shape
            assert lf.factors.rank * (m + n) < m * n


def test_prescribed_cluster_respected():
    o = gaussian_oracle(64)
    tree = hodlr_cluster(64, 3)
    a = approximate_with_cluster(o, tree, 1e-8)
    assert structural_equal(a.cluster, tree)
    ref = o.block(range(1, 65), range(1, 65))
    assert np.linalg.norm(a.to_dense() - ref) <= 1e-5


def test_prescribed_cluster_mislabeled_leaf_full_rank(rng):
    # noise under a low-rank label: unconstrained ACA still reaches the
    # tolerance, at full rank
    o = DenseOracle(rng.standard_normal((64, 64)))
    tree = hodlr_cluster(64, 2)
    a = approximate_with_cluster(o, tree, 1e-10)
    assert a.halr_rank() == 32
    assert np.linalg.norm(a.to_dense() - o.a) <= 1e-8 * np.linalg.norm(o.a)


def test_refine_cluster_idempotent(rng):
    a = random_square_halr(rng, 128, rank=6)
    params = ConstructionParams(12, 1e-8 * np.linalg.norm(a.to_dense()), n_min=16)
    r1 = refine_cluster(a, params)
    r2 = refine_cluster(r1, params)
    assert structural_equal(r1.cluster, r2.cluster)


def test_refine_cluster_preserves_content(rng):
    a = random_square_halr(rng, 128, rank=4)
    nrm = np.linalg.norm(a.to_dense())
    r = refine_cluster(a, ConstructionParams(16, 1e-9 * nrm, n_min=16))
    assert np.linalg.norm(r.to_dense() - a.to_dense()) <= 1e-6 * nrm


def test_refine_cluster_merges_compressible_children(rng):
    u = rng.standard_normal((64, 2))
    v = rng.standard_normal((64, 2))
    from halr.cluster import root_box, split_box
    from halr.matrix import HalrMatrix
    from halr.lowrank import FactoredLowRank

    box = root_box(64, 64)
    kids = []
    for b in split_box(box):
        fu = u[b.row_lo - 1 : b.row_hi]
        fv = v[b.col_lo - 1 : b.col_hi]
        kids.append(HalrMatrix(b, LOW_RANK, factors=FactoredLowRank(fu, fv)))
    a = HalrMatrix(box, "split", children=tuple(kids))
    r = refine_cluster(a, ConstructionParams(8, 1e-10 * np.linalg.norm(a.to_dense()), n_min=16))
    assert r.kind == LOW_RANK and r.factors.rank == 2
