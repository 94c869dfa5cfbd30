"""Adaptive HALR construction from entry oracles.

halr_adaptive discovers the partition: try ACA on the current box, fall
back to a dense leaf once the box is small, otherwise split at the
midpoints and recurse, merging splits whose four children all came back
dense.  refine_cluster re-runs the same adaptation on an existing matrix,
using its payloads as the oracle, and additionally merges four low-rank
siblings when their combined factors compress below maxrank.

Tolerances here are absolute; use relative_eps to scale a relative target
by an estimated norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import DENSE, LOW_RANK, SPLIT, IndexBox, QuadTreeCluster, root_box, split_box
from .errors import AcaFailure
from .lowrank import (
    DenseOracle,
    EntryOracle,
    FactoredLowRank,
    FactoredOracle,
    SubOracle,
    aca,
    compress_factors,
    estimate_norm,
)
from .matrix import HalrMatrix


@dataclass(frozen=True)
class ConstructionParams:
    """Adaptive construction knobs: rank cap, absolute tolerance, leaf size."""

    maxrank: int
    eps: float
    n_min: int = 256

    def __post_init__(self):
        if self.maxrank < 1 or self.eps < 0 or self.n_min < 1:
            raise ValueError(f"bad construction parameters {self}")


def relative_eps(oracle: EntryOracle, eps_rel: float) -> float:
    """Absolute tolerance from a relative one via a pilot norm estimate."""
    return eps_rel * max(estimate_norm(oracle), np.finfo(float).tiny)


def _local(oracle: EntryOracle, box: IndexBox, origin: tuple[int, int]) -> EntryOracle:
    return SubOracle(oracle, box.row_lo - origin[0] + 1, box.col_lo - origin[1] + 1, *box.shape)


def _dense_leaf(oracle, box, origin) -> HalrMatrix:
    sub = _local(oracle, box, origin)
    block = sub.block(np.arange(1, box.rows + 1), np.arange(1, box.cols + 1))
    return HalrMatrix(box, DENSE, dense=block)


def halr_adaptive(oracle: EntryOracle, params: ConstructionParams) -> HalrMatrix:
    """Build a (T, maxrank)-HALR approximation with adaptively chosen T.

    Every low-rank leaf holds an ACA factorization of rank <= maxrank that
    met the absolute tolerance params.eps; dense leaves have
    min(m, n) <= n_min.  Splits whose four children all come back dense are
    merged, so no dense leaf sits under a pointless split.
    """
    box = root_box(oracle.m, oracle.n)
    return _adaptive(oracle, box, params, (1, 1))


def _adaptive(oracle, box, params, origin) -> HalrMatrix:
    sub = _local(oracle, box, origin)
    factors, ok = aca(sub, params.maxrank, params.eps)
    m, n = box.shape
    if ok and factors.rank * (m + n) < m * n:
        return HalrMatrix(box, LOW_RANK, factors=factors)
    if ok or min(box.shape) <= params.n_min:
        return _dense_leaf(oracle, box, origin)
    children = tuple(_adaptive(oracle, b, params, origin) for b in split_box(box))
    if all(c.kind == DENSE for c in children):
        c11, c12, c21, c22 = children
        merged = np.block([[c11.dense, c12.dense], [c21.dense, c22.dense]])
        return HalrMatrix(box, DENSE, dense=merged)
    return HalrMatrix(box, SPLIT, children=children)


def approximate_with_cluster(
    oracle: EntryOracle,
    tree: QuadTreeCluster,
    eps: float,
    norm_estimate: float | None = None,
) -> HalrMatrix:
    """Sample the oracle onto a prescribed cluster.

    eps is relative: leaves are approximated at eps times a pilot estimate
    of the global norm (pass norm_estimate to skip the pilot).  Low-rank
    leaves use unconstrained-rank ACA and raise AcaFailure when the
    tolerance is not reached within min(m, n) steps, i.e. when the leaf is
    mislabeled for this oracle.
    """
    if norm_estimate is None:
        norm_estimate = estimate_norm(oracle)
    eps_abs = eps * max(norm_estimate, np.finfo(float).tiny)
    return _prescribed(oracle, tree, eps_abs, (1, 1))


def _prescribed(oracle, tree, eps_abs, origin) -> HalrMatrix:
    box = tree.box
    if tree.kind == DENSE:
        return _dense_leaf(oracle, box, origin)
    if tree.kind == LOW_RANK:
        sub = _local(oracle, box, origin)
        cap = max(min(box.shape) - 1, 1)
        factors, ok = aca(sub, cap, eps_abs)
        if not ok:
            raise AcaFailure(
                f"ACA did not reach {eps_abs:.3e} on the low-rank leaf {box} "
                f"within {min(box.shape)} steps"
            )
        return HalrMatrix(box, LOW_RANK, factors=factors)
    kids = tuple(_prescribed(oracle, c, eps_abs, origin) for c in tree.children)
    return HalrMatrix(box, SPLIT, children=kids)


def refine_cluster(a: HalrMatrix, params: ConstructionParams) -> HalrMatrix:
    """Re-adapt an existing matrix's partition to its current content.

    Leaves are re-approximated through oracles over their own payloads (the
    original entry function is never consulted).  Bottom-up, four dense
    children merge into a dense leaf; four low-rank children merge when
    their combined factors compress to rank <= maxrank at params.eps.
    """
    if a.kind != SPLIT:
        oracle = DenseOracle(a.dense) if a.kind == DENSE else FactoredOracle(a.factors)
        return _adaptive(oracle, a.box, params, (a.box.row_lo, a.box.col_lo))
    kids = tuple(refine_cluster(c, params) for c in a.children)
    if all(k.kind == DENSE for k in kids):
        c11, c12, c21, c22 = kids
        return HalrMatrix(a.box, DENSE, dense=np.block([[c11.dense, c12.dense], [c21.dense, c22.dense]]))
    if all(k.kind == LOW_RANK for k in kids):
        merged = compress_factors(_merge_factors(a.box, kids), params.eps)
        if merged.rank <= params.maxrank:
            return HalrMatrix(a.box, LOW_RANK, factors=merged)
    return HalrMatrix(a.box, SPLIT, children=kids)


def _merge_factors(box: IndexBox, kids) -> FactoredLowRank:
    """Stack child factors into parent factors.

    U interleaves by row block, V by column block:
    U = [[U11 U12 0 0], [0 0 U21 U22]], V = [[V11 0 V21 0], [0 V12 0 V22]].
    """
    c11, c12, c21, c22 = kids
    m1, n1 = c11.shape
    m, n = box.shape
    f11, f12, f21, f22 = (k.factors for k in kids)
    ranks = [f.rank for f in (f11, f12, f21, f22)]
    u = np.zeros((m, sum(ranks)))
    v = np.zeros((n, sum(ranks)))
    o = np.cumsum([0] + ranks)
    u[:m1, o[0] : o[1]] = f11.U
    u[:m1, o[1] : o[2]] = f12.U
    u[m1:, o[2] : o[3]] = f21.U
    u[m1:, o[3] : o[4]] = f22.U
    v[:n1, o[0] : o[1]] = f11.V
    v[n1:, o[1] : o[2]] = f12.V
    v[:n1, o[2] : o[3]] = f21.V
    v[n1:, o[3] : o[4]] = f22.V
    return FactoredLowRank(u, v)
