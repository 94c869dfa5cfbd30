"""HALR matrices and their structured arithmetic.

A HalrMatrix mirrors a quad-tree cluster and attaches payloads to the
leaves: an ndarray on dense leaves, a FactoredLowRank on low-rank leaves.
Trees are immutable by convention; every operation returns a new matrix.

Binary operations follow the blockwise recursions of hierarchical matrix
arithmetic: the result lives on the intersection of the operand clusters,
dense leaves absorb whatever they meet, and low-rank payloads combine
through factor algebra.  Truncation policy: each operation first builds the
exact (unrecompressed) structured result, estimates its spectral norm by
power iteration, then recompresses every low-rank leaf at eps times that
estimate.  Passing eps=0 skips recompression and keeps exact factors.
"""

from __future__ import annotations

import numpy as np

from . import cluster as cl
from .cluster import DENSE, LOW_RANK, SPLIT, IndexBox, QuadTreeCluster
from .errors import DimensionMismatch, IncompatibleClusters
from .lowrank import FactoredLowRank, compress_factors

POWER_ITERATIONS = 5
DENSIFY_LIMIT = 100_000_000


class HalrMatrix:
    """Quad-tree matrix with dense and factored low-rank leaves."""

    __slots__ = ("box", "kind", "dense", "factors", "children", "_cluster")

    def __init__(self, box: IndexBox, kind: str, dense=None, factors=None, children=None):
        self.box = box
        self.kind = kind
        self.dense = dense
        self.factors = factors
        self.children = children
        self._cluster = None
        if kind == DENSE:
            if dense is None or dense.shape != box.shape:
                raise DimensionMismatch("dense payload does not match box")
        elif kind == LOW_RANK:
            if factors is None or factors.shape != box.shape:
                raise DimensionMismatch("factored payload does not match box")
        elif kind == SPLIT:
            if children is None or len(children) != 4:
                raise DimensionMismatch("split nodes need four children")
        else:
            raise ValueError(f"unknown node kind {kind!r}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_dense(cls, a: np.ndarray, box: IndexBox | None = None) -> "HalrMatrix":
        a = np.ascontiguousarray(a, dtype=np.float64)
        if box is None:
            box = cl.root_box(*a.shape)
        return cls(box, DENSE, dense=a)

    @classmethod
    def from_factors(cls, f: FactoredLowRank, box: IndexBox | None = None) -> "HalrMatrix":
        if box is None:
            box = cl.root_box(*f.shape)
        return cls(box, LOW_RANK, factors=f)

    @classmethod
    def from_children(cls, children) -> "HalrMatrix":
        children = tuple(children)
        c11, _, _, c22 = (c.box for c in children)
        box = IndexBox(c11.row_lo, c22.row_hi, c11.col_lo, c22.col_hi)
        return cls(box, SPLIT, children=children)

    # -- basic queries --------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.box.shape

    @property
    def is_leaf(self) -> bool:
        return self.kind != SPLIT

    @property
    def cluster(self) -> QuadTreeCluster:
        if self._cluster is None:
            if self.is_leaf:
                self._cluster = QuadTreeCluster(self.box, self.kind)
            else:
                kids = tuple(c.cluster for c in self.children)
                self._cluster = QuadTreeCluster(self.box, SPLIT, kids)
        return self._cluster

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()

    def halr_rank(self) -> int:
        """Largest low-rank leaf rank (0 when no low-rank leaf exists)."""
        r = 0
        for lf in self.leaves():
            if lf.kind == LOW_RANK:
                r = max(r, lf.factors.rank)
        return r

    # -- conversions ----------------------------------------------------

    def to_dense(self, max_elements: int = DENSIFY_LIMIT) -> np.ndarray:
        m, n = self.shape
        if m * n > max_elements:
            raise MemoryError(f"refusing to densify {m} x {n} matrix")
        out = np.empty((m, n))
        _fill_dense(self, out, self.box.row_lo, self.box.col_lo)
        return out

    def entry_block(self, rows, cols) -> np.ndarray:
        """Entries at the 1-based index arrays rows x cols (need not be sorted)."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        ro = np.argsort(rows, kind="stable")
        co = np.argsort(cols, kind="stable")
        sub = _entry_block(self, rows[ro], cols[co])
        out = np.empty_like(sub)
        out[np.ix_(ro, co)] = sub
        return out

    def transpose(self) -> "HalrMatrix":
        if self.kind == DENSE:
            return HalrMatrix(self.box.transposed(), DENSE, dense=np.ascontiguousarray(self.dense.T))
        if self.kind == LOW_RANK:
            return HalrMatrix(self.box.transposed(), LOW_RANK, factors=self.factors.transpose())
        c11, c12, c21, c22 = self.children
        kids = (c11.transpose(), c21.transpose(), c12.transpose(), c22.transpose())
        return HalrMatrix(self.box.transposed(), SPLIT, children=kids)

    # -- matrix-vector products -----------------------------------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """A @ x for a vector (n,) or block of vectors (n, q)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[:, None] if single else x
        if xb.shape[0] != self.shape[1]:
            raise DimensionMismatch(f"matvec: {self.shape} @ {x.shape}")
        y = _matvec(self, xb)
        return y[:, 0] if single else y

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """A.T @ x for a vector (m,) or block of vectors (m, q)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[:, None] if single else x
        if xb.shape[0] != self.shape[0]:
            raise DimensionMismatch(f"rmatvec: {self.shape}.T @ {x.shape}")
        y = _rmatvec(self, xb)
        return y[:, 0] if single else y


def _fill_dense(node, out, row0, col0):
    r = node.box.row_lo - row0
    c = node.box.col_lo - col0
    m, n = node.shape
    if node.kind == DENSE:
        out[r : r + m, c : c + n] = node.dense
    elif node.kind == LOW_RANK:
        out[r : r + m, c : c + n] = node.factors.to_dense()
    else:
        for child in node.children:
            _fill_dense(child, out, row0, col0)


def _entry_block(node, rows, cols):
    if node.kind == DENSE:
        return node.dense[np.ix_(rows - node.box.row_lo, cols - node.box.col_lo)]
    if node.kind == LOW_RANK:
        return node.factors.U[rows - node.box.row_lo] @ node.factors.V[cols - node.box.col_lo].T
    c11, c12, c21, c22 = node.children
    rs = int(np.searchsorted(rows, c11.box.row_hi, side="right"))
    cs = int(np.searchsorted(cols, c11.box.col_hi, side="right"))
    top = [_entry_block(c11, rows[:rs], cols[:cs]), _entry_block(c12, rows[:rs], cols[cs:])]
    bot = [_entry_block(c21, rows[rs:], cols[:cs]), _entry_block(c22, rows[rs:], cols[cs:])]
    out = np.empty((rows.size, cols.size))
    out[:rs, :cs], out[:rs, cs:] = top
    out[rs:, :cs], out[rs:, cs:] = bot
    return out


def _matvec(node, x):
    if node.kind == DENSE:
        return node.dense @ x
    if node.kind == LOW_RANK:
        return node.factors.U @ (node.factors.V.T @ x)
    c11, c12, c21, c22 = node.children
    n1 = c11.shape[1]
    x1, x2 = x[:n1], x[n1:]
    top = _matvec(c11, x1) + _matvec(c12, x2)
    bot = _matvec(c21, x1) + _matvec(c22, x2)
    return np.concatenate([top, bot], axis=0)


def _rmatvec(node, x):
    if node.kind == DENSE:
        return node.dense.T @ x
    if node.kind == LOW_RANK:
        return node.factors.V @ (node.factors.U.T @ x)
    c11, c12, c21, c22 = node.children
    m1 = c11.shape[0]
    x1, x2 = x[:m1], x[m1:]
    left = _rmatvec(c11, x1) + _rmatvec(c21, x2)
    right = _rmatvec(c12, x1) + _rmatvec(c22, x2)
    return np.concatenate([left, right], axis=0)


def matvec_cost(a: HalrMatrix) -> int:
    """Multiply-add count of one matvec: m*n per dense leaf, k*(m+n) per
    low-rank leaf.  Identical to the storage entry count, which is the point
    of the blockwise recursion."""
    total = 0
    for lf in a.leaves():
        m, n = lf.shape
        if lf.kind == DENSE:
            total += m * n
        else:
            total += lf.factors.rank * (m + n)
    return total


# -- norm estimation and recompression ---------------------------------


def spectral_estimate(a: HalrMatrix, iterations: int = POWER_ITERATIONS) -> float:
    """Power-iteration estimate of ||A||_2 with a fixed start vector."""
    n = a.shape[1]
    v = np.ones(n)
    v[::2] += 0.4142
    v[1::3] -= 0.3317
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        w = a.matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = a.rmatvec(w / nw)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        # nw -> sigma_1 and nv = ||A.T u|| -> sigma_1 as well
        sigma = float(np.sqrt(nw * nv))
    return sigma


def _compress_leaves(node, tol_abs):
    if node.kind == DENSE:
        return node
    if node.kind == LOW_RANK:
        return HalrMatrix(node.box, LOW_RANK, factors=compress_factors(node.factors, tol_abs))
    kids = tuple(_compress_leaves(c, tol_abs) for c in node.children)
    return HalrMatrix(node.box, SPLIT, children=kids)


def recompress(a: HalrMatrix, eps: float, norm_estimate: float | None = None) -> HalrMatrix:
    """Recompress low-rank leaves at eps * (spectral norm estimate of a)."""
    if eps == 0.0:
        return a
    if norm_estimate is None:
        norm_estimate = spectral_estimate(a)
    return _compress_leaves(a, eps * norm_estimate)


# -- structured arithmetic ---------------------------------------------


def add(a: HalrMatrix, b: HalrMatrix, eps: float) -> HalrMatrix:
    """A + B on the intersection of the operand clusters.

    Dense leaves absorb whatever they meet; low-rank leaves append factors.
    The result is recompressed at eps (relative, see module docstring).
    """
    if a.shape != b.shape:
        raise DimensionMismatch(f"add: {a.shape} vs {b.shape}")
    cl.check_compatible(a.cluster, b.cluster)
    return recompress(_add_raw(a, b), eps)


def _lowrank_children(node, f):
    """Slice a factored payload onto the child boxes of a split node."""
    out = []
    r0, c0 = node.box.row_lo, node.box.col_lo
    for child in node.children:
        cb = child.box
        fu = f.U[cb.row_lo - r0 : cb.row_hi - r0 + 1]
        fv = f.V[cb.col_lo - c0 : cb.col_hi - c0 + 1]
        out.append(HalrMatrix(cb, LOW_RANK, factors=FactoredLowRank(fu, fv)))
    return out


def _add_raw(a, b):
    if a.kind == DENSE or b.kind == DENSE:
        box = a.box if a.kind == DENSE else b.box
        return HalrMatrix(box, DENSE, dense=a.to_dense() + b.to_dense())
    if a.kind == LOW_RANK and b.kind == LOW_RANK:
        f = FactoredLowRank(np.hstack([a.factors.U, b.factors.U]), np.hstack([a.factors.V, b.factors.V]))
        return HalrMatrix(a.box, LOW_RANK, factors=f)
    if a.kind == LOW_RANK:
        parts = _lowrank_children(b, a.factors)
        return HalrMatrix(b.box, SPLIT, children=tuple(_add_raw(p, c) for p, c in zip(parts, b.children)))
    if b.kind == LOW_RANK:
        parts = _lowrank_children(a, b.factors)
        return HalrMatrix(a.box, SPLIT, children=tuple(_add_raw(c, p) for c, p in zip(a.children, parts)))
    _check_aligned_splits(a, b)
    return HalrMatrix(a.box, SPLIT, children=tuple(_add_raw(x, y) for x, y in zip(a.children, b.children)))


def _check_aligned_splits(a, b):
    if (
        a.children[0].shape[0] != b.children[0].shape[0]
        or a.children[0].shape[1] != b.children[0].shape[1]
    ):
        raise IncompatibleClusters("split points of the operands disagree")


def scale(a: HalrMatrix, alpha: float) -> HalrMatrix:
    """alpha * A, exact.  alpha = 0 zeroes payloads and low-rank ranks."""
    if a.kind == DENSE:
        return HalrMatrix(a.box, DENSE, dense=alpha * a.dense)
    if a.kind == LOW_RANK:
        return HalrMatrix(a.box, LOW_RANK, factors=a.factors.scaled(alpha))
    return HalrMatrix(a.box, SPLIT, children=tuple(scale(c, alpha) for c in a.children))


def axpy(alpha: float, a: HalrMatrix, b: HalrMatrix, eps: float) -> HalrMatrix:
    """alpha * A + B with the same cluster/truncation semantics as add."""
    return add(scale(a, alpha), b, eps)


def add_factored_term(a: HalrMatrix, f: FactoredLowRank, tol_abs: float) -> HalrMatrix:
    """a + U V^T pushed onto a's cluster; low-rank leaves truncated at the
    absolute singular-value cut tol_abs."""
    raw = _add_raw(a, HalrMatrix.from_factors(f, box=a.box))
    return _compress_leaves(raw, tol_abs)


def multiply(a: HalrMatrix, b: HalrMatrix, eps: float, recompress_result: bool = True) -> HalrMatrix:
    """A @ B by blockwise recursion.

    A low-rank root on either side short-circuits through (r)matvec blocks;
    a dense root densifies the other operand; otherwise the four result
    blocks are C_ij = A_i1 B_1j + A_i2 B_2j with exact factor appends.  With
    recompress_result=False the raw result is returned, exposing the
    pre-truncation leaf ranks.
    """
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"multiply: {a.shape} @ {b.shape}")
    if not cl.is_row_compatible(cl.transpose(a.cluster), b.cluster):
        raise IncompatibleClusters("column structure of A does not match row structure of B")
    raw = _mul_raw(a, b)
    if not recompress_result:
        return raw
    return recompress(raw, eps)


def _mul_box(a, b):
    return IndexBox(a.box.row_lo, a.box.row_hi, b.box.col_lo, b.box.col_hi)


def _mul_raw(a, b):
    if a.kind == LOW_RANK:
        f = FactoredLowRank(a.factors.U, b.rmatvec(a.factors.V))
        return HalrMatrix(_mul_box(a, b), LOW_RANK, factors=f)
    if b.kind == LOW_RANK:
        f = FactoredLowRank(a.matvec(b.factors.U), b.factors.V)
        return HalrMatrix(_mul_box(a, b), LOW_RANK, factors=f)
    if a.kind == DENSE:
        return HalrMatrix(_mul_box(a, b), DENSE, dense=a.dense @ b.to_dense())
    if b.kind == DENSE:
        return HalrMatrix(_mul_box(a, b), DENSE, dense=a.to_dense() @ b.dense)
    a11, a12, a21, a22 = a.children
    b11, b12, b21, b22 = b.children
    if a11.shape[1] != b11.shape[0]:
        raise IncompatibleClusters("inner split points disagree in multiply")
    kids = (
        _add_raw(_mul_raw(a11, b11), _mul_raw(a12, b21)),
        _add_raw(_mul_raw(a11, b12), _mul_raw(a12, b22)),
        _add_raw(_mul_raw(a21, b11), _mul_raw(a22, b21)),
        _add_raw(_mul_raw(a21, b12), _mul_raw(a22, b22)),
    )
    return HalrMatrix.from_children(kids)


def hadamard(a: HalrMatrix, b: HalrMatrix, eps: float) -> HalrMatrix:
    """Entrywise product on the intersection cluster.

    Low-rank times low-rank uses the transposed Khatri-Rao product, so the
    raw rank is k_a * k_b before recompression.
    """
    if a.shape != b.shape:
        raise DimensionMismatch(f"hadamard: {a.shape} vs {b.shape}")
    cl.check_compatible(a.cluster, b.cluster)
    return recompress(_had_raw(a, b), eps)


def _khatri_rao_rows(x, y):
    m, p = x.shape
    q = y.shape[1]
    return (x[:, :, None] * y[:, None, :]).reshape(m, p * q)


def _had_raw(a, b):
    if a.kind == DENSE or b.kind == DENSE:
        box = a.box if a.kind == DENSE else b.box
        return HalrMatrix(box, DENSE, dense=a.to_dense() * b.to_dense())
    if a.kind == LOW_RANK and b.kind == LOW_RANK:
        fa, fb = a.factors, b.factors
        m, n = a.shape
        if fa.rank * fb.rank * (m + n) > 4 * m * n:
            # factored form denser than the block itself; go through SVD
            w, s, zt = np.linalg.svd(fa.to_dense() * fb.to_dense(), full_matrices=False)
            r = int(np.count_nonzero(s > s[0] * 1e-15)) if s.size else 0
            f = FactoredLowRank(w[:, :r] * s[:r], zt[:r].T)
        else:
            f = FactoredLowRank(_khatri_rao_rows(fa.U, fb.U), _khatri_rao_rows(fa.V, fb.V))
        return HalrMatrix(a.box, LOW_RANK, factors=f)
    if a.kind == LOW_RANK:
        parts = _lowrank_children(b, a.factors)
        return HalrMatrix(b.box, SPLIT, children=tuple(_had_raw(p, c) for p, c in zip(parts, b.children)))
    if b.kind == LOW_RANK:
        parts = _lowrank_children(a, b.factors)
        return HalrMatrix(a.box, SPLIT, children=tuple(_had_raw(c, p) for c, p in zip(a.children, parts)))
    _check_aligned_splits(a, b)
    return HalrMatrix(a.box, SPLIT, children=tuple(_had_raw(x, y) for x, y in zip(a.children, b.children)))


def dot(a: HalrMatrix, b: HalrMatrix) -> float:
    """Trace inner product <A, B> = trace(A.T @ B), computed blockwise.

    A low-rank leaf against anything costs k (r)matvecs on the other
    operand; a dense leaf against a split slices the dense payload.
    """
    if a.shape != b.shape:
        raise DimensionMismatch(f"dot: {a.shape} vs {b.shape}")
    return _dot(a, b)


def _dot(a, b):
    if a.kind == LOW_RANK:
        mb = b.rmatvec(a.factors.U)
        return float(np.sum(mb * a.factors.V))
    if b.kind == LOW_RANK:
        ma = a.rmatvec(b.factors.U)
        return float(np.sum(ma * b.factors.V))
    if a.kind == DENSE and b.kind == DENSE:
        return float(np.vdot(a.dense, b.dense))
    if a.kind == DENSE:
        parts = _dense_children(a, b)
        return sum(_dot(p, c) for p, c in zip(parts, b.children))
    if b.kind == DENSE:
        parts = _dense_children(b, a)
        return sum(_dot(c, p) for c, p in zip(a.children, parts))
    _check_aligned_splits(a, b)
    return sum(_dot(x, y) for x, y in zip(a.children, b.children))


def _dense_children(dense_node, split_node):
    """View the dense payload through the split node's child boxes."""
    r0 = dense_node.box.row_lo
    c0 = dense_node.box.col_lo
    out = []
    for child in split_node.children:
        cb = child.box
        blk = dense_node.dense[cb.row_lo - r0 : cb.row_hi - r0 + 1, cb.col_lo - c0 : cb.col_hi - c0 + 1]
        out.append(HalrMatrix(cb, DENSE, dense=blk))
    return out


def frobenius_norm(a: HalrMatrix) -> float:
    """Frobenius norm via the trace inner product.

    Exact on compressed payloads; on leaves holding nearly-cancelling
    appended factors (a residual formed by exact adds) the product loses
    the small result to cancellation, so recompress first in that case.
    """
    return float(np.sqrt(max(dot(a, a), 0.0)))


def storage_report(a: HalrMatrix) -> dict:
    """Stored-entry accounting: m*n per dense leaf, k*(m+n) per low-rank leaf."""
    dense_entries = 0
    lowrank_entries = 0
    dense_leaves = 0
    lowrank_leaves = 0
    rank = 0
    for lf in a.leaves():
        m, n = lf.shape
        if lf.kind == DENSE:
            dense_entries += m * n
            dense_leaves += 1
        else:
            lowrank_entries += lf.factors.rank * (m + n)
            lowrank_leaves += 1
            rank = max(rank, lf.factors.rank)
    entries = dense_entries + lowrank_entries
    return {
        "entries": entries,
        "bytes": entries * 8,
        "dense_entries": dense_entries,
        "lowrank_entries": lowrank_entries,
        "leaves": {"dense": dense_leaves, "lowrank": lowrank_leaves},
        "halr_rank": rank,
    }


def structure_dict(a: HalrMatrix) -> dict:
    """JSON-ready structure dump with per-leaf ranks (see cluster.tree_to_dict)."""
    d: dict = {"box": a.box.as_list(), "kind": a.kind}
    if a.kind == LOW_RANK:
        d["rank"] = int(a.factors.rank)
    elif a.kind == SPLIT:
        d["children"] = [structure_dict(c) for c in a.children]
    return d


def zeros(tree: QuadTreeCluster) -> HalrMatrix:
    """Zero matrix laid out on the given cluster."""
    if tree.kind == DENSE:
        return HalrMatrix(tree.box, DENSE, dense=np.zeros(tree.box.shape))
    if tree.kind == LOW_RANK:
        return HalrMatrix(tree.box, LOW_RANK, factors=FactoredLowRank.zero(*tree.box.shape))
    return HalrMatrix(tree.box, SPLIT, children=tuple(zeros(c) for c in tree.children))


# -- banded operator application ---------------------------------------


def apply_banded_left(op, a: HalrMatrix) -> HalrMatrix:
    """op @ A for a banded square operator, exactly, on A's cluster.

    ``op`` needs n, bandwidth, principal_submatrix(lo, hi), matvec, and
    dense_block(rows, cols); Banded1DOperator satisfies this.  Each leaf
    picks up its in-band core product plus rank <= bandwidth corrections
    from the rows just outside the leaf (read off the root matrix), so a
    low-rank leaf of rank k comes back with rank at most k + 2*bandwidth.
    """
    if op.n != a.shape[0]:
        raise DimensionMismatch(f"banded apply: operator {op.n} vs matrix {a.shape}")
    return _banded_left(op, a, a)


def apply_banded_right(a: HalrMatrix, op) -> HalrMatrix:
    """A @ op for a banded square operator, exactly, on A's cluster."""
    if op.n != a.shape[1]:
        raise DimensionMismatch(f"banded apply: matrix {a.shape} vs operator {op.n}")
    return _banded_left(op.transpose(), a.transpose(), a.transpose()).transpose()


def _pad_term(op, root, r_lo, r_hi, s_lo, s_hi, c_lo, c_hi, m_node, row_off):
    """Correction factors for source rows [s_lo, s_hi] feeding rows [r_lo, r_hi]."""
    s_lo = max(s_lo, 1)
    s_hi = min(s_hi, op.n)
    if s_lo > s_hi:
        return None
    s_idx = np.arange(s_lo, s_hi + 1)
    r_idx = np.arange(r_lo, r_hi + 1)
    coeff = op.dense_block(r_idx, s_idx)
    keep = np.any(coeff != 0.0, axis=0)
    if not np.any(keep):
        return None
    coeff = coeff[:, keep]
    s_idx = s_idx[keep]
    u = np.zeros((m_node, coeff.shape[1]))
    u[r_idx - row_off] = coeff
    pad_rows = root.entry_block(s_idx, np.arange(c_lo, c_hi + 1))
    return u, pad_rows.T


def _banded_left(op, node, root):
    if node.kind == SPLIT:
        kids = tuple(_banded_left(op, c, root) for c in node.children)
        return HalrMatrix(node.box, SPLIT, children=kids)
    b = node.box
    bw = op.bandwidth
    sub = op.principal_submatrix(b.row_lo, b.row_hi)
    terms = []
    top = _pad_term(op, root, b.row_lo, min(b.row_hi, b.row_lo + bw - 1), b.row_lo - bw, b.row_lo - 1, b.col_lo, b.col_hi, b.rows, b.row_lo)
    if top is not None:
        terms.append(top)
    bot = _pad_term(op, root, max(b.row_lo, b.row_hi - bw + 1), b.row_hi, b.row_hi + 1, b.row_hi + bw, b.col_lo, b.col_hi, b.rows, b.row_lo)
    if bot is not None:
        terms.append(bot)
    if node.kind == DENSE:
        out = sub.matvec(node.dense)
        for u, vt in terms:
            out = out + u @ vt.T
        return HalrMatrix(b, DENSE, dense=out)
    f = node.factors
    us = [sub.matvec(f.U)] + [t[0] for t in terms]
    vs = [f.V] + [t[1] for t in terms]
    return HalrMatrix(b, LOW_RANK, factors=FactoredLowRank(np.hstack(us), np.hstack(vs)))
