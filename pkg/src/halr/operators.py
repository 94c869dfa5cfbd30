"""Banded 1D operators with an implicit HODLR reading.

A Banded1DOperator stores a square banded matrix by diagonals, applies it
through a sparse handle, and solves shifted systems (sigma*I + A) x = b
through LAPACK's banded LU.  Factorizations are cached per shift (keyed by
the float's bit pattern, LRU of 64, lock-protected, so concurrent solves
with one shift factorize once).

Any off-diagonal block of a banded matrix has at most ``bandwidth`` nonzero
columns, which is what offdiag_factors exploits to hand out exact low-rank
factors; HodlrView packages that into the usual HODLR partition without
materializing anything until asked.
"""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np
import scipy.sparse
from scipy.linalg import lapack

from .cluster import DENSE, LOW_RANK, SPLIT, IndexBox, QuadTreeCluster, hodlr_cluster, root_box, split_box
from .errors import BoxTouchesDiagonal, DimensionMismatch, SingularShift
from .lowrank import FactoredLowRank
from .matrix import HalrMatrix

LU_CACHE_SIZE = 64


class Banded1DOperator:
    """Square banded matrix stored by diagonals.

    ``diags`` maps offset d to the diagonal entries a[i, i+d] (length
    n - |d|).  Instances are immutable; algebraic helpers return new
    operators.
    """

    def __init__(self, n: int, diags: dict[int, np.ndarray]):
        self.n = int(n)
        self.diags: dict[int, np.ndarray] = {}
        for d, vals in diags.items():
            vals = np.asarray(vals, dtype=np.float64)
            if vals.shape != (self.n - abs(d),):
                raise DimensionMismatch(f"diagonal {d} has length {vals.size}, want {self.n - abs(d)}")
            self.diags[int(d)] = vals.copy()
        offs = self.diags.keys()
        self.kl = max((-d for d in offs if d < 0), default=0)
        self.ku = max((d for d in offs if d > 0), default=0)
        self._sparse = None
        self._lu_cache: OrderedDict[bytes, tuple] = OrderedDict()
        self._lock = threading.Lock()

    # -- queries --------------------------------------------------------

    @property
    def bandwidth(self) -> int:
        return max(self.kl, self.ku)

    @property
    def is_symmetric(self) -> bool:
        for d, vals in self.diags.items():
            other = self.diags.get(-d)
            if other is None or not np.array_equal(vals, other):
                return False
        return True

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for d, vals in self.diags.items():
            np.fill_diagonal(a[max(-d, 0) :, max(d, 0) :], vals)
        return a

    def dense_block(self, rows, cols) -> np.ndarray:
        """Entries at 1-based index arrays rows x cols."""
        i0 = np.asarray(rows, dtype=np.int64)[:, None] - 1
        j0 = np.asarray(cols, dtype=np.int64)[None, :] - 1
        out = np.zeros((i0.shape[0], j0.shape[1]))
        for d, vals in self.diags.items():
            mask = (j0 - i0) == d
            if np.any(mask):
                idx = np.minimum(i0, j0)
                out[mask] = vals[np.broadcast_to(idx, mask.shape)[mask]]
        return out

    def norm_bound(self) -> float:
        """Upper bound on ||A||_2 via sqrt(||A||_1 * ||A||_inf)."""
        row = np.zeros(self.n)
        col = np.zeros(self.n)
        for d, vals in self.diags.items():
            av = np.abs(vals)
            row[max(-d, 0) : self.n - max(d, 0)] += av
            col[max(d, 0) : self.n - max(-d, 0)] += av
        return float(np.sqrt(row.max() * col.max())) if self.n else 0.0

    # -- algebra --------------------------------------------------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self._sparse is None:
            self._sparse = scipy.sparse.diags(
                list(self.diags.values()), offsets=list(self.diags.keys()), shape=(self.n, self.n)
            ).tocsr()
        return self._sparse @ x

    def transpose(self) -> "Banded1DOperator":
        if self.is_symmetric:
            return self
        return Banded1DOperator(self.n, {-d: v for d, v in self.diags.items()})

    def scaled(self, alpha: float) -> "Banded1DOperator":
        return Banded1DOperator(self.n, {d: alpha * v for d, v in self.diags.items()})

    def add_scaled_identity(self, sigma: float) -> "Banded1DOperator":
        diags = {d: v for d, v in self.diags.items()}
        main = diags.get(0, np.zeros(self.n))
        diags[0] = main + sigma
        return Banded1DOperator(self.n, diags)

    def principal_submatrix(self, lo: int, hi: int) -> "Banded1DOperator":
        """Sub-operator on the 1-based inclusive index range [lo, hi]."""
        if not (1 <= lo <= hi <= self.n):
            raise DimensionMismatch(f"range [{lo}, {hi}] outside 1..{self.n}")
        m = hi - lo + 1
        diags = {}
        for d, vals in self.diags.items():
            if abs(d) < m:
                diags[d] = vals[lo - 1 : lo - 1 + m - abs(d)]
        return Banded1DOperator(m, diags)

    # -- solves ---------------------------------------------------------

    def _factorize(self, sigma: float):
        kl, ku = self.kl, self.ku
        ab = np.zeros((2 * kl + ku + 1, self.n))
        for d, vals in self.diags.items():
            if d >= 0:
                ab[kl + ku - d, d : self.n] = vals
            else:
                ab[kl + ku - d, 0 : self.n + d] = vals
        ab[kl + ku] += sigma
        lu, ipiv, info = lapack.dgbtrf(ab, kl, ku)
        if info > 0:
            raise SingularShift(f"shift {sigma} makes the operator exactly singular")
        if info < 0:
            raise ValueError(f"dgbtrf failed with info={info}")
        return lu, ipiv

    def _lu(self, sigma: float):
        key = np.float64(sigma).tobytes()
        with self._lock:
            hit = self._lu_cache.get(key)
            if hit is not None:
                self._lu_cache.move_to_end(key)
                return hit
            fac = self._factorize(sigma)
            self._lu_cache[key] = fac
            while len(self._lu_cache) > LU_CACHE_SIZE:
                self._lu_cache.popitem(last=False)
            return fac

    def shifted_solve(self, sigma: float, rhs: np.ndarray, transposed: bool = False) -> np.ndarray:
        """Solve (sigma*I + A) x = rhs (or its transpose) via cached banded LU."""
        rhs = np.asarray(rhs, dtype=np.float64)
        single = rhs.ndim == 1
        b = rhs[:, None] if single else rhs
        if b.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has {b.shape[0]} rows, operator is {self.n}")
        lu, ipiv = self._lu(sigma)
        x, info = lapack.dgbtrs(lu, self.kl, self.ku, b, ipiv, trans=1 if transposed else 0)
        if info != 0:
            raise SingularShift(f"banded solve failed with info={info}")
        return x[:, 0] if single else x

    def solve(self, rhs: np.ndarray, transposed: bool = False) -> np.ndarray:
        return self.shifted_solve(0.0, rhs, transposed)


# -- discretizations ----------------------------------------------------


def laplacian_dirichlet(n: int, h: float) -> Banded1DOperator:
    """Second difference with homogeneous Dirichlet ends: tridiag(1,-2,1)/h^2."""
    e = np.ones(n - 1) / h**2
    return Banded1DOperator(n, {0: np.full(n, -2.0 / h**2), 1: e, -1: e})


def laplacian_neumann(n: int, h: float) -> Banded1DOperator:
    """Second difference with reflecting ends (ghost-point mirroring).

    First row (-1, 1)/h^2, last row (1, -1)/h^2; every row sums to zero.
    """
    main = np.full(n, -2.0 / h**2)
    main[0] = main[-1] = -1.0 / h**2
    e = np.ones(n - 1) / h**2
    return Banded1DOperator(n, {0: main, 1: e, -1: e})


def forward_difference(n: int, h: float) -> Banded1DOperator:
    """Upper bidiagonal forward difference (-1, 1)/h; last row just -1/h."""
    return Banded1DOperator(n, {0: np.full(n, -1.0 / h), 1: np.ones(n - 1) / h})


# -- implicit HODLR reading ---------------------------------------------


def offdiag_factors(op: Banded1DOperator, box: IndexBox) -> FactoredLowRank:
    """Exact factors of a strictly off-diagonal block; rank <= bandwidth.

    Only columns within ``bandwidth`` of the box's row range can be nonzero,
    so U collects those columns and V the matching identity columns.
    """
    r0, r1, c0, c1 = box.row_lo, box.row_hi, box.col_lo, box.col_hi
    if r0 <= c1 and c0 <= r1:
        raise BoxTouchesDiagonal(f"box {box} meets the diagonal")
    bw = op.bandwidth
    lo = max(c0, r0 - bw)
    hi = min(c1, r1 + bw)
    if lo > hi or bw == 0:
        return FactoredLowRank.zero(box.rows, box.cols)
    cand = np.arange(lo, hi + 1)
    u = op.dense_block(np.arange(r0, r1 + 1), cand)
    keep = np.any(u != 0.0, axis=0)
    u = u[:, keep]
    cand = cand[keep]
    v = np.zeros((box.cols, cand.size))
    v[cand - c0, np.arange(cand.size)] = 1.0
    return FactoredLowRank(u, v)


class HodlrView:
    """HODLR reading of a banded operator with dense blocks of size <= n_min."""

    def __init__(self, op: Banded1DOperator, n_min: int = 256):
        self.op = op
        self.n_min = int(n_min)

    @property
    def depth(self) -> int:
        p, size = 1, self.op.n
        while size > self.n_min:
            size = (size + 1) // 2
            p += 1
        return p

    def cluster(self) -> QuadTreeCluster:
        return hodlr_cluster(self.op.n, self.depth)

    def to_halr(self) -> HalrMatrix:
        """Materialize the view; reproduces the operator exactly."""
        return self._build(root_box(self.op.n, self.op.n))

    def _build(self, box: IndexBox) -> HalrMatrix:
        if min(box.shape) <= self.n_min:
            rows = np.arange(box.row_lo, box.row_hi + 1)
            cols = np.arange(box.col_lo, box.col_hi + 1)
            return HalrMatrix(box, DENSE, dense=self.op.dense_block(rows, cols))
        b11, b12, b21, b22 = split_box(box)
        kids = (
            self._build(b11),
            HalrMatrix(b12, LOW_RANK, factors=offdiag_factors(self.op, b12)),
            HalrMatrix(b21, LOW_RANK, factors=offdiag_factors(self.op, b21)),
            self._build(b22),
        )
        return HalrMatrix(box, SPLIT, children=kids)
