"""Low-rank building blocks: entry oracles, factored matrices, ACA.

Oracles expose matrix entries through vectorized block evaluation with
1-based indices, matching the index-box convention used by the cluster
trees.  Factored matrices are plain (U, V) pairs representing U @ V.T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


class EntryOracle:
    """Entry access to an m x n matrix.

    Subclasses implement ``block(rows, cols)`` for 1-based index arrays and
    must set ``m`` and ``n``.  ``eval`` is the scalar convenience form.
    """

    m: int
    n: int

    def block(self, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def eval(self, i: int, j: int) -> float:
        return float(self.block(np.array([i]), np.array([j]))[0, 0])


class FunctionOracle(EntryOracle):
    """Oracle backed by a broadcastable function of 1-based index arrays."""

    def __init__(self, f, m: int, n: int):
        self.f = f
        self.m = int(m)
        self.n = int(n)

    def block(self, rows, cols):
        I = np.asarray(rows, dtype=np.int64)[:, None]
        J = np.asarray(cols, dtype=np.int64)[None, :]
        out = np.asarray(self.f(I, J), dtype=np.float64)
        if out.shape != (I.shape[0], J.shape[1]):
            out = np.broadcast_to(out, (I.shape[0], J.shape[1])).copy()
        return out


class DenseOracle(EntryOracle):
    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=np.float64)
        self.m, self.n = self.a.shape

    def block(self, rows, cols):
        return self.a[np.ix_(np.asarray(rows) - 1, np.asarray(cols) - 1)]


class FactoredOracle(EntryOracle):
    """Oracle over an existing factored low-rank payload."""

    def __init__(self, f: "FactoredLowRank"):
        self.fac = f
        self.m, self.n = f.shape

    def block(self, rows, cols):
        return self.fac.U[np.asarray(rows) - 1] @ self.fac.V[np.asarray(cols) - 1].T


class SubOracle(EntryOracle):
    """View of a parent oracle restricted to an index box (local 1-based)."""

    def __init__(self, parent: EntryOracle, row_lo: int, col_lo: int, m: int, n: int):
        self.parent = parent
        self.dr = row_lo - 1
        self.dc = col_lo - 1
        self.m = int(m)
        self.n = int(n)

    def block(self, rows, cols):
        return self.parent.block(np.asarray(rows) + self.dr, np.asarray(cols) + self.dc)


@dataclass(frozen=True)
class FactoredLowRank:
    """Rank-k factorization U @ V.T with U (m,k) and V (n,k)."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.ascontiguousarray(np.atleast_2d(self.U), dtype=np.float64)
        V = np.ascontiguousarray(np.atleast_2d(self.V), dtype=np.float64)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise DimensionMismatch(f"bad factor shapes {U.shape}, {V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @classmethod
    def zero(cls, m: int, n: int) -> "FactoredLowRank":
        return cls(np.zeros((m, 0)), np.zeros((n, 0)))

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    def to_dense(self) -> np.ndarray:
        return self.U @ self.V.T

    def transpose(self) -> "FactoredLowRank":
        return FactoredLowRank(self.V, self.U)

    def scaled(self, alpha: float) -> "FactoredLowRank":
        if alpha == 0.0:
            return FactoredLowRank.zero(*self.shape)
        return FactoredLowRank(alpha * self.U, self.V)

    def frobenius_norm(self) -> float:
        if self.rank == 0:
            return 0.0
        g = (self.U.T @ self.U) @ (self.V.T @ self.V)
        return float(np.sqrt(max(np.trace(g), 0.0)))


def compress_factors(f: FactoredLowRank, eps: float) -> FactoredLowRank:
    """Recompress factors to minimal rank with 2-norm error at most eps.

    QR of both factors, SVD of the small core, singular values <= eps
    dropped.  Idempotent on already-compressed input.
    """
    if f.rank == 0:
        return f
    qu, ru = np.linalg.qr(f.U, mode="reduced")
    qv, rv = np.linalg.qr(f.V, mode="reduced")
    w, s, zt = np.linalg.svd(ru @ rv.T)
    r = int(np.count_nonzero(s > eps))
    return FactoredLowRank(qu @ (w[:, :r] * s[:r]), qv @ zt[:r].T)


def add_factored(a: FactoredLowRank, b: FactoredLowRank, eps: float) -> FactoredLowRank:
    """Sum of two factored matrices, recompressed at tolerance eps."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot add factors of shapes {a.shape} and {b.shape}")
    stacked = FactoredLowRank(np.hstack([a.U, b.U]), np.hstack([a.V, b.V]))
    return compress_factors(stacked, eps)


def aca(oracle: EntryOracle, maxrank: int, eps: float, relative: bool = False):
    """Adaptive cross approximation with partial (row) pivoting.

    Starts from the middle row; the next pivot row maximizes the absolute
    residual column, the pivot column maximizes the absolute residual row
    (ties to the lowest index).  Stops successfully once two consecutive
    steps satisfy ||u_k|| * ||v_k|| <= eps; those trailing small terms are
    dropped, so a successful result has rank at most maxrank.  ``relative``
    rescales eps by the running max of ||u_k|| * ||v_k||.  A zero pivot row
    advances to the next untried row; running out of rows means the residual
    is exactly zero.  Returns (FactoredLowRank, success).

    Touches O(k (m + n)) entries; the error bound is heuristic, as sampling
    can miss mass off the crosses.
    """
    m, n = oracle.m, oracle.n
    budget = min(maxrank + 1, m, n)
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    smalls: list[bool] = []
    row_used = np.zeros(m, dtype=bool)
    col_used = np.zeros(n, dtype=bool)
    norm_max = 0.0
    i = m // 2 + 1
    all_idx = np.arange(1, n + 1)

    def current_factors():
        if not us:
            return FactoredLowRank.zero(m, n)
        return FactoredLowRank(np.column_stack(us), np.column_stack(vs))

    def trimmed_success():
        while smalls and smalls[-1]:
            us.pop()
            vs.pop()
            smalls.pop()
        return current_factors(), True

    while len(us) < budget:
        row = oracle.block(np.array([i]), all_idx)[0]
        if us:
            row = row - np.column_stack(us)[i - 1] @ np.column_stack(vs).T
        row_masked = np.where(col_used, -np.inf, np.abs(row))
        j = int(np.argmax(row_masked)) + 1
        pivot = row[j - 1]
        if pivot == 0.0 or not np.isfinite(row_masked[j - 1]):
            row_used[i - 1] = True
            untried = np.flatnonzero(~row_used)
            if untried.size == 0:
                return current_factors(), True
            i = int(untried[0]) + 1
            continue
        col = oracle.block(np.arange(1, m + 1), np.array([j]))[:, 0]
        if us:
            col = col - np.column_stack(us) @ np.column_stack(vs)[j - 1]
        u = col
        v = row / pivot
        us.append(u)
        vs.append(v)
        row_used[i - 1] = True
        col_used[j - 1] = True
        step = float(np.linalg.norm(u) * np.linalg.norm(v))
        norm_max = max(norm_max, step)
        tol = eps * norm_max if relative else eps
        smalls.append(step <= tol)
        if len(smalls) >= 2 and smalls[-1] and smalls[-2]:
            return trimmed_success()
        cand = np.where(row_used, -np.inf, np.abs(u))
        if not np.any(np.isfinite(cand)):
            return current_factors(), True
        i = int(np.argmax(cand)) + 1

    if len(us) == min(m, n) and min(m, n) <= maxrank:
        # pivots exhausted an entire dimension; residual is exactly zero
        return current_factors(), True
    if len(us) > maxrank:
        f = current_factors()
        return FactoredLowRank(f.U[:, :maxrank], f.V[:, :maxrank]), False
    return current_factors(), False


def estimate_norm(oracle: EntryOracle) -> float:
    """Frobenius-norm estimate from a rank-10 pilot ACA sweep."""
    f, _ = aca(oracle, maxrank=10, eps=0.0)
    if f.rank == 0:
        return 0.0
    ru = np.linalg.qr(f.U, mode="r")
    rv = np.linalg.qr(f.V, mode="r")
    return float(np.linalg.norm(ru @ rv.T))
