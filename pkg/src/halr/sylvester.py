"""Solvers for A X + X B = C with banded A, B and structured C.

Four layers: a dense Bartels-Stewart wrapper, an extended Krylov projection
solver for factored low-rank C, a divide-and-conquer recursion for dense C,
and the general divide-and-conquer dac_sylv for HALR C.  The recursion
splits C's tree, restricts A and B to the matching principal blocks, solves
the four diagonal sub-problems, and corrects with a low-rank solve whose
right-hand side collects the off-diagonal coupling (exact factors of rank
at most 4 * bandwidth).

Residual budgeting: the driver distributes the absolute target
tol * ||C||_F over the sub-solves it will spawn and derives truncation
thresholds from it divided by a Gershgorin-style bound on ||A||_2 + ||B||_2,
so the assembled solution meets the advertised true residual, not just each
piece its own relative one.  Inner solvers flag non-convergence in the
returned SolveInfo instead of raising; the best iterate is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cluster import DENSE, LOW_RANK, SPLIT, IndexBox
from .errors import DimensionMismatch, SpectralOverlap
from .lowrank import FactoredLowRank
from .matrix import HalrMatrix
from .operators import Banded1DOperator, offdiag_factors

DEFAULT_TOL = 1e-8
STEPPING_TOL = 1e-5
MAX_EK_ITERATIONS = 100


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    residual: float


def dense_solver_sylv(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Bartels-Stewart via LAPACK (Schur + trsyl), wrapped with error mapping."""
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (a, b, c))
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1] or c.shape != (a.shape[0], b.shape[0]):
        raise DimensionMismatch(f"sylvester shapes {a.shape}, {b.shape}, {c.shape}")
    try:
        x = scipy.linalg.solve_sylvester(a, b, c)
    except np.linalg.LinAlgError as e:
        raise SpectralOverlap(str(e)) from e
    if not np.all(np.isfinite(x)):
        raise SpectralOverlap("sylvester solve produced non-finite entries")
    # trsyl degrades silently when spectra of A and -B (nearly) meet: the
    # returned x is finite but useless, so judge it against ||c|| alone
    resid = np.linalg.norm(a @ x + x @ b - c)
    if resid > 1e-6 * np.linalg.norm(c) + 1e-300:
        raise SpectralOverlap(f"sylvester residual {resid:.2e} indicates overlapping spectra")
    return x


def _orth_against(q, w, scale_ref):
    """Orthonormalize w against the basis q with an SVD rank reveal.

    Small surviving directions carry projection error up to
    eps * ||w|| / sigma relative, so the survivors get a second projection
    pass; a column that loses half its (unit) norm there was noise, not new
    content.  Without the second pass the basis loses orthogonality and the
    projected solves degrade.
    """
    if w.size == 0:
        return np.zeros((w.shape[0], 0))
    lead = max(float(np.linalg.norm(w)), scale_ref)
    if q is not None and q.shape[1]:
        w = w - q @ (q.T @ w)
    u, s, _ = np.linalg.svd(w, full_matrices=False)
    u = u[:, s > lead * 1e-12]
    if q is not None and q.shape[1] and u.shape[1]:
        u = u - q @ (q.T @ u)
        u2, s2, _ = np.linalg.svd(u, full_matrices=False)
        u = u2[:, s2 > 0.5]
    return u


class _EkSpace:
    """One side of the extended Krylov space EK(M, B0)."""

    def __init__(self, matvec, solve, b0, scale_ref):
        self.matvec = matvec
        self.solve = solve
        self.scale_ref = scale_ref
        self.basis = _orth_against(None, b0, scale_ref)
        self.fwd = self.basis
        self.inv = self.basis

    def grow(self) -> bool:
        # the basis can never usefully exceed the space dimension
        nmax = self.basis.shape[0]
        added = False
        if self.fwd.shape[1] and self.basis.shape[1] < nmax:
            nb = _orth_against(self.basis, self.matvec(self.fwd), self.scale_ref)
            nb = nb[:, : nmax - self.basis.shape[1]]
            self.basis = np.hstack([self.basis, nb])
            self.fwd = nb
            added = added or nb.shape[1] > 0
        if self.inv.shape[1] and self.basis.shape[1] < nmax:
            nb = _orth_against(self.basis, self.solve(self.inv), self.scale_ref)
            nb = nb[:, : nmax - self.basis.shape[1]]
            self.basis = np.hstack([self.basis, nb])
            self.inv = nb
            added = added or nb.shape[1] > 0
        return added


def low_rank_rhs_sylv(
    a_op: Banded1DOperator,
    b_op: Banded1DOperator,
    c: FactoredLowRank,
    tol: float = DEFAULT_TOL,
    maxiter: int = MAX_EK_ITERATIONS,
    abs_target: float | None = None,
    trunc: float | None = None,
):
    """Extended Krylov solver for A X + X B = U_C V_C^T.

    Projects onto EK(A, U_C) x EK(B^T, V_C), solves the small Sylvester
    equation, and checks the true residual in factored form each step,
    stopping at tol * ||C||_F (or abs_target).  The returned factors are
    truncated at trunc (absolute singular value cut, default tol * ||X||_2).
    Non-convergence within maxiter is flagged, not raised.
    Returns (FactoredLowRank, SolveInfo).
    """
    m, n = a_op.n, b_op.n
    if c.shape != (m, n):
        raise DimensionMismatch(f"rhs {c.shape} does not match operators {m}, {n}")
    norm_c = c.frobenius_norm()
    if norm_c == 0.0 or c.rank == 0:
        return FactoredLowRank.zero(m, n), SolveInfo(True, 0, 0.0)
    target = tol * norm_c if abs_target is None else abs_target

    bt_op = b_op.transpose()
    left = _EkSpace(a_op.matvec, lambda z: a_op.solve(z), c.U, norm_c)
    right = _EkSpace(bt_op.matvec, lambda z: b_op.solve(z, transposed=True), c.V, norm_c)

    y = np.zeros((left.basis.shape[1], right.basis.shape[1]))
    residual = norm_c
    it = 0
    converged = False
    while True:
        it += 1
        v, w = left.basis, right.basis
        av = a_op.matvec(v)
        bw = b_op.matvec(w)
        ap = v.T @ av
        bp = w.T @ bw
        cp = (v.T @ c.U) @ (w.T @ c.V).T
        y = dense_solver_sylv(ap, bp, cp)
        # true residual in factored form: [AVY, VY, -U_C] [W, B^T W, V_C]^T
        vy = v @ y
        lf = np.hstack([av @ y, vy, -c.U])
        rf = np.hstack([w, bt_op.matvec(w), c.V])
        rl = np.linalg.qr(lf, mode="r")
        rr = np.linalg.qr(rf, mode="r")
        residual = float(np.linalg.norm(rl @ rr.T))
        if residual <= target:
            converged = True
            break
        if it >= maxiter:
            break
        if not (left.grow() | right.grow()):
            break

    uy, sy, vyt = np.linalg.svd(y)
    if trunc is None:
        # tol * ||X||_2, but never so coarse that (||A||+||B||) * cut eats the
        # residual budget
        opnorm = max(a_op.norm_bound() + b_op.norm_bound(), 1.0)
        cut = min(tol * (sy[0] if sy.size else 0.0), 0.25 * target / opnorm)
    else:
        cut = trunc
    r = int(np.count_nonzero(sy > cut))
    x = FactoredLowRank(left.basis @ (uy[:, :r] * sy[:r]), right.basis @ vyt[:r].T)
    return x, SolveInfo(converged, it, residual)


# -- divide and conquer -------------------------------------------------


def _count_dense_corrections(m: int, n: int, n_min: int) -> int:
    if min(m, n) <= n_min:
        return 0
    m1, n1 = (m + 1) // 2, (n + 1) // 2
    total = 1
    for mm in (m1, m - m1):
        for nn in (n1, n - n1):
            total += _count_dense_corrections(mm, nn, n_min)
    return total


def _count_solves(node: HalrMatrix, n_min: int) -> int:
    if node.kind == LOW_RANK:
        return 1
    if node.kind == DENSE:
        return _count_dense_corrections(*node.shape, n_min)
    return 1 + sum(_count_solves(c, n_min) for c in node.children)


def dac_sylv(
    a_op: Banded1DOperator,
    b_op: Banded1DOperator,
    c: HalrMatrix,
    tol: float = DEFAULT_TOL,
    n_min: int = 256,
    maxiter: int = MAX_EK_ITERATIONS,
):
    """Divide-and-conquer solve of A X + X B = C for HALR C.

    Leaf dispatch: low-rank leaf -> extended Krylov, dense leaf ->
    Bartels-Stewart (splitting it first when larger than n_min).  A split
    node solves the four diagonal sub-problems with the principal
    sub-operators, then corrects with one low-rank solve whose right-hand
    side -(A_off X~ + X~ B_off) has exact rank <= 4 * bandwidth.  The
    output lives on C's cluster.  The absolute residual budget
    tol * ||C||_F is split across all inner solves, and truncations are cut
    at that budget over a bound on ||A||_2 + ||B||_2, so the true residual
    of the assembled X meets tol * ||C||_F when every inner solve converges
    (see SolveInfo.converged).
    Returns (HalrMatrix, SolveInfo).
    """
    from .matrix import frobenius_norm, zeros

    m, n = c.shape
    if a_op.n != m or b_op.n != n:
        raise DimensionMismatch(f"operators {a_op.n}, {b_op.n} vs rhs {c.shape}")
    norm_c = frobenius_norm(c)
    if norm_c == 0.0:
        return zeros(c.cluster), SolveInfo(True, 0, 0.0)
    nsolves = max(_count_solves(c, n_min), 1)
    per_target = tol * norm_c / (2.0 * nsolves)
    opnorm = max(a_op.norm_bound() + b_op.norm_bound(), 1.0)
    trunc = 0.5 * per_target / opnorm
    infos: list[SolveInfo] = []
    x = _solve_node(a_op, b_op, c, per_target, trunc, n_min, maxiter, infos)
    agg = SolveInfo(
        converged=all(i.converged for i in infos) if infos else True,
        iterations=max((i.iterations for i in infos), default=0),
        residual=float(sum(i.residual for i in infos)),
    )
    return x, agg


def dense_rhs_sylv(
    a_op: Banded1DOperator,
    b_op: Banded1DOperator,
    c: np.ndarray,
    tol: float = DEFAULT_TOL,
    n_min: int = 256,
    maxiter: int = MAX_EK_ITERATIONS,
):
    """Divide-and-conquer solve for a dense right-hand side.

    Recursion of dac_sylv on a dense root: split to n_min, Bartels-Stewart
    at the base, rank <= 4 * bandwidth corrections on the way up.  Returns
    (HalrMatrix with a dense payload, SolveInfo).
    """
    return dac_sylv(a_op, b_op, HalrMatrix.from_dense(np.asarray(c, dtype=np.float64)), tol, n_min, maxiter)


def _dense_op(op: Banded1DOperator) -> np.ndarray:
    return op.to_dense()


def _solve_node(a_op, b_op, node, per, trunc, n_min, maxiter, infos) -> HalrMatrix:
    if node.kind == LOW_RANK:
        x, info = low_rank_rhs_sylv(
            a_op, b_op, node.factors, tol=DEFAULT_TOL, maxiter=maxiter, abs_target=per, trunc=trunc
        )
        infos.append(info)
        return HalrMatrix(node.box, LOW_RANK, factors=x)
    if node.kind == DENSE:
        if min(node.shape) <= n_min:
            x = dense_solver_sylv(_dense_op(a_op), _dense_op(b_op), node.dense)
            return HalrMatrix(node.box, DENSE, dense=x)
        from .cluster import split_box

        boxes = split_box(node.box)
        r0, c0 = node.box.row_lo, node.box.col_lo
        kids = tuple(
            HalrMatrix(
                b,
                DENSE,
                dense=node.dense[b.row_lo - r0 : b.row_hi - r0 + 1, b.col_lo - c0 : b.col_hi - c0 + 1],
            )
            for b in boxes
        )
        x = _solve_split(a_op, b_op, node.box, kids, per, trunc, n_min, maxiter, infos)
        return HalrMatrix(node.box, DENSE, dense=x.to_dense())
    return _solve_split(a_op, b_op, node.box, node.children, per, trunc, n_min, maxiter, infos)


def _embed(block: np.ndarray, total: int, offset: int) -> np.ndarray:
    out = np.zeros((total, block.shape[1]))
    out[offset : offset + block.shape[0]] = block
    return out


def _solve_split(a_op, b_op, box, children, per, trunc, n_min, maxiter, infos) -> HalrMatrix:
    from .matrix import add_factored_term

    c11, c12, c21, c22 = children
    m, n = box.shape
    m1, n1 = c11.shape
    a1 = a_op.principal_submatrix(1, m1)
    a2 = a_op.principal_submatrix(m1 + 1, m)
    b1 = b_op.principal_submatrix(1, n1)
    b2 = b_op.principal_submatrix(n1 + 1, n)
    x11 = _solve_node(a1, b1, c11, per, trunc, n_min, maxiter, infos)
    x12 = _solve_node(a1, b2, c12, per, trunc, n_min, maxiter, infos)
    x21 = _solve_node(a2, b1, c21, per, trunc, n_min, maxiter, infos)
    x22 = _solve_node(a2, b2, c22, per, trunc, n_min, maxiter, infos)
    xt = HalrMatrix(box, SPLIT, children=(x11, x12, x21, x22))

    fa12 = offdiag_factors(a_op, IndexBox(1, m1, m1 + 1, m))
    fa21 = offdiag_factors(a_op, IndexBox(m1 + 1, m, 1, m1))
    fb12 = offdiag_factors(b_op, IndexBox(1, n1, n1 + 1, n))
    fb21 = offdiag_factors(b_op, IndexBox(n1 + 1, n, 1, n1))
    ls, rs = [], []
    if fa12.rank:
        # A12 couples X~'s bottom rows into rows 1..m1
        ls.append(_embed(fa12.U, m, 0))
        rs.append(np.vstack([x21.rmatvec(fa12.V), x22.rmatvec(fa12.V)]))
    if fa21.rank:
        ls.append(_embed(fa21.U, m, m1))
        rs.append(np.vstack([x11.rmatvec(fa21.V), x12.rmatvec(fa21.V)]))
    if fb21.rank:
        # columns 1..n1 pick up X~_right @ B21
        ls.append(np.vstack([x12.matvec(fb21.U), x22.matvec(fb21.U)]))
        rs.append(_embed(fb21.V, n, 0))
    if fb12.rank:
        ls.append(np.vstack([x11.matvec(fb12.U), x21.matvec(fb12.U)]))
        rs.append(_embed(fb12.V, n, n1))
    if not ls:
        return xt
    rhs = FactoredLowRank(-np.hstack(ls), np.hstack(rs))
    delta, info = low_rank_rhs_sylv(
        a_op, b_op, rhs, tol=DEFAULT_TOL, maxiter=maxiter, abs_target=per, trunc=trunc
    )
    infos.append(info)
    return add_factored_term(xt, delta, trunc)
