"""Time-stepping drivers and a structured Helmholtz solver.

Two IMEX Euler steppers (a convection-diffusion front on (0,2)^2 with
Dirichlet data, and a phase-separation model on [0,1]^2 with Neumann data)
keep the solution in HALR form: the explicit right-hand side is assembled
with banded applies and Hadamard products on the current cluster, the
partition is re-adapted once per step, and the implicit solve is the
divide-and-conquer Sylvester solver.  A dense FFT stepper (sine/cosine
transform diagonalization) serves as the cross-validation oracle.  The
Helmholtz driver wraps the Lyapunov solver as a preconditioner inside a
GMRES iteration whose basis vectors are HALR matrices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import fft as _fft
from scipy.special import expit

from .construct import ConstructionParams, halr_adaptive, refine_cluster
from .errors import HalrError
from .lowrank import FactoredLowRank, FunctionOracle, estimate_norm
from .matrix import (
    HalrMatrix,
    add,
    add_factored_term,
    apply_banded_left,
    apply_banded_right,
    dot,
    frobenius_norm,
    hadamard,
    recompress,
    scale,
    spectral_estimate,
    storage_report,
    zeros,
)
from .operators import Banded1DOperator, forward_difference, laplacian_dirichlet, laplacian_neumann
from .sylvester import SolveInfo, dac_sylv

REPORT_COLUMNS = ("step", "t", "T_lyap_s", "T_adapt_s", "T_total_s", "storage_MB", "halr_rank", "error_l2")


def interior_grid(n: int, length: float = 2.0) -> tuple[float, np.ndarray]:
    """Nodes x_i = i*h, i = 1..n, with the endpoints 0 and `length` eliminated."""
    h = length / (n + 1)
    return h, np.arange(1, n + 1) * h


def cell_grid(n: int, length: float = 1.0, origin: float = 0.0) -> tuple[float, np.ndarray]:
    """Cell-centered nodes x_i = origin + (i - 1/2)*h."""
    h = length / n
    return h, origin + (np.arange(1, n + 1) - 0.5) * h


def burgers_exact(x, y, t, k):
    """Closed-form traveling front 1 / (1 + exp((x + y - t) / 2k))."""
    return expit(-(np.asarray(x, dtype=np.float64) + np.asarray(y, dtype=np.float64) - t) / (2.0 * k))


def burgers_oracle(n: int, t: float, k: float) -> FunctionOracle:
    """Entry oracle sampling the exact front on the interior grid of (0,2)^2."""
    h, xs = interior_grid(n)
    return FunctionOracle(lambda i, j: burgers_exact(xs[i - 1], xs[j - 1], t, k), n, n)


@dataclass(frozen=True)
class SteppingParams:
    """Knobs of one IMEX step.

    coefficient is the diffusion constant (K or the mobility nu); eps_build
    is the relative threshold of the initial construction, eps_step the
    per-step refinement threshold, sylv_tol the relative residual target of
    the implicit solve.
    """

    dt: float
    coefficient: float
    maxrank: int = 50
    eps_build: float = 1e-8
    eps_step: float = 1e-5
    sylv_tol: float = 1e-6
    n_min: int = 256

    def __post_init__(self):
        if self.dt <= 0 or self.coefficient <= 0:
            raise ValueError("dt and coefficient must be positive")


@dataclass
class PdeState:
    u: HalrMatrix
    t: float
    step: int
    n: int
    h: float
    params: SteppingParams
    # boundary(xs, fixed, t) samples the solution on the edge where the other
    # coordinate equals `fixed`; None means homogeneous data (no load terms)
    boundary: Callable[[np.ndarray, float, float], np.ndarray] | None = None
    info: SolveInfo | None = None
    t_lyap: float = 0.0
    t_adapt: float = 0.0


def burgers_initial(n: int, params: SteppingParams, t0: float = 0.0) -> PdeState:
    h, xs = interior_grid(n)
    k = params.coefficient
    oracle = burgers_oracle(n, t0, k)
    eps = params.eps_build * estimate_norm(oracle)
    u = halr_adaptive(oracle, ConstructionParams(params.maxrank, eps, params.n_min))
    boundary = lambda bx, fixed, t: burgers_exact(bx, fixed, t, k)
    return PdeState(u=u, t=t0, step=0, n=n, h=h, params=params, boundary=boundary)


def burgers_step(state: PdeState) -> PdeState:
    """One IMEX Euler step of u_t = K (u_xx + u_yy) - u (u_x + u_y).

    Explicit part: F = -U o [D U + U D^T + top-edge closure / h] plus the
    rank-4 Dirichlet load at the new time; the sum is assembled on U's
    cluster, refined at eps_step, and fed to the implicit Lyapunov solve
    with coefficients (1/2) I - dt K A.
    """
    p = state.params
    n, h, k, dt = state.n, state.h, p.coefficient, p.dt
    if state.boundary is None:
        raise HalrError("Dirichlet stepping needs a boundary sampler")
    _, xs = interior_grid(n)
    u = state.u

    t_adapt0 = time.perf_counter()
    v0 = np.asarray(state.boundary(xs, 2.0, state.t), dtype=np.float64)
    t1 = state.t + dt
    v1 = np.asarray(state.boundary(xs, 2.0, t1), dtype=np.float64)
    w1 = np.asarray(state.boundary(xs, 0.0, t1), dtype=np.float64)
    d_op = forward_difference(n, h)
    a_op = laplacian_dirichlet(n, h)

    # forward differences miss the x=2 / y=2 neighbors in the last row/column
    s = add(apply_banded_left(d_op, u), apply_banded_right(u, d_op.transpose()), 0.0)
    e1 = np.zeros(n)
    en = np.zeros(n)
    e1[0] = 1.0
    en[-1] = 1.0
    s = add_factored_term(
        s, FactoredLowRank(np.column_stack([en, v0]) / h, np.column_stack([v0, en])), 0.0
    )
    f_mat = scale(hadamard(u, s, p.eps_step), -1.0)
    r = add(u, scale(f_mat, dt), 0.0)
    # Dirichlet load of the implicit Laplacian, evaluated at the new time
    bf = dt * k / h**2
    r = add_factored_term(
        r,
        FactoredLowRank(np.column_stack([e1, w1, en, v1]) * bf, np.column_stack([w1, e1, v1, en])),
        0.0,
    )
    norm_r = frobenius_norm(r)
    r = refine_cluster(r, ConstructionParams(p.maxrank, p.eps_step * norm_r, p.n_min))
    t_adapt = time.perf_counter() - t_adapt0

    t_lyap0 = time.perf_counter()
    m_op = a_op.scaled(-dt * k).add_scaled_identity(0.5)
    x, info = dac_sylv(m_op, m_op, r, tol=p.sylv_tol, n_min=p.n_min)
    t_lyap = time.perf_counter() - t_lyap0
    return replace(
        state, u=x, t=t1, step=state.step + 1, info=info, t_lyap=t_lyap, t_adapt=t_adapt
    )


def allen_cahn_initial(n: int, params: SteppingParams, seed: int = 0) -> PdeState:
    """Independent N(1/2, 1) samples at every node; stored dense."""
    h, _ = cell_grid(n)
    rng = np.random.default_rng(seed)
    u = HalrMatrix.from_dense(rng.normal(0.5, 1.0, (n, n)))
    return PdeState(u=u, t=0.0, step=0, n=n, h=h, params=params)


def allen_cahn_step(state: PdeState) -> PdeState:
    """One IMEX Euler step of u_t + nu (-Laplace) u = u (u - 1/2)(1 - u).

    Homogeneous Neumann data: no load terms.  The cubic source expands to
    1.5 u^2 - u^3 - 0.5 u, two Hadamard products and scaled sums.
    """
    p = state.params
    n, h, nu, dt = state.n, state.h, p.coefficient, p.dt
    u = state.u

    t_adapt0 = time.perf_counter()
    uu = hadamard(u, u, p.eps_step)
    uuu = hadamard(uu, u, p.eps_step)
    g = add(add(scale(uu, 1.5), scale(uuu, -1.0), 0.0), scale(u, -0.5), 0.0)
    r = add(u, scale(g, dt), 0.0)
    norm_r = frobenius_norm(r)
    r = refine_cluster(r, ConstructionParams(p.maxrank, p.eps_step * norm_r, p.n_min))
    t_adapt = time.perf_counter() - t_adapt0

    t_lyap0 = time.perf_counter()
    a_op = laplacian_neumann(n, h)
    m_op = a_op.scaled(-dt * nu).add_scaled_identity(0.5)
    x, info = dac_sylv(m_op, m_op, r, tol=p.sylv_tol, n_min=p.n_min)
    t_lyap = time.perf_counter() - t_lyap0
    return replace(
        state, u=x, t=state.t + dt, step=state.step + 1, info=info, t_lyap=t_lyap, t_adapt=t_adapt
    )


# -- dense FFT reference ------------------------------------------------


def _dirichlet_eigenvalues(n: int, h: float) -> np.ndarray:
    k = np.arange(1, n + 1)
    return -4.0 / h**2 * np.sin(k * np.pi / (2.0 * (n + 1))) ** 2


def _neumann_eigenvalues(n: int, h: float) -> np.ndarray:
    k = np.arange(n)
    return -4.0 / h**2 * np.sin(k * np.pi / (2.0 * n)) ** 2


def fft_sylvester_solve(kind: str, r: np.ndarray, factor: float, h: float) -> np.ndarray:
    """Solve (1/2 I - factor*A) X + X (1/2 I - factor*A)^T = R by fast transforms.

    kind selects the 1D second-difference operator A: 'burgers-dirichlet'
    diagonalizes with the orthonormal type-I sine transform,
    'allen-cahn-neumann' with the type-II cosine transform.
    """
    n = r.shape[0]
    if kind == "burgers-dirichlet":
        lam = _dirichlet_eigenvalues(n, h)
        rh = _fft.dst(_fft.dst(r, type=1, norm="ortho", axis=0), type=1, norm="ortho", axis=1)
        rh /= 1.0 - factor * (lam[:, None] + lam[None, :])
        return _fft.dst(_fft.dst(rh, type=1, norm="ortho", axis=0), type=1, norm="ortho", axis=1)
    if kind == "allen-cahn-neumann":
        lam = _neumann_eigenvalues(n, h)
        rh = _fft.dct(_fft.dct(r, type=2, norm="ortho", axis=0), type=2, norm="ortho", axis=1)
        rh /= 1.0 - factor * (lam[:, None] + lam[None, :])
        return _fft.idct(_fft.idct(rh, type=2, norm="ortho", axis=0), type=2, norm="ortho", axis=1)
    raise ValueError(f"unknown reference kind {kind!r}")


def fft_reference_step(
    kind: str,
    u: np.ndarray,
    t: float,
    dt: float,
    coefficient: float,
    boundary: Callable[[np.ndarray, float, float], np.ndarray] | None = None,
) -> np.ndarray:
    """One dense IMEX step, written in plain numpy as a cross-check oracle."""
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    if kind == "burgers-dirichlet":
        h = 2.0 / (n + 1)
        xs = np.arange(1, n + 1) * h
        if boundary is None:
            boundary = lambda bx, fixed, tt: burgers_exact(bx, fixed, tt, coefficient)
        v0 = boundary(xs, 2.0, t)
        v1 = boundary(xs, 2.0, t + dt)
        w1 = boundary(xs, 0.0, t + dt)
        sx = np.empty_like(u)
        sx[:-1, :] = (u[1:, :] - u[:-1, :]) / h
        sx[-1, :] = (v0 - u[-1, :]) / h
        sy = np.empty_like(u)
        sy[:, :-1] = (u[:, 1:] - u[:, :-1]) / h
        sy[:, -1] = (v0 - u[:, -1]) / h
        r = u - dt * u * (sx + sy)
        bf = dt * coefficient / h**2
        r[0, :] += bf * w1
        r[:, 0] += bf * w1
        r[-1, :] += bf * v1
        r[:, -1] += bf * v1
        return fft_sylvester_solve(kind, r, dt * coefficient, h)
    if kind == "allen-cahn-neumann":
        h = 1.0 / n
        r = u + dt * (1.5 * u**2 - u**3 - 0.5 * u)
        return fft_sylvester_solve(kind, r, dt * coefficient, h)
    raise ValueError(f"unknown reference kind {kind!r}")


# -- Helmholtz ----------------------------------------------------------


def helmholtz_k_oracle(n: int) -> FunctionOracle:
    """Wave-number field 2500 exp(-50 |x^2 + (y+1)^2 - 1/4|) on [-1,1]^2."""
    _, xs = cell_grid(n, length=2.0, origin=-1.0)
    def entries(i, j):
        x = xs[i - 1]
        y = xs[j - 1]
        return 2500.0 * np.exp(-50.0 * np.abs(x**2 + (y + 1.0) ** 2 - 0.25))
    return FunctionOracle(entries, n, n)


def helmholtz_f_factors(n: int) -> FactoredLowRank:
    """Separable source exp(-x^2 - y^2)/100 as an exact rank-1 factorization."""
    _, xs = cell_grid(n, length=2.0, origin=-1.0)
    g = np.exp(-(xs**2)) / 10.0
    return FactoredLowRank(g[:, None].copy(), g[:, None].copy())


@dataclass
class GmresInfo:
    converged: bool
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)
    t_lyap: float = 0.0
    t_adapt: float = 0.0


def helmholtz_pgmres(
    k_field: HalrMatrix,
    f_field: HalrMatrix,
    n: int,
    tol: float = 1e-4,
    maxrank: int = 50,
    a_op: Banded1DOperator | None = None,
    shift: float | None = None,
    maxiter: int = 100,
    n_min: int = 256,
    inner_tol: float = 1e-6,
):
    """Solve A X + X A^T + K o X + F = 0 by preconditioned GMRES.

    The preconditioner is the Lyapunov solve with the diffusion part shifted
    spectrally away from singularity: A' = A - (shift/2) I, shift defaulting
    to the mean of K (the Neumann A is exactly singular, so the unshifted
    Lyapunov operator is too).  Preconditioning is applied on the right, so
    the monitored least-squares residual is the residual of the original
    equation and the iteration tolerates inexact inner solves.  Basis
    vectors live in HALR form, repartitioned at maxrank; the least-squares
    problem is updated by Givens rotations.  Breakdown (a vanishing new
    basis vector) is accepted as convergence.
    Returns (HalrMatrix, GmresInfo).
    """
    if k_field.shape != (n, n) or f_field.shape != (n, n):
        raise HalrError(f"field shapes {k_field.shape}, {f_field.shape} do not match n={n}")
    h = 2.0 / n
    if a_op is None:
        a_op = laplacian_neumann(n, h)
    if shift is None:
        # a twentieth of the mean reaction coefficient: the full mean
        # overdamps the solve and costs about a third more outer iterations
        shift = float(np.sum(k_field.matvec(np.ones(n))) / n**2) * 0.05
    ap = a_op.add_scaled_identity(-0.5 * shift)
    trunc_rel = 0.001 * tol
    info = GmresInfo(converged=False, iterations=0, residual=float("inf"))
    refine_params = lambda nrm: ConstructionParams(maxrank, max(trunc_rel * nrm, 1e-300), n_min)

    def prec(r):
        t0 = time.perf_counter()
        w, winfo = dac_sylv(ap, ap, r, tol=inner_tol, n_min=n_min)
        info.t_lyap += time.perf_counter() - t0
        return w, winfo.converged

    norm_b = frobenius_norm(f_field)
    if norm_b == 0.0:
        info.converged = True
        info.residual = 0.0
        return zeros(f_field.cluster), info
    basis = [scale(f_field, -1.0 / norm_b)]
    precd: list[HalrMatrix] = []
    # Givens-updated QR of the Hessenberg column by column
    cs: list[float] = []
    sn: list[float] = []
    g = np.zeros(maxiter + 1)
    g[0] = norm_b
    rmat = np.zeros((maxiter, maxiter))
    lucky = False
    all_inner_ok = True
    for j in range(maxiter):
        z, okj = prec(basis[j])
        all_inner_ok = all_inner_ok and okj
        precd.append(z)
        t0 = time.perf_counter()
        w = add(apply_banded_left(a_op, z), apply_banded_right(z, a_op.transpose()), 0.0)
        w = add(w, hadamard(k_field, z, trunc_rel), 0.0)
        w = refine_cluster(w, refine_params(frobenius_norm(w)))
        info.t_adapt += time.perf_counter() - t0
        hcol = np.zeros(j + 2)
        t0 = time.perf_counter()
        for s in range(j + 1):
            hcol[s] = dot(w, basis[s])
            w = add(w, scale(basis[s], -hcol[s]), 0.0)
        w = recompress(w, trunc_rel)
        # one reorthogonalization pass keeps the monitored least-squares
        # residual trustworthy against the assembled solution
        for s in range(j + 1):
            d = dot(w, basis[s])
            hcol[s] += d
            w = add(w, scale(basis[s], -d), 0.0)
        w = recompress(w, trunc_rel)
        norm_w = frobenius_norm(w)
        hcol[j + 1] = norm_w
        info.t_adapt += time.perf_counter() - t0
        # rotate the new column through the stored reflections
        col = np.zeros(maxiter + 1)
        col[: j + 2] = hcol
        for s in range(j):
            a_, b_ = col[s], col[s + 1]
            col[s] = cs[s] * a_ + sn[s] * b_
            col[s + 1] = -sn[s] * a_ + cs[s] * b_
        denom = math.hypot(col[j], col[j + 1])
        c_, s_ = (1.0, 0.0) if denom == 0.0 else (col[j] / denom, col[j + 1] / denom)
        cs.append(c_)
        sn.append(s_)
        col[j], col[j + 1] = denom, 0.0
        ga, gb = g[j], g[j + 1]
        g[j] = c_ * ga + s_ * gb
        g[j + 1] = -s_ * ga + c_ * gb
        rmat[: j + 1, j] = col[: j + 1]
        residual = abs(g[j + 1])
        info.history.append(residual)
        info.iterations = j + 1
        info.residual = residual
        if norm_w <= 1e-13 * norm_b:
            lucky = True
            break
        if residual <= tol * norm_b:
            break
        basis.append(refine_cluster(scale(w, 1.0 / norm_w), refine_params(1.0)))
    nused = info.iterations
    y = _solve_upper(rmat[:nused, :nused], g[:nused])
    t0 = time.perf_counter()
    x = scale(precd[0], y[0])
    for s in range(1, nused):
        x = add(x, scale(precd[s], y[s]), 0.0)
    # truncating X injects op(dX) into the residual, amplified by the
    # operator norm (~n^2 from the Laplacian), so the cut is budgeted
    # against it instead of ||X||
    opbound = 2.0 * a_op.norm_bound() + spectral_estimate(k_field)
    cut = 0.25 * tol * norm_b / opbound
    x = refine_cluster(recompress(x, 1.0, cut), ConstructionParams(maxrank, cut, n_min))
    info.t_adapt += time.perf_counter() - t0
    info.converged = (info.residual <= tol * norm_b or lucky) and all_inner_ok
    return x, info


def _solve_upper(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    import scipy.linalg

    if r.size == 0:
        return np.zeros(0)
    return scipy.linalg.solve_triangular(r, g)


# -- simulation loop ----------------------------------------------------


@dataclass
class SimulationReport:
    equation: str
    seed: int | None
    initial: dict
    rows: list[dict] = field(default_factory=list)
    iterations: int | None = None
    converged: bool = True
    final_state: PdeState | None = None

    def write_csv(self, path) -> None:
        lines = [",".join(REPORT_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_format_cell(row[c]) for c in REPORT_COLUMNS))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _format_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _storage_mb(u: HalrMatrix) -> float:
    return storage_report(u)["bytes"] / 2**20


def run_simulation(config) -> SimulationReport:
    """Step the configured equation to T_max, recording per-step cost rows.

    config is an ExperimentConfig; command selects the driver.  Rows carry
    wall-time split into the implicit solve and the structure upkeep, the
    solution storage in MB, the largest low-rank leaf rank, and (when an
    exact solution exists) the absolute discrete l2 error.  Snapshots of the
    partition go to config.out_dir when it is set.
    """
    cmd = config.command
    if cmd == "helmholtz":
        return _run_helmholtz(config)
    if cmd not in ("burgers", "allen-cahn"):
        raise HalrError(f"run_simulation cannot drive {cmd!r}")
    params = SteppingParams(
        dt=config.dt,
        coefficient=config.coefficient,
        maxrank=config.maxrank,
        eps_build=config.eps_rel,
        eps_step=config.eps_step,
        sylv_tol=config.tol,
        n_min=config.n_min,
    )
    if cmd == "burgers":
        state = burgers_initial(config.n, params)
        stepper = burgers_step
    else:
        state = allen_cahn_initial(config.n, params, seed=config.seed)
        stepper = allen_cahn_step
    report = SimulationReport(
        equation=cmd,
        seed=config.seed if cmd == "allen-cahn" else None,
        initial={"storage_MB": _storage_mb(state.u), "halr_rank": state.u.halr_rank()},
    )
    nsteps = config.resolved_steps()
    _maybe_snapshot(config, state, report)
    for _ in range(nsteps):
        t0 = time.perf_counter()
        state = stepper(state)
        t_total = time.perf_counter() - t0
        err = float("nan")
        if cmd == "burgers" and config.error_every and state.step % config.error_every == 0:
            _, xs = interior_grid(state.n)
            exact = burgers_exact(xs[:, None], xs[None, :], state.t, params.coefficient)
            err = state.h * float(np.linalg.norm(state.u.to_dense() - exact))
        report.rows.append(
            {
                "step": state.step,
                "t": state.t,
                "T_lyap_s": state.t_lyap,
                "T_adapt_s": state.t_adapt,
                "T_total_s": t_total,
                "storage_MB": _storage_mb(state.u),
                "halr_rank": state.u.halr_rank(),
                "error_l2": err,
            }
        )
        if state.info is not None and not state.info.converged:
            report.converged = False
        _maybe_snapshot(config, state, report)
    report.final_state = state
    return report


def _run_helmholtz(config) -> SimulationReport:
    n = config.n
    k_or = helmholtz_k_oracle(n)
    eps = config.eps_rel * estimate_norm(k_or)
    k_field = halr_adaptive(k_or, ConstructionParams(config.maxrank, eps, config.n_min))
    f_field = HalrMatrix.from_factors(helmholtz_f_factors(n))
    t0 = time.perf_counter()
    x, info = helmholtz_pgmres(
        k_field, f_field, n, tol=config.tol, maxrank=config.maxrank, n_min=config.n_min
    )
    t_total = time.perf_counter() - t0
    report = SimulationReport(
        equation="helmholtz",
        seed=None,
        initial={"storage_MB": _storage_mb(k_field), "halr_rank": k_field.halr_rank()},
        iterations=info.iterations,
        converged=info.converged,
    )
    report.rows.append(
        {
            "step": info.iterations,
            "t": 0.0,
            "T_lyap_s": info.t_lyap,
            "T_adapt_s": info.t_adapt,
            "T_total_s": t_total,
            "storage_MB": _storage_mb(x),
            "halr_rank": x.halr_rank(),
            "error_l2": float("nan"),
        }
    )
    report.final_state = PdeState(
        u=x, t=0.0, step=info.iterations, n=n, h=2.0 / n,
        params=SteppingParams(dt=1.0, coefficient=1.0, maxrank=config.maxrank, n_min=config.n_min),
    )
    return report


def _maybe_snapshot(config, state: PdeState, report: SimulationReport) -> None:
    out = getattr(config, "out_dir", None)
    every = getattr(config, "snapshot_every", 0)
    if not out or not every or state.step % every:
        return
    import json
    import os

    from .matrix import structure_dict
    from .render import render_svg

    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, f"{report.equation}-step{state.step:06d}")
    with open(stem + ".json", "w") as fh:
        json.dump(structure_dict(state.u), fh, indent=1)
    with open(stem + ".svg", "w") as fh:
        fh.write(render_svg(state.u))
