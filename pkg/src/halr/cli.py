"""Command-line front end.

One subcommand per invocation: build a HALR matrix from a builtin
generator or a matrix file, re-adapt an existing one, solve a Sylvester
equation with banded coefficients, run one of the PDE drivers, or
regenerate structure figures.  Results go to stdout as TSV tables with a
header row; files land in --out.  Exit codes: 0 success, 1 a solver ran
but did not converge (or failed numerically), 2 usage or input errors.
"""

from __future__ import annotations

import os
import sys
import time
from argparse import ArgumentParser

from .config import COMMANDS, ExperimentConfig, read_config_file
from .errors import DimensionMismatch, FormatError, HalrError, IncompatibleClusters

BUILTINS = ("burgers-snapshot", "gaussian", "white-noise", "hilbert")

_CONFIG_KEYS = (
    "n", "dt", "t_max", "steps", "coefficient", "maxrank", "eps_rel",
    "eps_step", "tol", "n_min", "seed", "threads", "out_dir",
    "snapshot_every", "error_every",
)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="halr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name in ("approximate", "refine", "sylvester", "render"):
            help_ = "builtin name or matrix file" if name == "approximate" else "HALR1 file"
            p.add_argument("source", help=help_)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--n", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--t-max", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--coefficient", type=float)
        p.add_argument("--maxrank", type=int)
        p.add_argument("--eps", type=float, dest="eps_rel")
        p.add_argument("--eps-step", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--n-min", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", dest="out_dir")
        p.add_argument("--snapshot-every", type=int)
        p.add_argument("--error-every", type=int)
    return parser


def _resolve_config(ns) -> ExperimentConfig:
    values: dict = {}
    if ns.config:
        values.update(read_config_file(ns.config))
    for key in _CONFIG_KEYS:
        v = getattr(ns, key, None)
        if v is not None:
            values[key] = v
    values["command"] = ns.command
    values.pop("config", None)
    return ExperimentConfig(**values)


_THREAD_LIMITER = None


def _pin_threads(count: int) -> None:
    global _THREAD_LIMITER
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(count)
    import threadpoolctl

    # the controller restores the previous limits when collected, so it
    # has to outlive the command
    _THREAD_LIMITER = threadpoolctl.threadpool_limits(count)


def _print_tsv(header, rows) -> None:
    def cell(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    print("\t".join(header))
    for row in rows:
        print("\t".join(cell(row[h]) for h in header))


def _write_artifacts(cfg: ExperimentConfig, stem: str, a) -> None:
    from .fileio import write_halr, write_structure_json
    from .render import render_svg

    out = cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    base = os.path.join(out, stem)
    write_halr(base + ".halr", a)
    write_structure_json(base + ".structure.json", a)
    with open(base + ".svg", "w") as fh:
        fh.write(render_svg(a))


def _storage_row(a) -> dict:
    from .matrix import storage_report

    rep = storage_report(a)
    m, n = a.shape
    return {
        "n_rows": m,
        "n_cols": n,
        "entries": rep["entries"],
        "storage_MB": rep["bytes"] / 2**20,
        "dense_leaves": rep["leaves"]["dense"],
        "lowrank_leaves": rep["leaves"]["lowrank"],
        "halr_rank": rep["halr_rank"],
        "fraction_of_dense": rep["entries"] / (m * n),
    }


_STORAGE_COLUMNS = (
    "n_rows", "n_cols", "entries", "storage_MB",
    "dense_leaves", "lowrank_leaves", "halr_rank", "fraction_of_dense",
)


def _builtin_oracle(cfg: ExperimentConfig, name: str):
    import numpy as np

    from .lowrank import DenseOracle, FunctionOracle
    from .pde import burgers_oracle

    n = cfg.n
    if name == "burgers-snapshot":
        return burgers_oracle(n, cfg.t_max, cfg.coefficient)
    if name == "gaussian":
        xs = (np.arange(1, n + 1) - 0.5) / n
        return FunctionOracle(lambda i, j: np.exp(-((xs[i - 1] - xs[j - 1]) ** 2)), n, n)
    if name == "white-noise":
        rng = np.random.default_rng(cfg.seed)
        return DenseOracle(rng.standard_normal((n, n)))
    if name == "hilbert":
        return FunctionOracle(lambda i, j: 1.0 / (i + j - 1.0), n, n)
    raise HalrError(f"unknown builtin {name!r} (expected one of {', '.join(BUILTINS)})")


def _load_oracle(cfg: ExperimentConfig, source: str):
    if source in BUILTINS:
        return source, _builtin_oracle(cfg, source)
    if not os.path.exists(source):
        raise FileNotFoundError(f"{source}: no such builtin or file")
    stem = os.path.splitext(os.path.basename(source))[0]
    if source.endswith(".npy"):
        import numpy as np

        from .lowrank import DenseOracle

        return stem, DenseOracle(np.load(source))
    from .fileio import read_halr
    from .lowrank import DenseOracle

    return stem, DenseOracle(read_halr(source).to_dense())


def cmd_approximate(cfg: ExperimentConfig, ns) -> int:
    from .construct import ConstructionParams, halr_adaptive
    from .lowrank import estimate_norm

    stem, oracle = _load_oracle(cfg, ns.source)
    eps = cfg.eps_rel * estimate_norm(oracle)
    a = halr_adaptive(oracle, ConstructionParams(cfg.maxrank, eps, cfg.n_min))
    _write_artifacts(cfg, stem, a)
    _print_tsv(_STORAGE_COLUMNS, [_storage_row(a)])
    return 0


def cmd_refine(cfg: ExperimentConfig, ns) -> int:
    from .construct import ConstructionParams, refine_cluster
    from .fileio import read_halr
    from .matrix import spectral_estimate

    a = read_halr(ns.source)
    eps = cfg.eps_rel * spectral_estimate(a)
    refined = refine_cluster(a, ConstructionParams(cfg.maxrank, eps, cfg.n_min))
    stem = os.path.splitext(os.path.basename(ns.source))[0]
    _write_artifacts(cfg, stem + ".refined", refined)
    _print_tsv(_STORAGE_COLUMNS, [_storage_row(refined)])
    return 0


def cmd_sylvester(cfg: ExperimentConfig, ns) -> int:
    """Solve (I/2 - dt K Lap) X + X (I/2 - dt K Lap)^T = C for a HALR C."""
    from .fileio import read_halr
    from .matrix import frobenius_norm
    from .operators import laplacian_dirichlet
    from .sylvester import dac_sylv

    c = read_halr(ns.source)
    m, n = c.shape
    if m != n:
        raise DimensionMismatch(f"sylvester needs a square right-hand side, got {m}x{n}")
    h = 2.0 / (n + 1)
    m_op = laplacian_dirichlet(n, h).scaled(-cfg.dt * cfg.coefficient).add_scaled_identity(0.5)
    t0 = time.perf_counter()
    x, info = dac_sylv(m_op, m_op, c, tol=cfg.tol, n_min=cfg.n_min)
    elapsed = time.perf_counter() - t0
    stem = os.path.splitext(os.path.basename(ns.source))[0]
    _write_artifacts(cfg, stem + ".solution", x)
    norm_c = frobenius_norm(c)
    row = {
        "converged": info.converged,
        "iterations": info.iterations,
        "rel_residual": info.residual / norm_c if norm_c else 0.0,
        "T_total_s": elapsed,
        "storage_MB": _storage_row(x)["storage_MB"],
        "halr_rank": x.halr_rank(),
    }
    _print_tsv(tuple(row), [row])
    return 0 if info.converged else 1


def cmd_run(cfg: ExperimentConfig, ns) -> int:
    from .pde import REPORT_COLUMNS, run_simulation

    report = run_simulation(cfg)
    _print_tsv(REPORT_COLUMNS, report.rows)
    if report.iterations is not None:
        extra = {"iterations": report.iterations, "converged": report.converged}
        _print_tsv(tuple(extra), [extra])
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        report.write_csv(os.path.join(cfg.out_dir, f"{cfg.command}-report.csv"))
        if report.final_state is not None:
            _write_artifacts(cfg, f"{cfg.command}-final", report.final_state.u)
    return 0 if report.converged else 1


def cmd_render(cfg: ExperimentConfig, ns) -> int:
    from .fileio import read_halr

    a = read_halr(ns.source)
    stem = os.path.splitext(os.path.basename(ns.source))[0]
    _write_artifacts(cfg, stem, a)
    _print_tsv(_STORAGE_COLUMNS, [_storage_row(a)])
    return 0


_DISPATCH = {
    "approximate": cmd_approximate,
    "refine": cmd_refine,
    "sylvester": cmd_sylvester,
    "burgers": cmd_run,
    "allen-cahn": cmd_run,
    "helmholtz": cmd_run,
    "render": cmd_render,
}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(ns)
    except (HalrError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.threads:
        _pin_threads(cfg.threads)
    try:
        return _DISPATCH[cfg.command](cfg, ns)
    except (DimensionMismatch, FormatError, IncompatibleClusters, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HalrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
