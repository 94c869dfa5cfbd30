"""Hierarchical adaptive low-rank (HALR) matrices.

Quad-tree partitioned matrices with dense and factored low-rank leaves,
adaptive construction from entry oracles, structured arithmetic, solvers
for Sylvester and Lyapunov equations, and IMEX drivers for a few 2D PDEs.
"""

from .cluster import (
    DENSE,
    LOW_RANK,
    SPLIT,
    IndexBox,
    QuadTreeCluster,
    hodlr_cluster,
    intersect,
    is_compatible,
    is_leq,
    normalize,
    root_box,
    split_box,
    structural_equal,
    transpose,
)
from .construct import ConstructionParams, approximate_with_cluster, halr_adaptive, refine_cluster, relative_eps
from .errors import (
    AcaFailure,
    BoxTouchesDiagonal,
    DimensionMismatch,
    FormatError,
    HalrError,
    IncompatibleClusters,
    SingularShift,
    SpectralOverlap,
)
from .lowrank import (
    DenseOracle,
    EntryOracle,
    FactoredLowRank,
    FunctionOracle,
    SubOracle,
    aca,
    add_factored,
    compress_factors,
    estimate_norm,
)
from .matrix import (
    HalrMatrix,
    add,
    apply_banded_left,
    apply_banded_right,
    axpy,
    dot,
    frobenius_norm,
    hadamard,
    matvec_cost,
    multiply,
    scale,
    storage_report,
    structure_dict,
)
from .config import COMMANDS, ExperimentConfig, read_config_file
from .fileio import read_halr, write_halr, write_structure_json
from .operators import (
    Banded1DOperator,
    HodlrView,
    forward_difference,
    laplacian_dirichlet,
    laplacian_neumann,
    offdiag_factors,
)
from .pde import (
    GmresInfo,
    PdeState,
    SimulationReport,
    SteppingParams,
    allen_cahn_initial,
    allen_cahn_step,
    burgers_exact,
    burgers_initial,
    burgers_step,
    fft_reference_step,
    fft_sylvester_solve,
    helmholtz_pgmres,
    run_simulation,
)
from .render import render_svg
from .sylvester import (
    SolveInfo,
    dac_sylv,
    dense_rhs_sylv,
    dense_solver_sylv,
    low_rank_rhs_sylv,
)

__version__ = "0.1.0"
