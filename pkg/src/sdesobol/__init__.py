"""Sobol' sensitivity indices for mean quantities of SDEs with uncertain
coefficients: a stochastic-Galerkin chaos metamodel of the associated
elliptic/parabolic problems, and an independent pick-freeze Monte Carlo
estimator on Euler-simulated paths."""

__version__ = "0.1.0"

from .chaos import ChaosBasis, build_basis, eval_basis, expectation_matrix, index_set
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .fem1d import FemGrid, TriDiag, convection, eval_fem, load_constant, mass, stiffness
from .galerkin import (
    BlockOperator,
    ChaosFemField,
    SolverConfig,
    SolverConvergenceError,
    ThetaSchemeConfig,
    assemble_elliptic,
    assemble_parabolic,
    chaos_coeffs_at,
    evaluate_field,
    solve_elliptic,
    solve_parabolic,
    step_theta,
)
from .model import (
    OuModel,
    SdeModel,
    UncertainParam,
    check_coercivity_ou,
    divergence_coeffs,
    poincare_constant,
)
from .montecarlo import (
    EulerConfig,
    ExitTimeKernel,
    PathTruncationError,
    SurvivalKernel,
    double_mc_sobol,
    double_mc_sobol_suite,
    inner_average,
    simulate_exit_time,
    simulate_survival,
)
from .runner import run, run_config_file
from .sobol import (
    DegenerateVarianceError,
    SobolEstimate,
    pick_freeze_design,
    sobol_parseval,
    sobol_pick_freeze,
)
