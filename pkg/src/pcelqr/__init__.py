"""Stochastic linear-quadratic control through polynomial chaos expansions."""

from .errors import (
    DefectiveMatrixError,
    DimensionError,
    InvalidCostError,
    NotConvergedError,
    NumericalError,
    PcelqrError,
    ScenarioError,
    UnstableError,
)
from .finite import (
    FiniteSolution,
    TruncationReport,
    closed_form_state_coeff,
    min_cost_decomposition,
    solve_finite,
    truncation_error,
)
from .infinite import (
    convergence_certificate,
    infinite_gains,
    stationarity_residual,
    stationary_pair,
)
from .linalg import (
    CostSpec,
    LtiSystem,
    RiccatiLadder,
    StationaryGains,
    eig_conditioning,
    riccati_ladder,
    riccati_step,
    solve_discrete_lyapunov,
    spectral_radius,
    stationary_gains,
)
from .pce import (
    GermSpec,
    JointBasis,
    PceRandomVector,
    SourceBasis,
    StochasticScenario,
    build_joint_basis,
    gaussian_vector,
    hermite,
    legendre_germ,
    pce_moments,
    uniform_disturbance,
)
from .stationary import (
    build_truncated_stationary,
    required_dim_closed_form,
    required_dim_lyapunov,
    stationary_cost,
)

__version__ = "0.1.0"
