"""Splitting, iterative and extrapolated integrators for the Levitron top."""

from levsplit.errors import (
    AlignmentError,
    DegenerateRegressionError,
    DivergenceError,
    LevsplitError,
    MaxIterationsError,
    NoEquilibriumError,
    NotSeparableError,
    SingularityError,
    SingularJacobianError,
)
from levsplit.extrapolation import (
    MPETable,
    iterative_mpe_step,
    mpe_coefficients,
    mpe_step,
    richardson3_step,
    verlet_kernel,
)
from levsplit.hamiltonian import (
    HamiltonianModel,
    LevitronModel,
    LevitronParams,
    OscillatorModel,
    PhaseState,
    PsiDerivatives,
    calibrate_M,
    levitron_dH_dp,
    levitron_dH_dq,
    levitron_energy,
    oscillator_dH_dp,
    oscillator_dH_dq,
    oscillator_energy,
    psi,
)
from levsplit.harness import (
    ErrorSummary,
    ModelConfig,
    RunConfig,
    TrajectoryRecord,
    compare_to_reference,
    convergence_order,
    run_simulation,
    spin_scan,
)
from levsplit.integrators import (
    A_SHIFT,
    B_SHIFT,
    IterationConfig,
    SplittingOperator,
    StepReport,
    euler_step,
    newton_implicit_step,
    rk4_step,
    verlet_separable_step,
    verlet_step,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "DegenerateRegressionError",
    "DivergenceError",
    "LevsplitError",
    "MaxIterationsError",
    "NoEquilibriumError",
    "NotSeparableError",
    "SingularityError",
    "SingularJacobianError",
    "MPETable",
    "iterative_mpe_step",
    "mpe_coefficients",
    "mpe_step",
    "richardson3_step",
    "verlet_kernel",
    "HamiltonianModel",
    "LevitronModel",
    "LevitronParams",
    "OscillatorModel",
    "PhaseState",
    "PsiDerivatives",
    "calibrate_M",
    "levitron_dH_dp",
    "levitron_dH_dq",
    "levitron_energy",
    "oscillator_dH_dp",
    "oscillator_dH_dq",
    "oscillator_energy",
    "psi",
    "ErrorSummary",
    "ModelConfig",
    "RunConfig",
    "TrajectoryRecord",
    "compare_to_reference",
    "convergence_order",
    "run_simulation",
    "spin_scan",
    "A_SHIFT",
    "B_SHIFT",
    "IterationConfig",
    "SplittingOperator",
    "StepReport",
    "euler_step",
    "newton_implicit_step",
    "rk4_step",
    "verlet_separable_step",
    "verlet_step",
]
