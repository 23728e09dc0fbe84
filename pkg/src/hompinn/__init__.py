"""Homotopy physics-informed neural networks for inverse problems of
nonlinear differential equations with multiple solutions.

The package recovers unknown DE parameters from unlabeled observations
mixed across several solutions, by training a multi-output network under an
exponentially decaying physics-residual weight, and ships the classical
multi-solution solvers needed to generate ground truth and verify results.
"""

from .exceptions import (
    ConfigError,
    ContractViolationError,
    DivergenceError,
    EvaluationError,
    SingularEvaluationError,
)
from .loss import HomotopySchedule, LossBreakdown, alpha_at, total_loss
from .network import MLPConfig, NetworkParams, forward, forward_with_derivatives, init_he
from .optimizer import AdamState, adam_step
from .oracle import (
    ObservationSet,
    SolutionTable,
    sample_observations,
    solve_gray_scott_steady,
    solve_multisolution_1d,
    test_split,
)
from .problems import DEProblem, get_problem
from .trainer import (
    PipelineResult,
    TrainConfig,
    TrainingRecord,
    discover_solutions,
    m_selection_sweep,
    robustness_study,
    run_forward_mode,
    run_homotopy_process,
    run_inverse_pipeline,
)

__version__ = "0.1.0"
