"""Ride-pooling dispatch optimization workbench."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    Assignment,
    DispatchError,
    DispatchInstance,
    Point,
    ProjectionConfig,
    ValidationReport,
    evaluate_objective,
    manhattan,
    mercator_project,
    validate,
)
from .model import BuildReport, MipModel, VarIndex, build_model, matrix_shape  # noqa: F401
from .solver import (  # noqa: F401
    Incumbent,
    SolveLimits,
    SolveResult,
    brute_force,
    first_k_incumbents,
    solve_exact,
)
from .prompt import PromptBundle, ParsedSolution, parse_solution, render_prompt  # noqa: F401
from .proposer import (  # noqa: F401
    MockProposer,
    ProposerRequest,
    ProposerResponse,
    RemoteProposer,
    StochasticProposer,
    stochastic_construct,
)
from .schedule import TemperatureSchedule, ScheduleRun, make_schedule, run_schedule  # noqa: F401
from .evaluation import eval_gap, quality_score, split_dataset, ablation_report  # noqa: F401
