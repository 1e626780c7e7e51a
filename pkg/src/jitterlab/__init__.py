"""Noisy gradient descent on two-dimensional landscapes: which wells do trajectories end in?"""

from .descent import DescentParams, RngStream, StopReason, Trajectory, run_trajectory, step
from .experiment import (
    Bin,
    EnsembleConfig,
    EnsembleStats,
    SweepConfig,
    TrialOutcome,
    classify_endpoint,
    confidence_interval,
    ensemble_stats,
    run_ensemble,
    run_sweep,
)
from .exprfield import DualNumber, ExprField, eval_with_grad, parse, to_source
from .landscape import (
    BuiltinField,
    CellClass,
    CellGrid,
    CellKind,
    Point2,
    Region,
    build_cell_grid,
    cell_of,
)

__version__ = "0.1.0"
