"""Coordinate descent with certified per-coordinate progress and
bandit-driven coordinate selection."""

from .engine import (
    AuditLog,
    ReferenceOptimum,
    RunResult,
    SolverState,
    TraceRecord,
    apply_coordinate_step,
    compute_all_gaps,
    compute_all_marginal_decreases,
    compute_gradient_magnitudes,
    coordinate_view,
    post_step_decrease,
    reference_optimum,
    run,
)
from .errors import (
    BudgetExceededError,
    InternalConsistencyError,
    LibsvmParseError,
    NumericalFailureError,
    ScaleGuardError,
    StaleProposalError,
)
from .oracle import DenseSnapshot, oracle_coordinate_min, oracle_eval
from .problems import (
    DualResidue,
    Problem,
    SeparablePart,
    SmoothPart,
    coordinate_gap,
    coordinate_stats,
    dual_point,
    dual_residue,
    dual_value,
    duality_gap,
    make_l2_quadratic,
    make_lasso,
    make_logistic_l1,
    make_ridge_dual,
    objective_gradient,
    primal_value,
)
from .selection import ScoreTree, STRATEGY_NAMES, default_bin_size, make_strategy
from .sparse_data import (
    LabeledDataset,
    NormalizationResult,
    SparseColumnMatrix,
    binarize_labels,
    generate_synthetic,
    normalize_columns,
    parse_libsvm,
    to_libsvm,
)
from .updates import (
    DEFAULT_RULES,
    UPDATE_RULES,
    ClassHReport,
    CoordinateView,
    UpdateProposal,
    lasso_prox_update,
    logistic_shrink_update,
    marginal_decrease,
    marginal_decreases,
    reference_update,
    ridge_dual_update,
    sample_state,
    step_size,
    surrogate_gap,
    verify_class_h,
)

__version__ = "0.1.0"
