"""Finite-sum trust-region minimization with randomized model refreshes.

The solver keeps one surrogate model per summand, refreshes a sampled batch
per iteration with variance-minimizing inclusion probabilities, and runs a
trust-region step on the bias-corrected aggregate model.
"""

from .bounds import (
    BoundInputs,
    ErrorBounds,
    bounds_fo,
    bounds_fogn,
    bounds_zo,
    bounds_zogn,
    fully_linear_error,
)
from .models import (
    ComponentModel,
    InterpolationSet,
    ModelClass,
    build_first_order,
    build_gauss_newton,
    build_interp_model,
    eval_model,
    eval_model_gradient,
    improve_geometry,
    inverse_norm_cap,
    vhat_inverse_norm,
)
from .problem import (
    ComponentValue,
    EvalCache,
    EvaluationLedger,
    FiniteSumProblem,
    effective_data_passes,
    evaluate_component,
    evaluate_full,
    rounds_metric,
)
from .sampler import (
    Batch,
    ProbabilityVector,
    chernoff_upper,
    dynamic_batch,
    fixed_size_batch,
    independent_sample,
    optimal_probabilities,
    variance_general,
    variance_upper_bound,
)
from .solver import (
    AmelioratedModel,
    QuadraticModel,
    RunResult,
    SolverConfig,
    SolverState,
    TraceRow,
    ameliorated_quadratic,
    build_ameliorated,
    initialize_state,
    iterate,
    run,
    solve_tr_subproblem,
    update_lipschitz_secant,
)
from .testbed import (
    DatasetMode,
    GeneratedProblem,
    gen_cube,
    gen_logistic,
    gen_rosenbrock,
    make_problem,
    random_init,
    reference_optimum,
)

__version__ = "0.1.0"
