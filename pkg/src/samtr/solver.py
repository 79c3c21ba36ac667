"""Trust-region method on a randomly refreshed average of component models.

Each component keeps a surrogate model centered at the point where it was
last rebuilt.  Per iteration a first random batch is re-centered at the
incumbent and the resulting corrected aggregate (stale average plus
importance-weighted fresh-stale differences) defines the trust-region
subproblem; a second random batch produces unbiased objective estimates at
the incumbent and trial points for the acceptance ratio.  Batches are drawn
uniformly, dynamically (variance-targeted via the per-component error
bounds), or deterministically as the full set, in which case the method
reduces to a classical trust-region iteration.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bounds import CLASS_BOUNDS, BoundInputs
from .models import (
    ComponentModel,
    ModelClass,
    build_first_order,
    build_gauss_newton,
    build_interp_model,
    contribution_at,
    eval_model,
    eval_model_gradient,
)
from .problem import EvalCache, EvaluationLedger, FiniteSumProblem
from .sampler import Batch, ProbabilityVector, dynamic_batch

# Predicted decreases at or below this floor are treated as failed steps.
PRED_DECREASE_FLOOR = 1e-300
# Previously evaluated points within this multiple of the current radius may
# be reused as interpolation candidates.  The bound input delta_i keeps the
# rebuild-time radius convention, so reuse affects model quality (handled by
# the trust-region mechanics) but not the sampling pressure.
REUSE_RADIUS_FACTOR = 8.0
# Conditioning slack granted to reused geometry; the bounds keep assuming
# the nominal cap, as in the reference trust-region machinery this method
# extends (its sets are kept poised only up to a constant, while the bounds
# plug in the nominal cap).
REUSE_CAP_SLACK = 16.0
# Consecutive zero-decrease iterations tolerated before stopping.
STALL_LIMIT = 60
# Aggregate coefficients are recomputed from scratch this often to keep
# incremental roundoff from accumulating over long runs.
AGGREGATE_REFRESH_INTERVAL = 128


@dataclass
class SolverConfig:
    """Algorithm parameters.  Defaults follow common trust-region practice:
    delta0=1, delta_max=1000, gamma=2, eta1=0.1 and eta2=inf (acceptance by
    the ratio test alone)."""

    model_class: ModelClass
    sampling_mode: str = "dynamic"  # {"uniform", "dynamic", "full"}
    r: int = 1
    delta0: float = 1.0
    delta_max: float = 1000.0
    gamma: float = 2.0
    eta1: float = 0.1
    eta2: float = math.inf
    accuracy_constant: Optional[float] = None  # None: sum of Lipschitz estimates
    pi_prob: float = 0.99
    lipschitz_mode: str = "known"  # {"known", "secant"}
    budget: float = 100.0  # effective data passes
    tol: Optional[float] = None  # optimality gap target (needs f_star)
    seed: int = 0
    max_iterations: int = 1_000_000
    delta_min: float = 1e-12  # stop guard against radius collapse

    def __post_init__(self):
        if isinstance(self.model_class, str):
            self.model_class = ModelClass(self.model_class.lower())


def validate_config(problem: FiniteSumProblem, config: SolverConfig) -> None:
    if not 0.0 < config.delta0 < config.delta_max:
        raise ValueError("need 0 < delta0 < delta_max")
    if config.gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    if not 0.0 < config.eta1 < 1.0:
        raise ValueError("eta1 must lie in (0, 1)")
    if config.eta2 <= 0.0:
        raise ValueError("eta2 must be positive (inf allowed)")
    if config.sampling_mode not in ("uniform", "dynamic", "full"):
        raise ValueError(f"unknown sampling_mode {config.sampling_mode!r}")
    if config.lipschitz_mode not in ("known", "secant"):
        raise ValueError(f"unknown lipschitz_mode {config.lipschitz_mode!r}")
    if config.sampling_mode != "full" and not 1 <= config.r <= problem.p:
        raise ValueError("resource size r must lie in 1..p")
    if not 0.5 < config.pi_prob < 1.0:
        raise ValueError("pi_prob must lie in (1/2, 1)")
    if config.budget <= 0.0:
        raise ValueError("budget must be positive")
    if config.tol is not None and config.tol <= 0.0:
        raise ValueError("tol must be positive when given")
    mc = config.model_class
    if mc is ModelClass.FO and not problem.has_gradient:
        raise ValueError("FO models need gradients")
    if mc.is_gauss_newton and not problem.is_least_squares:
        raise ValueError("Gauss-Newton models need a least-squares problem")
    if mc is ModelClass.FOGN and not problem.has_gradient:
        raise ValueError("FOGN models need residual gradients")
    if config.lipschitz_mode == "known" and problem.lipschitz is None:
        raise ValueError("known-Lipschitz mode needs problem.lipschitz")


@dataclass
class QuadraticModel:
    """Aggregate quadratic value + grad'(x-anchor) + 0.5 (x-anchor)'H(x-anchor)."""

    anchor: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray

    def __call__(self, x: np.ndarray) -> float:
        u = np.asarray(x, dtype=float) - self.anchor
        return self.value + float(self.grad @ u) + 0.5 * float(u @ (self.hess @ u))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        u = np.asarray(x, dtype=float) - self.anchor
        return self.grad + self.hess @ u


@dataclass
class AmelioratedModel(QuadraticModel):
    """Corrected aggregate together with the batch that defined it."""

    batch: Optional[Batch] = None


@dataclass
class TraceRow:
    iteration: int
    f_gap: float
    effective_data_passes: float
    batch_size_I: int
    batch_size_J: int
    delta: float
    rho: float
    accepted: bool
    evaluated_mask: int


IterationReport = TraceRow

TRACE_COLUMNS = (
    "iteration",
    "f_gap",
    "effective_data_passes",
    "batch_size_I",
    "batch_size_J",
    "delta",
    "rho",
    "accepted",
    "evaluated_mask",
)


@dataclass
class SolverState:
    problem: FiniteSumProblem
    x: np.ndarray
    delta: float
    models: list[ComponentModel]
    avg: QuadraticModel
    centers: np.ndarray  # (p, n) mirror of model centers
    grads: np.ndarray  # (p, n) mirror of model gradient coefficients
    f_centers: np.ndarray  # (p,) mirror of model f_center values
    deltas: np.ndarray  # (p,) mirror of interpolation radii (nan if unused)
    lipschitz_est: np.ndarray
    ledger: EvaluationLedger
    cache: EvalCache
    rng_sample_i: np.random.Generator
    rng_sample_j: np.random.Generator
    iteration: int = 0
    first_success: Optional[int] = None
    bootstrap_done: bool = False
    f_star: Optional[float] = None
    f_current: float = math.nan
    stall_count: int = 0
    refresh_countdown: int = AGGREGATE_REFRESH_INTERVAL
    # per-component recent evaluations (point, phi value), reusable as
    # interpolation candidates; None for non-interpolated model classes
    history: Optional[list[deque]] = None
    # per-component rebuild counters (diagnostic)
    rebuild_counts: Optional[np.ndarray] = None

    @property
    def gap(self) -> float:
        if self.f_star is None:
            return math.nan
        return self.f_current - self.f_star

    def data_passes(self) -> float:
        return self.ledger.total() / self.problem.p


@dataclass
class RunResult:
    rows: list[TraceRow]
    x_final: np.ndarray
    f_final: float
    f_gap_final: float
    data_passes: float
    iterations: int
    stop_reason: str
    ledger: EvaluationLedger
    init_evaluations: np.ndarray
    config: SolverConfig


def _mask_of(indices) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << (int(i) - 1)
    return mask


def solve_tr_subproblem(model: QuadraticModel, delta: float) -> np.ndarray:
    """Truncated conjugate gradients with boundary intersection.

    Returns s with ||s|| <= delta achieving at least the standard Cauchy
    fraction of model decrease; exact for zero curvature (step to the
    boundary along the negative gradient) and for interior Newton points.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    g = model.grad
    hess = model.hess
    n = g.shape[0]
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return np.zeros(n)

    def to_boundary(s, d):
        sd = float(s @ d)
        dd = float(d @ d)
        if dd == 0.0:
            return s
        tau = (-sd + math.sqrt(sd * sd + dd * (delta * delta - float(s @ s)))) / dd
        return s + tau * d

    s = np.zeros(n)
    resid = -g.copy()
    d = resid.copy()
    rr = float(resid @ resid)
    tol2 = (1e-12 * gnorm) ** 2
    for _ in range(2 * n + 10):
        Hd = hess @ d
        dHd = float(d @ Hd)
        if dHd <= 0.0:
            return to_boundary(s, d)
        alpha = rr / dHd
        s_next = s + alpha * d
        if float(np.linalg.norm(s_next)) >= delta:
            return to_boundary(s, d)
        s = s_next
        resid = resid - alpha * Hd
        rr_next = float(resid @ resid)
        if rr_next <= tol2:
            return s
        d = resid + (rr_next / rr) * d
        rr = rr_next
    return s


def _phi_value(config: SolverConfig, cv) -> float:
    if config.model_class is ModelClass.ZOGN:
        return float(cv.residual)
    return float(cv.value)


def _remember(state: SolverState, i: int, point: np.ndarray, phi: float) -> None:
    if state.history is not None:
        state.history[i - 1].append((point, phi))


def _build_component(
    state: SolverState, config: SolverConfig, i: int, center: np.ndarray
) -> ComponentModel:
    mc = config.model_class
    if mc is ModelClass.FO:
        return build_first_order(state.problem, i, center, state.ledger, state.cache)
    if mc is ModelClass.FOGN:
        return build_gauss_newton(state.problem, i, center, state.ledger, state.cache)
    prior = state.models[i - 1].interp if state.models[i - 1] is not None else None
    extras = ()
    if state.history is not None:
        extras = tuple(reversed(state.history[i - 1]))
    if state.rebuild_counts is not None:
        state.rebuild_counts[i - 1] += 1
    model = build_interp_model(
        state.problem,
        i,
        center,
        state.delta,
        state.ledger,
        state.cache,
        prior=prior,
        model_class=mc,
        extra_candidates=extras,
        reuse_radius=REUSE_RADIUS_FACTOR * state.delta,
        cap_slack=REUSE_CAP_SLACK,
    )
    # delta_i follows the rebuild-radius convention used by the bounds; the
    # set may hold reused points beyond it (conditioning is checked at the
    # true spread when the set is built).
    model = replace(model, delta=state.delta)
    for pt, val in zip(model.interp.points, model.interp.values):
        _remember(state, i, pt, float(val))
    return model


def _set_mirrors(state: SolverState, i: int, model: ComponentModel) -> None:
    state.centers[i - 1] = model.center
    state.grads[i - 1] = model.grad
    state.f_centers[i - 1] = model.f_center
    state.deltas[i - 1] = model.delta if model.delta is not None else math.nan


def _refresh_aggregate(state: SolverState) -> None:
    n = state.problem.n
    value = 0.0
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for model in state.models:
        v, g, factor = contribution_at(model, state.x)
        value += v
        grad += g
        if factor is not None:
            hess += np.outer(factor, factor)
    state.avg = QuadraticModel(
        anchor=state.x.copy(), value=value, grad=grad, hess=hess
    )
    state.refresh_countdown = AGGREGATE_REFRESH_INTERVAL


def update_lipschitz_secant(
    state: SolverState, i: int, old_model: ComponentModel, new_model: ComponentModel
) -> float:
    """Secant refresh of the i-th Lipschitz estimate after a model rebuild.

    Model gradients are evaluated at their own centers.  Before the
    first-success bootstrap completes the secant value is assigned outright;
    afterwards the estimate is a running maximum.  Rebuilds at an unchanged
    center leave the estimate alone.
    """
    x_new = new_model.center
    c_old = old_model.center
    if np.array_equal(x_new, c_old):
        return float(state.lipschitz_est[i - 1])
    g_new = eval_model_gradient(new_model, x_new)
    g_old = eval_model_gradient(old_model, c_old)
    secant = float(
        np.linalg.norm(g_new - g_old) / np.linalg.norm(x_new - c_old)
    )
    if state.bootstrap_done:
        value = max(float(state.lipschitz_est[i - 1]), secant)
    else:
        value = secant
    state.lipschitz_est[i - 1] = value
    return value


def _rebuild_batch(
    state: SolverState, config: SolverConfig, indices
) -> dict[int, ComponentModel]:
    """Re-center the batch models at the incumbent, maintaining the average
    aggregate incrementally; returns the displaced models."""
    old_models: dict[int, ComponentModel] = {}
    x = state.x
    avg = state.avg
    for i in indices:
        i = int(i)
        old = state.models[i - 1]
        old_models[i] = old
        if config.model_class.is_interpolated:
            # a set already centered here with radius within the current one
            # is at least as accurate as any rebuild would be; keep it
            skip = np.array_equal(old.center, x) and old.delta <= state.delta
        else:
            skip = np.array_equal(old.center, x)
        new = old if skip else _build_component(state, config, i, x)
        state.models[i - 1] = new
        _set_mirrors(state, i, new)
        if config.lipschitz_mode == "secant":
            update_lipschitz_secant(state, i, old, new)
        if new is not old:
            nv, ng, nf = contribution_at(new, x)
            ov, og, of = contribution_at(old, x)
            avg.value += nv - ov
            avg.grad += ng - og
            if nf is not None:
                avg.hess += np.outer(nf, nf)
                avg.hess -= np.outer(of, of)
    return old_models


def build_ameliorated(
    state: SolverState, batch: Batch, old_models: dict[int, ComponentModel]
) -> AmelioratedModel:
    """Corrected aggregate: previous average plus (fresh - stale)/pi terms.

    The state's average has already absorbed the plain fresh-stale
    differences of the batch, so only the residual weights 1/pi - 1 remain
    to be applied here.
    """
    x = state.x
    avg = state.avg
    value = avg.value
    grad = avg.grad.copy()
    hess = avg.hess.copy()
    pi = batch.pi.pi
    for i in batch.indices:
        i = int(i)
        w = 1.0 / float(pi[i - 1]) - 1.0
        new = state.models[i - 1]
        old = old_models[i]
        if w == 0.0 or new is old:
            continue
        nv, ng, nf = contribution_at(new, x)
        ov, og, of = contribution_at(old, x)
        value += w * (nv - ov)
        grad += w * (ng - og)
        if nf is not None:
            hess = hess + w * (np.outer(nf, nf) - np.outer(of, of))
    return AmelioratedModel(
        anchor=x.copy(), value=value, grad=grad, hess=hess, batch=batch
    )


def ameliorated_quadratic(
    models_before: list[ComponentModel],
    models_after: list[ComponentModel],
    pi: np.ndarray,
    subset,
    anchor: np.ndarray,
) -> QuadraticModel:
    """From-scratch corrected aggregate for a given subset (test oracle).

    ``models_before`` are the stale models of all p components,
    ``models_after`` the fresh ones (only entries named in ``subset`` are
    used).  Equals sum(models_before) + sum_{i in subset}
    (after_i - before_i)/pi_i as an exact quadratic anchored at ``anchor``.
    """
    anchor = np.asarray(anchor, dtype=float)
    n = anchor.shape[0]
    value = 0.0
    grad = np.zeros(n)
    hess = np.zeros((n, n))

    def add(model: ComponentModel, weight: float) -> None:
        nonlocal value
        v, g, factor = contribution_at(model, anchor)
        value += weight * v
        grad[:] += weight * g
        if factor is not None:
            hess[:] += weight * np.outer(factor, factor)

    for model in models_before:
        add(model, 1.0)
    for i in subset:
        i = int(i)
        w = 1.0 / float(pi[i - 1])
        add(models_after[i - 1], w)
        add(models_before[i - 1], -w)
    return QuadraticModel(anchor=anchor.copy(), value=value, grad=grad, hess=hess)


def _error_bound_vector(
    state: SolverState, config: SolverConfig, step: Optional[np.ndarray]
) -> np.ndarray:
    """Per-component step-side (step=None) or estimate-side bound vector."""
    diff = state.x - state.centers
    dist = np.linalg.norm(diff, axis=1)
    mc = config.model_class
    kwargs = dict(
        lipschitz=state.lipschitz_est, dist_center=dist, delta_k=state.delta
    )
    if step is not None:
        kwargs["step_norm"] = float(np.linalg.norm(step))
        kwargs["trial_dist"] = np.linalg.norm(
            (state.x + step) - state.centers, axis=1
        )
    if mc.is_interpolated:
        kwargs["delta_i"] = state.deltas
        kwargs["n"] = state.problem.n
    if mc.is_gauss_newton:
        kwargs["f_center_abs"] = np.abs(state.f_centers)
        kwargs["grad_dot_center"] = np.abs(
            np.einsum("ij,ij->i", state.grads, -diff)
        )
    eb = CLASS_BOUNDS[mc](BoundInputs(**kwargs))
    out = eb.step_bound if step is None else eb.estimate_bound
    return np.asarray(out, dtype=float)


def _draw_batch(
    state: SolverState,
    config: SolverConfig,
    rng: np.random.Generator,
    step: Optional[np.ndarray],
    forced_full: bool = False,
) -> Batch:
    p = state.problem.p
    if forced_full or config.sampling_mode == "full":
        pv = ProbabilityVector(pi=np.ones(p), target_b=p)
        return Batch(indices=np.arange(1, p + 1), pi=pv)
    if config.sampling_mode == "uniform":
        r = min(config.r, p)
        indices = np.sort(rng.choice(p, size=r, replace=False)) + 1
        pv = ProbabilityVector(pi=np.full(p, r / p), target_b=r)
        return Batch(indices=indices, pi=pv)
    d = _error_bound_vector(state, config, step)
    C = config.accuracy_constant
    if C is None:
        C = float(np.sum(state.lipschitz_est))
    C = max(C, 1e-30)
    return dynamic_batch(d, config.r, state.delta, C, config.pi_prob, rng)


def _estimate_pair(
    state: SolverState,
    config: SolverConfig,
    batch: Batch,
    step: np.ndarray,
    trial: np.ndarray,
) -> tuple[float, float]:
    """Objective estimates at the incumbent and trial point.

    Uses the corrected-sum form with true component values in place of fresh
    models: for each batch member the correction is (F_j(point) - stale
    model at point)/pi_j added to the average model.  Members re-centered
    this iteration contribute zero at the incumbent, so only trial-point
    values cost new evaluations for them.
    """
    avg = state.avg
    Hs = avg.hess @ step
    est_x = avg.value
    est_t = avg.value + float(avg.grad @ step) + 0.5 * float(step @ Hs)
    pi = batch.pi.pi
    for i in batch.indices:
        i = int(i)
        w = 1.0 / float(pi[i - 1])
        model = state.models[i - 1]
        cv_x = state.cache.evaluate(i, state.x, state.ledger)
        cv_t = state.cache.evaluate(i, trial, state.ledger)
        est_x += w * (cv_x.value - eval_model(model, state.x))
        est_t += w * (cv_t.value - eval_model(model, trial))
        if state.history is not None:
            _remember(state, i, state.x, _phi_value(config, cv_x))
            _remember(state, i, trial, _phi_value(config, cv_t))
    return est_x, est_t


def _recenter(state: SolverState, step: np.ndarray, trial: np.ndarray) -> None:
    avg = state.avg
    Hs = avg.hess @ step
    avg.value += float(avg.grad @ step) + 0.5 * float(step @ Hs)
    avg.grad += Hs
    avg.anchor = trial.copy()
    state.x = trial.copy()


def initialize_state(
    problem: FiniteSumProblem,
    config: SolverConfig,
    x0: np.ndarray,
    f_star: Optional[float] = None,
) -> SolverState:
    """Build every component model at the starting point (the full-set
    initialization batch) and assemble the initial aggregates."""
    validate_config(problem, config)
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.shape != (problem.n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.n},)")
    p, n = problem.p, problem.n
    ledger = EvaluationLedger(p)
    cache = EvalCache(problem)
    child_i, child_j = np.random.SeedSequence(config.seed).spawn(2)
    if config.lipschitz_mode == "known":
        lipschitz_est = np.asarray(problem.lipschitz, dtype=float).copy()
    else:
        lipschitz_est = np.ones(p)

    state = SolverState(
        problem=problem,
        x=x0,
        delta=config.delta0,
        models=[None] * p,  # type: ignore[list-item]
        avg=QuadraticModel(x0.copy(), 0.0, np.zeros(n), np.zeros((n, n))),
        centers=np.zeros((p, n)),
        grads=np.zeros((p, n)),
        f_centers=np.zeros(p),
        deltas=np.full(p, math.nan),
        lipschitz_est=lipschitz_est,
        ledger=ledger,
        cache=cache,
        rng_sample_i=np.random.default_rng(child_i),
        rng_sample_j=np.random.default_rng(child_j),
        f_star=f_star,
        history=(
            [deque(maxlen=4 * n + 4) for _ in range(p)]
            if config.model_class.is_interpolated
            else None
        ),
        rebuild_counts=(
            np.zeros(p, dtype=np.int64)
            if config.model_class.is_interpolated
            else None
        ),
    )

    ledger.begin_iteration(0)
    for i in range(1, p + 1):
        model = _build_component(state, config, i, x0)
        state.models[i - 1] = model
        _set_mirrors(state, i, model)
    ledger.commit_iteration()
    ledger.count_batch()
    _refresh_aggregate(state)
    state.f_current = problem.objective_value(x0)
    return state


def iterate(state: SolverState, config: SolverConfig) -> TraceRow:
    """One trust-region iteration; mutates the state and returns its record."""
    k = state.iteration + 1
    ledger = state.ledger
    ledger.begin_iteration(k)
    delta_used = state.delta

    forced_full = (
        config.lipschitz_mode == "secant"
        and not state.bootstrap_done
        and state.first_success is not None
    )
    batch_i = _draw_batch(
        state, config, state.rng_sample_i, step=None, forced_full=forced_full
    )
    ledger.count_batch()
    old_models = _rebuild_batch(state, config, batch_i.indices)
    if forced_full:
        state.bootstrap_done = True

    hat = build_ameliorated(state, batch_i, old_models)
    gnorm = float(np.linalg.norm(hat.grad))
    step = solve_tr_subproblem(hat, state.delta)
    pred = -(float(hat.grad @ step) + 0.5 * float(step @ (hat.hess @ step)))

    if pred <= PRED_DECREASE_FLOOR:
        # Degenerate subproblem: reject and shrink without estimating.
        state.stall_count += 1
        state.delta = state.delta / config.gamma
        evaluated = ledger.commit_iteration()
        state.iteration = k
        row = TraceRow(
            iteration=k,
            f_gap=state.gap,
            effective_data_passes=state.data_passes(),
            batch_size_I=len(batch_i),
            batch_size_J=0,
            delta=delta_used,
            rho=math.nan,
            accepted=False,
            evaluated_mask=_mask_of(evaluated),
        )
        return row
    state.stall_count = 0

    batch_j = _draw_batch(state, config, state.rng_sample_j, step=step)
    ledger.count_batch()
    trial = state.x + step
    est_x, est_trial = _estimate_pair(state, config, batch_j, step, trial)
    rho = (est_x - est_trial) / pred

    accepted = rho >= config.eta1 and (
        math.isinf(config.eta2) or state.delta <= config.eta2 * gnorm
    )
    if accepted:
        _recenter(state, step, trial)
        state.delta = min(config.gamma * state.delta, config.delta_max)
        if state.first_success is None:
            state.first_success = k
        state.f_current = state.problem.objective_value(state.x)
    else:
        state.delta = state.delta / config.gamma

    state.refresh_countdown -= 1
    if state.refresh_countdown <= 0:
        _refresh_aggregate(state)

    evaluated = ledger.commit_iteration()
    state.iteration = k
    return TraceRow(
        iteration=k,
        f_gap=state.gap,
        effective_data_passes=state.data_passes(),
        batch_size_I=len(batch_i),
        batch_size_J=len(batch_j),
        delta=delta_used,
        rho=float(rho),
        accepted=bool(accepted),
        evaluated_mask=_mask_of(evaluated),
    )


def run(
    problem: FiniteSumProblem,
    config: SolverConfig,
    x0: np.ndarray,
    f_star: Optional[float] = None,
) -> RunResult:
    """Iterate until the gap target, the evaluation budget, or the iteration
    cap is reached.  Bit-reproducible under a fixed config seed."""
    state = initialize_state(problem, config, x0, f_star=f_star)
    init_evals = state.ledger.per_component.copy()
    rows = [
        TraceRow(
            iteration=0,
            f_gap=state.gap,
            effective_data_passes=state.data_passes(),
            batch_size_I=problem.p,
            batch_size_J=0,
            delta=config.delta0,
            rho=math.nan,
            accepted=False,
            evaluated_mask=_mask_of(state.ledger.per_iteration[0][1]),
        )
    ]

    def gap_reached() -> bool:
        return (
            config.tol is not None
            and f_star is not None
            and state.gap <= config.tol
        )

    stop = None
    while stop is None:
        if gap_reached():
            stop = "tol"
        elif state.data_passes() >= config.budget:
            stop = "budget"
        elif state.iteration >= config.max_iterations:
            stop = "max_iterations"
        elif state.stall_count >= STALL_LIMIT:
            stop = "stalled"
        elif state.delta < config.delta_min:
            stop = "radius_collapse"
        else:
            rows.append(iterate(state, config))

    return RunResult(
        rows=rows,
        x_final=state.x.copy(),
        f_final=state.f_current,
        f_gap_final=state.gap,
        data_passes=state.data_passes(),
        iterations=state.iteration,
        stop_reason=stop,
        ledger=state.ledger,
        init_evaluations=init_evals,
        config=replace(config),
    )
