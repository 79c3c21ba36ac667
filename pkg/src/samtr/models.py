"""Component surrogate models and interpolation geometry.

Four model classes are supported.  Writing u = x - c for a center point c:

  FO    m(x) = F_i(c) + grad F_i(c)' u            (first order)
  ZO    m(x) = F_i(c) + g' u                      (linear interpolation of F_i)
  FOGN  m(x) = 0.5 * (f_i(c) + grad f_i(c)' u)^2  (Gauss-Newton on residuals)
  ZOGN  m(x) = 0.5 * (f_i(c) + g' u)^2            (interpolated Gauss-Newton)

where g is an approximate gradient obtained by linear interpolation on a set
of n+1 points inside a ball of radius delta around the center.  Gauss-Newton
models are quadratics whose Hessian is the rank-1 outer product of the
(residual) gradient factor with itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .problem import EvalCache, EvaluationLedger, FiniteSumProblem, evaluate_component

# Pivot threshold for accepting a reused interpolation direction, applied to
# the delta-scaled shifted matrix.
PIVOT_THRESHOLD = 0.01


class ModelClass(str, Enum):
    FO = "fo"
    ZO = "zo"
    FOGN = "fogn"
    ZOGN = "zogn"

    @property
    def is_interpolated(self) -> bool:
        return self in (ModelClass.ZO, ModelClass.ZOGN)

    @property
    def is_gauss_newton(self) -> bool:
        return self in (ModelClass.FOGN, ModelClass.ZOGN)


def inverse_norm_cap(n: int) -> float:
    """Bound used in place of the exact scaled-geometry inverse norm."""
    return float(min(math.sqrt(n), 10.0))


@dataclass(frozen=True)
class InterpolationSet:
    """n+1 interpolation points, the first being the model center.

    ``v_matrix`` has columns points[j] - center for j = 1..n.  The set is
    maintained so that the delta-scaled matrix satisfies
    ||(v_matrix/delta)^{-1}|| <= vinv_norm_cap, which keeps the capped error
    bounds valid.
    """

    points: tuple[np.ndarray, ...]
    values: np.ndarray
    v_matrix: np.ndarray
    vinv_norm_cap: float
    scaled_inverse_norm: float


@dataclass(frozen=True)
class ComponentModel:
    """One component surrogate, immutable once built.

    ``f_center`` is F_i(center) for FO/ZO and the residual f_i(center) for
    the Gauss-Newton classes.  ``grad`` is the linear coefficient of the
    model's inner form (grad F_i, interpolated g, or grad f_i per class);
    for Gauss-Newton classes ``hess_rank1`` equals ``grad`` and the model
    Hessian is its outer product with itself.
    """

    model_class: ModelClass
    center: np.ndarray
    f_center: float
    grad: np.ndarray
    hess_rank1: Optional[np.ndarray] = None
    delta: Optional[float] = None
    interp: Optional[InterpolationSet] = None


def eval_model(model: ComponentModel, x: np.ndarray) -> float:
    """Exact evaluation of the stored linear or quadratic form."""
    u = np.asarray(x, dtype=float) - model.center
    inner = model.f_center + float(model.grad @ u)
    if model.model_class.is_gauss_newton:
        return 0.5 * inner * inner
    return inner


def eval_model_gradient(model: ComponentModel, x: np.ndarray) -> np.ndarray:
    """Analytic gradient of the stored form at x."""
    if not model.model_class.is_gauss_newton:
        return model.grad.copy()
    u = np.asarray(x, dtype=float) - model.center
    inner = model.f_center + float(model.grad @ u)
    return inner * model.grad


def model_value_at_center(model: ComponentModel) -> float:
    """F_i(center) implied by the model (exact for every class)."""
    if model.model_class.is_gauss_newton:
        return 0.5 * model.f_center * model.f_center
    return model.f_center


def contribution_at(
    model: ComponentModel, ref: np.ndarray
) -> tuple[float, np.ndarray, Optional[np.ndarray]]:
    """(value, gradient, rank-1 Hessian factor) of the model anchored at ref.

    The model equals value + gradient'(x-ref) + 0.5 (x-ref)' H (x-ref) with
    H = outer(factor, factor) (H = 0 when the factor is None).
    """
    u = np.asarray(ref, dtype=float) - model.center
    inner = model.f_center + float(model.grad @ u)
    if model.model_class.is_gauss_newton:
        return 0.5 * inner * inner, inner * model.grad, model.grad
    return inner, model.grad.copy(), None


def _phi_of(cv, use_residual: bool) -> float:
    if use_residual:
        if cv.residual is None:
            raise ValueError("problem does not expose residuals")
        return float(cv.residual)
    return float(cv.value)


def _evaluate_phi(
    problem: FiniteSumProblem,
    i: int,
    x: np.ndarray,
    ledger: Optional[EvaluationLedger],
    cache: Optional[EvalCache],
    use_residual: bool,
) -> float:
    if cache is not None:
        return _phi_of(cache.evaluate(i, x, ledger), use_residual)
    return _phi_of(evaluate_component(problem, i, x, ledger), use_residual)


def build_first_order(
    problem: FiniteSumProblem,
    i: int,
    center: np.ndarray,
    ledger: Optional[EvaluationLedger] = None,
    cache: Optional[EvalCache] = None,
) -> ComponentModel:
    """Tangent model F_i(c) + grad F_i(c)'(x - c); one evaluation unit."""
    if not problem.has_gradient:
        raise ValueError("first-order models require gradients")
    center = np.asarray(center, dtype=float)
    cv = (
        cache.evaluate(i, center, ledger)
        if cache is not None
        else evaluate_component(problem, i, center, ledger)
    )
    if cv.gradient is None:
        raise ValueError("oracle returned no gradient")
    return ComponentModel(
        model_class=ModelClass.FO,
        center=center.copy(),
        f_center=float(cv.value),
        grad=np.asarray(cv.gradient, dtype=float),
    )


def build_gauss_newton(
    problem: FiniteSumProblem,
    i: int,
    center: np.ndarray,
    ledger: Optional[EvaluationLedger] = None,
    cache: Optional[EvalCache] = None,
) -> ComponentModel:
    """Gauss-Newton model 0.5 (f_i(c) + grad f_i(c)'(x-c))^2; one unit."""
    if not (problem.is_least_squares and problem.has_gradient):
        raise ValueError("Gauss-Newton models require residuals with gradients")
    center = np.asarray(center, dtype=float)
    cv = (
        cache.evaluate(i, center, ledger)
        if cache is not None
        else evaluate_component(problem, i, center, ledger)
    )
    if cv.residual is None or cv.residual_gradient is None:
        raise ValueError("oracle returned no residual data")
    grad = np.asarray(cv.residual_gradient, dtype=float)
    return ComponentModel(
        model_class=ModelClass.FOGN,
        center=center.copy(),
        f_center=float(cv.residual),
        grad=grad,
        hess_rank1=grad,
    )


def improve_geometry(
    prior: Optional[InterpolationSet],
    center: np.ndarray,
    delta: float,
    problem: FiniteSumProblem,
    i: int,
    ledger: Optional[EvaluationLedger] = None,
    cache: Optional[EvalCache] = None,
    use_residual: bool = False,
    extra_candidates=(),
    reuse_radius: Optional[float] = None,
    cap_slack: float = 1.0,
    orientation: float = 1.0,
) -> InterpolationSet:
    """Produce a poised interpolation set around the center.

    Prior points (from the previous set and, optionally, other already
    evaluated points passed as ``extra_candidates`` pairs) are reused with
    their stored values when they lie within ``reuse_radius`` of the center
    (default: ``delta``) and pass an LU-style pivot test with threshold
    ``PIVOT_THRESHOLD`` on the scaled shifted matrix.  Selection is greedy
    by largest pivot, so the best-conditioned reusable subset is kept;
    remaining directions are filled with coordinate steps of length
    ``delta``, again choosing the largest pivot at each stage.

    The set's effective radius is the largest point distance (at least
    ``delta``); the scaled inverse norm measured at that radius is kept
    within the conditioning cap times ``cap_slack``, falling back to a fresh
    coordinate simplex when necessary, so the construction always succeeds.
    With the default slack of one the cap is a true bound on the set's
    scaled inverse norm; a caller trading accuracy for point reuse may relax
    it, in which case the cap becomes the assumed constant of the error
    bounds rather than a certificate.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    center = np.asarray(center, dtype=float)
    n = problem.n
    cap = inverse_norm_cap(n)
    if reuse_radius is None:
        reuse_radius = delta

    candidates: list[tuple[np.ndarray, float]] = []
    if prior is not None:
        candidates = [
            (np.asarray(pt, dtype=float), float(val))
            for pt, val in zip(prior.points, prior.values)
        ]
    seen = {pt.tobytes() for pt, _ in candidates}
    for pt, val in extra_candidates:
        pt = np.asarray(pt, dtype=float)
        key = pt.tobytes()
        if key not in seen:
            seen.add(key)
            candidates.append((pt, float(val)))

    center_value = None
    for pt, val in candidates:
        if np.array_equal(pt, center):
            center_value = val
            break
    if center_value is None:
        center_value = _evaluate_phi(problem, i, center, ledger, cache, use_residual)

    ball = reuse_radius * (1.0 + 1e-9)
    reusable = []
    for idx, (pt, val) in enumerate(candidates):
        dist = float(np.linalg.norm(pt - center))
        if 0.01 * delta <= dist <= ball:
            reusable.append((dist, idx, pt, val))
    reusable.sort(key=lambda item: (item[0], item[1]))

    def select(threshold: float) -> tuple[list[np.ndarray], list[Optional[float]]]:
        basis = np.zeros((n, 0))
        pts: list[np.ndarray] = []
        vals: list[Optional[float]] = []
        if threshold <= 1.0:
            # nearest-first pass over the reusable points; a candidate is
            # kept when its normalized direction's component orthogonal to
            # the span of the kept directions clears the pivot threshold
            for dist, _, pt, val in reusable:
                if len(pts) == n:
                    break
                u = (pt - center) / dist
                resid = u - basis @ (basis.T @ u)
                norm = float(np.linalg.norm(resid))
                if norm >= threshold:
                    pts.append(pt)
                    vals.append(val)
                    basis = np.column_stack([basis, resid / norm])
        while len(pts) < n:
            # fresh coordinate steps; the orientation sign lets successive
            # rebuilds straddle the center so reused sets become two-sided
            proj = np.eye(n) - basis @ basis.T
            pivots = np.linalg.norm(proj, axis=0)
            j = int(np.argmax(pivots))
            pts.append(center + orientation * delta * np.eye(n)[j])
            vals.append(None)
            basis = np.column_stack([basis, proj[:, j] / pivots[j]])
        return pts, vals

    # Escalating pivot thresholds trade reuse for conditioning; the final
    # pass (threshold above 1) is the fresh coordinate simplex, which always
    # satisfies the cap when delta is resolvable.
    for threshold in (PIVOT_THRESHOLD, 0.3, 0.6, 2.0):
        pts, vals = select(threshold)
        v_matrix = np.column_stack([pt - center for pt in pts])
        radius = max(delta, max(float(np.linalg.norm(pt - center)) for pt in pts))
        sing = np.linalg.svd(v_matrix / radius, compute_uv=False)
        scaled_inv = 1.0 / sing[-1] if sing[-1] > 0 else np.inf
        if scaled_inv <= cap * cap_slack * (1.0 + 1e-9):
            break
    if not np.isfinite(scaled_inv):
        raise np.linalg.LinAlgError(
            "degenerate interpolation geometry: delta is below the resolvable "
            "offset at this center"
        )

    values = [center_value]
    for pt, val in zip(pts, vals):
        if val is None:
            val = _evaluate_phi(problem, i, pt, ledger, cache, use_residual)
        values.append(val)

    return InterpolationSet(
        points=tuple([center.copy()] + [pt.copy() for pt in pts]),
        values=np.asarray(values, dtype=float),
        v_matrix=v_matrix,
        vinv_norm_cap=cap,
        scaled_inverse_norm=float(scaled_inv),
    )


def set_radius(interp: InterpolationSet, delta: float) -> float:
    """Effective radius of the set: the largest point distance from the
    center, floored at delta."""
    center = interp.points[0]
    spread = max(float(np.linalg.norm(pt - center)) for pt in interp.points[1:])
    return max(float(delta), spread)


def build_interp_model(
    problem: FiniteSumProblem,
    i: int,
    center: np.ndarray,
    delta: float,
    ledger: Optional[EvaluationLedger] = None,
    cache: Optional[EvalCache] = None,
    prior: Optional[InterpolationSet] = None,
    model_class: Optional[ModelClass] = None,
    extra_candidates=(),
    reuse_radius: Optional[float] = None,
    cap_slack: float = 1.0,
    orientation: float = 1.0,
) -> ComponentModel:
    """Linear-interpolation model (ZO) or interpolated Gauss-Newton (ZOGN).

    The interpolated gradient g solves (v_j - c)' g = phi(v_j) - phi(c) for
    the n nontrivial interpolation points, with phi = F_i for ZO and the
    residual f_i for ZOGN.  The model reproduces phi at all n+1 points.
    The stored interpolation radius is the set's effective radius, which
    exceeds ``delta`` only when ``reuse_radius`` admitted farther points.
    """
    if model_class is None:
        model_class = ModelClass.ZOGN if problem.is_least_squares else ModelClass.ZO
    if not model_class.is_interpolated:
        raise ValueError("build_interp_model handles ZO/ZOGN only")
    use_residual = model_class is ModelClass.ZOGN
    if use_residual and not problem.is_least_squares:
        raise ValueError("ZOGN models require a least-squares problem")

    interp = improve_geometry(
        prior, center, delta, problem, i, ledger, cache, use_residual,
        extra_candidates=extra_candidates, reuse_radius=reuse_radius,
        cap_slack=cap_slack, orientation=orientation,
    )
    rhs = interp.values[1:] - interp.values[0]
    grad = np.linalg.solve(interp.v_matrix.T, rhs)
    return ComponentModel(
        model_class=model_class,
        center=np.asarray(center, dtype=float).copy(),
        f_center=float(interp.values[0]),
        grad=grad,
        hess_rank1=grad if use_residual else None,
        delta=set_radius(interp, delta),
        interp=interp,
    )


def vhat_inverse_norm(
    interp: InterpolationSet, x: np.ndarray, center: np.ndarray, delta: float
) -> float:
    """Capped surrogate for the norm of the inverse scaled geometry matrix.

    The geometry matrix rescaled by max{delta, ||x - center||} has inverse
    norm equal to max{delta, ||x - center||} times the inverse norm of the
    unscaled matrix; the latter is replaced by the fixed cap.
    """
    dist = float(np.linalg.norm(np.asarray(x, float) - np.asarray(center, float)))
    return max(delta, dist) * interp.vinv_norm_cap
