"""Per-component bounds on how much a model can move when re-centered.

For component i with stale center c and a candidate fresh center x_k, the
sampling machinery needs an upper bound on

  step side:      max over the ball B(x_k; Delta) of |m_i(x; x_k) - m_i(x; c)|
  estimate side:  the same difference at the two points x_k and x_k + s

without building the fresh model.  Both are bounded through the triangle
inequality by the sum of the two models' accuracy bounds, which yields
closed forms in the Lipschitz constant, the center distance, the radii and
(for interpolated classes) the geometry-conditioning cap.

All formulas are elementwise, so every ``BoundInputs`` field may be a scalar
or an aligned array of per-component values; the returned bounds then have
the same shape.

For the interpolated classes the conditioning cap applies to the
delta-scaled geometry matrix (the builder enforces this), so the unscaled
inverse norm is bounded by cap/delta.  Substituting that into the raw
accuracy bounds turns the delta_i^2 and Delta^3 geometry terms into
delta_i * (...) and Delta^2 terms; these scaled forms remain sound upper
bounds for every radius, which the raw constant-cap substitution does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .models import ComponentModel, ModelClass, inverse_norm_cap

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ErrorBounds:
    """Step-side and estimate-side bounds; the latter is None when no trial
    step was supplied."""

    step_bound: ArrayLike
    estimate_bound: Optional[ArrayLike]


@dataclass(frozen=True)
class BoundInputs:
    """Inputs for the per-class bound formulas.

    lipschitz        L_i (gradient Lipschitz constant of F_i, or of the
                     residual f_i for the Gauss-Newton classes)
    dist_center      ||x_k - c_i||
    delta_k          trust-region radius
    step_norm        ||s|| (estimate side only)
    trial_dist       ||x_k + s - c_i|| (estimate side only)
    delta_i          stale interpolation radius (ZO/ZOGN)
    n                dimension (ZO/ZOGN)
    vinv_cap         scaled-geometry inverse-norm cap; defaults to
                     min(sqrt(n), 10)
    f_center_abs     |f_i(c_i)| (Gauss-Newton classes)
    grad_dot_center  |grad f_i(c_i)' (c_i - x_k)| (FOGN refresh bound)
    """

    lipschitz: ArrayLike
    dist_center: ArrayLike
    delta_k: ArrayLike
    step_norm: Optional[ArrayLike] = None
    trial_dist: Optional[ArrayLike] = None
    delta_i: Optional[ArrayLike] = None
    n: Optional[int] = None
    vinv_cap: Optional[ArrayLike] = None
    f_center_abs: Optional[ArrayLike] = None
    grad_dot_center: Optional[ArrayLike] = None


def _geometry_coeff(inputs: BoundInputs) -> ArrayLike:
    # 0.5 * sqrt(n) * cap, the shared front factor of the geometry terms
    if inputs.n is None:
        raise ValueError("interpolated-class bounds need the dimension n")
    cap = inputs.vinv_cap
    if cap is None:
        cap = inverse_norm_cap(inputs.n)
    return 0.5 * np.sqrt(inputs.n) * cap


def bounds_fo(inputs: BoundInputs) -> ErrorBounds:
    """First-order class: half-Lipschitz times squared distances to the two
    centers, maximized over the relevant points."""
    L = inputs.lipschitz
    dist = inputs.dist_center
    dk = inputs.delta_k
    step = 0.5 * L * (dk**2 + (dist + dk) ** 2)
    est = None
    if inputs.step_norm is not None:
        est = 0.5 * L * np.maximum(
            dist**2, inputs.step_norm**2 + inputs.trial_dist**2
        )
    return ErrorBounds(step, est)


def bounds_zo(inputs: BoundInputs) -> ErrorBounds:
    """Linear-interpolation class: quadratic Taylor terms plus geometry terms
    scaled by the conditioning cap."""
    L = inputs.lipschitz
    dist = inputs.dist_center
    dk = inputs.delta_k
    di = inputs.delta_i
    zn = _geometry_coeff(inputs)
    step = L * (1.5 * (dist + dk) ** 2 + zn * di * (dist + dk)) + L * (
        1.5 * dk**2 + zn * dk**2
    )
    est = None
    if inputs.step_norm is not None:
        s = inputs.step_norm
        td = inputs.trial_dist
        est = L * np.maximum(
            1.5 * dist**2 + zn * di * dist,
            1.5 * td**2 + zn * di * td + 1.5 * s**2 + zn * dk * s,
        )
    return ErrorBounds(step, est)


def bounds_fogn(inputs: BoundInputs) -> ErrorBounds:
    """Gauss-Newton class: stale-side term weighted by |f_i(c)|, fresh-side
    term weighted by the refresh bound M >= |f_i(x_k)|."""
    L = inputs.lipschitz
    dist = inputs.dist_center
    dk = inputs.delta_k
    fa = inputs.f_center_abs
    gd = inputs.grad_dot_center
    if fa is None or gd is None:
        raise ValueError("Gauss-Newton bounds need |f(c)| and the center dot")
    M = fa + gd + 0.5 * L * dist**2
    step = 0.5 * fa * L * (dist + dk) ** 2 + 0.5 * L * M * dk**2
    est = None
    if inputs.step_norm is not None:
        est = np.maximum(
            0.5 * fa * L * inputs.dist_center**2,
            0.5 * fa * L * inputs.trial_dist**2 + 0.5 * L * M * inputs.step_norm**2,
        )
    return ErrorBounds(step, est)


def bounds_zogn(inputs: BoundInputs) -> ErrorBounds:
    """Interpolated Gauss-Newton class: the ZO forms with the multiplicative
    |f_i(c)| prefactor."""
    L = inputs.lipschitz
    dist = inputs.dist_center
    dk = inputs.delta_k
    di = inputs.delta_i
    fa = inputs.f_center_abs
    if fa is None:
        raise ValueError("ZOGN bounds need |f(c)|")
    zn = _geometry_coeff(inputs)
    step = (
        L
        * fa
        * (
            1.5 * (dist + dk) ** 2
            + zn * di * (dist + dk)
            + 1.5 * dk**2
            + zn * dk**2
        )
    )
    est = None
    if inputs.step_norm is not None:
        s = inputs.step_norm
        td = inputs.trial_dist
        est = (
            L
            * fa
            * np.maximum(
                1.5 * dist**2 + zn * di * dist,
                1.5 * td**2 + zn * di * td + 1.5 * s**2 + zn * dk * s,
            )
        )
    return ErrorBounds(step, est)


def bounds_zogn_refreshed(inputs: BoundInputs) -> ErrorBounds:
    """Interpolated Gauss-Newton bounds with the fresh-model terms weighted
    by the refresh bound M >= |f_i(x_k)| instead of the stale |f_i(c_i)|.

    The plain form multiplies every term by |f_i(c_i)|, so a component whose
    stale center sits near a residual zero reports a vanishing bound no
    matter how far its center has drifted; its model then never refreshes
    and the aggregate silently degrades.  Weighting the fresh-side terms by
    M (the same refresh bound the first-order Gauss-Newton class uses)
    restores distance sensitivity while never falling below the plain form.
    """
    L = inputs.lipschitz
    dist = inputs.dist_center
    dk = inputs.delta_k
    di = inputs.delta_i
    fa = inputs.f_center_abs
    gd = inputs.grad_dot_center
    if fa is None or gd is None:
        raise ValueError("refreshed ZOGN bounds need |f(c)| and the center dot")
    zn = _geometry_coeff(inputs)
    M = fa + gd + 0.5 * L * dist**2
    step = L * fa * (1.5 * (dist + dk) ** 2 + zn * di * (dist + dk)) + L * M * (
        1.5 * dk**2 + zn * dk**2
    )
    est = None
    if inputs.step_norm is not None:
        s = inputs.step_norm
        td = inputs.trial_dist
        est = L * np.maximum(
            fa * (1.5 * dist**2 + zn * di * dist),
            fa * (1.5 * td**2 + zn * di * td) + M * (1.5 * s**2 + zn * dk * s),
        )
    return ErrorBounds(step, est)


def fully_linear_error(
    model: ComponentModel, x: np.ndarray, lipschitz: float
) -> float:
    """Accuracy bound |F_i(x) - m_i(x; c)| for a linear-interpolation model.

    Equals 1.5 L r^2 + 0.5 L sqrt(n) cap delta r with r = ||x - c||, valid
    for every x because the builder keeps the scaled geometry matrix within
    the cap.
    """
    if model.model_class is not ModelClass.ZO:
        raise ValueError("fully_linear_error applies to ZO models")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x - model.center))
    n = model.center.shape[0]
    cap = model.interp.vinv_norm_cap if model.interp is not None else inverse_norm_cap(n)
    L = lipschitz
    return 1.5 * L * r * r + 0.5 * L * np.sqrt(n) * cap * model.delta * r


CLASS_BOUNDS = {
    ModelClass.FO: bounds_fo,
    ModelClass.ZO: bounds_zo,
    ModelClass.FOGN: bounds_fogn,
    ModelClass.ZOGN: bounds_zogn,
}
