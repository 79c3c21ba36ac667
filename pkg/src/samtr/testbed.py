"""Built-in problem families with analytic gradients and Lipschitz constants.

Three families, each in three conditioning modes (balanced, progressive,
imbalanced): a regularized logistic loss on synthetic data (gradient-based,
one summand per data point), a chained-quadratic least-squares family whose
odd residuals couple consecutive coordinates through a square, and a chained
cubic least-squares family.  The least-squares families have objective zero
at the all-ones point; the logistic optimum is computed on demand by a
damped-Newton reference solve.

Stored Lipschitz constants are the ones the matching model class consumes:
gradient-Lipschitz of F_i for the logistic family, residual-gradient
Lipschitz (valid on the unit box) for the least-squares families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .problem import FiniteSumProblem


class DatasetMode(str, Enum):
    BALANCED = "balanced"
    PROGRESSIVE = "progressive"
    IMBALANCED = "imbalanced"


FAMILIES = ("logistic", "rosenbrock", "cube")


@dataclass
class GeneratedProblem:
    """A problem instance plus the metadata needed to replay it."""

    problem: FiniteSumProblem
    family: str
    mode: str
    seed: Optional[int]
    lipschitz: np.ndarray
    x_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    alpha: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = field(default=None, repr=False)
    labels: Optional[np.ndarray] = field(default=None, repr=False)
    lam: Optional[float] = None

    def to_descriptor(self) -> dict:
        """JSON-ready descriptor from which the instance can be rebuilt."""
        desc = {
            "family": self.family,
            "mode": self.mode,
            "seed": self.seed,
            "p": self.problem.p,
            "n": self.problem.n,
        }
        if self.alpha is not None:
            desc["alpha"] = self.alpha.tolist()
        if self.features is not None:
            desc["features"] = self.features.tolist()
            desc["labels"] = self.labels.tolist()
            desc["lam"] = self.lam
        if self.f_star is not None:
            desc["f_star"] = self.f_star
        if self.x_star is not None:
            desc["x_star"] = np.asarray(self.x_star, float).tolist()
        return desc

    @classmethod
    def from_descriptor(cls, desc: dict) -> "GeneratedProblem":
        family = desc["family"]
        if family == "logistic":
            gp = _logistic_from_data(
                np.asarray(desc["features"], float),
                np.asarray(desc["labels"], float),
                float(desc["lam"]),
                desc["mode"],
                desc["seed"],
            )
        elif family == "rosenbrock":
            gp = _rosenbrock_from_alpha(np.asarray(desc["alpha"], float), desc["mode"])
        elif family == "cube":
            gp = _cube_from_alpha(np.asarray(desc["alpha"], float), desc["mode"])
        else:
            raise ValueError(f"unknown family {family!r}")
        gp.seed = desc.get("seed")
        if "f_star" in desc:
            gp.f_star = float(desc["f_star"])
        if "x_star" in desc:
            gp.x_star = np.asarray(desc["x_star"], float)
        return gp


def _mode_value(mode) -> str:
    if isinstance(mode, DatasetMode):
        return mode.value
    mode = str(mode).lower()
    if mode not in (m.value for m in DatasetMode):
        raise ValueError(f"unknown mode {mode!r}")
    return mode


def random_init(
    dim: int, low: float = -1.0, high: float = 1.0, seed: Optional[int] = None
) -> np.ndarray:
    """Uniform i.i.d. starting point in [low, high]^dim."""
    if not low < high:
        raise ValueError("need low < high")
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=dim)


# ----------------------------------------------------------------------
# logistic loss
# ----------------------------------------------------------------------


def _expit(t):
    # 0.5*(1 + tanh(t/2)) is overflow-free for all t
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t, dtype=float)))


def _logistic_from_data(
    features: np.ndarray, labels: np.ndarray, lam: float, mode: str, seed
) -> GeneratedProblem:
    A = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    p, n = A.shape
    reg = lam / (2.0 * p)

    def residualless_value(i: int, x: np.ndarray) -> float:
        t = y[i - 1] * float(A[i - 1] @ x)
        return float(np.logaddexp(0.0, -t)) / p + reg * float(x @ x)

    def gradient(i: int, x: np.ndarray) -> np.ndarray:
        a = A[i - 1]
        t = y[i - 1] * float(a @ x)
        return (-y[i - 1] * _expit(-t) / p) * a + (lam / p) * x

    def full_value(x: np.ndarray) -> float:
        t = y * (A @ x)
        return float(np.logaddexp(0.0, -t).sum()) / p + 0.5 * lam * float(x @ x)

    lipschitz = (np.sum(A * A, axis=1) / 4.0 + lam) / p
    problem = FiniteSumProblem.from_values(
        p=p,
        n=n,
        value=residualless_value,
        gradient=gradient,
        lipschitz=lipschitz,
        full_value=full_value,
    )
    return GeneratedProblem(
        problem=problem,
        family="logistic",
        mode=mode,
        seed=seed,
        lipschitz=lipschitz,
        features=A,
        labels=y,
        lam=lam,
    )


def gen_logistic(
    n: int = 256,
    p: int = 256,
    lam: float = 0.1,
    mode="balanced",
    seed: Optional[int] = 0,
) -> GeneratedProblem:
    """Synthetic binary classification with per-point logistic loss.

    A generative parameter vector is drawn standard normal, features are
    standard normal rows rescaled per mode (progressive: row i times i;
    imbalanced: last row times 100), and labels are +/-1 with the sigmoid
    threshold rule.  Component i is the loss of data point i plus an equal
    share of the ridge term; the fitted model has no bias term.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    mode = _mode_value(mode)
    rng = np.random.default_rng(seed)
    x_gen = rng.standard_normal(n)
    A = rng.standard_normal((p, n))
    if mode == "imbalanced":
        A[p - 1] *= 100.0
    elif mode == "progressive":
        A *= np.arange(1, p + 1, dtype=float)[:, None]
    thresholds = rng.uniform(0.0, 1.0, size=p)
    labels = np.where(thresholds < _expit(A @ x_gen), 1.0, -1.0)
    return _logistic_from_data(A, labels, lam, mode, seed)


def reference_optimum(
    gp: GeneratedProblem, grad_tol: float = 1e-12, max_iter: int = 200
) -> GeneratedProblem:
    """Fill f_star/x_star for a logistic instance by a full-batch
    damped-Newton solve driven to gradient norm <= grad_tol."""
    if gp.family != "logistic":
        raise ValueError("reference solve is for logistic instances")
    if gp.f_star is not None:
        return gp
    A, y, lam = gp.features, gp.labels, gp.lam
    p, n = A.shape

    def full_f(x):
        t = y * (A @ x)
        return float(np.logaddexp(0.0, -t).sum()) / p + 0.5 * lam * float(x @ x)

    def full_grad(x):
        t = y * (A @ x)
        return -(A.T @ (y * _expit(-t))) / p + lam * x

    x = np.zeros(n)
    for _ in range(max_iter):
        g = full_grad(x)
        if np.linalg.norm(g) <= grad_tol:
            break
        t = y * (A @ x)
        w = _expit(t) * _expit(-t)
        hess = (A.T * w) @ A / p + lam * np.eye(n)
        dx = -np.linalg.solve(hess, g)
        fx = full_f(x)
        slope = float(g @ dx)
        stepsize = 1.0
        while full_f(x + stepsize * dx) > fx + 1e-4 * stepsize * slope:
            stepsize *= 0.5
            if stepsize < 1e-12:
                break
        x = x + stepsize * dx
    if np.linalg.norm(full_grad(x)) > grad_tol:
        raise RuntimeError("reference solve did not reach the gradient tolerance")
    gp.x_star = x
    gp.f_star = full_f(x)
    return gp


# ----------------------------------------------------------------------
# chained least-squares families
# ----------------------------------------------------------------------


def _alphas(p: int, mode: str) -> np.ndarray:
    if mode == "balanced":
        return np.ones(p)
    if mode == "progressive":
        return np.arange(1, p + 1, dtype=float)
    alpha = np.ones(p)
    alpha[p - 2 :] = p
    return alpha


def _rosenbrock_from_alpha(alpha: np.ndarray, mode: str) -> GeneratedProblem:
    alpha = np.asarray(alpha, dtype=float)
    p = alpha.shape[0]
    n = p

    def residual(i: int, x: np.ndarray) -> float:
        a = alpha[i - 1]
        if i % 2 == 1:
            return 10.0 * a * (x[i - 1] ** 2 - x[i])
        return a * (x[i - 2] - 1.0)

    def residual_gradient(i: int, x: np.ndarray) -> np.ndarray:
        a = alpha[i - 1]
        g = np.zeros(n)
        if i % 2 == 1:
            g[i - 1] = 20.0 * a * x[i - 1]
            g[i] = -10.0 * a
        else:
            g[i - 2] = a
        return g

    def full_value(x: np.ndarray) -> float:
        odd = 10.0 * alpha[0::2] * (x[0::2] ** 2 - x[1::2])
        even = alpha[1::2] * (x[0::2] - 1.0)
        return 0.5 * float(odd @ odd + even @ even)

    lipschitz = np.where(np.arange(1, p + 1) % 2 == 1, 20.0 * alpha, 0.0)
    problem = FiniteSumProblem.from_residuals(
        p=p,
        n=n,
        residual=residual,
        residual_gradient=residual_gradient,
        lipschitz=lipschitz,
        full_value=full_value,
    )
    return GeneratedProblem(
        problem=problem,
        family="rosenbrock",
        mode=mode,
        seed=None,
        lipschitz=lipschitz,
        x_star=np.ones(n),
        f_star=0.0,
        alpha=alpha,
    )


def gen_rosenbrock(p: int = 16, mode="balanced") -> GeneratedProblem:
    """Chained-quadratic least squares: odd residual 10 a_i (x_i^2 - x_{i+1}),
    even residual a_i (x_{i-1} - 1); zero objective at the all-ones point.

    Even residuals are affine, so their residual-gradient Lipschitz constant
    is exactly zero; odd ones have constant 20 a_i.
    """
    if p % 2 != 0:
        raise ValueError("p must be even")
    return _rosenbrock_from_alpha(_alphas(p, _mode_value(mode)), _mode_value(mode))


def _cube_from_alpha(alpha: np.ndarray, mode: str) -> GeneratedProblem:
    alpha = np.asarray(alpha, dtype=float)
    p = alpha.shape[0]
    n = p

    def residual(i: int, x: np.ndarray) -> float:
        a = alpha[i - 1]
        if i == 1:
            return a * (x[0] - 1.0)
        return a * (x[i - 1] - x[i - 2] ** 3)

    def residual_gradient(i: int, x: np.ndarray) -> np.ndarray:
        a = alpha[i - 1]
        g = np.zeros(n)
        if i == 1:
            g[0] = a
        else:
            g[i - 1] = a
            g[i - 2] = -3.0 * a * x[i - 2] ** 2
        return g

    def full_value(x: np.ndarray) -> float:
        first = alpha[0] * (x[0] - 1.0)
        rest = alpha[1:] * (x[1:] - x[:-1] ** 3)
        return 0.5 * float(first * first + rest @ rest)

    lipschitz = 30.0 * alpha
    lipschitz[0] = 0.0
    problem = FiniteSumProblem.from_residuals(
        p=p,
        n=n,
        residual=residual,
        residual_gradient=residual_gradient,
        lipschitz=lipschitz,
        full_value=full_value,
    )
    return GeneratedProblem(
        problem=problem,
        family="cube",
        mode=mode,
        seed=None,
        lipschitz=lipschitz,
        x_star=np.ones(n),
        f_star=0.0,
        alpha=alpha,
    )


def gen_cube(p: int = 16, mode="balanced") -> GeneratedProblem:
    """Chained-cubic least squares: first residual a_1 (x_1 - 1), then
    a_i (x_i - x_{i-1}^3); zero objective at the all-ones point.

    The first residual is affine (Lipschitz constant zero); the rest carry
    the box-valid bound 30 a_i.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    return _cube_from_alpha(_alphas(p, _mode_value(mode)), _mode_value(mode))


def make_problem(family: str, mode, **kwargs) -> GeneratedProblem:
    """Dispatch by family name; kwargs are forwarded to the generator."""
    family = family.lower()
    if family == "logistic":
        return gen_logistic(mode=mode, **kwargs)
    if family == "rosenbrock":
        return gen_rosenbrock(mode=mode, **kwargs)
    if family == "cube":
        return gen_cube(mode=mode, **kwargs)
    raise ValueError(f"unknown family {family!r}")
