"""Finite-sum objective oracle and evaluation accounting.

The objective is f(x) = sum_{i=1}^p F_i(x).  Component indices are 1-based
throughout the public API (component i corresponds to position i-1 in any
array of per-component quantities).  For least-squares problems each summand
is F_i(x) = 0.5 * f_i(x)^2 with residual f_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass
class ComponentValue:
    """Oracle output for one component at one point.

    ``value`` is F_i(x).  The optional fields are filled according to the
    problem's capability flags: ``gradient`` holds grad F_i(x), and for
    least-squares problems ``residual``/``residual_gradient`` hold f_i(x)
    and grad f_i(x).
    """

    value: float
    gradient: Optional[np.ndarray] = None
    residual: Optional[float] = None
    residual_gradient: Optional[np.ndarray] = None


class EvaluationLedger:
    """Running count of component-oracle evaluations.

    One "evaluation" is one oracle call for one component at one point; a
    value/gradient pair at the same point counts as a single unit.  Calls can
    optionally be tagged with an iteration index so that per-iteration index
    sets are recorded (one entry per committed iteration).
    """

    def __init__(self, p: int):
        self.p = p
        self.per_component = np.zeros(p, dtype=np.int64)
        self.per_iteration: list[tuple[int, frozenset[int]]] = []
        self.batch_count = 0
        self._open: Optional[set[int]] = None
        self._open_iteration: Optional[int] = None

    def charge(self, i: int) -> None:
        self.per_component[i - 1] += 1
        if self._open is not None:
            self._open.add(i)

    def begin_iteration(self, k: int) -> None:
        if self._open is not None:
            raise RuntimeError("previous iteration was not committed")
        self._open = set()
        self._open_iteration = k

    def commit_iteration(self) -> frozenset[int]:
        if self._open is None:
            raise RuntimeError("no open iteration")
        evaluated = frozenset(self._open)
        self.per_iteration.append((self._open_iteration, evaluated))
        self._open = None
        self._open_iteration = None
        return evaluated

    def count_batch(self, count: int = 1) -> None:
        self.batch_count += count

    def total(self) -> int:
        return int(self.per_component.sum())


@dataclass
class FiniteSumProblem:
    """Deterministic oracle for the p summands of a finite-sum objective.

    The per-component callable ``_eval(i, x)`` must be deterministic (same
    point, same output).  Use :meth:`from_values` or :meth:`from_residuals`
    rather than constructing directly.
    """

    p: int
    n: int
    has_gradient: bool
    is_least_squares: bool
    lipschitz: Optional[np.ndarray]
    _eval: Callable[[int, np.ndarray], ComponentValue]
    _full_value: Optional[Callable[[np.ndarray], float]] = field(
        default=None, repr=False
    )

    @classmethod
    def from_values(
        cls,
        p: int,
        n: int,
        value: Callable[[int, np.ndarray], float],
        gradient: Optional[Callable[[int, np.ndarray], np.ndarray]] = None,
        lipschitz: Optional[np.ndarray] = None,
        full_value: Optional[Callable[[np.ndarray], float]] = None,
    ) -> "FiniteSumProblem":
        """Build a problem from componentwise value (and gradient) callables."""

        def evaluate(i: int, x: np.ndarray) -> ComponentValue:
            g = None if gradient is None else np.asarray(gradient(i, x), dtype=float)
            return ComponentValue(value=float(value(i, x)), gradient=g)

        return cls(
            p=p,
            n=n,
            has_gradient=gradient is not None,
            is_least_squares=False,
            lipschitz=None if lipschitz is None else np.asarray(lipschitz, float),
            _eval=evaluate,
            _full_value=full_value,
        )

    @classmethod
    def from_residuals(
        cls,
        p: int,
        n: int,
        residual: Callable[[int, np.ndarray], float],
        residual_gradient: Optional[Callable[[int, np.ndarray], np.ndarray]] = None,
        lipschitz: Optional[np.ndarray] = None,
        full_value: Optional[Callable[[np.ndarray], float]] = None,
    ) -> "FiniteSumProblem":
        """Build a least-squares problem, F_i = 0.5 * f_i^2, from residuals."""

        def evaluate(i: int, x: np.ndarray) -> ComponentValue:
            r = float(residual(i, x))
            rg = None
            g = None
            if residual_gradient is not None:
                rg = np.asarray(residual_gradient(i, x), dtype=float)
                g = r * rg
            return ComponentValue(
                value=0.5 * r * r, gradient=g, residual=r, residual_gradient=rg
            )

        return cls(
            p=p,
            n=n,
            has_gradient=residual_gradient is not None,
            is_least_squares=True,
            lipschitz=None if lipschitz is None else np.asarray(lipschitz, float),
            _eval=evaluate,
            _full_value=full_value,
        )

    def objective_value(self, x: np.ndarray) -> float:
        """Uncharged full objective, for instrumentation and stopping tests only."""
        x = np.asarray(x, dtype=float)
        if self._full_value is not None:
            return float(self._full_value(x))
        return float(sum(self._eval(i, x).value for i in range(1, self.p + 1)))


def evaluate_component(
    problem: FiniteSumProblem,
    i: int,
    x: np.ndarray,
    ledger: Optional[EvaluationLedger] = None,
) -> ComponentValue:
    """Evaluate component i at x, charging one ledger unit.

    A value/gradient (or residual/residual-gradient) pair at one point is a
    single unit of cost.
    """
    if not 1 <= i <= problem.p:
        raise IndexError(f"component index {i} out of range 1..{problem.p}")
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({problem.n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")
    out = problem._eval(i, x)
    if ledger is not None:
        ledger.charge(i)
    return out


def evaluate_full(
    problem: FiniteSumProblem,
    x: np.ndarray,
    ledger: Optional[EvaluationLedger] = None,
) -> float:
    """Evaluate the full sum, charging p ledger units."""
    return float(
        sum(
            evaluate_component(problem, i, x, ledger).value
            for i in range(1, problem.p + 1)
        )
    )


class EvalCache:
    """Memo of oracle results keyed by (component, point).

    Revisited points are served from the cache without charging the ledger,
    so "previously computed" values are free, matching how the solver counts
    evaluation cost.
    """

    def __init__(self, problem: FiniteSumProblem):
        self.problem = problem
        self._store: dict[tuple[int, bytes], ComponentValue] = {}

    def evaluate(
        self, i: int, x: np.ndarray, ledger: Optional[EvaluationLedger] = None
    ) -> ComponentValue:
        key = (i, np.asarray(x, dtype=float).tobytes())
        hit = self._store.get(key)
        if hit is not None:
            return hit
        out = evaluate_component(self.problem, i, x, ledger)
        self._store[key] = out
        return out

    def contains(self, i: int, x: np.ndarray) -> bool:
        return (i, np.asarray(x, dtype=float).tobytes()) in self._store


def effective_data_passes(ledger: EvaluationLedger, p: int) -> float:
    """Total component evaluations divided by the number of components."""
    if p <= 0:
        raise ValueError("p must be positive")
    return ledger.total() / p


def rounds_metric(batch_count: int, r: int, mu: int) -> int:
    """Idealized parallel wall-clock proxy: batch_count * ceil(r / mu).

    ``r`` is the resource (batch chunk) size and ``mu`` the number of
    component evaluations the machine can run simultaneously.
    """
    if batch_count < 0:
        raise ValueError("batch_count must be nonnegative")
    if r < 1 or mu < 1:
        raise ValueError("r and mu must be at least 1")
    return batch_count * math.ceil(r / mu)
