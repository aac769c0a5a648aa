"""Linear-programming front end used by the equilibrium solvers.

Thin wrapper over scipy's HiGHS simplex: the equilibrium polytopes here
are heavily degenerate (every deviation constraint passes through zero),
which defeats naive dense tableau pivoting, while HiGHS handles them
quickly and deterministically for identical inputs on one platform.
Solutions are re-validated against the original constraints at the
library's feasibility tolerance before being returned, so callers can
rely on the stated violation bound rather than solver status alone.

Variables are nonnegative; free variables must be split by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog as _scipy_linprog

DEFAULT_TOL = 1e-9


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    value: float


def _violation(
    x: np.ndarray,
    A_ub: np.ndarray | None,
    b_ub: np.ndarray | None,
    A_eq: np.ndarray | None,
    b_eq: np.ndarray | None,
) -> float:
    worst = float((-x).max(initial=0.0))
    if A_ub is not None:
        worst = max(worst, float((A_ub @ x - b_ub).max(initial=0.0)))
    if A_eq is not None:
        worst = max(worst, float(np.abs(A_eq @ x - b_eq).max(initial=0.0)))
    return worst


def linear_program(
    c: np.ndarray,
    A_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    maximize: bool = False,
    tol: float = DEFAULT_TOL,
) -> LPResult:
    """Solve min (or max) <c, x> s.t. A_ub x <= b_ub, A_eq x = b_eq, x >= 0.

    Raises ``Infeasible``/``Unbounded``/``LPError``; otherwise returns an
    optimal solution validated to violate no constraint by more than
    ``tol``. Deterministic for identical inputs on one platform.
    """
    c = np.asarray(c, dtype=float)
    obj = -c if maximize else c
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
    if A_eq is not None:
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
    if A_ub is None and A_eq is None:
        raise ValueError("need at least one constraint")

    res = _scipy_linprog(
        obj,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status == 3:
        raise Unbounded(res.message)
    if res.status != 0 or res.x is None:
        raise LPError(f"solver failed (status {res.status}): {res.message}")
    x = np.clip(np.asarray(res.x, dtype=float), 0.0, None)
    gap = _violation(x, A_ub, b_ub, A_eq, b_eq)
    if gap > tol:
        raise LPError(f"solution violates constraints by {gap:.3e}")
    value = float(c @ x)
    return LPResult(x=x, value=value)
