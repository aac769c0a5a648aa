"""Equilibrium-gap computation, the verification oracle, exact LP solvers,
block conditioning, and brute-force oracles."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .deviations import Deviation, DeviationSet, enumerate_set
from .games import (
    BimatrixGame,
    DenseCorrelated,
    MixedStrategy,
    Player,
    SparseCorrelated,
    densify,
    marginal_average,
    social_welfare,
)
from .linprog import Infeasible, LPError, linear_program

log = logging.getLogger("sparse_ce")

CONSTANT_SUM_TOL = 1e-9
ORACLE_SLACK = 1e-12

# Cap on the temporary (T x |Phi| x n) gather; larger products are chunked.
_GATHER_BUDGET = 40_000_000


class Verdict(enum.Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


@dataclass(frozen=True)
class CEReport:
    """Worst-case deviation gains for both players against a deviation set.

    ``epsilon_star`` is the smallest epsilon for which the distribution is
    an epsilon-CE; it is nonnegative whenever the set contains the identity.
    """

    gap_row: float
    gap_col: float
    worst_dev_row: Deviation
    worst_dev_col: Deviation
    welfare: float

    @property
    def epsilon_star(self) -> float:
        return max(self.gap_row, self.gap_col)

    def to_json(self) -> dict:
        return {
            "gap_row": self.gap_row,
            "gap_col": self.gap_col,
            "welfare": self.welfare,
            "epsilon_star": self.epsilon_star,
            "worst_dev_row": self.worst_dev_row.to_json(),
            "worst_dev_col": self.worst_dev_col.to_json(),
        }


def deviation_totals(tables: np.ndarray, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """sum_t <phi_f(x^(t)), u^(t)> for every deviation f, via the
    stochastic-matrix gather U[t, phi(i)]."""
    F = tables.shape[0]
    T, n = U.shape
    chunk = max(1, _GATHER_BUDGET // max(1, T * n))
    out = np.empty(F)
    for lo in range(0, F, chunk):
        block = tables[lo : lo + chunk]
        out[lo : lo + chunk] = np.einsum("tfi,ti->f", U[:, block], X)
    return out


def _best_deviation(phi: DeviationSet, X: np.ndarray, U: np.ndarray) -> tuple[int, float, float]:
    """(argmax index, max total, identity total); using the identity's own
    gathered total as the baseline makes gaps exactly nonnegative."""
    totals = deviation_totals(phi.tables, X, U)
    ident = next(i for i, d in enumerate(phi.devs) if d.is_identity)
    f = int(np.argmax(totals))
    return f, float(totals[f]), float(totals[ident])


def ce_gap(game: BimatrixGame, dist: SparseCorrelated, phi: DeviationSet) -> CEReport:
    """Measure the CE gap of a uniform sparse distribution.

    gap_row = max over phi of (1/T) sum_t <phi(x^(t)) - x^(t), R y^(t)>,
    and symmetrically for the column player. The distribution is an
    epsilon-CE w.r.t. the set iff epsilon_star <= epsilon.
    """
    if len(phi) == 0:
        raise ValueError("deviation set is empty")
    if dist.n != game.n or phi.n != game.n:
        raise ValueError(
            f"dimension mismatch: game n={game.n}, dist n={dist.n}, phi n={phi.n}"
        )
    X, Y = dist.X, dist.Y
    T = dist.T
    U = Y @ game.R.T  # U[t] = R y^(t)
    V = X @ game.C  # V[t] = C^T x^(t)
    fr, tot_r, base_r = _best_deviation(phi, X, U)
    fc, tot_c, base_c = _best_deviation(phi, Y, V)
    return CEReport(
        gap_row=(tot_r - base_r) / T,
        gap_col=(tot_c - base_c) / T,
        worst_dev_row=phi.devs[fr],
        worst_dev_col=phi.devs[fc],
        welfare=social_welfare(game, dist),
    )


def ce_gap_dense(game: BimatrixGame, dist: DenseCorrelated, phi: DeviationSet) -> CEReport:
    """Dense analogue of :func:`ce_gap` for explicit joint distributions."""
    if len(phi) == 0:
        raise ValueError("deviation set is empty")
    if dist.n != game.n or phi.n != game.n:
        raise ValueError(
            f"dimension mismatch: game n={game.n}, dist n={dist.n}, phi n={phi.n}"
        )
    m = dist.m
    tables = phi.tables
    ident = next(i for i, d in enumerate(phi.devs) if d.is_identity)
    totals_r = np.einsum("fij,ij->f", game.R[tables], m)
    totals_c = np.einsum("ifj,ij->f", game.C[:, tables], m)
    gains_r = totals_r - totals_r[ident]
    gains_c = totals_c - totals_c[ident]
    fr = int(np.argmax(gains_r))
    fc = int(np.argmax(gains_c))
    return CEReport(
        gap_row=float(gains_r[fr]),
        gap_col=float(gains_c[fc]),
        worst_dev_row=phi.devs[fr],
        worst_dev_col=phi.devs[fc],
        welfare=social_welfare(game, dist),
    )


def verification_oracle(
    game: BimatrixGame,
    dist: SparseCorrelated | DenseCorrelated,
    eps: float,
    phi: DeviationSet,
) -> Verdict:
    """Accept iff the candidate is an eps-CE of the game w.r.t. phi."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if isinstance(dist, DenseCorrelated):
        report = ce_gap_dense(game, dist, phi)
    else:
        report = ce_gap(game, dist, phi)
    return Verdict.ACCEPT if report.epsilon_star <= eps + ORACLE_SLACK else Verdict.REJECT


def exact_ce_lp(
    game: BimatrixGame, phi: DeviationSet, objective: str = "none"
) -> DenseCorrelated:
    """Exact CE via linear programming over the joint n x n distribution.

    One inequality per deviation and player; ``objective="max-welfare"``
    maximizes expected welfare over the CE polytope, ``"none"`` returns the
    deterministic phase-1 feasible vertex. The polytope is nonempty (a Nash
    equilibrium always exists), so solver failure is reported loudly.
    """
    if objective not in ("none", "max-welfare"):
        raise ValueError(f"unknown objective {objective!r}")
    if phi.n != game.n:
        raise ValueError(f"dimension mismatch: game n={game.n}, phi n={phi.n}")
    n = game.n
    rows = []
    for dev in phi.devs:
        if dev.is_identity:
            continue
        tbl = np.asarray(dev.table)
        rows.append((game.R[tbl, :] - game.R).reshape(-1))
        rows.append((game.C[:, tbl] - game.C).reshape(-1))
    A_ub = np.array(rows) if rows else None
    b_ub = np.zeros(len(rows)) if rows else None
    A_eq = np.ones((1, n * n))
    b_eq = np.ones(1)
    c = (game.R + game.C).reshape(-1) if objective == "max-welfare" else np.zeros(n * n)
    try:
        res = linear_program(
            c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
            maximize=(objective == "max-welfare"),
        )
    except (Infeasible, LPError) as exc:  # pragma: no cover - CE polytope is nonempty
        raise LPError(f"CE linear program failed unexpectedly: {exc}") from exc
    return DenseCorrelated(res.x.reshape(n, n))


class NotConstantSum(ValueError):
    pass


def _constant_sum_value(game: BimatrixGame) -> float:
    total = game.R + game.C
    s = float(total.mean())
    if np.abs(total - s).max() > CONSTANT_SUM_TOL:
        raise NotConstantSum(
            f"R + C varies by {np.abs(total - s).max():.3e}; not constant-sum"
        )
    return s


def zero_sum_solve(game: BimatrixGame) -> tuple[MixedStrategy, MixedStrategy, float]:
    """Minimax pair and row-player value of a constant-sum game.

    Both players are solved by LP on R (the column player maximizing C is
    the column player minimizing R when R + C is constant).
    """
    _constant_sum_value(game)
    n = game.n
    # Row: max v s.t. R^T x >= v 1, sum x = 1; v free, split as v+ - v-.
    A_ub = np.hstack([-game.R.T, np.ones((n, 1)), -np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 2))])
    c = np.concatenate([np.zeros(n), [1.0, -1.0]])
    res_x = linear_program(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=np.ones(1),
                           maximize=True)
    x = MixedStrategy(res_x.x[:n])
    value = res_x.value
    # Column: min u s.t. R y <= u 1, sum y = 1.
    A_ub = np.hstack([game.R, -np.ones((n, 1)), np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 2))])
    res_y = linear_program(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=np.ones(1))
    y = MixedStrategy(res_y.x[:n])
    return x, y, float(value)


def nash_gap(game: BimatrixGame, x: MixedStrategy, y: MixedStrategy) -> float:
    """Largest best-response improvement over pure strategies (the epsilon
    of an epsilon-Nash equilibrium)."""
    if x.n != game.n or y.n != game.n:
        raise ValueError(f"dimension mismatch: game n={game.n}, x n={x.n}, y n={y.n}")
    Ry = game.R @ y.p
    Cx = x.p @ game.C
    return float(max(Ry.max() - x.p @ Ry, Cx.max() - Cx @ y.p))


def avg_to_nash_zero_sum(
    game: BimatrixGame, dist: SparseCorrelated, eps: float
) -> tuple[MixedStrategy, MixedStrategy, float]:
    """Marginal averages of a CCE of a constant-sum game, certified as a
    2*(measured CCE gap)-Nash equilibrium.

    ``eps`` is the caller's claim about the CCE quality; the gap is always
    re-measured with external deviations and only the measurement is used.
    """
    _constant_sum_value(game)
    report = ce_gap(game, dist, enumerate_set("external", game.n))
    measured = report.epsilon_star
    if measured > eps + ORACLE_SLACK:
        log.warning("claimed eps=%g but measured CCE gap %g", eps, measured)
    xbar = marginal_average(dist, Player.ROW)
    ybar = marginal_average(dist, Player.COL)
    return xbar, ybar, 2.0 * measured


class ZeroBlockMass(ValueError):
    def __init__(self, t: int, side: str, mass: float):
        self.t = t
        super().__init__(f"component t={t}: {side} mass {mass:.3e} below 1e-12")


def condition_to_block(
    dist: SparseCorrelated, rows: Sequence[int], cols: Sequence[int]
) -> SparseCorrelated:
    """Condition every product on rows x cols, re-indexed to the block."""
    rows = sorted(set(int(i) for i in rows))
    cols = sorted(set(int(j) for j in cols))
    xs, ys = [], []
    for t, (x, y) in enumerate(zip(dist.xs, dist.ys)):
        px = x.p[rows]
        py = y.p[cols]
        mx, my = px.sum(), py.sum()
        if mx < 1e-12:
            raise ZeroBlockMass(t, "row", mx)
        if my < 1e-12:
            raise ZeroBlockMass(t, "col", my)
        xs.append(MixedStrategy(px / mx))
        ys.append(MixedStrategy(py / my))
    return SparseCorrelated(tuple(xs), tuple(ys))


def embed_on_block(
    dist: SparseCorrelated, rows: Sequence[int], cols: Sequence[int], n: int
) -> SparseCorrelated:
    """Inverse of :func:`condition_to_block`: pad block strategies with
    zeros into dimension n."""
    rows = sorted(set(int(i) for i in rows))
    cols = sorted(set(int(j) for j in cols))
    xs, ys = [], []
    for x, y in zip(dist.xs, dist.ys):
        px = np.zeros(n)
        px[rows] = x.p
        py = np.zeros(n)
        py[cols] = y.p
        xs.append(MixedStrategy(px))
        ys.append(MixedStrategy(py))
    return SparseCorrelated(tuple(xs), tuple(ys))


def simplex_grid(n: int, denom: int) -> Iterator[np.ndarray]:
    """All points of the simplex with coordinates k/denom, lexicographic."""

    def compositions(total: int, parts: int):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first, *rest)

    for comp in compositions(denom, n):
        yield np.asarray(comp, dtype=float) / denom


def brute_force_min_gap(
    game: BimatrixGame, T: int, grid: int, phi: DeviationSet
) -> tuple[SparseCorrelated, float]:
    """Exhaustive scan of grid profiles for the minimum epsilon_star.

    Deterministic iteration order (lexicographic grid points, nested x then
    y tuples); ties keep the first profile found, so results are exactly
    reproducible. Strictly a desk-scale oracle: n <= 3, T <= 2, grid <= 12.
    """
    if game.n > 3 or T > 2 or grid > 12 or T < 1 or grid < 1:
        raise ValueError(f"size limits exceeded: n={game.n} (<=3), T={T} (<=2), grid={grid} (<=12)")
    points = list(simplex_grid(game.n, grid))
    best: tuple[SparseCorrelated, float] | None = None
    for xs in itertools.product(points, repeat=T):
        for ys in itertools.product(points, repeat=T):
            dist = SparseCorrelated.from_arrays(np.stack(xs), np.stack(ys))
            gap = ce_gap(game, dist, phi).epsilon_star
            if best is None or gap < best[1]:
                best = (dist, gap)
    assert best is not None
    return best
