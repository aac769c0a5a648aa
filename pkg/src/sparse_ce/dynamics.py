"""Regret minimizers and self-play loops producing uniform T-sparse
correlated distributions, with exact deviation-regret accounting.

The deviation-regret learner runs an exponential-weights learner over the
deviation family and plays a stationary distribution of the weighted
stochastic matrix each round; expert phi is rewarded by what phi would
have extracted from the played strategy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .deviations import DeviationSet
from .equilibria import CEReport, ce_gap, deviation_totals
from .games import BimatrixGame, MixedStrategy, Player, SparseCorrelated, _readonly

FIXED_POINT_TOL = 1e-9
_CESARO_CAP = 1 << 18


@dataclass(frozen=True)
class RunLog:
    """Trajectory of a self-play run: strategies and observed utilities
    (ux^(t) = R y^(t), uy^(t) = C^T x^(t)) for every round."""

    X: np.ndarray
    Y: np.ndarray
    UX: np.ndarray
    UY: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        shapes = {a.shape for a in (self.X, self.Y, self.UX, self.UY)}
        if len(shapes) != 1 or self.X.ndim != 2:
            raise ValueError(f"all trajectory arrays must share one TxN shape, got {shapes}")
        for name in ("X", "Y", "UX", "UY"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def sparse(self) -> SparseCorrelated:
        return SparseCorrelated.from_arrays(self.X, self.Y)

    def welfare_per_round(self) -> np.ndarray:
        """x^(t) R y^(t) + x^(t) C y^(t), reconstructed from the feedback."""
        return np.einsum("ti,ti->t", self.X, self.UX) + np.einsum(
            "ti,ti->t", self.UY, self.Y
        )

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "xs": self.X.tolist(),
            "ys": self.Y.tolist(),
            "ux": self.UX.tolist(),
            "uy": self.UY.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunLog":
        log = cls(
            np.array(obj["xs"], dtype=float),
            np.array(obj["ys"], dtype=float),
            np.array(obj["ux"], dtype=float),
            np.array(obj["uy"], dtype=float),
            int(obj.get("seed", 0)),
        )
        if log.T != obj["T"]:
            raise ValueError(f"declared T={obj['T']} but arrays have {log.T} rows")
        return log

    def to_csv(self) -> str:
        """One row per round: t, x_1..x_n, y_1..y_n, welfare_t."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        n = self.n
        writer.writerow(
            ["t"]
            + [f"x_{i + 1}" for i in range(n)]
            + [f"y_{i + 1}" for i in range(n)]
            + ["welfare"]
        )
        welfare = self.welfare_per_round()
        for t in range(self.T):
            writer.writerow(
                [t + 1]
                + [repr(float(v)) for v in self.X[t]]
                + [repr(float(v)) for v in self.Y[t]]
                + [repr(float(welfare[t]))]
            )
        return buf.getvalue()


class Minimizer(Protocol):
    n: int
    seed: int

    def recommend(self) -> MixedStrategy: ...

    def observe(self, u: np.ndarray) -> None: ...


class MwuExternal:
    """Anytime exponential weights: w_i proportional to
    exp(eta_t * cumulative utility), eta_t = sqrt(ln(n) / max(t, 1))."""

    def __init__(self, n: int, seed: int = 0):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.seed = seed
        self._cum = np.zeros(n)
        self._t = 0

    def recommend(self) -> MixedStrategy:
        t = self._t + 1
        eta = np.sqrt(np.log(self.n) / max(t, 1))
        logits = eta * self._cum
        logits -= logits.max()
        w = np.exp(logits)
        return MixedStrategy(w / w.sum())

    def observe(self, u: np.ndarray) -> None:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise ValueError(f"utility must have shape ({self.n},), got {u.shape}")
        self._cum += u
        self._t += 1


def mwu_external(n: int, seed: int = 0) -> MwuExternal:
    return MwuExternal(n, seed)


def stationary_distribution(M: np.ndarray, tol: float = FIXED_POINT_TOL) -> np.ndarray:
    """Nonnegative fixed point of a column-stochastic matrix, summing to 1.

    Primary path: deterministic least squares on (M - I) q = 0, sum q = 1,
    whose minimum-norm solution is a nonnegative combination of the
    recurrent-class stationary vectors. Cesaro averaging of powers is the
    fallback for the rare ill-conditioned case; it always returns the best
    average found, so the failure is never surfaced.
    """
    n = M.shape[0]
    A = np.vstack([M - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    q = np.linalg.lstsq(A, b, rcond=None)[0]
    if q.min() >= -1e-10 and abs(q.sum() - 1.0) <= 1e-9:
        q = np.clip(q, 0.0, None)
        q /= q.sum()
        if np.abs(M @ q - q).sum() <= tol:
            return q
    # Cesaro fallback: averages of the power trajectory converge to a
    # fixed point even for periodic M.
    z = np.full(n, 1.0 / n)
    acc = z.copy()
    count = 1
    best = acc / count
    best_res = np.abs(M @ best - best).sum()
    while count < _CESARO_CAP:
        z = M @ z
        acc += z
        count += 1
        if count & (count - 1) == 0:  # check at powers of two
            avg = acc / count
            res = np.abs(M @ avg - avg).sum()
            if res < best_res:
                best, best_res = avg, res
            if best_res <= tol:
                break
    best = np.clip(best, 0.0, None)
    return best / best.sum()


class PhiRegretLearner:
    """Deviation-regret minimizer: experts are the deviations, the played
    strategy is a stationary distribution of the weight-averaged
    stochastic matrix, and expert phi is credited <M_phi q, u>."""

    def __init__(self, phi: DeviationSet, seed: int = 0):
        if len(phi) == 0:
            raise ValueError("deviation set must be nonempty")
        if not any(d.is_identity for d in phi.devs):
            raise ValueError("deviation set must include the identity")
        self.phi = phi
        self.n = phi.n
        self.seed = seed
        self._experts = MwuExternal(len(phi), seed)
        self._last_q: np.ndarray | None = None

    def recommend(self) -> MixedStrategy:
        w = self._experts.recommend().p
        n = self.n
        tables = self.phi.tables
        M = np.zeros((n, n))
        np.add.at(
            M,
            (tables, np.broadcast_to(np.arange(n), tables.shape)),
            np.broadcast_to(w[:, None], tables.shape),
        )
        q = stationary_distribution(M)
        self._last_q = q
        return MixedStrategy(q)

    def observe(self, u: np.ndarray) -> None:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise ValueError(f"utility must have shape ({self.n},), got {u.shape}")
        if self._last_q is None:
            raise RuntimeError("observe() before any recommend()")
        rewards = u[self.phi.tables] @ self._last_q
        self._experts.observe(rewards)


def phi_regret_minimizer(phi: DeviationSet, seed: int = 0) -> PhiRegretLearner:
    return PhiRegretLearner(phi, seed)


class ConstantPlay:
    """Plays a fixed strategy forever; handy for planted baselines."""

    def __init__(self, x: MixedStrategy, seed: int = 0):
        self.n = x.n
        self.seed = seed
        self._x = x

    def recommend(self) -> MixedStrategy:
        return self._x

    def observe(self, u: np.ndarray) -> None:
        pass


def self_play(
    game: BimatrixGame, mx: Minimizer, my: Minimizer, T: int
) -> tuple[SparseCorrelated, RunLog]:
    """Simultaneous self-play: each round both players commit strategies,
    then observe ux = R y and uy = C^T x as feedback."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if mx.n != game.n or my.n != game.n:
        raise ValueError(
            f"dimension mismatch: game n={game.n}, mx n={mx.n}, my n={my.n}"
        )
    n = game.n
    X = np.zeros((T, n))
    Y = np.zeros((T, n))
    UX = np.zeros((T, n))
    UY = np.zeros((T, n))
    for t in range(T):
        x = mx.recommend()
        y = my.recommend()
        X[t] = x.p
        Y[t] = y.p
        UX[t] = game.R @ y.p
        UY[t] = game.C.T @ x.p
        mx.observe(UX[t])
        my.observe(UY[t])
    log = RunLog(X, Y, UX, UY, seed=getattr(mx, "seed", 0))
    return log.sparse(), log


def phi_regret(log: RunLog, phi: DeviationSet, player: Player) -> float:
    """max over phi of sum_t <phi(x^(t)), u^(t)> - sum_t <x^(t), u^(t)>.

    The subtracted baseline is the identity deviation's own total, so the
    regret is exactly nonnegative (zero for the singleton identity set).
    """
    if phi.n != log.n:
        raise ValueError(f"dimension mismatch: log n={log.n}, phi n={phi.n}")
    X = log.X if player is Player.ROW else log.Y
    U = log.UX if player is Player.ROW else log.UY
    totals = deviation_totals(phi.tables, X, U)
    ident = next(i for i, d in enumerate(phi.devs) if d.is_identity)
    return float(totals.max() - totals[ident])


def regret_to_ce_certificate(
    game: BimatrixGame, log: RunLog, phi: DeviationSet
) -> CEReport:
    """Check the regret-to-equilibrium identity on a self-play log.

    Under the self-play feedback rule the trajectory mixture's per-player
    gap times T equals the player's deviation regret exactly; both sides
    are recomputed and compared to 1e-10 before the report is returned.
    """
    UX = log.Y @ game.R.T
    UY = log.X @ game.C
    drift = max(np.abs(UX - log.UX).max(), np.abs(UY - log.UY).max())
    if drift > 1e-10:
        raise ValueError(
            f"log feedback differs from the game's self-play rule by {drift:.3e}"
        )
    dist = log.sparse()
    report = ce_gap(game, dist, phi)
    reg_row = phi_regret(log, phi, Player.ROW)
    reg_col = phi_regret(log, phi, Player.COL)
    err = max(
        abs(log.T * report.gap_row - reg_row), abs(log.T * report.gap_col - reg_col)
    )
    if err > 1e-10:
        raise ArithmeticError(
            f"regret/gap identity violated by {err:.3e}; feedback inconsistent"
        )
    return report
