"""Degree-2 pseudo-expectations: moment-matrix validity checking,
quadratic constraint systems for sparse-equilibrium feasibility, and the
lifting/extension maps between graph moments and game moments.

A degree-2 pseudo-expectation over m variables is stored as the
(1+m) x (1+m) symmetric matrix of moments of (1, z); positivity of the
pseudo-expectation on squares of linear forms is exactly positive
semidefiniteness of this matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .games import BimatrixGame, _readonly
from .deviations import DeviationSet

SYM_TOL = 1e-12
NORM_TOL = 1e-12
WEIGHT_TOL = 1e-9


def game_variable_labels(n: int, T: int) -> tuple[str, ...]:
    """Frozen variable order for sparse-equilibrium systems: x-blocks then
    y-blocks, block-major."""
    return tuple(
        f"{side}{t + 1}[{i}]" for side in "xy" for t in range(T) for i in range(n)
    )


@dataclass(frozen=True)
class MomentMatrix:
    """Degree-2 pseudo-expectation over m variables."""

    M: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 2:
            raise ValueError(f"moment matrix must be (1+m) x (1+m), got {M.shape}")
        if np.abs(M - M.T).max() > SYM_TOL:
            raise ValueError("moment matrix must be symmetric within 1e-12")
        if abs(M[0, 0] - 1.0) > NORM_TOL:
            raise ValueError(f"normalization entry is {M[0, 0]}, not 1 within 1e-12")
        M = 0.5 * (M + M.T)
        labels = tuple(self.labels) if self.labels else tuple(
            f"z[{i}]" for i in range(M.shape[0] - 1)
        )
        if len(labels) != M.shape[0] - 1:
            raise ValueError(f"need {M.shape[0] - 1} labels, got {len(labels)}")
        object.__setattr__(self, "M", _readonly(M))
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.M.shape[0] - 1

    @property
    def linear(self) -> np.ndarray:
        """First-order moments E[z]."""
        return self.M[0, 1:]

    @property
    def quadratic(self) -> np.ndarray:
        """Second-order moments E[z z^T]."""
        return self.M[1:, 1:]

    def to_json(self) -> dict:
        return {"m": self.m, "labels": list(self.labels), "M": self.M.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "MomentMatrix":
        mat = cls(np.array(obj["M"], dtype=float), tuple(obj.get("labels", ())))
        if mat.m != obj["m"]:
            raise ValueError(f"declared m={obj['m']} but matrix has m={mat.m}")
        return mat


@dataclass(frozen=True)
class QuadraticConstraint:
    """f(z) = constant + <linear, z> + z^T quadratic z, with sense
    f = 0 (eq) or f >= 0 (geq)."""

    constant: float
    linear: np.ndarray
    quadratic: np.ndarray
    sense: str
    name: str = ""

    def __post_init__(self) -> None:
        if self.sense not in ("eq", "geq"):
            raise ValueError(f"sense must be 'eq' or 'geq', got {self.sense!r}")
        lin = np.asarray(self.linear, dtype=float)
        quad = np.asarray(self.quadratic, dtype=float)
        if quad.shape != (lin.shape[0], lin.shape[0]):
            raise ValueError("quadratic must be m x m matching the linear part")
        if np.abs(quad - quad.T).max() > SYM_TOL:
            raise ValueError("quadratic part must be symmetric")
        object.__setattr__(self, "linear", _readonly(lin))
        object.__setattr__(self, "quadratic", _readonly(0.5 * (quad + quad.T)))

    def pseudo_expectation(self, mm: MomentMatrix) -> float:
        """Value of the pseudo-expectation of f, a linear functional of M."""
        if mm.m != self.linear.shape[0]:
            raise ValueError(f"constraint over {self.linear.shape[0]} vars, matrix has {mm.m}")
        return float(
            self.constant * mm.M[0, 0]
            + self.linear @ mm.linear
            + np.sum(self.quadratic * mm.quadratic)
        )

    def evaluate(self, z: np.ndarray) -> float:
        return float(self.constant + self.linear @ z + z @ self.quadratic @ z)


def moment_from_distribution(points) -> MomentMatrix:
    """Moment matrix sum w (1,z)(1,z)^T of a weighted point collection.

    Weights must sum to 1 within 1e-9; for nonnegative weights (a true
    distribution) the result is positive semidefinite by construction.
    """
    pts = [(float(w), np.asarray(z, dtype=float)) for w, z in points]
    if not pts:
        raise ValueError("need at least one point")
    total = sum(w for w, _ in pts)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights sum to {total}, not 1 within {WEIGHT_TOL}")
    m = pts[0][1].shape[0]
    M = np.zeros((1 + m, 1 + m))
    for w, z in pts:
        v = np.concatenate([[1.0], z])
        M += w * np.outer(v, v)
    M[0, 0] = 1.0  # absorb weight rounding so normalization is exact
    return MomentMatrix(M)


@dataclass(frozen=True)
class PseudoCheck:
    valid: bool
    reason: str | None = None
    detail: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.valid


def check_pseudo(
    mm: MomentMatrix, constraints=(), tol: float = 1e-9
) -> PseudoCheck:
    """Validity of a degree-2 pseudo-expectation against a constraint set.

    Valid iff the normalization entry is 1, the matrix is PSD up to tol,
    and every constraint's pseudo-expectation satisfies its sense within
    tol. Invalid results carry a certificate: the violating eigenvector,
    or the index and value of the violated constraint.
    """
    if abs(mm.M[0, 0] - 1.0) > tol:
        return PseudoCheck(False, "normalization", {"entry": float(mm.M[0, 0])})
    eigvals, eigvecs = np.linalg.eigh(mm.M)
    if eigvals[0] < -tol:
        return PseudoCheck(
            False,
            "positivity",
            {"eigenvalue": float(eigvals[0]), "eigenvector": eigvecs[:, 0].tolist()},
        )
    for idx, con in enumerate(constraints):
        val = con.pseudo_expectation(mm)
        bad = abs(val) > tol if con.sense == "eq" else val < -tol
        if bad:
            return PseudoCheck(
                False,
                "constraint",
                {"index": idx, "name": con.name, "value": val, "sense": con.sense},
            )
    return PseudoCheck(True)


def pseudo_ce_constraints(
    game: BimatrixGame, T: int, phi: DeviationSet, delta: float | None = None
) -> list[QuadraticConstraint]:
    """Quadratic system whose solutions are the uniform T-sparse
    equilibrium profiles of the game (plus, optionally, a per-player
    utility floor of delta).

    Variables are ordered (x^(1), ..., x^(T), y^(1), ..., y^(T)), so
    m = 2nT. Emits 2T simplex sums (eq), 2nT nonnegativity rows (geq),
    2|phi| deviation-gain constraints (geq; the identity contributes the
    all-zero row), and 2 utility floors when delta is given.
    """
    if phi.n != game.n:
        raise ValueError(f"dimension mismatch: game n={game.n}, phi n={phi.n}")
    if T < 1:
        raise ValueError("T must be >= 1")
    n = game.n
    m = 2 * n * T
    zeros_q = np.zeros((m, m))

    def x_slice(t: int) -> slice:
        return slice(t * n, (t + 1) * n)

    def y_slice(t: int) -> slice:
        return slice((T + t) * n, (T + t + 1) * n)

    out: list[QuadraticConstraint] = []
    for side, sl in (("x", x_slice), ("y", y_slice)):
        for t in range(T):
            lin = np.zeros(m)
            lin[sl(t)] = 1.0
            out.append(QuadraticConstraint(-1.0, lin, zeros_q, "eq", f"sum_{side}{t + 1}"))
    for side, sl in (("x", x_slice), ("y", y_slice)):
        for t in range(T):
            for i in range(n):
                lin = np.zeros(m)
                lin[sl(t).start + i] = 1.0
                out.append(
                    QuadraticConstraint(0.0, lin, zeros_q, "geq", f"nonneg_{side}{t + 1}[{i}]")
                )

    def bilinear(blocks: np.ndarray) -> np.ndarray:
        """Symmetric quadratic form placing `blocks` on every (x_t, y_t)."""
        quad = np.zeros((m, m))
        for t in range(T):
            quad[x_slice(t), y_slice(t)] += 0.5 * blocks / T
            quad[y_slice(t), x_slice(t)] += 0.5 * blocks.T / T
        return quad

    for f, dev in enumerate(phi.devs):
        tbl = np.asarray(dev.table)
        out.append(
            QuadraticConstraint(
                0.0, np.zeros(m), bilinear(game.R - game.R[tbl, :]), "geq",
                f"ce_row_phi{f}",
            )
        )
        out.append(
            QuadraticConstraint(
                0.0, np.zeros(m), bilinear(game.C - game.C[:, tbl]), "geq",
                f"ce_col_phi{f}",
            )
        )
    if delta is not None:
        out.append(
            QuadraticConstraint(-float(delta), np.zeros(m), bilinear(game.R), "geq", "floor_row")
        )
        out.append(
            QuadraticConstraint(-float(delta), np.zeros(m), bilinear(game.C), "geq", "floor_col")
        )
    return out


def lift_is_to_game(Mz: MomentMatrix, k: int, T: int, n: int) -> MomentMatrix:
    """Lift graph-variable moments to game moments of the (2n)-action
    welfare-gap game: every x^(t)/y^(t) block carries z/k on its first n
    coordinates and exact zeros on the last n, so cross-block second
    moments are the z-moments scaled by 1/k^2."""
    if Mz.m != n:
        raise ValueError(f"expected moments over {n} graph variables, got {Mz.m}")
    if abs(Mz.M[0, 0] - 1.0) > WEIGHT_TOL:
        raise ValueError("input normalization broken; cannot lift")
    if k < 1 or T < 1:
        raise ValueError("k and T must be >= 1")
    dim = 2 * n  # actions of the graph game
    m2 = 2 * dim * T
    # src[g] = graph variable behind game variable g, or -1 for padding.
    coords = np.arange(m2) % dim
    src = np.where(coords < n, coords, -1)
    M2 = np.zeros((1 + m2, 1 + m2))
    M2[0, 0] = 1.0
    live = src >= 0
    M2[0, 1:][live] = Mz.linear[src[live]] / k
    M2[1:, 0] = M2[0, 1:]
    quad = np.zeros((m2, m2))
    quad[np.ix_(live, live)] = Mz.quadratic[np.ix_(src[live], src[live])] / (k * k)
    M2[1:, 1:] = quad
    return MomentMatrix(M2, game_variable_labels(dim, T))


def extend_to_stitched(mm: MomentMatrix, n: int) -> MomentMatrix:
    """Extend game moments over n actions to the stitched (2n)-action game
    by padding every block with exact zeros on the bottom-half actions."""
    if mm.m % (2 * n) != 0:
        raise ValueError(f"matrix over {mm.m} vars is not 2nT for n={n}")
    num_blocks = mm.m // n  # = 2T
    dim = 2 * n
    m2 = dim * num_blocks
    g = np.arange(m2)
    coords = g % dim
    blocks = g // dim
    src = np.where(coords < n, blocks * n + coords, -1)
    M2 = np.zeros((1 + m2, 1 + m2))
    M2[0, 0] = 1.0
    live = src >= 0
    M2[0, 1:][live] = mm.linear[src[live]]
    M2[1:, 0] = M2[0, 1:]
    quad = np.zeros((m2, m2))
    quad[np.ix_(live, live)] = mm.quadratic[np.ix_(src[live], src[live])]
    M2[1:, 1:] = quad
    return MomentMatrix(M2, game_variable_labels(dim, num_blocks // 2))
