"""Core game-theoretic value types: bimatrix games, mixed strategies,
sparse/dense correlated distributions, graphs, and welfare arithmetic.

All types are immutable after construction (backing arrays are marked
read-only) and validated eagerly, so downstream code can assume simplex
and shape invariants instead of re-checking them at every use site.
Probabilities are plain float64; negative dust above -1e-12 is clamped to
zero at construction and the vector renormalized.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

NEG_DUST = 1e-12
SUM_TOL = 1e-9


class Player(enum.Enum):
    ROW = "row"
    COL = "col"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BimatrixGame:
    """Two-player normal-form game with payoff matrices for the row and
    column player and a free-form provenance label."""

    R: np.ndarray
    C: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 1:
            raise ValueError(f"R must be square with n >= 1, got shape {R.shape}")
        if C.shape != R.shape:
            raise ValueError(f"R and C shapes differ: {R.shape} vs {C.shape}")
        if not (np.isfinite(R).all() and np.isfinite(C).all()):
            raise ValueError("payoff matrices must be finite")
        object.__setattr__(self, "R", _readonly(R))
        object.__setattr__(self, "C", _readonly(C))

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def utility_range(self) -> tuple[float, float]:
        """(min, max) over all entries of both payoff matrices."""
        return (
            float(min(self.R.min(), self.C.min())),
            float(max(self.R.max(), self.C.max())),
        )

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "R": self.R.tolist(),
            "C": self.C.tolist(),
            "label": self.label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BimatrixGame":
        game = cls(np.array(obj["R"]), np.array(obj["C"]), obj.get("label", ""))
        if game.n != obj["n"]:
            raise ValueError(f"declared n={obj['n']} but matrices are {game.n}x{game.n}")
        return game


@dataclass(frozen=True)
class MixedStrategy:
    """Probability vector on n actions (point of the simplex).

    Entries below -1e-12 are rejected; dust in [-1e-12, 0) is clamped to
    zero; the sum must be 1 within 1e-9 and the vector is renormalized.
    """

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float).copy()
        if p.ndim != 1 or p.size < 1:
            raise ValueError(f"strategy must be a nonempty vector, got shape {p.shape}")
        if not np.isfinite(p).all():
            raise ValueError("strategy entries must be finite")
        if p.min() < -NEG_DUST:
            raise ValueError(f"negative probability {p.min()} below -{NEG_DUST}")
        np.clip(p, 0.0, None, out=p)
        s = p.sum()
        if abs(s - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {s}, not 1 within {SUM_TOL}")
        p /= s
        object.__setattr__(self, "p", _readonly(p))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @classmethod
    def point(cls, i: int, n: int) -> "MixedStrategy":
        """Point mass e_i on action i."""
        p = np.zeros(n)
        p[i] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n: int) -> "MixedStrategy":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def uniform_on(cls, support: Iterable[int], n: int) -> "MixedStrategy":
        """Uniform distribution over a subset of actions."""
        idx = sorted(set(int(i) for i in support))
        if not idx:
            raise ValueError("support must be nonempty")
        if idx[0] < 0 or idx[-1] >= n:
            raise ValueError(f"support {idx} out of range for n={n}")
        p = np.zeros(n)
        p[idx] = 1.0 / len(idx)
        return cls(p)


@dataclass(frozen=True)
class SparseCorrelated:
    """Uniform mixture of T product distributions x^(t) (x) y^(t)."""

    xs: tuple[MixedStrategy, ...]
    ys: tuple[MixedStrategy, ...]

    def __post_init__(self) -> None:
        xs = tuple(self.xs)
        ys = tuple(self.ys)
        if len(xs) != len(ys) or len(xs) < 1:
            raise ValueError(f"need equal-length nonempty xs/ys, got {len(xs)}/{len(ys)}")
        if any(s.n != xs[0].n for s in xs) or any(s.n != ys[0].n for s in ys):
            raise ValueError("components must share one dimension per side")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def T(self) -> int:
        return len(self.xs)

    @property
    def nx(self) -> int:
        return self.xs[0].n

    @property
    def ny(self) -> int:
        return self.ys[0].n

    @property
    def n(self) -> int:
        """Common action count; defined only when both sides agree (always
        the case except for distributions conditioned on non-square blocks)."""
        if self.nx != self.ny:
            raise ValueError(f"sides have different dimensions ({self.nx} vs {self.ny})")
        return self.nx

    @cached_property
    def X(self) -> np.ndarray:
        """T x n array stacking the row-player components."""
        return _readonly(np.stack([x.p for x in self.xs]))

    @cached_property
    def Y(self) -> np.ndarray:
        return _readonly(np.stack([y.p for y in self.ys]))

    @classmethod
    def from_arrays(cls, X: np.ndarray, Y: np.ndarray) -> "SparseCorrelated":
        return cls(
            tuple(MixedStrategy(x) for x in np.atleast_2d(X)),
            tuple(MixedStrategy(y) for y in np.atleast_2d(Y)),
        )

    @classmethod
    def product(cls, x: MixedStrategy, y: MixedStrategy, T: int = 1) -> "SparseCorrelated":
        """T identical copies of a single product distribution."""
        return cls((x,) * T, (y,) * T)

    def to_json(self) -> dict:
        return {"T": self.T, "xs": self.X.tolist(), "ys": self.Y.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SparseCorrelated":
        dist = cls.from_arrays(np.array(obj["xs"]), np.array(obj["ys"]))
        if dist.T != obj["T"]:
            raise ValueError(f"declared T={obj['T']} but got {dist.T} components")
        return dist


@dataclass(frozen=True)
class DenseCorrelated:
    """Joint distribution on [n] x [n] as an explicit probability matrix."""

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float).copy()
        if m.ndim != 2:
            raise ValueError(f"joint matrix must be 2-d, got {m.shape}")
        if m.min() < -NEG_DUST:
            raise ValueError(f"negative probability {m.min()} below -{NEG_DUST}")
        np.clip(m, 0.0, None, out=m)
        s = m.sum()
        if abs(s - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {s}, not 1 within {SUM_TOL}")
        m /= s
        object.__setattr__(self, "m", _readonly(m))

    @property
    def n(self) -> int:
        if self.m.shape[0] != self.m.shape[1]:
            raise ValueError(f"joint matrix is not square: {self.m.shape}")
        return self.m.shape[0]


@dataclass(frozen=True)
class Graph:
    """Undirected graph as a symmetric 0/1 adjacency matrix with unit
    diagonal (self-loops are the convention used by the game builders)."""

    adj: np.ndarray

    def __post_init__(self) -> None:
        adj = np.asarray(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if not np.isin(adj, (0.0, 1.0)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if not np.array_equal(np.diag(adj), np.ones(adj.shape[0])):
            raise ValueError("diagonal entries must all be 1")
        object.__setattr__(self, "adj", _readonly(adj))

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def has_edge(self, i: int, j: int) -> bool:
        return i != j and self.adj[i, j] == 1.0

    def is_independent(self, nodes: Iterable[int]) -> bool:
        idx = sorted(set(nodes))
        return all(not self.has_edge(i, j) for a, i in enumerate(idx) for j in idx[a + 1 :])

    def is_clique(self, nodes: Iterable[int]) -> bool:
        idx = sorted(set(nodes))
        return all(self.has_edge(i, j) for a, i in enumerate(idx) for j in idx[a + 1 :])

    def complement(self) -> "Graph":
        n = self.n
        adj = 1.0 - self.adj
        np.fill_diagonal(adj, 1.0)
        return Graph(adj)

    def to_json(self) -> dict:
        return {"n": self.n, "adj": self.adj.astype(int).tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Graph":
        g = cls(np.array(obj["adj"], dtype=float))
        if g.n != obj["n"]:
            raise ValueError(f"declared n={obj['n']} but adjacency is {g.n}x{g.n}")
        return g


def expected_utility(
    game: BimatrixGame, x: MixedStrategy, y: MixedStrategy, player: Player
) -> float:
    """Expected utility <x, R y> (row) or <x, C y> (column)."""
    if x.n != game.n or y.n != game.n:
        raise ValueError(f"dimension mismatch: game n={game.n}, x n={x.n}, y n={y.n}")
    M = game.R if player is Player.ROW else game.C
    return float(x.p @ M @ y.p)


def social_welfare(game: BimatrixGame, dist: SparseCorrelated | DenseCorrelated) -> float:
    """Expected sum of both players' utilities under the distribution."""
    if dist.n != game.n:
        raise ValueError(f"dimension mismatch: game n={game.n}, dist n={dist.n}")
    W = game.R + game.C
    if isinstance(dist, DenseCorrelated):
        return float(np.sum(dist.m * W))
    return float(np.mean([x.p @ W @ y.p for x, y in zip(dist.xs, dist.ys)]))


def marginal_average(dist: SparseCorrelated, player: Player) -> MixedStrategy:
    """Coordinate-wise average of the per-component strategies."""
    comps = dist.X if player is Player.ROW else dist.Y
    return MixedStrategy(comps.mean(axis=0))


def densify(dist: SparseCorrelated) -> DenseCorrelated:
    """Materialize the sparse mixture as an explicit joint matrix."""
    m = np.zeros((dist.nx, dist.ny))
    for x, y in zip(dist.xs, dist.ys):
        m += np.outer(x.p, y.p)
    return DenseCorrelated(m / dist.T)


def shift_rescale(
    game: BimatrixGame,
    scale_r: float = 1.0,
    shift_r: float = 0.0,
    scale_c: float = 1.0,
    shift_c: float = 0.0,
) -> BimatrixGame:
    """Entrywise affine transform of both payoff matrices.

    Equilibrium sets are invariant under shifts and positive scaling; the
    approximation parameter of an epsilon-equilibrium rescales with the
    scale factor.
    """
    if scale_r <= 0 or scale_c <= 0:
        raise ValueError(f"scales must be positive, got {scale_r}, {scale_c}")
    if scale_r == 1.0 and shift_r == 0.0 and scale_c == 1.0 and shift_c == 0.0:
        return game
    return BimatrixGame(
        scale_r * game.R + shift_r,
        scale_c * game.C + shift_c,
        label=game.label,
    )


def sparse_from_dense(dist: DenseCorrelated, T: int) -> SparseCorrelated:
    """Re-express a dense joint distribution as a uniform T-sparse mixture
    of point products.

    Exact only when every cell mass is an integer multiple of 1/T (within
    1e-9); components are emitted in row-major cell order.
    """
    counts = dist.m * T
    rounded = np.rint(counts)
    if np.abs(counts - rounded).max() > 1e-9 * T:
        raise ValueError(
            f"cell masses are not multiples of 1/{T}; max deviation "
            f"{np.abs(counts - rounded).max() / T:.3e}"
        )
    if int(rounded.sum()) != T:
        raise ValueError(f"rounded cell counts sum to {int(rounded.sum())}, not {T}")
    n = dist.n
    xs, ys = [], []
    for i in range(n):
        for j in range(n):
            for _ in range(int(rounded[i, j])):
                xs.append(MixedStrategy.point(i, n))
                ys.append(MixedStrategy.point(j, n))
    return SparseCorrelated(tuple(xs), tuple(ys))


def write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
