"""Builders for the hard game families and their supporting graph
generators: graph-based welfare-gap games, subset-indexed enumeration
families, generalized matching pennies, and the block-stitched combination.

Index conventions are 0-based throughout; subset keys serialize as
comma-joined sorted indices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .games import BimatrixGame, Graph, MixedStrategy, SparseCorrelated

GRAPH_KINDS = ("er-half", "planted-is", "planted-clique")


def subset_key(S) -> str:
    return ",".join(str(i) for i in sorted(set(int(i) for i in S)))


def parse_subset_key(key: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in key.split(",") if tok != "")


@dataclass(frozen=True)
class GameFamily:
    """Ordered, key-indexed collection of same-dimension games."""

    kind: str
    params: dict
    games: tuple[tuple[str, BimatrixGame], ...]

    def __post_init__(self) -> None:
        keys = [k for k, _ in self.games]
        if len(set(keys)) != len(keys):
            raise ValueError("family keys must be unique")
        dims = {g.n for _, g in self.games}
        if len(dims) > 1:
            raise ValueError(f"family games must share one dimension, got {dims}")
        object.__setattr__(self, "games", tuple(self.games))

    def __len__(self) -> int:
        return len(self.games)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.games)

    def game(self, key: str) -> BimatrixGame:
        for k, g in self.games:
            if k == key:
                return g
        raise KeyError(key)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "keys": list(self.keys),
            "games": [g.to_json() for _, g in self.games],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GameFamily":
        games = tuple(
            (key, BimatrixGame.from_json(gj))
            for key, gj in zip(obj["keys"], obj["games"])
        )
        return cls(obj["kind"], dict(obj["params"]), games)


@dataclass(frozen=True)
class StitchParams:
    """Parameters of the block-stitched game and its dichotomy lemmas."""

    delta: float
    k: float
    gamma: float = 1e-3
    k_is: int = 1
    T: int = 1

    def __post_init__(self) -> None:
        if not (0.0 < self.delta < 0.5):
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")
        if self.k < 1.0:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.k_is < 1 or self.T < 1:
            raise ValueError("k_is and T must be >= 1")


def independent_set_game(
    g: Graph, k: float, gamma: float, rescale: bool = False
) -> BimatrixGame:
    """(2n) x (2n) welfare-gap game of a graph's independent-set structure.

    Both payoffs share the top-left block (1 - A + (gamma+1) I)/2; the
    off-diagonal blocks are the antisymmetric +-(k/2) I punishment coupling
    and the bottom-right block is zero. ``rescale`` divides everything by k
    so the entries land in [-1, 1].
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    n = g.n
    top = 0.5 * (np.ones((n, n)) - g.adj + (gamma + 1.0) * np.eye(n))
    half_k = 0.5 * k * np.eye(n)
    zero = np.zeros((n, n))
    R = np.block([[top, -half_k], [half_k, zero]])
    C = np.block([[top, half_k], [-half_k, zero]])
    label = f"independent-set-game(n={n}, k={k}, gamma={gamma})"
    if rescale:
        R, C = R / k, C / k
        label += " rescaled 1/k"
    return BimatrixGame(R, C, label)


def clique_game(g: Graph, k: float, gamma: float, rescale: bool = False) -> BimatrixGame:
    """Clique variant: the top-left block uses A - I in place of 1 - A."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    n = g.n
    top = 0.5 * (g.adj - np.eye(n) + (gamma + 1.0) * np.eye(n))
    half_k = 0.5 * k * np.eye(n)
    zero = np.zeros((n, n))
    R = np.block([[top, -half_k], [half_k, zero]])
    C = np.block([[top, half_k], [-half_k, zero]])
    label = f"clique-game(n={n}, k={k}, gamma={gamma})"
    if rescale:
        R, C = R / k, C / k
        label += " rescaled 1/k"
    return BimatrixGame(R, C, label)


def planted_profile(S, n2: int, T: int = 1) -> SparseCorrelated:
    """T identical copies of (u(S) zero-padded, u(S) zero-padded) in
    dimension n2; S must sit inside the top half."""
    S = sorted(set(int(i) for i in S))
    if not S:
        raise ValueError("S must be nonempty")
    if S[0] < 0 or S[-1] >= n2 // 2:
        raise ValueError(f"S={S} must lie in the top block [0, {n2 // 2})")
    u = MixedStrategy.uniform_on(S, n2)
    return SparseCorrelated.product(u, u, T)


def enumhard_low_game(ell: int, S) -> BimatrixGame:
    """Subset-indexed enumeration game in the constant-precision regime.

    The action count is n = C(ell, ell/2); columns index the size-ell/2
    subsets of S in lexicographic order. Rows outside S are strictly
    dominated (-1 for the row player, +1 for the column player); inside S
    the row player scores 1 exactly on the subset hits, making the S-rows
    sub-game 1-sum.
    """
    if ell % 2 != 0 or ell < 2:
        raise ValueError(f"ell must be even and >= 2, got {ell}")
    n = math.comb(ell, ell // 2)
    S = sorted(set(int(i) for i in S))
    if len(S) != ell:
        raise ValueError(f"|S| must equal ell={ell}, got {len(S)}")
    if S[0] < 0 or S[-1] >= n:
        raise ValueError(f"S={S} out of range for n={n}")
    columns = list(itertools.combinations(S, ell // 2))
    R = np.zeros((n, n))
    C = np.zeros((n, n))
    in_S = np.zeros(n, dtype=bool)
    in_S[S] = True
    R[~in_S, :] = -1.0
    C[~in_S, :] = 1.0
    for j, Sj in enumerate(columns):
        hits = np.asarray(Sj)
        R[hits, j] = 1.0
        misses = [i for i in S if i not in Sj]
        C[misses, j] = 1.0
    return BimatrixGame(R, C, f"enumhard-low(ell={ell}, S={{{subset_key(S)}}})")


def uniform_l1_distance(S: tuple[int, ...], S2: tuple[int, ...]) -> float:
    """L1 distance between the uniform distributions on two subsets."""
    a, b = set(S), set(S2)
    d = sum(abs(1.0 / len(a) * (i in a) - 1.0 / len(b) * (i in b)) for i in a | b)
    return d


def enumhard_low_family(
    ell: int, packed: bool = False, min_l1: float = 0.0
) -> GameFamily:
    """All size-ell subset games; ``packed`` greedily keeps a subfamily
    whose uniform distributions are pairwise min_l1 apart in L1."""
    if ell % 2 != 0 or ell > 8:
        raise ValueError(f"ell must be even and <= 8 at desk scale, got {ell}")
    n = math.comb(ell, ell // 2)
    subsets = list(itertools.combinations(range(n), ell))
    if packed:
        kept: list[tuple[int, ...]] = []
        for S in subsets:
            if all(uniform_l1_distance(S, S2) >= min_l1 for S2 in kept):
                kept.append(S)
        subsets = kept
    games = tuple((subset_key(S), enumhard_low_game(ell, S)) for S in subsets)
    return GameFamily(
        "enumhard-low",
        {"ell": ell, "n": n, "packed": packed, "min_l1": min_l1},
        games,
    )


def generalized_matching_pennies(m: int, shifted: bool = False) -> BimatrixGame:
    """(I_m, -I_m); the shifted variant adds 1/2 - 1/m to the row player
    and 1/2 + 1/m to the column player, giving a 1-sum game of value 1/2."""
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    R = np.eye(m)
    C = -np.eye(m)
    if shifted:
        R = R + (0.5 - 1.0 / m)
        C = C + (0.5 + 1.0 / m)
    return BimatrixGame(R, C, f"matching-pennies(m={m}, shifted={shifted})")


def enumhard_high_game(n: int, S) -> BimatrixGame:
    """Subset-indexed enumeration game in the high-precision regime.

    Outside S x S both players get -1 (with one-sided 1/2 rewards on the
    mixed quadrants); on S x S the players face shifted matching pennies of
    dimension |S|. For |S| = 1 the degenerate pennies block is the single
    entry (1/2, 1/2), which keeps the block 1-sum with value 1/2.
    """
    S = sorted(set(int(i) for i in S))
    if not S:
        raise ValueError("S must be nonempty")
    if S[0] < 0 or S[-1] >= n:
        raise ValueError(f"S={S} out of range for n={n}")
    m = len(S)
    R = np.full((n, n), -1.0)
    C = np.full((n, n), -1.0)
    in_S = np.zeros(n, dtype=bool)
    in_S[S] = True
    R[np.ix_(in_S, ~in_S)] = 0.5
    C[np.ix_(~in_S, in_S)] = 0.5
    block_r = np.eye(m) + (0.5 - 1.0 / m)
    block_c = -np.eye(m) + (0.5 + 1.0 / m)
    R[np.ix_(S, S)] = block_r
    C[np.ix_(S, S)] = block_c
    return BimatrixGame(R, C, f"enumhard-high(n={n}, S={{{subset_key(S)}}})")


def enumhard_high_family(n: int) -> GameFamily:
    """One game per nonempty subset of [n] (2^n - 1 games), ordered by
    cardinality then lexicographically."""
    if n < 1 or n > 12:
        raise ValueError(f"n must lie in [1, 12] at desk scale, got {n}")
    subsets = [
        S for r in range(1, n + 1) for S in itertools.combinations(range(n), r)
    ]
    games = tuple((subset_key(S), enumhard_high_game(n, S)) for S in subsets)
    return GameFamily("enumhard-high", {"n": n}, games)


def stitch_scale(params: StitchParams, normalize: bool) -> float:
    return max(params.k, 1.0) if normalize else 1.0


def stitched_game(
    sos: BimatrixGame,
    enum: BimatrixGame,
    params: StitchParams,
    normalize: bool = False,
) -> BimatrixGame:
    """Stitch a welfare-gap game and an enumeration game into one
    (2n) x (2n) game.

    Row payoffs: [[sos.R, -k 1], [delta 1, enum.R]]; column payoffs:
    [[sos.C, delta 1], [-k 1, enum.C]]. Inputs must already be in [-1, 1];
    ``normalize`` divides the result by max(k, 1) (scale recorded in the
    label) so the stitched game is in [-1, 1] too.
    """
    if sos.n != enum.n:
        raise ValueError(f"block dimension mismatch: {sos.n} vs {enum.n}")
    for name, game in (("sos", sos), ("enum", enum)):
        lo, hi = game.utility_range()
        if lo < -1.0 - 1e-12 or hi > 1.0 + 1e-12:
            raise ValueError(f"{name} payoffs must be in [-1, 1], got [{lo}, {hi}]")
    n = sos.n
    ones = np.ones((n, n))
    R = np.block([[sos.R, -params.k * ones], [params.delta * ones, enum.R]])
    C = np.block([[sos.C, params.delta * ones], [-params.k * ones, enum.C]])
    scale = stitch_scale(params, normalize)
    label = (
        f"stitched(delta={params.delta}, k={params.k}, scale={scale}; "
        f"sos={sos.label!r}, enum={enum.label!r})"
    )
    return BimatrixGame(R / scale, C / scale, label)


def random_graph(
    n: int, kind: str, seed: int, k: int | None = None
) -> tuple[Graph, tuple[int, ...] | None]:
    """Seeded random graph with an optional planted structure.

    er-half: each edge is an independent fair coin. planted-is /
    planted-clique additionally force a k-node edgeless (complete) subset,
    with fair-coin edges everywhere else. The planted set is returned and
    guaranteed by construction; the diagonal is always 1.
    """
    if kind not in GRAPH_KINDS:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    adj[iu] = rng.integers(0, 2, size=iu[0].shape[0])
    adj = adj + adj.T
    np.fill_diagonal(adj, 1.0)
    planted: tuple[int, ...] | None = None
    if kind != "er-half":
        if k is None or k > n or k < 1:
            raise ValueError(f"planted kinds need 1 <= k <= n, got k={k}")
        nodes = np.sort(rng.choice(n, size=k, replace=False))
        planted = tuple(int(i) for i in nodes)
        fill = 1.0 if kind == "planted-clique" else 0.0
        adj[np.ix_(nodes, nodes)] = fill
        np.fill_diagonal(adj, 1.0)
    return Graph(adj), planted
