"""Enumerable deviation families and their action on mixed strategies.

A deviation is a map [n] -> [n]; applying it to a mixed strategy reroutes
probability mass, which is exactly multiplication by the column-stochastic
matrix whose column j is the indicator of the image of j.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .games import MixedStrategy

SWAP_MAX_N = 6  # full swap family has n^n maps

KINDS = ("external", "internal", "phihat", "phi", "swap")


@dataclass(frozen=True)
class Deviation:
    """Action-remapping function, stored in normal form.

    ``table[i]`` is the image of action i. The ``variant``/``params`` pair
    records how the map was built (external target, internal source/target,
    threshold cutoff/target, or the explicit table) for serialization only;
    equality and hashing go through the expanded table.
    """

    table: tuple[int, ...]
    variant: str = field(default="explicit", compare=False)
    params: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        table = tuple(int(i) for i in self.table)
        n = len(table)
        if n < 1 or any(i < 0 or i >= n for i in table):
            raise ValueError(f"table entries must lie in [0, {n}), got {table}")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "params", tuple(int(i) for i in self.params))

    @property
    def n(self) -> int:
        return len(self.table)

    @property
    def is_identity(self) -> bool:
        return all(t == i for i, t in enumerate(self.table))

    @classmethod
    def identity(cls, n: int) -> "Deviation":
        return cls(tuple(range(n)), "explicit", ())

    @classmethod
    def external(cls, target: int, n: int) -> "Deviation":
        return cls((target,) * n, "external", (target,))

    @classmethod
    def internal(cls, source: int, target: int, n: int) -> "Deviation":
        table = list(range(n))
        table[source] = target
        return cls(tuple(table), "internal", (source, target))

    @classmethod
    def threshold(cls, cutoff: int, target: int, n: int) -> "Deviation":
        """Map every action i <= cutoff to ``target``; keep the rest."""
        table = [target if i <= cutoff else i for i in range(n)]
        return cls(tuple(table), "threshold", (cutoff, target))

    @classmethod
    def explicit(cls, table) -> "Deviation":
        return cls(tuple(table), "explicit", tuple(table))

    def to_json(self) -> dict:
        return {"variant": self.variant, "params": list(self.params), "n": self.n}

    @classmethod
    def from_json(cls, obj: dict) -> "Deviation":
        variant, params, n = obj["variant"], obj["params"], obj["n"]
        if variant == "external":
            return cls.external(params[0], n)
        if variant == "internal":
            return cls.internal(params[0], params[1], n)
        if variant == "threshold":
            return cls.threshold(params[0], params[1], n)
        if variant == "explicit":
            if params and len(params) != n:
                raise ValueError("explicit params must list all n images")
            return cls.explicit(params) if params else cls.identity(n)
        raise ValueError(f"unknown deviation variant {variant!r}")


def apply_deviation(dev: Deviation, x: MixedStrategy) -> MixedStrategy:
    """phi(x): reroute mass, output_j = sum over i with phi(i)=j of x_i."""
    if dev.n != x.n:
        raise ValueError(f"dimension mismatch: deviation n={dev.n}, strategy n={x.n}")
    out = np.bincount(np.asarray(dev.table), weights=x.p, minlength=dev.n)
    return MixedStrategy(out)


def as_stochastic_matrix(dev: Deviation) -> np.ndarray:
    """Column-stochastic matrix M with column j equal to e_{phi(j)}."""
    n = dev.n
    M = np.zeros((n, n))
    M[np.asarray(dev.table), np.arange(n)] = 1.0
    return M


@dataclass(frozen=True)
class DeviationSet:
    """Deduplicated family of deviations, always containing the identity."""

    kind: str
    devs: tuple[Deviation, ...]

    def __post_init__(self) -> None:
        devs = tuple(self.devs)
        if not devs:
            raise ValueError("deviation set must be nonempty")
        tables = [d.table for d in devs]
        if len(set(tables)) != len(tables):
            raise ValueError("deviation set contains duplicate maps")
        n = devs[0].n
        if any(d.n != n for d in devs):
            raise ValueError("all deviations must share one dimension")
        if sum(d.is_identity for d in devs) != 1:
            raise ValueError("identity must be present exactly once")
        object.__setattr__(self, "devs", devs)

    @property
    def n(self) -> int:
        return self.devs[0].n

    def __len__(self) -> int:
        return len(self.devs)

    def __iter__(self):
        return iter(self.devs)

    @cached_property
    def tables(self) -> np.ndarray:
        """len(devs) x n integer array of image tables, for batched gathers."""
        a = np.array([d.table for d in self.devs], dtype=np.intp)
        a.setflags(write=False)
        return a

    def map_set(self) -> set[tuple[int, ...]]:
        return {d.table for d in self.devs}


def _dedup(devs) -> tuple[Deviation, ...]:
    seen: set[tuple[int, ...]] = set()
    out = []
    for d in devs:
        if d.table not in seen:
            seen.add(d.table)
            out.append(d)
    return tuple(out)


@lru_cache(maxsize=None)
def enumerate_set(kind: str, n: int) -> DeviationSet:
    """Build one of the named deviation families on [n].

    Results are immutable and cached per (kind, n).

    external: identity plus the n constant maps.
    internal: identity plus the n(n-1) single-source reroutes.
    phihat:   all threshold maps {i -> target if i <= cutoff else i}.
    phi:      phihat united with internal (the working set).
    swap:     all n^n maps; only for n <= 6.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kind = kind.lower()
    if kind not in KINDS:
        raise ValueError(f"unknown deviation family {kind!r}; expected one of {KINDS}")
    ident = Deviation.identity(n)
    if kind == "external":
        devs = [ident] + [Deviation.external(j, n) for j in range(n)]
    elif kind == "internal":
        devs = [ident] + [
            Deviation.internal(s, t, n) for s in range(n) for t in range(n) if s != t
        ]
    elif kind == "phihat":
        devs = [ident] + [
            Deviation.threshold(c, t, n) for c in range(n) for t in range(n)
        ]
    elif kind == "phi":
        devs = (
            [ident]
            + [Deviation.threshold(c, t, n) for c in range(n) for t in range(n)]
            + [Deviation.internal(s, t, n) for s in range(n) for t in range(n) if s != t]
        )
    else:  # swap
        if n > SWAP_MAX_N:
            raise ValueError(f"swap enumeration capped at n <= {SWAP_MAX_N} (n^n maps)")
        devs = [ident] + [
            Deviation.explicit(tbl) for tbl in itertools.product(range(n), repeat=n)
        ]
    return DeviationSet(kind, _dedup(devs))
