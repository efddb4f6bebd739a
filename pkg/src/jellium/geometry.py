"""Strip geometry and configurations of discretized closed Brownian paths.

The ambient space is the strip S = R x [0,1)^k with the cross-section
treated as a torus.  A Bridge is a closed path of duration beta sampled on a
uniform time grid and stored as (start, increments); shifting a configuration
therefore never touches path data.  A Config is a finite, canonically ordered
collection of bridges with pairwise distinct starting points, which makes
set-equality decidable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyErosion


@dataclass(frozen=True)
class StripParams:
    """Global model parameters: cross-section dimension, duration, smearing."""

    k: int = 1
    beta: float = 1.0
    eta: float = 0.1
    n_time: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0.0 < self.eta < 0.25):
            raise ValueError("eta must lie in (0, 1/4)")
        if self.n_time < 2:
            raise ValueError("n_time must be >= 2")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def dim(self) -> int:
        return self.k + 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.beta, self.n_time)


@dataclass(frozen=True, order=True)
class BoxDomain:
    """Axis-aligned window [x_lo, x_hi] x D with integer endpoints."""

    x_lo: int
    x_hi: int

    def __post_init__(self):
        if int(self.x_lo) != self.x_lo or int(self.x_hi) != self.x_hi:
            raise ValueError("box endpoints must be integers")
        if self.x_lo >= self.x_hi:
            raise ValueError("x_lo must be < x_hi")

    @property
    def length(self) -> int:
        return self.x_hi - self.x_lo

    def shifted(self, j: int) -> "BoxDomain":
        return BoxDomain(self.x_lo - j, self.x_hi - j)

    def contains_x(self, x: float) -> bool:
        """Half-open membership [x_lo, x_hi); keeps block partitions disjoint."""
        return self.x_lo <= x < self.x_hi


def erode(dom: BoxDomain) -> tuple[float, float]:
    """[L-, L+] -> [L- + ceil(L^{7/8}), L+ - ceil(L^{7/8})] as a closed x-interval."""
    margin = math.ceil(dom.length ** 0.875)
    lo = dom.x_lo + margin
    hi = dom.x_hi - margin
    if hi <= lo:
        raise EmptyErosion(f"eroding [{dom.x_lo}, {dom.x_hi}] by {margin} leaves nothing")
    return (lo, hi)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Bridge:
    """Closed path: start in S plus per-node increments, first and last zero."""

    start: np.ndarray          # shape (k+1,)
    increments: np.ndarray     # shape (n_time, k+1), rows 0 and -1 are zero

    def __post_init__(self):
        object.__setattr__(self, "start", _as_readonly(self.start))
        object.__setattr__(self, "increments", _as_readonly(self.increments))
        if self.increments.ndim != 2 or self.increments.shape[1] != self.start.shape[0]:
            raise ValueError("increments must be (n_time, dim) matching start")
        if self.increments.shape[0] < 2:
            raise ValueError("need at least two time nodes")
        if np.max(np.abs(self.increments[0])) != 0.0 or np.max(np.abs(self.increments[-1])) != 0.0:
            raise ValueError("bridge must close: first and last increments are zero")

    @property
    def n_time(self) -> int:
        return self.increments.shape[0]

    @property
    def dim(self) -> int:
        return self.start.shape[0]

    @property
    def start_x(self) -> float:
        return float(self.start[0])

    def nodes(self) -> np.ndarray:
        """Path positions at the time nodes, y-coordinates unwrapped."""
        return self.start[None, :] + self.increments

    def x_nodes(self) -> np.ndarray:
        return self.start[0] + self.increments[:, 0]

    def psi(self) -> float:
        """Maximal x-excursion from the starting point (exact on polylines)."""
        return float(np.max(np.abs(self.increments[:, 0])))

    def x_range(self) -> tuple[float, float]:
        xs = self.x_nodes()
        return (float(xs.min()), float(xs.max()))

    def min_x_distance(self, x0: float) -> float:
        """inf_t |b_x(t) - x0| for the piecewise-linear path."""
        xs = self.x_nodes() - x0
        if np.any(xs[:-1] * xs[1:] <= 0.0):
            return 0.0
        return float(np.min(np.abs(xs)))

    def translated(self, j: float) -> "Bridge":
        new_start = self.start.copy()
        new_start[0] -= j
        return Bridge(new_start, self.increments)

    def sort_key(self) -> tuple:
        return tuple(self.start)


class Config:
    """Finite bridge collection, canonically ordered by starting point."""

    __slots__ = ("bridges",)

    def __init__(self, bridges: Iterable[Bridge]):
        ordered = tuple(sorted(bridges, key=Bridge.sort_key))
        starts = [b.sort_key() for b in ordered]
        if len(set(starts)) != len(starts):
            raise ValueError("starting points must be pairwise distinct")
        object.__setattr__(self, "bridges", ordered)

    def __setattr__(self, *a):
        raise AttributeError("Config is immutable")

    def __len__(self) -> int:
        return len(self.bridges)

    def __iter__(self):
        return iter(self.bridges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Config) or len(self) != len(other):
            return NotImplemented if not isinstance(other, Config) else False
        return all(
            np.array_equal(a.start, b.start) and np.array_equal(a.increments, b.increments)
            for a, b in zip(self.bridges, other.bridges)
        )

    def __repr__(self) -> str:
        return f"Config(n={len(self)})"

    def starts(self) -> np.ndarray:
        if not self.bridges:
            return np.zeros((0, 1))
        return np.array([b.start for b in self.bridges])

    def start_xs(self) -> np.ndarray:
        if not self.bridges:
            return np.zeros(0)
        return np.array([b.start_x for b in self.bridges])

    def points_at(self, j: int) -> np.ndarray:
        """Positions of all bridges at time node j, y unwrapped."""
        if not self.bridges:
            return np.zeros((0, 1))
        return np.array([b.start + b.increments[j] for b in self.bridges])

    def n_time(self) -> int:
        if not self.bridges:
            return 0
        ns = {b.n_time for b in self.bridges}
        if len(ns) != 1:
            raise ValueError("bridges carry different time grids")
        return ns.pop()

    def union(self, other: "Config") -> "Config":
        return Config(self.bridges + other.bridges)


def shift(config: Config, j: int) -> Config:
    """Translate every bridge by (-j, 0); a group action on configurations."""
    return Config(b.translated(j) for b in config)


def project(config: Config, dom: BoxDomain) -> Config:
    """Keep bridges whose start lies in [x_lo, x_hi) x D."""
    return Config(b for b in config if dom.contains_x(b.start_x))


def is_neutral(config: Config, dom: BoxDomain) -> bool:
    return len(project(config, dom)) == dom.length


def in_theta(config: Config, K: BoxDomain, eroded: tuple[float, float] | None = None) -> bool:
    """True iff every bridge starting outside K keeps its x-path off the eroded core.

    Start membership is tested against the closed interval [x_lo, x_hi] (the
    erosion bound counts windows this way); projection elsewhere stays
    half-open.  Only x-coordinates matter.
    """
    if eroded is None:
        eroded = erode(K)
    lo, hi = eroded
    for b in config:
        if K.x_lo <= b.start_x <= K.x_hi:
            continue
        xmin, xmax = b.x_range()
        if xmax >= lo and xmin <= hi:
            return False
    return True


def constant_bridge(x: float, y, n_time: int, k: int = 1) -> Bridge:
    """Time-constant bridge (straight line) at the given point."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape[0] != k:
        raise ValueError("y must have k components")
    start = np.concatenate(([float(x)], y))
    return Bridge(start, np.zeros((n_time, k + 1)))


def lattice_config(dom: BoxDomain, n_time: int, k: int = 1, offset: float = 0.5) -> Config:
    """One constant bridge per unit cell at (i + offset, 0)."""
    return Config(
        constant_bridge(dom.x_lo + i + offset, np.zeros(k), n_time, k)
        for i in range(dom.length)
    )


# --- serialization ---------------------------------------------------------

def config_to_json(config: Config, params: StripParams) -> str:
    payload = {
        "k": params.k,
        "beta": params.beta,
        "n_time": params.n_time,
        "bridges": [
            {"start": list(b.start), "increments": [list(row) for row in b.increments]}
            for b in config
        ],
    }
    return json.dumps(payload)


def config_from_json(text: str) -> tuple[Config, StripParams]:
    payload = json.loads(text)
    params = StripParams(
        k=int(payload["k"]),
        beta=float(payload["beta"]),
        n_time=int(payload["n_time"]),
    )
    bridges = [
        Bridge(np.array(b["start"], dtype=float), np.array(b["increments"], dtype=float))
        for b in payload["bridges"]
    ]
    return Config(bridges), params
