"""Reference measures: binomial and Poisson bridge processes on a window."""
from __future__ import annotations

import numpy as np

from .geometry import Bridge, BoxDomain, Config, StripParams


def bridge_increments(rng: np.random.Generator, params: StripParams) -> np.ndarray:
    """Sample closed-path increments on the uniform time grid.

    Forward recursion per coordinate,
        B(t_{j+1}) = B(t_j) (1 - dt/(beta - t_j)) + N(0, dt (beta - t_j - dt)/(beta - t_j)),
    which is exact at the nodes; closure at t = beta is exact by construction.
    """
    n, dim = params.n_time, params.dim
    beta = params.beta
    dt = beta / (n - 1)
    out = np.zeros((n, dim))
    for j in range(n - 2):
        t = j * dt
        shrink = 1.0 - dt / (beta - t)
        var = dt * (beta - t - dt) / (beta - t)
        out[j + 1] = out[j] * shrink + rng.normal(0.0, np.sqrt(var), size=dim)
    out[n - 1] = 0.0
    return out


def _uniform_starts(rng: np.random.Generator, n: int, dom: BoxDomain, k: int) -> np.ndarray:
    xs = rng.uniform(dom.x_lo, dom.x_hi, size=n)
    ys = rng.uniform(0.0, 1.0, size=(n, k))
    return np.column_stack([xs, ys])


def sample_binomial(rng: np.random.Generator, N: int, params: StripParams,
                    dom: BoxDomain | None = None) -> Config:
    """N independent bridges with uniform starts on dom (default [0, N] x D)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if dom is None:
        dom = BoxDomain(0, N)
    starts = _uniform_starts(rng, N, dom, params.k)
    return Config(Bridge(s, bridge_increments(rng, params)) for s in starts)


def sample_poisson(rng: np.random.Generator, dom: BoxDomain, intensity: float,
                   params: StripParams) -> Config:
    """Homogeneous Poisson starts on dom marked with independent bridges."""
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    n = rng.poisson(intensity * dom.length)
    if n == 0:
        return Config([])
    starts = _uniform_starts(rng, n, dom, params.k)
    return Config(Bridge(s, bridge_increments(rng, params)) for s in starts)
