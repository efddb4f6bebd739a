"""Coupled sampling of Poisson- and Binomial-marginal bridge ensembles.

A fair coin mixes an independent coupling with a dependent one.  Under the
dependent branch the labeled interior points of the Poisson sample are pushed
through a keep/resample kernel while their bridge marks are shared, and the
index list is topped up with fresh uniform bridges; the resulting second
marginal is exactly the R-bridge process with uniform starts provided the
global-resample weight is (delta - 12 eps)/(1 - 12 eps), the unique value for
which the per-index start density is uniform.  The source's printed weight
(delta - 12 eps R)/(1 - 12 eps R) is used instead whenever it is a valid
probability; which one ran is recorded on the parameter object.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import Bridge, BoxDomain, Config, StripParams, constant_bridge, lattice_config
from .sampling import bridge_increments, sample_binomial, sample_poisson


@dataclass(frozen=True)
class CouplingParams:
    R: int
    delta: float
    eps: float
    M: float = 4.0

    def __post_init__(self):
        if not (0.0 < self.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")
        if self.collar_measure >= self.R:
            raise ValueError("collar swallows the window; reduce eps")
        if self.delta <= 12.0 * self.eps and not self.printed_delta1_valid:
            raise ValueError("no valid resampling split: need delta > 12 eps")

    @property
    def collar_measure(self) -> float:
        return 12.0 * self.eps * self.R

    @property
    def inner(self) -> tuple[float, float]:
        return (6.0 * self.eps * self.R, self.R - 6.0 * self.eps * self.R)

    @property
    def printed_delta1(self) -> float:
        c = self.collar_measure
        return (self.delta - c) / (1.0 - c) if c != 1.0 else float("nan")

    @property
    def printed_delta1_valid(self) -> bool:
        d1 = self.printed_delta1
        return math.isfinite(d1) and 0.0 <= d1 <= self.delta

    @property
    def delta1(self) -> float:
        if self.printed_delta1_valid:
            return self.printed_delta1
        return (self.delta - 12.0 * self.eps) / (1.0 - 12.0 * self.eps)

    @property
    def delta1_source(self) -> str:
        return "printed" if self.printed_delta1_valid else "marginal-exact"

    def kernel_weights_rational(self) -> tuple[Fraction, Fraction, Fraction]:
        """(keep, global, collar) masses of the start kernel, exact."""
        delta = Fraction(self.delta)
        eps = Fraction(self.eps)
        if self.printed_delta1_valid:
            c = 12 * eps * self.R
            d1 = (delta - c) / (1 - c)
        else:
            d1 = (delta - 12 * eps) / (1 - 12 * eps)
        return (1 - delta, d1, delta - d1)


@dataclass
class CoupledPair:
    omega_p: Config
    omega_b: Config
    branch: str                      # "independent" | "dependent"
    labels: list                     # per omega_b index, aligned with zb order
    zb: np.ndarray                   # (R, k+1) second-marginal starts
    zp_labeled: np.ndarray           # (n_labeled, k+1) interior first-marginal starts


def _uniform_collar(rng: np.random.Generator, params: CouplingParams, k: int) -> np.ndarray:
    half = params.collar_measure / 2.0
    u = rng.uniform(0.0, params.collar_measure)
    x = u if u < half else params.R - params.collar_measure + u
    return np.concatenate([[x], rng.uniform(0.0, 1.0, size=k)])


def sample_coupled(rng: np.random.Generator, params: CouplingParams,
                   strip: StripParams) -> CoupledPair:
    """One draw of the mixture coupling."""
    R = params.R
    dom = BoxDomain(0, R)
    if rng.random() < 0.5:
        omega_p = sample_poisson(rng, dom, 1.0, strip)
        omega_b = sample_binomial(rng, R, strip, dom=dom)
        zb = omega_b.starts()
        return CoupledPair(omega_p, omega_b, "independent", ["fresh"] * R, zb,
                           np.zeros((0, strip.dim)))

    a, b = params.inner
    n_inner = rng.poisson(R - params.collar_measure)
    zp = np.column_stack([rng.uniform(a, b, size=n_inner),
                          rng.uniform(0.0, 1.0, size=(n_inner, strip.k))]) \
        if n_inner else np.zeros((0, strip.dim))
    marks = [bridge_increments(rng, strip) for _ in range(n_inner)]
    collar_n = rng.poisson(params.collar_measure)
    collar = [Bridge(_uniform_collar(rng, params, strip.k), bridge_increments(rng, strip))
              for _ in range(collar_n)]
    omega_p = Config([Bridge(zp[i], marks[i]) for i in range(n_inner)] + collar)

    delta, delta1 = params.delta, params.delta1
    zb, labels, bridges_b = [], [], []
    for i in range(min(n_inner, R)):
        u = rng.random()
        if u < 1.0 - delta:
            z = zp[i].copy()
            labels.append("kept")
        elif u < 1.0 - delta + delta1:
            z = np.concatenate([[rng.uniform(0.0, R)], rng.uniform(0.0, 1.0, size=strip.k)])
            labels.append("resampled-global")
        else:
            z = _uniform_collar(rng, params, strip.k)
            labels.append("resampled-collar")
        zb.append(z)
        bridges_b.append(marks[i])
    for i in range(n_inner, R):
        zb.append(np.concatenate([[rng.uniform(0.0, R)],
                                  rng.uniform(0.0, 1.0, size=strip.k)]))
        labels.append("fresh")
        bridges_b.append(bridge_increments(rng, strip))
    zb = np.array(zb)
    omega_b = Config([Bridge(zb[i], bridges_b[i]) for i in range(R)])
    return CoupledPair(omega_p, omega_b, "dependent", labels, zb, zp)


def bridge_sup_distance(b1: Bridge, b2: Bridge) -> float:
    """Sup over shared time nodes of the max-norm distance on the strip."""
    d = (b1.start[None, :] + b1.increments) - (b2.start[None, :] + b2.increments)
    d[:, 1:] -= np.round(d[:, 1:])
    return float(np.max(np.abs(d)))


def check_fc(pair: CoupledPair, css: Config, regular: bool,
             lambda_plus: tuple[float, float] | None = None,
             radius: float = 1.0 / 16.0) -> bool:
    """Coupling-success event: every screened bridge has a close partner;
    on the regular branch the interior must match exactly."""
    if regular:
        if lambda_plus is None:
            raise ValueError("regular branch needs the interior region")
        a, b = lambda_plus
        inside_css = Config([br for br in css if a <= br.start_x < b])
        inside_b = Config([br for br in pair.omega_b if a <= br.start_x < b])
        if inside_css != inside_b:
            return False
        outside = [br for br in css if not (a <= br.start_x < b)]
    else:
        outside = list(css.bridges)
    for br in outside:
        if not any(bridge_sup_distance(br, other) <= radius for other in pair.omega_b):
            return False
    return True


def wilson_interval(successes: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def estimate_fc_probability(params: CouplingParams, strip: StripParams,
                            n_samples: int, rng: np.random.Generator,
                            css_fn=None, force_irregular: bool = False) -> dict:
    """Monte Carlo coupling-success frequency split by branch and regularity.

    ``css_fn(omega_p) -> (css, regular, lambda_plus)`` supplies the screened
    configuration; with ``force_irregular`` the unit lattice is used, which is
    the regime with a closed-form combinatorial reference.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    R = params.R
    if css_fn is None:
        if not force_irregular:
            raise ValueError("supply css_fn or set force_irregular")
        lattice = lattice_config(BoxDomain(0, R), strip.n_time, strip.k)
        css_fn = lambda omega_p: (lattice, False, None)
    counts = {"independent": [0, 0], "dependent": [0, 0]}
    fc_indep = 0
    total_fc = 0
    for _ in range(n_samples):
        pair = sample_coupled(rng, params, strip)
        css, regular, lam = css_fn(pair.omega_p)
        ok = check_fc(pair, css, regular, lam)
        counts[pair.branch][0] += int(ok)
        counts[pair.branch][1] += 1
        total_fc += int(ok)
        if ok and pair.branch == "independent":
            fc_indep += 1
    lo, hi = wilson_interval(fc_indep, n_samples)
    return {
        "p_hat": total_fc / n_samples,
        "p_fc_and_independent": fc_indep / n_samples,
        "ci_fc_and_independent": (lo, hi),
        "by_branch": {k: tuple(v) for k, v in counts.items()},
        "n": n_samples,
    }


# --- combinatorial reference for the forced-irregular independent branch ------

def bridge_confinement_probability(strip: StripParams, radius: float,
                                   n_mc: int, rng: np.random.Generator) -> float:
    """P(the path never leaves the max-norm ball of the given radius)."""
    hits = 0
    for _ in range(n_mc):
        inc = bridge_increments(rng, strip)
        if np.max(np.abs(inc)) <= radius:
            hits += 1
    return hits / n_mc


def pair_match_probability(strip: StripParams, R: int, n_mc: int,
                           rng: np.random.Generator,
                           radius: float = 1.0 / 16.0) -> float:
    """P(a uniform-start bridge stays sup-close to one fixed interior lattice
    bridge); the per-pair constant of the matching count."""
    target = constant_bridge(R // 2 + 0.5, np.zeros(strip.k), strip.n_time, strip.k)
    hits = 0
    for _ in range(n_mc):
        b = Bridge(np.concatenate([[rng.uniform(0, R)], rng.uniform(0, 1, size=strip.k)]),
                   bridge_increments(rng, strip))
        if bridge_sup_distance(b, target) <= radius:
            hits += 1
    return hits / n_mc


def matching_probability(R: int, q_pair: float) -> float:
    """R! q^R: disjoint perfect matchings of R i.i.d. bridges onto R separated
    targets, each pair succeeding independently with probability q."""
    return math.factorial(R) * q_pair ** R


def printed_lower_bound(R: int, q0: float) -> float:
    """(1/2) R! (q0 / (16 R))^R with the literal confinement constant."""
    return 0.5 * math.factorial(R) * (q0 / (16.0 * R)) ** R


# --- blockwise concatenation ---------------------------------------------------

def block_count_probability(R: int, m: int) -> float:
    """P(a uniform R*m-point binomial sample puts exactly R in every block)."""
    n = R * m
    logp = math.lgamma(n + 1) - m * math.lgamma(R + 1) - n * math.log(m)
    return math.exp(logp)


def sample_coupled_blocks(rng: np.random.Generator, params: CouplingParams,
                          strip: StripParams, m: int) -> list:
    """m independent per-block couplings, shifted into place; the union of
    the second marginals is the N-bridge process conditioned on R per block."""
    out = []
    for i in range(m):
        pair = sample_coupled(rng, params, strip)
        out.append((i * params.R, pair))
    return out


def estimate_block_event(rng: np.random.Generator, R: int, m: int,
                         n_mc: int) -> tuple[float, float]:
    """Rejection estimate of the equal-block-count event for a uniform
    binomial sample, with its exact multinomial value."""
    n = R * m
    hits = 0
    for _ in range(n_mc):
        xs = rng.uniform(0, m * R, size=n)
        counts = np.bincount((xs // R).astype(int), minlength=m)
        if np.all(counts == R):
            hits += 1
    return hits / n_mc, block_count_probability(R, m)
