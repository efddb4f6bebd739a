"""Metropolis-Hastings sampling of the bridge Gibbs measure on a window.

Proposals resample pieces of the reference measure (uniform start relocation,
fresh bridge increments) or nudge one start; all three give the acceptance
rule min(1, exp(-dE)) with dE the path-energy change of the touched bridge.
Only energy differences are ever needed; the normalisation is never computed.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .energy import classical_energy, path_energy
from .geometry import (Bridge, BoxDomain, Config, StripParams, config_from_json,
                       config_to_json)
from .greens import GreensKernel, eval_g_eta_eta, smeared_background_potential
from .sampling import bridge_increments


@dataclass(frozen=True)
class ProposalMix:
    p_relocate: float = 0.4
    p_repath: float = 0.4
    p_local: float = 0.2
    sigma_x: float = 0.3

    def __post_init__(self):
        total = self.p_relocate + self.p_repath + self.p_local
        if abs(total - 1.0) > 1e-12:
            raise ValueError("proposal probabilities must sum to 1")
        if self.sigma_x <= 0:
            raise ValueError("sigma_x must be positive")


@dataclass
class ChainState:
    config: Config
    cached_energy: float
    step_count: int
    rng: np.random.Generator
    accepted: int = 0
    max_cache_drift: float = 0.0


def _bridge_path_interaction(bridge: Bridge, others: list, dom: BoxDomain,
                             kernel: GreensKernel) -> float:
    """Path-energy terms involving one bridge: pair sums minus background cross."""
    params = kernel.params
    nt = bridge.n_time
    times = np.linspace(0.0, params.beta, nt)
    own = bridge.start[None, :] + bridge.increments
    vals = -smeared_background_potential(kernel, own[:, 0], dom)
    if others:
        other_nodes = np.stack([c.start[None, :] + c.increments for c in others])
        disp = own[None, :, :] - other_nodes
        vals = vals + np.sum(
            eval_g_eta_eta(kernel, disp.reshape(-1, 2)).reshape(len(others), nt), axis=0)
    return float(np.trapz(vals, times))


def metropolis_accept(rng: np.random.Generator, delta_e: float) -> bool:
    if delta_e <= 0:
        return True
    return rng.random() < math.exp(-delta_e)


def initial_state(config: Config, dom: BoxDomain, kernel: GreensKernel,
                  rng: np.random.Generator, interaction_scale: float = 1.0) -> ChainState:
    energy = interaction_scale * path_energy(config, dom, kernel)
    return ChainState(config, energy, 0, rng)


def mcmc_step(state: ChainState, mix: ProposalMix, kernel: GreensKernel,
              dom: BoxDomain, interaction_scale: float = 1.0) -> ChainState:
    """One Metropolis step; rejected moves leave the configuration untouched."""
    params = kernel.params
    rng = state.rng
    bridges = list(state.config.bridges)
    i = int(rng.integers(len(bridges)))
    old = bridges[i]
    others = bridges[:i] + bridges[i + 1:]

    u = rng.random()
    if u < mix.p_relocate:
        start = np.concatenate([[rng.uniform(dom.x_lo, dom.x_hi)],
                                rng.uniform(0.0, 1.0, size=params.k)])
        new = Bridge(start, old.increments)
    elif u < mix.p_relocate + mix.p_repath:
        new = Bridge(old.start, bridge_increments(rng, params))
    else:
        start = old.start.copy()
        start[0] += rng.normal(0.0, mix.sigma_x)
        new = Bridge(start, old.increments)

    if any(tuple(new.start) == tuple(b.start) for b in others):
        state.step_count += 1
        return state

    delta = interaction_scale * (
        _bridge_path_interaction(new, others, dom, kernel)
        - _bridge_path_interaction(old, others, dom, kernel))
    state.step_count += 1
    if metropolis_accept(rng, delta):
        state.config = Config(others + [new])
        state.cached_energy += delta
        state.accepted += 1
    if state.step_count % 128 == 0:
        exact = interaction_scale * path_energy(state.config, dom, kernel)
        state.max_cache_drift = max(state.max_cache_drift, abs(exact - state.cached_energy))
        state.cached_energy = exact
    return state


def run_chain(init: Config, steps: int, thin: int, mix: ProposalMix,
              kernel: GreensKernel, dom: BoxDomain, seed: int = 0,
              burnin: int = 0, interaction_scale: float = 1.0,
              rng: np.random.Generator | None = None):
    """Run the chain and emit every thin-th configuration after burn-in.

    Deterministic given the seed; returns (samples, diagnostics).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = rng or np.random.default_rng(seed)
    state = initial_state(init, dom, kernel, rng, interaction_scale)
    samples = []
    energies = []
    for step in range(steps):
        state = mcmc_step(state, mix, kernel, dom, interaction_scale)
        if step >= burnin and (step - burnin) % thin == 0:
            samples.append(state.config)
            energies.append(state.cached_energy)
    diagnostics = {
        "acceptance_rate": state.accepted / steps,
        "max_cache_drift": state.max_cache_drift,
        "energies": energies,
    }
    return samples, diagnostics


def save_checkpoint(state: ChainState, params: StripParams, path) -> None:
    """Config snapshot plus the generator state; enough to resume bit-exactly."""
    payload = {
        "config": json.loads(config_to_json(state.config, params)),
        "cached_energy": state.cached_energy,
        "step_count": state.step_count,
        "accepted": state.accepted,
        "rng_state": state.rng.bit_generator.state,
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path) -> tuple[ChainState, StripParams]:
    with open(path) as f:
        payload = json.load(f)
    config, params = config_from_json(json.dumps(payload["config"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    state = ChainState(config, payload["cached_energy"], payload["step_count"], rng,
                       accepted=payload["accepted"])
    return state, params


# --- brute-force stationarity check on a finite toy state space --------------

def toy_state_space(sites: np.ndarray, n_particles: int):
    """All particle placements (constant bridges) on distinct lattice sites."""
    return list(itertools.combinations(range(len(sites)), n_particles))


def toy_transition_matrix(sites: np.ndarray, n_particles: int, dom: BoxDomain,
                          kernel: GreensKernel, interaction_scale: float = 1.0):
    """Exact transition matrix of the relocate-to-lattice-site Metropolis chain.

    Proposal: pick a particle uniformly, propose a uniform site; occupied
    targets are rejected in place.  Shares the acceptance rule with the real
    sampler, so brute-force stationarity checks exercise the same logic.
    """
    params = kernel.params
    beta = params.beta
    states = toy_state_space(sites, n_particles)
    index = {s: i for i, s in enumerate(states)}
    m = len(sites)

    def state_energy(s):
        pts = np.column_stack([sites[list(s)], np.zeros(len(s))])
        return interaction_scale * beta * classical_energy(pts, dom, kernel)

    energies = np.array([state_energy(s) for s in states])
    n = len(states)
    P = np.zeros((n, n))
    for a, s in enumerate(states):
        occupied = set(s)
        for pos in range(n_particles):
            for target in range(m):
                prob = 1.0 / (n_particles * m)
                if target in occupied:
                    P[a, a] += prob
                    continue
                t = tuple(sorted(s[:pos] + (target,) + s[pos + 1:]))
                b = index[t]
                acc = min(1.0, math.exp(-(energies[b] - energies[a])))
                P[a, b] += prob * acc
                P[a, a] += prob * (1.0 - acc)
    gibbs = np.exp(-(energies - energies.min()))
    gibbs /= gibbs.sum()
    return states, P, gibbs
