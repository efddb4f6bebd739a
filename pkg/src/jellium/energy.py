"""Energy functionals of bridge configurations.

The smeared classical energy of a point set against the uniform background,
its time integral along bridge paths, the identity tying the path energy to
the electric-field energy, net-charge bookkeeping, and an upper surrogate for
the constrained window energy (infimum over neutral extensions approximated
by a finite family of collar fills).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InfeasibleNeutrality, NotNeutral
from .geometry import BoxDomain, Bridge, Config, StripParams, constant_bridge, project
from .greens import (GreensKernel, background_self_energy, eval_g_eta_eta,
                     g_eta_eta_zero, smeared_background_potential)
from .grids import (ChargeDensity, Grid, TimeField, boundary_flux, field_at_points,
                    field_energy, lattice_gradient_field, rasterize_charge, time_field)


def classical_energy(points: np.ndarray, dom: BoxDomain, kernel: GreensKernel) -> float:
    """Pairwise smeared energy minus particle-background cross terms plus
    the background self-energy; invariant under permutations of the points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    total = background_self_energy(dom)
    if n == 0:
        return total
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        total += float(np.sum(eval_g_eta_eta(kernel, points[iu] - points[ju])))
    total -= float(np.sum(smeared_background_potential(kernel, points[:, 0], dom)))
    return total


def path_energy(config: Config, dom: BoxDomain, kernel: GreensKernel) -> float:
    """int_0^beta of the classical energy along the shared time grid (trapezoid)."""
    params = kernel.params
    if len(config) == 0:
        return params.beta * background_self_energy(dom)
    nt = config.n_time()
    times = np.linspace(0.0, params.beta, nt)
    values = np.array([
        classical_energy(config.points_at(j), dom, kernel) for j in range(nt)
    ])
    return float(np.trapz(values, times))


def bridge_interaction_energy(config: Config, idx: int, dom: BoxDomain,
                              kernel: GreensKernel) -> float:
    """Terms of the path energy involving bridge ``idx`` only (for move deltas)."""
    params = kernel.params
    nt = config.n_time()
    times = np.linspace(0.0, params.beta, nt)
    b = config.bridges[idx]
    own = b.start[None, :] + b.increments                     # (nt, 2)
    others = [c for i, c in enumerate(config.bridges) if i != idx]
    vals = np.zeros(nt)
    if others:
        other_nodes = np.stack([c.start[None, :] + c.increments for c in others])
        disp = own[None, :, :] - other_nodes                  # (m, nt, 2)
        vals += np.sum(eval_g_eta_eta(kernel, disp.reshape(-1, 2)).reshape(len(others), nt), axis=0)
    vals -= smeared_background_potential(kernel, own[:, 0], dom)
    return float(np.trapz(vals, times))


@dataclass
class EnergyReport:
    classical: float
    path: float
    field: float
    self_term: float
    split_residual: float
    relative_residual: float
    window: tuple[int, int]
    per_node_residuals: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "classical": self.classical,
            "path": self.path,
            "field": self.field,
            "self_term": self.self_term,
            "split_residual": self.split_residual,
            "relative_residual": self.relative_residual,
            "window": list(self.window),
        }


def _window_field_energies(config: Config, dom: BoxDomain, params: StripParams,
                           inv_h: int, pad: int, flux_tol: float,
                           n_arc: int | None) -> tuple[np.ndarray, BoxDomain]:
    """Per-node whole-strip field energies, window enlarged until flux decays."""
    nt = config.n_time()
    window = None
    for attempt in range(4):
        w = pad * (2 ** attempt)
        window = BoxDomain(dom.x_lo - w, dom.x_hi + w)
        grid = Grid(window, inv_h)
        energies = np.empty(nt)
        worst_flux = 0.0
        for j in range(nt):
            density = rasterize_charge(config, dom, j, grid, params, n_arc=n_arc)
            fld = lattice_gradient_field(density)
            energies[j] = fld.energy()
            worst_flux = max(worst_flux, boundary_flux(fld))
        if worst_flux < flux_tol:
            break
    return energies, window


def verify_split(config: Config, dom: BoxDomain, kernel: GreensKernel,
                 inv_h: int | None = None, pad: int = 2,
                 flux_tol: float = 1e-6, n_arc: int | None = None) -> EnergyReport:
    """Evaluate both routes to the energy identity and report the residual.

    Left route: time-averaged classical energy from kernel quadratures.
    Right route: electric-field energy of the net charge on a window enlarged
    until the far-boundary flux is negligible, minus the smeared
    self-interaction of the bridges.  The identity holds slice by slice in
    time, so both routes share the time grid and the residual is spatial.
    The rasterized shell carries an O(h) energy layer, so the field route is
    evaluated at spacings h and h/2 and Richardson-extrapolated.
    """
    params = kernel.params
    if len(config) != dom.length or len(project(config, dom)) != len(config):
        raise NotNeutral(f"need exactly |dom|={dom.length} bridges starting in dom")
    inv_h = inv_h or 2 * round(8 / params.eta)
    nt = config.n_time()
    times = np.linspace(0.0, params.beta, nt)

    classical_vals = np.array([
        classical_energy(config.points_at(j), dom, kernel) for j in range(nt)
    ])
    path = float(np.trapz(classical_vals, times) / params.beta)

    coarse, window = _window_field_energies(config, dom, params, inv_h, pad, flux_tol, n_arc)
    fine, _ = _window_field_energies(config, dom, params, 2 * inv_h, pad, flux_tol, n_arc)
    energies = 2.0 * fine - coarse
    field_val = float(np.trapz(energies, times) / (2.0 * params.beta))

    # integration by parts gives int |grad V|^2 = 2 H^eta + N g_{eta,eta}(0),
    # so the subtracted self-term carries the factor N/2
    self_term = 0.5 * len(config) * g_eta_eta_zero(kernel)
    residual = abs(path - (field_val - self_term))
    scale = max(abs(path), abs(field_val - self_term), 1e-12)
    per_node = [float(abs(c - (0.5 * e - self_term))) for c, e in zip(classical_vals, energies)]
    return EnergyReport(
        classical=float(classical_vals[0]),
        path=path,
        field=field_val,
        self_term=self_term,
        split_residual=residual,
        relative_residual=residual / scale,
        window=(window.x_lo, window.x_hi),
        per_node_residuals=per_node,
    )


# --- net charge -------------------------------------------------------------

def _circle_x_fraction(center_x: float, eta: float, a: float, b: float) -> float:
    """Fraction of a radius-eta circle with x-coordinate in [a, b] (exact)."""
    u1 = np.clip((a - center_x) / eta, -1.0, 1.0)
    u2 = np.clip((b - center_x) / eta, -1.0, 1.0)
    if u2 <= u1:
        return 0.0
    return float((math.acos(u1) - math.acos(u2)) / math.pi)


def net_charge_exact(config: Config, t_index: int, region: BoxDomain | tuple,
                     dom: BoxDomain, eta: float) -> float:
    """Background overlap minus exact shell fractions inside the region."""
    a, b = (region.x_lo, region.x_hi) if isinstance(region, BoxDomain) else region
    overlap = max(0.0, min(b, dom.x_hi) - max(a, dom.x_lo))
    total = overlap
    for br in config:
        cx = float(br.start[0] + br.increments[t_index, 0])
        total -= _circle_x_fraction(cx, eta, a, b)
    return total


def net_charge(config: Config, t_index: int, region: BoxDomain, grid: Grid,
               params: StripParams, dom: BoxDomain) -> float:
    """Integral of the rasterized net charge density over the region."""
    density = rasterize_charge(config, dom, t_index, grid, params)
    return density.box_charge(region)


def _slice_flux_energy(config: Config, dom: BoxDomain, kernel: GreensKernel,
                       x_slice: float, n_y: int = 64) -> float:
    """int_{D x [0,beta]} |E_t(x_slice, y)|^2 dy dt via kernel superposition."""
    params = kernel.params
    nt = config.n_time()
    times = np.linspace(0.0, params.beta, nt)
    ys = (np.arange(n_y) + 0.5) / n_y
    pts = np.column_stack([np.full(n_y, x_slice), ys])
    vals = np.empty(nt)
    for j in range(nt):
        e = field_at_points(pts, config.points_at(j), dom, kernel)
        vals[j] = np.mean(np.sum(e * e, axis=1))
    return float(np.trapz(vals, times))


def check_imbalance_bound(config: Config, dom: BoxDomain, kernel: GreensKernel,
                          x_minus: float, x_plus: float | None = None,
                          n_y: int = 64) -> dict:
    """Net-charge bounds through slice fluxes plus near-slice bridge counts.

    Part one bounds |net charge of [L_-, x_-]|; with ``x_plus`` given, part
    two bounds |net charge of [x_-, x_+]| using both slices.
    """
    params = kernel.params
    if len(config) != dom.length:
        raise NotNeutral("imbalance bound needs a neutral configuration")
    if not (dom.x_lo <= x_minus <= dom.x_hi):
        raise ValueError("x_minus outside the window")
    beta = params.beta
    count_minus = sum(1 for b in config if b.min_x_distance(x_minus) <= 1.0)
    lhs1 = abs(net_charge_exact(config, 0, (dom.x_lo, x_minus), dom, params.eta))
    flux1 = _slice_flux_energy(config, dom, kernel, x_minus, n_y)
    rhs1 = math.sqrt(flux1 / beta) + count_minus
    out = {
        "lhs_left": lhs1,
        "rhs_left": rhs1,
        "flux_term_left": math.sqrt(flux1 / beta),
        "count_left": count_minus,
        "holds_left": lhs1 <= rhs1 + 1e-9,
    }
    if x_plus is not None:
        if not (x_minus <= x_plus <= dom.x_hi):
            raise ValueError("need x_minus <= x_plus <= L_+")
        count_plus = sum(1 for b in config if b.min_x_distance(x_plus) <= 1.0)
        flux2 = _slice_flux_energy(config, dom, kernel, x_plus, n_y)
        lhs2 = abs(net_charge_exact(config, 0, (x_minus, x_plus), dom, params.eta))
        rhs2 = math.sqrt(4.0 * (flux1 + flux2) / beta) + count_minus + count_plus
        out.update({
            "lhs_mid": lhs2,
            "rhs_mid": rhs2,
            "holds_mid": lhs2 <= rhs2 + 1e-9,
        })
    return out


# --- truncated window energy (upper surrogate) -------------------------------

@dataclass(frozen=True)
class TruncatedEnergyParams:
    margins: tuple = (1, 2, 4)
    lattice_fill: bool = True
    descent_iters: int = 0

    def __post_init__(self):
        if not self.margins or list(self.margins) != sorted(self.margins):
            raise ValueError("margins must be nonempty and increasing")


@dataclass
class TruncatedEnergyResult:
    value: float
    margin: int
    ext_dom: BoxDomain
    ext_config: Config
    candidates: dict


def _collar_fill(K: BoxDomain, w: int, n_left: int, n_right: int, n_time: int) -> list:
    """Constant bridges on regular lattices in the two collars of width w."""
    out = []
    for i in range(n_left):
        out.append(constant_bridge(K.x_lo - w + (i + 0.5) * w / n_left, [0.0], n_time))
    for i in range(n_right):
        out.append(constant_bridge(K.x_hi + (i + 0.5) * w / n_right, [0.0], n_time))
    return out


def _candidate_energy(candidate: Config, ext: BoxDomain, K: BoxDomain,
                      kernel: GreensKernel, inv_h: int, pad: int) -> float:
    params = kernel.params
    window = BoxDomain(ext.x_lo - pad, ext.x_hi + pad)
    grid = Grid(window, inv_h)
    nt = candidate.n_time()
    times = np.linspace(0.0, params.beta, nt)
    moving = Config([b for b in candidate if np.any(b.increments)])
    static = Config([b for b in candidate if not np.any(b.increments)])
    static_density = rasterize_charge(static, ext, 0, grid, params).rho
    energies = np.empty(nt)
    for j in range(nt):
        rho = static_density.copy()
        if len(moving):
            moving_rho = rasterize_charge(moving, ext, j, grid, params).rho
            # background was added twice; remove one copy
            xc = grid.x_centers()
            moving_rho[(xc >= ext.x_lo) & (xc < ext.x_hi)] -= 1.0
            rho = rho + moving_rho
        fld = lattice_gradient_field(ChargeDensity(grid, rho))
        energies[j] = fld.energy(K)
    return float(np.trapz(energies, times) / (2.0 * params.beta))


def truncated_energy(config: Config, K: BoxDomain, tparams: TruncatedEnergyParams,
                     kernel: GreensKernel, inv_h: int | None = None,
                     pad: int = 1) -> TruncatedEnergyResult:
    """Upper approximation of the constrained window energy.

    For each margin the window is extended on both sides, the collar is
    filled with time-constant bridges on a regular lattice to restore
    neutrality (constants trivially respect the no-invasion constraint), and
    the K-restricted field energy of the extension is evaluated; the minimum
    over the candidate family is returned.
    """
    params = kernel.params
    if len(config) and len(project(config, K)) != len(config):
        raise ValueError("all bridges must start inside K")
    inv_h = inv_h or round(8 / params.eta)
    n_time = config.n_time() if len(config) else params.n_time
    reach = max((b.psi() for b in config), default=0.0) + params.eta
    candidates = {}
    best = None
    for w in tparams.margins:
        ext = BoxDomain(K.x_lo - w, K.x_hi + w)
        pad_w = max(pad, math.ceil(reach - w) + 1)
        n_collar = ext.length - len(config)
        if n_collar < 0:
            continue
        n_left = n_collar // 2
        n_right = n_collar - n_left
        fill = _collar_fill(K, w, n_left, n_right, n_time) if tparams.lattice_fill else []
        if len(fill) != n_collar:
            continue
        candidate = Config(list(config.bridges) + fill)
        value = _candidate_energy(candidate, ext, K, kernel, inv_h, pad_w)
        candidates[w] = value
        if best is None or value < best.value:
            best = TruncatedEnergyResult(value, w, ext, candidate, candidates)
    if best is None:
        raise InfeasibleNeutrality("window overfull for every margin")
    best.candidates = candidates
    return best
