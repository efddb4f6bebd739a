"""Staggered (MAC) grids over a window of the strip, k = 1.

Scalars live at cell centers, x-components of fields at x-face centers,
y-components at y-face centers with periodic wrap.  Divergence and flux
statements are exact at the discrete level, which is what makes the
compatibility and screening checks bit-testable.

Two Poisson paths are provided:

* ``solve_neumann``: zero normal flux at the x-boundaries, periodic y,
  DCT-II x FFT spectral solve (CG fallback), mean-zero potential.
* ``lattice_gradient_field``: free-space-in-x field via the exact discrete
  Green's function per cross-section mode (geometric decay; linear mode 0),
  so the discrete divergence of the result reproduces the input density to
  FFT roundoff.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.signal
import scipy.sparse.linalg

from .errors import GridTooCoarse, NotNeutral, SolverDiverged
from .geometry import BoxDomain, Config, StripParams
from .greens import GreensKernel, background_gradient_x, grad_g_eta


@dataclass(frozen=True)
class Grid:
    """Uniform staggered grid on dom x [0,1); spacing h = 1/inv_h."""

    dom: BoxDomain
    inv_h: int

    def __post_init__(self):
        if self.inv_h < 2:
            raise ValueError("inv_h must be >= 2")

    @property
    def h(self) -> float:
        return 1.0 / self.inv_h

    @property
    def n_x(self) -> int:
        return self.dom.length * self.inv_h

    @property
    def n_y(self) -> int:
        return self.inv_h

    def x_faces(self) -> np.ndarray:
        return self.dom.x_lo + np.arange(self.n_x + 1) * self.h

    def x_centers(self) -> np.ndarray:
        return self.dom.x_lo + (np.arange(self.n_x) + 0.5) * self.h

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.n_y) + 0.5) * self.h

    def y_faces(self) -> np.ndarray:
        return np.arange(self.n_y) * self.h

    def face_index_of_x(self, x: float) -> int:
        """Index of the x-face at coordinate x (must lie on the grid)."""
        idx = round((x - self.dom.x_lo) * self.inv_h)
        if abs(self.dom.x_lo + idx * self.h - x) > 1e-9:
            raise ValueError(f"{x} is not a face coordinate of the grid")
        return int(idx)

    def subgrid(self, dom: BoxDomain) -> "Grid":
        return Grid(dom, self.inv_h)


@dataclass
class GridField:
    """Vector field sampled on MAC faces at one time slice."""

    grid: Grid
    ex: np.ndarray   # (n_x + 1, n_y)
    ey: np.ndarray   # (n_x, n_y); ey[:, j] sits between cell rows j-1 and j

    def __post_init__(self):
        assert self.ex.shape == (self.grid.n_x + 1, self.grid.n_y)
        assert self.ey.shape == (self.grid.n_x, self.grid.n_y)

    def copy(self) -> "GridField":
        return GridField(self.grid, self.ex.copy(), self.ey.copy())

    def energy(self, region=None) -> float:
        """sum |E|^2 h^2 with half-weight on x-faces at the region boundary.

        region may be a BoxDomain or an (x_lo, x_hi) pair of grid-aligned
        floats; None integrates over the whole window.
        """
        h = self.grid.h
        if region is None:
            wx = np.ones(self.grid.n_x + 1)
            wx[0] = wx[-1] = 0.5
            return float((np.sum(wx[:, None] * self.ex ** 2) + np.sum(self.ey ** 2)) * h * h)
        lo, hi = (region.x_lo, region.x_hi) if isinstance(region, BoxDomain) else region
        xf = self.grid.x_faces()
        near = h * 1e-6
        wx = np.where((xf > lo + near) & (xf < hi - near), 1.0,
                      np.where((np.abs(xf - lo) <= near) | (np.abs(xf - hi) <= near), 0.5, 0.0))
        xc = self.grid.x_centers()
        wy = ((xc >= lo) & (xc < hi)).astype(float)
        return float((np.sum(wx[:, None] * self.ex ** 2)
                      + np.sum(wy[:, None] * self.ey ** 2)) * h * h)

    def dump(self, path) -> None:
        header = {
            "dom": [self.grid.dom.x_lo, self.grid.dom.x_hi],
            "h": self.grid.h,
            "inv_h": self.grid.inv_h,
            "layout": "mac",
            "shape_ex": list(self.ex.shape),
            "shape_ey": list(self.ey.shape),
        }
        with open(path, "wb") as f:
            f.write((json.dumps(header) + "\n").encode())
            f.write(np.ascontiguousarray(self.ex, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(self.ey, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "GridField":
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            grid = Grid(BoxDomain(*header["dom"]), header["inv_h"])
            nex = int(np.prod(header["shape_ex"]))
            ex = np.frombuffer(f.read(nex * 8), dtype="<f8").reshape(header["shape_ex"])
            ey = np.frombuffer(f.read(), dtype="<f8").reshape(header["shape_ey"])
        return GridField(grid, ex.copy(), ey.copy())


@dataclass
class TimeField:
    """One GridField per time-quadrature node."""

    fields: list
    times: np.ndarray
    beta: float

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    def energies(self, region: BoxDomain | None = None) -> np.ndarray:
        return np.array([f.energy(region) for f in self.fields])


@dataclass
class ChargeDensity:
    """Cell-centered net charge density: background +1 minus smeared bridges."""

    grid: Grid
    rho: np.ndarray  # (n_x, n_y)

    def total(self) -> float:
        return float(np.sum(self.rho) * self.grid.h ** 2)

    def box_charge(self, region: BoxDomain) -> float:
        xc = self.grid.x_centers()
        mask = (xc >= region.x_lo) & (xc < region.x_hi)
        return float(np.sum(self.rho[mask]) * self.grid.h ** 2)


def _deposit_shell(rho: np.ndarray, grid: Grid, center: np.ndarray, mass: float,
                   n_arc: int) -> None:
    """Area-weighted deposition of a uniform circle charge, total mass exact."""
    theta = (np.arange(n_arc) + 0.5) * (2.0 * math.pi / n_arc)
    eta = _deposit_shell.eta
    px = center[0] + eta * np.cos(theta)
    py = center[1] + eta * np.sin(theta)
    h = grid.h
    fx = (px - grid.dom.x_lo) / h - 0.5
    i0 = np.floor(fx).astype(int)
    tx = fx - i0
    if np.any(i0 < 0) or np.any(i0 + 1 > grid.n_x - 1):
        raise ValueError("charge shell leaves the grid window")
    fy = np.mod(py, 1.0) / h - 0.5
    j0 = np.floor(fy).astype(int)
    ty = fy - j0
    j0m = np.mod(j0, grid.n_y)
    j1m = np.mod(j0 + 1, grid.n_y)
    w = mass / n_arc / h ** 2
    np.add.at(rho, (i0, j0m), w * (1 - tx) * (1 - ty))
    np.add.at(rho, (i0, j1m), w * (1 - tx) * ty)
    np.add.at(rho, (i0 + 1, j0m), w * tx * (1 - ty))
    np.add.at(rho, (i0 + 1, j1m), w * tx * ty)


_deposit_shell.eta = None  # set per call by rasterize_charge


def rasterize_charge(config: Config, dom: BoxDomain, t_index: int, grid: Grid,
                     params: StripParams, n_arc: int | None = None) -> ChargeDensity:
    """Net charge density -sum_b delta^eta_{b(t)} + 1_dom on the grid."""
    if params.k != 1:
        raise NotImplementedError("grid operations support k=1 only")
    if grid.h > params.eta / 4.0 + 1e-12:
        raise GridTooCoarse(f"h={grid.h} exceeds eta/4={params.eta / 4.0}")
    rho = np.zeros((grid.n_x, grid.n_y))
    xc = grid.x_centers()
    rho[(xc >= dom.x_lo) & (xc < dom.x_hi)] = 1.0
    if n_arc is None:
        n_arc = max(256, int(16 * 2 * math.pi * params.eta / grid.h))
    _deposit_shell.eta = params.eta
    for b in config:
        center = b.start + b.increments[t_index]
        _deposit_shell(rho, grid, center, -1.0, n_arc)
    return ChargeDensity(grid, rho)


def discrete_divergence(field: GridField) -> np.ndarray:
    h = field.grid.h
    dx = (field.ex[1:, :] - field.ex[:-1, :]) / h
    dy = (np.roll(field.ey, -1, axis=1) - field.ey) / h
    return dx + dy


def boundary_flux(field: GridField) -> float:
    """Largest |E_x| on the outermost x-faces."""
    return float(max(np.max(np.abs(field.ex[0])), np.max(np.abs(field.ex[-1]))))


def _field_from_potential(grid: Grid, u: np.ndarray) -> GridField:
    ex = np.zeros((grid.n_x + 1, grid.n_y))
    ex[1:-1] = (u[1:, :] - u[:-1, :]) / grid.h
    ey = (u - np.roll(u, 1, axis=1)) / grid.h
    return GridField(grid, ex, ey)


def neumann_potential(rho: np.ndarray, h: float) -> np.ndarray:
    """Mean-zero u with Lap(u) = rho, mirror ghosts in x, periodic y (raw arrays)."""
    n_x, n_y = rho.shape
    rho_hat = scipy.fft.dct(rho, type=2, axis=0)
    rho_hat = scipy.fft.fft(rho_hat, axis=1)
    h2 = h ** 2
    lam_x = (2.0 * np.cos(np.pi * np.arange(n_x) / n_x) - 2.0) / h2
    lam_y = (2.0 * np.cos(2.0 * np.pi * np.arange(n_y) / n_y) - 2.0) / h2
    denom = lam_x[:, None] + lam_y[None, :]
    denom[0, 0] = 1.0
    u_hat = rho_hat / denom
    u_hat[0, 0] = 0.0
    u = scipy.fft.ifft(u_hat, axis=1)
    u = scipy.fft.idct(np.real(u), type=2, axis=0)
    return u - np.mean(u)


def neumann_face_field(rho: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """(ex, ey) of the zero-x-flux solve on raw arrays; ex has zero end faces."""
    u = neumann_potential(rho, h)
    n_x, n_y = rho.shape
    ex = np.zeros((n_x + 1, n_y))
    ex[1:-1] = (u[1:, :] - u[:-1, :]) / h
    ey = (u - np.roll(u, 1, axis=1)) / h
    return ex, ey


def solve_neumann(density: ChargeDensity, tol: float = 1e-8,
                  method: str = "spectral") -> GridField:
    """Field E = grad(u) with div E = rho, zero x-flux at the window boundary.

    Solvable iff the density integrates to zero; the potential is fixed by
    the mean-zero convention.
    """
    grid, rho = density.grid, density.rho
    total = density.total()
    if abs(total) > tol * grid.dom.length:
        raise NotNeutral(f"density integrates to {total:.3e}; cell is not neutral")
    if method == "spectral":
        u = neumann_potential(rho, grid.h) + 0.0
    elif method == "cg":
        u = _solve_cg(grid, rho)
    else:
        raise ValueError(f"unknown method {method!r}")
    u -= np.mean(u)
    return _field_from_potential(grid, u)


def _solve_cg(grid: Grid, rho: np.ndarray) -> np.ndarray:
    n = grid.n_x * grid.n_y
    h2 = grid.h ** 2

    def apply_lap(vec):
        u = vec.reshape(grid.n_x, grid.n_y)
        up = np.vstack([u[:1], u, u[-1:]])            # mirror ghosts in x
        lap = (up[2:] + up[:-2] - 2 * u) / h2
        lap += (np.roll(u, 1, axis=1) + np.roll(u, -1, axis=1) - 2 * u) / h2
        return lap.ravel() - np.mean(lap)

    op = scipy.sparse.linalg.LinearOperator((n, n), matvec=apply_lap)
    b = rho.ravel() - np.mean(rho)
    u, info = scipy.sparse.linalg.cg(op, b, rtol=1e-10, maxiter=20000)
    if info != 0:
        raise SolverDiverged(f"CG failed with info={info}")
    return u.reshape(grid.n_x, grid.n_y)


# --- free-boundary solve via the exact discrete mode kernels -----------------

@lru_cache(maxsize=16)
def _lattice_kernels(n_x: int, n_y: int, inv_h: int) -> np.ndarray:
    """Discrete Green's function per rfft mode, offsets -n_x..n_x."""
    h = 1.0 / inv_h
    d = np.abs(np.arange(-n_x, n_x + 1))
    n_modes = n_y // 2 + 1
    out = np.empty((n_modes, 2 * n_x + 1))
    out[0] = d * h * h / 2.0
    for m in range(1, n_modes):
        c_m = (2.0 - 2.0 * math.cos(2.0 * math.pi * m / n_y)) / h ** 2
        s = 1.0 + h * h * c_m / 2.0
        r = s - math.sqrt(s * s - 1.0)
        a = h * h / (r - 1.0 / r)
        with np.errstate(under="ignore"):
            out[m] = a * r ** d
    return out


def lattice_gradient_field(density: ChargeDensity) -> GridField:
    """Field of the density with free x-boundaries (decay at infinity).

    Exact discrete inverse: the divergence of the returned field reproduces
    the input density to FFT roundoff.  The window must contain all charge;
    outside it the solution continues by decay (mode 0: linear growth, which
    is why neutral inputs are the useful case).
    """
    grid, rho = density.grid, density.rho
    kernels = _lattice_kernels(grid.n_x, grid.n_y, grid.inv_h)
    rho_hat = np.fft.rfft(rho, axis=1).T                      # (n_modes, n_x)
    conv = scipy.signal.fftconvolve(rho_hat, kernels.astype(complex), mode="full", axes=1)
    # output position p = o - n_x; keep p in [-1, n_x] for ghost cells
    v_ext = conv[:, grid.n_x - 1: 2 * grid.n_x + 1].T          # (n_x + 2, n_modes)
    v_ext = np.fft.irfft(v_ext, n=grid.n_y, axis=1)
    u = v_ext[1:-1]
    ex = (v_ext[1:] - v_ext[:-1]) / grid.h
    ey = (u - np.roll(u, 1, axis=1)) / grid.h
    return GridField(grid, ex, ey)


def gradient_field(config: Config, dom: BoxDomain, kernel: GreensKernel, grid: Grid,
                   t_index: int, params: StripParams, method: str = "superpose",
                   n_arc: int | None = None) -> GridField:
    """E = grad V for the configuration against the uniform background on dom.

    ``superpose`` evaluates the smeared kernel gradient per bridge plus the
    closed-form background term; ``lattice`` rasterizes the net charge and
    applies the exact discrete free-boundary inverse.
    """
    if method == "lattice":
        density = rasterize_charge(config, dom, t_index, grid, params, n_arc=n_arc)
        return lattice_gradient_field(density)
    if method != "superpose":
        raise ValueError(f"unknown method {method!r}")
    pts = config.points_at(t_index) if len(config) else np.zeros((0, 2))
    xf = grid.x_faces()
    yc = grid.y_centers()
    # background term of E = grad V carries source -1_dom, hence the sign
    ex = np.tile(-background_gradient_x(xf, dom)[:, None], (1, grid.n_y))
    ey = np.zeros((grid.n_x, grid.n_y))
    xc = grid.x_centers()
    yf = grid.y_faces()
    for p in pts:
        dx = xf[:, None] - p[0]
        dy = yc[None, :] - p[1]
        disp = np.stack([np.broadcast_to(dx, (len(xf), len(yc))),
                         np.broadcast_to(dy, (len(xf), len(yc)))], axis=-1)
        ex += grad_g_eta(kernel, disp.reshape(-1, 2))[:, 0].reshape(len(xf), len(yc))
        dx = xc[:, None] - p[0]
        dy = yf[None, :] - p[1]
        disp = np.stack([np.broadcast_to(dx, (len(xc), len(yf))),
                         np.broadcast_to(dy, (len(xc), len(yf)))], axis=-1)
        ey += grad_g_eta(kernel, disp.reshape(-1, 2))[:, 1].reshape(len(xc), len(yf))
    return GridField(grid, ex, ey)


def field_at_points(points: np.ndarray, charge_points: np.ndarray, dom: BoxDomain,
                    kernel: GreensKernel) -> np.ndarray:
    """E = grad V at arbitrary points for given smeared charge positions."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros_like(points)
    out[:, 0] = -background_gradient_x(points[:, 0], dom)
    for p in np.atleast_2d(charge_points):
        out += grad_g_eta(kernel, points - p[None, :])
    return out


def time_field(config: Config, dom: BoxDomain, kernel: GreensKernel, grid: Grid,
               params: StripParams, method: str = "lattice",
               n_time: int | None = None) -> TimeField:
    """Gradient field at every time node of the configuration."""
    nt = n_time or (config.n_time() if len(config) else params.n_time)
    fields = [gradient_field(config, dom, kernel, grid, j, params, method=method)
              for j in range(nt)]
    return TimeField(fields, np.linspace(0.0, params.beta, nt), params.beta)


def field_energy(tf: TimeField, region: BoxDomain | None = None) -> float:
    """(1/2 beta) trapezoid-in-time of the per-node grid energies."""
    energies = tf.energies(region)
    return float(np.trapz(energies, tf.times) / (2.0 * tf.beta))
