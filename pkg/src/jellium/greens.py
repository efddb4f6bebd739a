"""Electrostatic kernel of the strip R x [0,1)^k (free x, periodic y).

The kernel solves -Delta g = delta_o and expands over cross-section modes as

    g(dz) = -|dx|/2 + sum_{0 < |n|_inf <= n_max} (4 pi |n|)^{-1}
            e^{-2 pi |n| |dx|} cos(2 pi n . dy).

For k = 1 the full sum (n_max = None) collapses to

    g = -|dx|/2 - (1/4pi) log(1 - 2 q c + q^2),
    q = e^{-2 pi |dx|},  c = cos(2 pi dy),

and the smeared variants reduce to mean-value identities: a uniform circle
charge of radius eta looks exactly like a point charge from distance > eta,
so g_eta(z) = g(z) there, and inside the shell only the smooth part of the
kernel varies.  Quadrature fallbacks cover k >= 2 and serve as independent
checks of the closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SingularPoint
from .geometry import BoxDomain, StripParams

TWO_PI = 2.0 * math.pi


def reduce_dy(dy: np.ndarray) -> np.ndarray:
    """Minimal-image representative of torus displacements, in [-1/2, 1/2)."""
    return dy - np.round(dy)


def _split(dz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dz = np.asarray(dz, dtype=float)
    dx = dz[..., 0]
    dy = reduce_dy(dz[..., 1:])
    return dx, dy


def _minimage_r(dz: np.ndarray) -> np.ndarray:
    dx, dy = _split(dz)
    return np.sqrt(dx * dx + np.sum(dy * dy, axis=-1))


@dataclass(frozen=True)
class GreensKernel:
    """Kernel evaluator; n_max=None selects the exact closed form (k=1 only)."""

    params: StripParams
    n_max: int | None = None
    smear_nodes: int = 16

    def __post_init__(self):
        if self.n_max is None and self.params.k != 1:
            raise ValueError("closed form only available for k=1; pass n_max")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.smear_nodes < 8:
            raise ValueError("smear_nodes must be >= 8")

    @property
    def eta(self) -> float:
        return self.params.eta

    @property
    def k(self) -> int:
        return self.params.k

    def tail_bound(self, dx_abs: float) -> float:
        """Bound on the omitted mode sum beyond n_max at x-distance dx_abs."""
        if self.n_max is None:
            return 0.0
        n1 = self.n_max + 1
        if self.k == 1:
            decay = math.exp(-TWO_PI * n1 * dx_abs)
            if dx_abs > 0:
                return decay / (TWO_PI * n1 * (1.0 - math.exp(-TWO_PI * dx_abs)))
            # |sum cos(2 pi n dy)/(2 pi n)| tail, no x-decay: crude 1/n bound
            return 1.0 / (math.pi * n1) * self.n_max
        # k >= 2: count modes per |n| shell crudely by (2n+1)^{k} surface
        total = 0.0
        for n in range(n1, n1 + 2048):
            shell = (2 * n + 1) ** self.k - (2 * n - 1) ** self.k
            total += shell * math.exp(-TWO_PI * n * dx_abs) / (4.0 * math.pi * n)
            if shell * math.exp(-TWO_PI * n * dx_abs) < 1e-300:
                break
        return total


@lru_cache(maxsize=8)
def _mode_table(k: int, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """All modes n in Z^k with 0 < |n|_inf <= n_max; returns (modes, |n|)."""
    axes = [np.arange(-n_max, n_max + 1)] * k
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    grid = grid[np.any(grid != 0, axis=1)]
    norms = np.sqrt(np.sum(grid.astype(float) ** 2, axis=1))
    return grid.astype(float), norms


def _series_g(dx: np.ndarray, dy: np.ndarray, k: int, n_max: int) -> np.ndarray:
    modes, norms = _mode_table(k, n_max)
    ax = np.abs(dx)[..., None]
    phase = TWO_PI * np.tensordot(dy, modes.T, axes=1)
    terms = np.exp(-TWO_PI * norms * ax) * np.cos(phase) / (4.0 * math.pi * norms)
    return -np.abs(dx) / 2.0 + np.sum(terms, axis=-1)


def _closed_parts(dx: np.ndarray, dy1: np.ndarray):
    q = np.exp(-TWO_PI * np.abs(dx))
    theta = TWO_PI * dy1
    c = np.cos(theta)
    denom = (1.0 - q) ** 2 + 2.0 * q * (1.0 - c)
    return q, theta, c, denom


def eval_g(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray | float:
    """Kernel value at displacement(s) dz; raises at the exact singularity."""
    dz = np.asarray(dz, dtype=float)
    scalar = dz.ndim == 1
    dx, dy = _split(np.atleast_2d(dz))
    r = np.sqrt(dx * dx + np.sum(dy * dy, axis=-1))
    if np.any(r == 0.0):
        raise SingularPoint("kernel evaluated at zero displacement")
    if kernel.n_max is None:
        q, _, c, denom = _closed_parts(dx, dy[..., 0])
        val = -np.abs(dx) / 2.0 - np.log(denom) / (4.0 * math.pi)
    else:
        val = _series_g(dx, dy, kernel.k, kernel.n_max)
    return float(val[0]) if scalar else val


def grad_g(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray:
    """Gradient of the kernel (same branch selection as eval_g)."""
    dz = np.asarray(dz, dtype=float)
    scalar = dz.ndim == 1
    dx, dy = _split(np.atleast_2d(dz))
    r = np.sqrt(dx * dx + np.sum(dy * dy, axis=-1))
    if np.any(r == 0.0):
        raise SingularPoint("kernel gradient at zero displacement")
    if kernel.n_max is None:
        q, theta, c, denom = _closed_parts(dx, dy[..., 0])
        gx = -np.sign(dx) * (0.5 + q * (c - q) / denom)
        gy = -q * np.sin(theta) / denom
        out = np.stack([gx, gy], axis=-1)
    else:
        modes, norms = _mode_table(kernel.k, kernel.n_max)
        ax = np.abs(dx)[..., None]
        phase = TWO_PI * np.tensordot(dy, modes.T, axes=1)
        damp = np.exp(-TWO_PI * norms * ax)
        gx = -np.sign(dx) * (0.5 + np.sum(damp * np.cos(phase), axis=-1) / 2.0)
        gy_common = damp * np.sin(phase) / (2.0 * norms)
        gy = -np.tensordot(gy_common, modes, axes=1)
        out = np.concatenate([gx[..., None], gy], axis=-1)
    return out[0] if scalar else out


def _phi_smooth(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray:
    """g + (1/2pi) log r: the part of the kernel regular at the origin (k=1)."""
    dx, dy = _split(np.atleast_2d(dz))
    r = np.sqrt(dx * dx + dy[..., 0] ** 2)
    q, _, c, denom = _closed_parts(dx, dy[..., 0])
    out = np.where(
        r < 1e-12,
        -math.log(TWO_PI) / TWO_PI,
        -np.abs(dx) / 2.0 - np.log(np.maximum(denom, 1e-300)) / (4.0 * math.pi)
        + np.log(np.maximum(r, 1e-300)) / TWO_PI,
    )
    return out


@lru_cache(maxsize=32)
def _chord_nodes(m: int) -> np.ndarray:
    u = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
    return 2.0 * np.abs(np.sin(u / 2.0))


def eval_g_eta(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray | float:
    """Kernel smeared once over the radius-eta shell; finite everywhere."""
    dz = np.asarray(dz, dtype=float)
    scalar = dz.ndim == 1
    dzb = np.atleast_2d(dz)
    if kernel.k == 1 and kernel.n_max is None:
        r = _minimage_r(dzb)
        out = np.empty(r.shape)
        far = r >= kernel.eta
        if np.any(far):
            out[far] = eval_g(kernel, dzb[far])
        if np.any(~far):
            out[~far] = _phi_smooth(kernel, dzb[~far]) - math.log(kernel.eta) / TWO_PI
    else:
        out = _smear_quadrature(kernel, dzb, double=False)
    return float(out[0]) if scalar else out


def eval_g_eta_eta(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray | float:
    """Kernel smeared over two independent radius-eta shells."""
    dz = np.asarray(dz, dtype=float)
    scalar = dz.ndim == 1
    dzb = np.atleast_2d(dz)
    if kernel.k == 1 and kernel.n_max is None:
        r = _minimage_r(dzb)
        out = np.empty(r.shape)
        far = r >= 2.0 * kernel.eta
        if np.any(far):
            out[far] = eval_g(kernel, dzb[far])
        near = ~far
        if np.any(near):
            chords = kernel.eta * _chord_nodes(max(512, kernel.smear_nodes * 8))
            rn = r[near][:, None]
            logs = np.log(np.maximum(chords[None, :], rn))
            out[near] = _phi_smooth(kernel, dzb[near]) - np.mean(logs, axis=1) / TWO_PI
    else:
        out = _smear_quadrature(kernel, dzb, double=True)
    return float(out[0]) if scalar else out


def g_eta_eta_zero(kernel: GreensKernel) -> float:
    """Smeared self-interaction g_{eta,eta}(0); equals -log(2 pi eta)/(2 pi) for k=1."""
    if kernel.k == 1 and kernel.n_max is None:
        return -math.log(TWO_PI * kernel.eta) / TWO_PI
    dim = kernel.params.dim
    return float(eval_g_eta_eta(kernel, np.zeros((1, dim)))[0])


def grad_g_eta(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray:
    """Gradient of the once-smeared kernel; bounded everywhere."""
    dz = np.asarray(dz, dtype=float)
    scalar = dz.ndim == 1
    dzb = np.atleast_2d(dz)
    if kernel.k == 1 and kernel.n_max is None:
        dx, dy = _split(dzb)
        r = np.sqrt(dx * dx + dy[..., 0] ** 2)
        out = np.zeros(dzb.shape)
        far = r >= kernel.eta
        if np.any(far):
            out[far] = grad_g(kernel, dzb[far])
        near = ~far & (r > 1e-9)
        if np.any(near):
            # inside the shell only the smooth part contributes a field
            vec = np.stack([dx[near], dy[near, 0]], axis=-1)
            out[near] = grad_g(kernel, dzb[near]) + vec / (TWO_PI * (r[near] ** 2)[:, None])
    else:
        out = _smear_grad_quadrature(kernel, dzb)
    return out[0] if scalar else out


# --- shell quadratures (generic path; independent check of the closed forms) ---

@lru_cache(maxsize=32)
def _circle_offsets(m: int, eta: float) -> np.ndarray:
    th = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
    return np.column_stack([eta * np.cos(th), eta * np.sin(th)])


@lru_cache(maxsize=32)
def _sphere_offsets(m: int, eta: float) -> np.ndarray:
    # equal-area product grid on S^2: z uniform, azimuth uniform
    mz = max(4, int(math.sqrt(m)))
    mphi = max(8, int(math.ceil(m / mz)))
    z = (np.arange(mz) + 0.5) / mz * 2.0 - 1.0
    phi = (np.arange(mphi) + 0.5) * (2.0 * math.pi / mphi)
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    rho = np.sqrt(np.maximum(0.0, 1.0 - zz ** 2))
    pts = np.column_stack([zz.ravel(), (rho * np.cos(pp)).ravel(), (rho * np.sin(pp)).ravel()])
    return eta * pts


def shell_offsets(kernel: GreensKernel, m: int | None = None) -> np.ndarray:
    m = m or kernel.smear_nodes
    if kernel.k == 1:
        return _circle_offsets(m, kernel.eta)
    return _sphere_offsets(m * m, kernel.eta)


def _smear_quadrature(kernel: GreensKernel, dz: np.ndarray, double: bool) -> np.ndarray:
    offs = shell_offsets(kernel)
    if double:
        # second shell shifted half a node to avoid hitting the singularity
        if kernel.k == 1:
            th = (np.arange(offs.shape[0]) + 1.0) * (2.0 * math.pi / offs.shape[0])
            offs2 = np.column_stack([kernel.eta * np.cos(th), kernel.eta * np.sin(th)])
        else:
            offs2 = -offs
        disp = dz[:, None, None, :] + offs[None, :, None, :] - offs2[None, None, :, :]
        disp = disp.reshape(dz.shape[0], -1, dz.shape[-1])
    else:
        disp = dz[:, None, :] - offs[None, :, :]
    vals = eval_g(kernel if kernel.n_max is not None else kernel, disp)
    return np.mean(vals, axis=-1)


def _smear_grad_quadrature(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray:
    offs = shell_offsets(kernel)
    disp = dz[:, None, :] - offs[None, :, :]
    return np.mean(grad_g(kernel, disp), axis=1)


def eval_g_eta_quadrature(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray:
    """Shell-quadrature evaluation, kept as an oracle for the exact branch."""
    return _smear_quadrature(kernel, np.atleast_2d(np.asarray(dz, dtype=float)), double=False)


def eval_g_eta_eta_quadrature(kernel: GreensKernel, dz: np.ndarray) -> np.ndarray:
    return _smear_quadrature(kernel, np.atleast_2d(np.asarray(dz, dtype=float)), double=True)


# --- uniform background integrals (cross-section average kills all modes) ---

def background_potential_x(x: np.ndarray, dom: BoxDomain) -> np.ndarray:
    """int_dom g(z - z') dz' as a function of x; exactly -int |x-x'|/2 dx'."""
    x = np.asarray(x, dtype=float)
    A, B = float(dom.x_lo), float(dom.x_hi)
    mid = 0.5 * (A + B)
    L = B - A
    inside = -((x - A) ** 2 + (B - x) ** 2) / 4.0
    left = -L * (mid - x) / 2.0
    right = -L * (x - mid) / 2.0
    return np.where(x < A, left, np.where(x > B, right, inside))


def background_gradient_x(x: np.ndarray, dom: BoxDomain) -> np.ndarray:
    """d/dx of background_potential_x (y-component vanishes identically)."""
    x = np.asarray(x, dtype=float)
    A, B = float(dom.x_lo), float(dom.x_hi)
    L = B - A
    inside = (A + B - 2.0 * x) / 2.0
    return np.where(x < A, L / 2.0, np.where(x > B, -L / 2.0, inside))


def background_self_energy(dom: BoxDomain) -> float:
    """(1/2) iint_{dom^2} g = -L^3/12 from the x-kernel; modes average to zero."""
    return -float(dom.length) ** 3 / 12.0


def smeared_background_potential(kernel: GreensKernel, x: np.ndarray, dom: BoxDomain) -> np.ndarray:
    """Shell average of background_potential_x; exact when the shell fits one piece."""
    x = np.asarray(x, dtype=float)
    A, B = float(dom.x_lo), float(dom.x_hi)
    eta = kernel.eta
    second_moment = eta * eta * (0.5 if kernel.k == 1 else 1.0 / 3.0)
    out = np.empty(x.shape)
    inside = (x - eta >= A) & (x + eta <= B)
    out[inside] = -((x[inside] - A) ** 2 + (B - x[inside]) ** 2 + 2.0 * second_moment) / 4.0
    rest = ~inside
    if np.any(rest):
        offs = shell_offsets(kernel, max(kernel.smear_nodes, 64))[:, 0]
        out[rest] = np.mean(
            background_potential_x(x[rest][:, None] + offs[None, :], dom), axis=1
        )
    return out
