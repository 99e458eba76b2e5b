"""Structured-grid containers and MAC-staggered difference operators.

Layout on the box ``[0, Lx] x [0, Ly]`` with ``nx x ny`` cells:

* scalars live at cell centres, array shape ``(nx, ny)``;
* the x-component of a vector lives on x-faces, shape ``(nx + 1, ny)``;
* the y-component lives on y-faces, shape ``(nx, ny + 1)``;
* stream functions live on nodes, shape ``(nx + 1, ny + 1)``.

Index ``[i, j]`` always means x-index first. Wall faces (``x[0]``,
``x[nx]``, ``y[:, 0]``, ``y[:, ny]``) carry the normal velocity; no-slip
for the tangential component is imposed through odd ghost values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .exceptions import ConfigurationError, GridMismatchError


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(f"grid needs at least 4x4 cells, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigurationError("domain lengths must be positive")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def xc(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    @cached_property
    def yc(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    @cached_property
    def xn(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.hx

    @cached_property
    def yn(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.hy

    def cell_coords(self):
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    def xface_coords(self):
        return np.meshgrid(self.xn, self.yc, indexing="ij")

    def yface_coords(self):
        return np.meshgrid(self.xc, self.yn, indexing="ij")

    def node_coords(self):
        return np.meshgrid(self.xn, self.yn, indexing="ij")

    def wall_distance(self, x, y):
        return np.minimum(np.minimum(x, self.Lx - x), np.minimum(y, self.Ly - y))


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"scalar field shape {vals.shape} != grid {self.grid.shape}")
        _check_finite("scalar field", vals)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid, func):
        x, y = grid.cell_coords()
        return cls(grid, np.broadcast_to(func(x, y), grid.shape).astype(float))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass(frozen=True, eq=False)
class VectorField:
    """MAC-staggered vector field (``x`` on x-faces, ``y`` on y-faces)."""

    grid: Grid2D
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        g = self.grid
        ux = np.asarray(self.x, dtype=float)
        uy = np.asarray(self.y, dtype=float)
        if ux.shape != (g.nx + 1, g.ny) or uy.shape != (g.nx, g.ny + 1):
            raise ValueError(f"vector field shapes {ux.shape}, {uy.shape} do not match grid {g.shape}")
        _check_finite("vector field", ux)
        _check_finite("vector field", uy)
        object.__setattr__(self, "x", ux)
        object.__setattr__(self, "y", uy)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def from_function(cls, grid, fx, fy, walls=True):
        """Sample ``(fx, fy)`` on the faces; ``walls`` zeroes the normal wall faces."""
        X, Y = grid.xface_coords()
        ux = np.broadcast_to(fx(X, Y), X.shape).astype(float)
        X, Y = grid.yface_coords()
        uy = np.broadcast_to(fy(X, Y), X.shape).astype(float)
        v = cls(grid, ux, uy)
        return v.with_walls() if walls else v

    def with_walls(self):
        ux, uy = self.x.copy(), self.y.copy()
        ux[0, :] = ux[-1, :] = 0.0
        uy[:, 0] = uy[:, -1] = 0.0
        return VectorField(self.grid, ux, uy)

    def __add__(self, other):
        same_grid(self, other)
        return VectorField(self.grid, self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        same_grid(self, other)
        return VectorField(self.grid, self.x - other.x, self.y - other.y)

    def scale(self, c):
        return VectorField(self.grid, c * self.x, c * self.y)

    def copy(self):
        return VectorField(self.grid, self.x.copy(), self.y.copy())

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.x)), np.max(np.abs(self.y))))

    def cell_centered(self):
        """Average the face components to cell centres; returns ``(ux, uy)``."""
        return 0.5 * (self.x[1:, :] + self.x[:-1, :]), 0.5 * (self.y[:, 1:] + self.y[:, :-1])


def same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {f.grid}")
    return g


# ---------------------------------------------------------------------------
# difference operators


def divergence(u: VectorField) -> ScalarField:
    g = u.grid
    d = (u.x[1:, :] - u.x[:-1, :]) / g.hx + (u.y[:, 1:] - u.y[:, :-1]) / g.hy
    return ScalarField(g, d)


def gradient(p: ScalarField) -> VectorField:
    """Face gradient of a cell scalar; wall faces get zero (Neumann walls)."""
    g = p.grid
    gx = np.zeros((g.nx + 1, g.ny))
    gy = np.zeros((g.nx, g.ny + 1))
    gx[1:-1, :] = (p.values[1:, :] - p.values[:-1, :]) / g.hx
    gy[:, 1:-1] = (p.values[:, 1:] - p.values[:, :-1]) / g.hy
    return VectorField(g, gx, gy)


def _second_diff(a, axis, h, ghost_sign):
    """Second difference along ``axis`` with ghost = ghost_sign * edge value."""
    a = np.moveaxis(a, axis, 0)
    lo = ghost_sign * a[:1]
    hi = ghost_sign * a[-1:]
    padded = np.concatenate([lo, a, hi], axis=0)
    out = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / h**2
    return np.moveaxis(out, 0, axis)


def laplacian(field, bc="dirichlet"):
    """Five-point Laplacian.

    Scalars: ``bc="dirichlet"`` puts a zero value on the walls (odd ghosts),
    ``bc="neumann"`` a zero normal derivative (even ghosts); a pair
    ``(bc_x, bc_y)`` chooses per axis. Vectors always use no-slip walls; the
    result on the normal wall faces is zero.
    """
    if not isinstance(field, (ScalarField, VectorField)):
        raise TypeError(f"cannot take the Laplacian of {type(field).__name__}")
    g = field.grid
    if isinstance(field, ScalarField):
        bcx, bcy = (bc, bc) if isinstance(bc, str) else bc
        signs = {"dirichlet": -1.0, "neumann": 1.0}
        v = field.values
        return ScalarField(g, _second_diff(v, 0, g.hx, signs[bcx]) + _second_diff(v, 1, g.hy, signs[bcy]))
    ux, uy = field.x, field.y
    lx = np.zeros_like(ux)
    # along x the wall faces themselves are the (zero) neighbours
    lx[1:-1, :] = (ux[2:, :] - 2.0 * ux[1:-1, :] + ux[:-2, :]) / g.hx**2
    lx[1:-1, :] += _second_diff(ux, 1, g.hy, -1.0)[1:-1, :]
    ly = np.zeros_like(uy)
    ly[:, 1:-1] = (uy[:, 2:] - 2.0 * uy[:, 1:-1] + uy[:, :-2]) / g.hy**2
    ly[:, 1:-1] += _second_diff(uy, 0, g.hx, -1.0)[:, 1:-1]
    return VectorField(g, lx, ly)


def inner(a, b) -> float:
    """Discrete L2 inner product (midpoint quadrature on cells or faces)."""
    g = same_grid(a, b)
    if isinstance(a, ScalarField):
        return float(np.sum(a.values * b.values) * g.cell_area)
    return float((np.sum(a.x * b.x) + np.sum(a.y * b.y)) * g.cell_area)


def face_average(rho: ScalarField) -> VectorField:
    """Arithmetic face average of a cell scalar; wall faces copy the adjacent cell."""
    g = rho.grid
    r = rho.values
    rx = np.empty((g.nx + 1, g.ny))
    rx[1:-1] = 0.5 * (r[1:] + r[:-1])
    rx[0], rx[-1] = r[0], r[-1]
    ry = np.empty((g.nx, g.ny + 1))
    ry[:, 1:-1] = 0.5 * (r[:, 1:] + r[:, :-1])
    ry[:, 0], ry[:, -1] = r[:, 0], r[:, -1]
    return VectorField(g, rx, ry)


def weighted_energy(rho: ScalarField, u: VectorField) -> float:
    """``integral of rho |u|^2`` with face-averaged density."""
    rf = face_average(rho)
    g = same_grid(rho, u)
    return float((np.sum(rf.x * u.x**2) + np.sum(rf.y * u.y**2)) * g.cell_area)


def dirichlet_energy(u: VectorField) -> float:
    """``integral of |grad u|^2`` consistent with :func:`laplacian` (= -<lap u, u>)."""
    g = u.grid
    ux, uy = u.x, u.y
    # x-component: differences along x include the zero wall faces
    s = np.sum(np.diff(ux, axis=0) ** 2) / g.hx**2
    s += (np.sum(np.diff(ux[1:-1], axis=1) ** 2) + 2.0 * np.sum(ux[1:-1, 0] ** 2 + ux[1:-1, -1] ** 2)) / g.hy**2
    s += np.sum(np.diff(uy, axis=1) ** 2) / g.hy**2
    s += (np.sum(np.diff(uy[:, 1:-1], axis=0) ** 2) + 2.0 * np.sum(uy[0, 1:-1] ** 2 + uy[-1, 1:-1] ** 2)) / g.hx**2
    return float(s * g.cell_area)


def curl_nodes(psi: np.ndarray, grid: Grid2D) -> VectorField:
    """Staggered curl of a node stream function: ``u = (d psi/dy, -d psi/dx)``.

    The result is discretely divergence-free by construction.
    """
    ux = (psi[:, 1:] - psi[:, :-1]) / grid.hy
    uy = -(psi[1:, :] - psi[:-1, :]) / grid.hx
    return VectorField(grid, ux, uy)


def stream_function(u: VectorField) -> np.ndarray:
    """Node stream function obtained by integrating ``u.x`` upward from the bottom wall.

    For a divergence-free field with zero wall flux, ``curl_nodes`` of the
    result reproduces ``u``.
    """
    g = u.grid
    psi = np.zeros((g.nx + 1, g.ny + 1))
    psi[:, 1:] = np.cumsum(u.x, axis=1) * g.hy
    return psi


# ---------------------------------------------------------------------------
# mollification


def bump(r):
    """Quartic bump ``(1 - r^2)^2`` on the unit disc, zero outside."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, (1.0 - r * r) ** 2, 0.0)


# smallest kernel radius in cells; below this the stencil degenerates to the identity
MIN_KERNEL_CELLS = 1.5


class Mollifier:
    """Discrete compactly supported kernel of radius ``eps`` on ``grid``.

    ``weights`` are dimensionless and sum to one, i.e. the kernel values times
    the cell area; this is the ``eps^-d`` normalisation of ``theta(x / eps)``.
    """

    def __init__(self, eps: float, grid: Grid2D):
        if not eps > 0:
            raise ConfigurationError("mollifier radius must be positive")
        if eps < MIN_KERNEL_CELLS * max(grid.hx, grid.hy) * (1 - 1e-12):
            raise ConfigurationError(
                f"mollifier radius {eps:g} is below {MIN_KERNEL_CELLS} cells ({MIN_KERNEL_CELLS * max(grid.hx, grid.hy):g})"
            )
        a = int(np.floor(eps / grid.hx))
        b = int(np.floor(eps / grid.hy))
        if 2 * a + 1 > grid.nx or 2 * b + 1 > grid.ny:
            raise ConfigurationError(f"mollifier radius {eps:g} is larger than the domain")
        ox = np.arange(-a, a + 1) * grid.hx
        oy = np.arange(-b, b + 1) * grid.hy
        X, Y = np.meshgrid(ox, oy, indexing="ij")
        w = bump(np.sqrt(X**2 + Y**2) / eps)
        self.eps = eps
        self.grid = grid
        self.weights = w / w.sum()
        self.half_width = (a, b)

    def density(self):
        """Kernel values ``theta_eps`` (so that ``sum * cell_area == 1``)."""
        return self.weights / self.grid.cell_area

    def apply(self, arr, mode):
        """Correlate with the weights; ``mode`` is one ndimage boundary mode or one per axis."""
        if isinstance(mode, str):
            return ndimage.correlate(arr, self.weights, mode=mode, cval=0.0)
        # ndimage.correlate takes a single mode, so pad each axis ourselves
        a, b = self.half_width
        padded = np.pad(arr, ((a, a), (0, 0)), mode=_PAD_MODES[mode[0]])
        padded = np.pad(padded, ((0, 0), (b, b)), mode=_PAD_MODES[mode[1]])
        out = ndimage.correlate(padded, self.weights, mode="constant", cval=0.0)
        return out[a : a + arr.shape[0], b : b + arr.shape[1]]


# ndimage boundary names -> np.pad names
_PAD_MODES = {"reflect": "symmetric", "mirror": "reflect", "constant": "constant", "nearest": "edge"}


def mollify(field, m: Mollifier):
    """Convolve a field with the kernel, mirroring data across the walls.

    The even extension keeps constants exact and the result inside the
    range of the input.
    """
    if field.grid != m.grid:
        raise GridMismatchError("mollifier built for a different grid")
    if isinstance(field, ScalarField):
        return ScalarField(field.grid, m.apply(field.values, ("reflect", "reflect")))
    if isinstance(field, VectorField):
        return VectorField(
            field.grid,
            m.apply(field.x, ("mirror", "reflect")),
            m.apply(field.y, ("reflect", "mirror")),
        )
    raise TypeError(f"cannot mollify {type(field).__name__}")


def interior_mask_nodes(grid: Grid2D, eps: float) -> np.ndarray:
    X, Y = grid.node_coords()
    return grid.wall_distance(X, Y) > eps


def mollified_velocity(u: VectorField, eps: float) -> VectorField:
    """Interior-truncated, mollified transport velocity.

    The stream function of ``u`` is cut off outside
    ``{dist(x, wall) > eps}``, convolved with the kernel of radius ``eps/2``
    and differentiated back. The result is discretely divergence-free and
    vanishes identically within ``eps/2`` of the walls.
    """
    g = u.grid
    mask = interior_mask_nodes(g, eps)
    if not mask.any():
        raise ConfigurationError(f"interior region for eps={eps:g} is empty", key="physics.epsilon")
    m = Mollifier(0.5 * eps, g)
    psi = stream_function(u) * mask
    psi_eps = m.apply(psi, "constant")
    return curl_nodes(psi_eps, g)
