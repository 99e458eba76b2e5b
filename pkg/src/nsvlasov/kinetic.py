"""Phase-space distribution, velocity moments, drag regularizer and the
Vlasov update with specular walls."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .exceptions import CFLError, ConfigurationError
from .fields import Grid2D, ScalarField, VectorField


@dataclass(frozen=True)
class VelocityGrid:
    """Tensor velocity grid on ``[-Vmax, Vmax]^2`` with ``nv`` cells per axis.

    Centres are built by mirroring the positive half, so ``v[nv-1-k] == -v[k]``
    holds bit for bit and specular reflection maps cells onto cells.
    """

    nv: int
    Vmax: float

    def __post_init__(self):
        if self.nv < 4 or self.nv % 2:
            raise ConfigurationError(f"velocity cells per axis must be even and >= 4, got {self.nv}", key="grid.nv")
        if not self.Vmax > 0:
            raise ConfigurationError("Vmax must be positive", key="physics.vmax")

    @property
    def dv(self) -> float:
        return 2.0 * self.Vmax / self.nv

    @property
    def centers(self) -> np.ndarray:
        half = (np.arange(self.nv // 2) + 0.5) * self.dv
        return np.concatenate([-half[::-1], half])

    @property
    def faces(self) -> np.ndarray:
        half = np.arange(self.nv // 2 + 1) * self.dv
        return np.concatenate([-half[:0:-1], half])

    def mesh(self):
        return np.meshgrid(self.centers, self.centers, indexing="ij")


class PhaseDistribution:
    """Cell averages ``f[i, j, k, l] >= 0`` on physical cell ``(i, j)`` and
    velocity cell ``(k, l)``."""

    def __init__(self, grid: Grid2D, vgrid: VelocityGrid, values: np.ndarray, check=True):
        vals = np.ascontiguousarray(values, dtype=float)
        if vals.shape != (grid.nx, grid.ny, vgrid.nv, vgrid.nv):
            raise ValueError(f"distribution shape {vals.shape} does not match grids")
        if check:
            if not np.all(np.isfinite(vals)):
                raise ValueError("distribution contains non-finite values")
            if vals.min() < 0.0:
                raise ValueError(f"distribution has negative values (min {vals.min():.3e})")
        self.grid = grid
        self.vgrid = vgrid
        self.values = vals

    @classmethod
    def zeros(cls, grid, vgrid):
        return cls(grid, vgrid, np.zeros((grid.nx, grid.ny, vgrid.nv, vgrid.nv)), check=False)

    @classmethod
    def from_function(cls, grid, vgrid, func):
        """Sample ``func(x, y, vx, vy)`` at cell and velocity centres."""
        x, y = grid.cell_coords()
        vx, vy = vgrid.mesh()
        vals = func(x[:, :, None, None], y[:, :, None, None], vx[None, None], vy[None, None])
        return cls(grid, vgrid, np.broadcast_to(vals, (grid.nx, grid.ny, vgrid.nv, vgrid.nv)))

    @property
    def cell_volume(self) -> float:
        return self.grid.cell_area * self.vgrid.dv**2

    def total_mass(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    def ring_mass(self) -> float:
        """Mass sitting in the outermost velocity cells (should stay zero)."""
        f = self.values
        inner = f[:, :, 1:-1, 1:-1].sum()
        return float((f.sum() - inner) * self.cell_volume)

    def copy(self):
        return PhaseDistribution(self.grid, self.vgrid, self.values.copy(), check=False)


@dataclass
class MomentFields:
    m0: ScalarField
    m1x: ScalarField
    m1y: ScalarField
    m2: ScalarField
    m3: ScalarField

    @property
    def m1_norm(self) -> np.ndarray:
        return np.hypot(self.m1x.values, self.m1y.values)

    def totals(self):
        """Global moments ``(M0, M1x, M1y, M2, M3)``."""
        return tuple(f.integral() for f in (self.m0, self.m1x, self.m1y, self.m2, self.m3))


def _moment_weights(vgrid: VelocityGrid):
    vx, vy = vgrid.mesh()
    s = np.hypot(vx, vy)
    w = np.stack([np.ones_like(vx), vx, vy, s**2, s**3], axis=-1) * vgrid.dv**2
    return w.reshape(-1, 5)


def compute_moments(f: PhaseDistribution) -> MomentFields:
    """Midpoint-rule velocity moments ``m_k = sum f |v|^k dv`` (and vector ``m1``)."""
    g = f.grid
    m = f.values.reshape(g.nx * g.ny, -1) @ _moment_weights(f.vgrid)
    m = m.reshape(g.nx, g.ny, 5)
    return MomentFields(*(ScalarField(g, m[:, :, c]) for c in range(5)))


@dataclass
class RegularizerField:
    delta: float
    R: ScalarField

    @property
    def Q(self) -> ScalarField:
        return ScalarField(self.R.grid, 1.0 - self.R.values)


def _regularizer_values(m0, m1n, delta):
    return 1.0 / (1.0 + delta * m0 + delta * m1n)


def regularizer(m: MomentFields, delta: float) -> RegularizerField:
    """``R = 1 / (1 + delta m0 + delta |m1|)``."""
    if delta < 0:
        raise ConfigurationError(f"delta must be non-negative, got {delta}", key="physics.delta")
    R = _regularizer_values(m.m0.values, m.m1_norm, delta)
    return RegularizerField(delta, ScalarField(m.m0.grid, R))


def specular_reflect(v, nu):
    """``v* = v - 2 (v . nu) nu`` for a unit normal ``nu`` (batched over leading axes)."""
    v = np.asarray(v, dtype=float)
    nu = np.asarray(nu, dtype=float)
    n2 = np.sum(nu * nu, axis=-1)
    if np.any(np.abs(n2 - 1.0) > 1e-12):
        raise ValueError("wall normal must have unit length")
    return v - 2.0 * np.sum(v * nu, axis=-1, keepdims=True) * nu


# ---------------------------------------------------------------------------
# time stepping

# admissible sum over a cell's four faces of |velocity| dt / h per substep
FACE_COURANT = 1.0


@dataclass
class VlasovReport:
    leaked_mass: float = 0.0
    ring_mass: float = 0.0
    x_substeps: int = 0
    v_substeps: int = 0


def free_stream(f: PhaseDistribution, dt: float):
    """Advance ``f_t + v . grad_x f = 0`` with specular walls; returns ``(f, substeps)``."""
    g, vg = f.grid, f.vgrid
    vel = vg.centers
    vm = np.abs(vel).max()
    courant = 2.0 * dt * vm * (1.0 / g.hx + 1.0 / g.hy)
    if dt * vm * math.sqrt(2.0) > min(g.hx, g.hy) * (1 + 1e-12):
        raise CFLError(f"free-streaming CFL violated for dt={dt:g}", dt=dt)
    n = max(1, math.ceil(courant / FACE_COURANT - 1e-12))
    tau = dt / n
    q = f.values.copy()
    rhs = np.empty_like(q)
    q1 = np.empty_like(q)
    for _ in range(n):
        K.free_stream_rhs(q, vel, g.hx, g.hy, rhs)
        K.euler(q, rhs, tau, q1)
        K.free_stream_rhs(q1, vel, g.hx, g.hy, rhs)
        K.rk2_combine(q, q1, rhs, tau, q)
    return PhaseDistribution(g, vg, q, check=False), n


def drag_coefficient(f_values, vgrid, rho_values, delta):
    """Cellwise ``R_delta rho`` computed from the current distribution."""
    nx, ny = rho_values.shape
    m = f_values.reshape(nx * ny, -1) @ _moment_weights(vgrid)[:, :3]
    m0 = m[:, 0].reshape(nx, ny)
    m1n = np.hypot(m[:, 1], m[:, 2]).reshape(nx, ny)
    return _regularizer_values(m0, m1n, delta) * rho_values


def _cap(q, rmax, tau):
    # R <= 1, so the coefficient never exceeds max rho
    return float(q.max()) * (1.0 + 2.0 * tau * rmax)


def drag_accelerate(f: PhaseDistribution, rho: ScalarField, u: VectorField, delta: float, dt: float):
    """Advance ``f_t + div_v(R rho (u - v) f) = 0``; returns ``(f, leaked, substeps)``.

    ``u`` is averaged to cell centres. SSP-RK2 over flux-corrected Euler
    stages (see ``_kernels.drag_euler``); the regularizer is recomputed from
    the stage distribution at each stage.
    """
    g, vg = f.grid, f.vgrid
    ucx, ucy = u.cell_centered()
    ucx = np.ascontiguousarray(ucx)
    ucy = np.ascontiguousarray(ucy)
    rmax = float(rho.values.max())
    vfaces = vg.faces
    # R <= 1, so rho bounds the coefficient at every stage
    bound = K.max_outflow_drag(np.ascontiguousarray(rho.values), ucx, ucy, vfaces) * dt / vg.dv
    amax = rmax * (max(np.abs(ucx).max(), np.abs(ucy).max()) + vg.Vmax)
    if amax * dt > vg.dv * (1 + 1e-12):
        raise CFLError(f"velocity-space CFL violated for dt={dt:g} (max|a| dt = {amax * dt:.3g} > dv)", dt=dt)
    n = max(1, math.ceil(bound / FACE_COURANT - 1e-12))
    tau = dt / n
    q = f.values.copy()
    rhs = np.empty_like(q)
    q1 = np.empty_like(q)
    leaked = 0.0
    area = g.cell_area
    for _ in range(n):
        kap = drag_coefficient(q, vg, rho.values, delta)
        l0 = K.drag_euler(q, kap, ucx, ucy, vfaces, vg.dv, tau, _cap(q, rmax, tau), q1)
        kap = drag_coefficient(q1, vg, rho.values, delta)
        l1 = K.drag_euler(q1, kap, ucx, ucy, vfaces, vg.dv, tau, _cap(q1, rmax, tau), rhs)
        q = 0.5 * (q + rhs)
        leaked += 0.5 * (l0 + l1) * area
    return PhaseDistribution(g, vg, q, check=False), leaked, n


def advance_vlasov(f: PhaseDistribution, rho: ScalarField, u: VectorField, delta: float, dt: float):
    """One split step of ``f_t + v . grad_x f + div_v(R rho (u - v) f) = 0``.

    Free streaming with specular walls first, then the drag acceleration.
    Returns ``(f, VlasovReport)``.
    """
    if delta < 0:
        raise ConfigurationError(f"delta must be non-negative, got {delta}", key="physics.delta")
    if rho.grid != f.grid or u.grid != f.grid:
        raise ConfigurationError("distribution and fluid fields live on different grids")
    fs, nx_sub = free_stream(f, dt)
    fa, leaked, nv_sub = drag_accelerate(fs, rho, u, delta, dt)
    return fa, VlasovReport(leaked, fa.ring_mass(), nx_sub, nv_sub)
