"""Density transport by the mollified velocity.

The main update is a conservative finite-volume scheme (MUSCL reconstruction
with the minmod limiter, SSP-RK2 in time). Backward characteristics with
bilinear interpolation give an independent semi-Lagrangian answer used as a
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .exceptions import CFLError, ConfigurationError
from .fields import Grid2D, ScalarField, VectorField, same_grid

# admissible sum over the four faces of |u_f| dt / h per substep
SUBSTEP_COURANT = 0.5


def minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _face_flux_1d(q, vel, axis):
    """Upwind MUSCL-minmod flux through the interior faces along ``axis``.

    ``q`` has n cells along ``axis``; ``vel`` has n + 1 faces. Wall faces carry
    no flux. Returns an array with n + 1 faces along ``axis``.
    """
    q = np.moveaxis(q, axis, 0)
    vel = np.moveaxis(vel, axis, 0)
    # zero-gradient ghosts: one-sided slopes vanish at the walls
    dq = np.diff(q, axis=0)
    slope = np.zeros_like(q)
    slope[1:-1] = minmod(dq[:-1], dq[1:])
    left = q[:-1] + 0.5 * slope[:-1]  # value just left of interior face
    right = q[1:] - 0.5 * slope[1:]
    vi = vel[1:-1]
    flux = np.zeros_like(vel)
    flux[1:-1] = np.where(vi > 0.0, vi * left, vi * right)
    return np.moveaxis(flux, 0, axis)


def density_rhs(q: np.ndarray, u: VectorField) -> np.ndarray:
    g = u.grid
    fx = _face_flux_1d(q, u.x, 0)
    fy = _face_flux_1d(q, u.y, 1)
    return -(fx[1:, :] - fx[:-1, :]) / g.hx - (fy[:, 1:] - fy[:, :-1]) / g.hy


def courant_sum(u: VectorField, dt: float) -> float:
    """Largest per-cell sum over faces of ``|u_f| dt / h``."""
    g = u.grid
    ax = np.abs(u.x) * dt / g.hx
    ay = np.abs(u.y) * dt / g.hy
    return float(np.max(ax[1:, :] + ax[:-1, :] + ay[:, 1:] + ay[:, :-1]))


def advance_density(rho: ScalarField, u_eps: VectorField, dt: float) -> ScalarField:
    """One step of ``rho_t + div(rho u_eps) = 0``.

    The step is split into equal substeps keeping the face Courant sum below
    :data:`SUBSTEP_COURANT`; each forward-Euler stage is then a convex
    combination of neighbouring values, so the update is monotone and the
    discrete maximum principle holds.
    """
    g = same_grid(rho, u_eps)
    if dt < 0:
        raise CFLError(f"negative time step dt={dt:g}", dt=dt)
    vmax = u_eps.max_abs()
    if vmax * dt > min(g.hx, g.hy) * (1 + 1e-12):
        raise CFLError(
            f"density CFL violated: max|u_eps| dt = {vmax * dt:.4g} exceeds min h = {min(g.hx, g.hy):.4g} (dt={dt:g})",
            dt=dt,
        )
    n = max(1, math.ceil(courant_sum(u_eps, dt) / SUBSTEP_COURANT))
    tau = dt / n
    q = rho.values.copy()
    for _ in range(n):
        q1 = q + tau * density_rhs(q, u_eps)
        q = 0.5 * q + 0.5 * (q1 + tau * density_rhs(q1, u_eps))
    return ScalarField(g, q)


# ---------------------------------------------------------------------------
# characteristics


@dataclass
class VelocityHistory:
    """Transport velocities at increasing times, linear in time between them."""

    grid: Grid2D
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)

    def append(self, t, u: VectorField):
        if self.times and t <= self.times[-1]:
            raise ValueError("history times must increase")
        if u.grid != self.grid:
            raise ValueError("velocity on a different grid")
        self.times.append(float(t))
        self.fields.append(u)
        self._interp = None

    def _interpolators(self):
        if getattr(self, "_interp", None) is None:
            g = self.grid
            ypad = np.concatenate([[0.0], g.yc, [g.Ly]])
            xpad = np.concatenate([[0.0], g.xc, [g.Lx]])
            out = []
            for u in self.fields:
                ux = np.pad(u.x, ((0, 0), (1, 1)))  # no-slip: zero on the walls
                uy = np.pad(u.y, ((1, 1), (0, 0)))
                out.append(
                    (
                        RegularGridInterpolator((g.xn, ypad), ux, bounds_error=False, fill_value=None),
                        RegularGridInterpolator((xpad, g.yn), uy, bounds_error=False, fill_value=None),
                    )
                )
            self._interp = out
        return self._interp

    def velocity(self, pts: np.ndarray, t: float) -> np.ndarray:
        """Bilinear-in-space, linear-in-time velocity at points ``(n, 2)``."""
        ts = self.times
        if not ts or t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"time {t:g} outside stored history")
        interp = self._interpolators()
        if len(ts) == 1:
            k, w = 0, 0.0
        else:
            k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
            w = (t - ts[k]) / (ts[k + 1] - ts[k])
        ix, iy = interp[k]
        v = np.stack([ix(pts), iy(pts)], axis=-1)
        if w > 0.0:
            jx, jy = interp[k + 1]
            v = (1 - w) * v + w * np.stack([jx(pts), jy(pts)], axis=-1)
        return v


def trace_characteristic(history: VelocityHistory, x, t: float, s: float, steps: int | None = None) -> np.ndarray:
    """Position at time ``s`` of the trajectory through ``x`` at time ``t``.

    Classical RK4; ``steps`` defaults to four per history interval covered.
    Accepts a single point ``(2,)`` or an array ``(n, 2)``.
    """
    ts = history.times
    lo, hi = min(t, s), max(t, s)
    if not ts or lo < ts[0] - 1e-12 or hi > ts[-1] + 1e-12:
        raise ValueError(f"times [{lo:g}, {hi:g}] outside stored history")
    g = history.grid
    pts = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    if steps is None:
        spans = max(1, int(np.sum((np.asarray(ts[1:]) > lo) & (np.asarray(ts[:-1]) < hi))))
        steps = 4 * spans
    if s == t:
        return pts.reshape(np.shape(x))
    dt = (s - t) / steps
    tau = t
    lo_b = np.array([0.0, 0.0])
    hi_b = np.array([g.Lx, g.Ly])
    for _ in range(steps):
        k1 = history.velocity(pts, tau)
        k2 = history.velocity(np.clip(pts + 0.5 * dt * k1, lo_b, hi_b), tau + 0.5 * dt)
        k3 = history.velocity(np.clip(pts + 0.5 * dt * k2, lo_b, hi_b), tau + 0.5 * dt)
        k4 = history.velocity(np.clip(pts + dt * k3, lo_b, hi_b), tau + dt)
        pts = np.clip(pts + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), lo_b, hi_b)
        tau += dt
    return pts.reshape(np.shape(x))


def sample_bilinear(rho: ScalarField, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of cell data with the edge values held constant."""
    g = rho.grid
    p = np.column_stack(
        [np.clip(pts[:, 0], g.xc[0], g.xc[-1]), np.clip(pts[:, 1], g.yc[0], g.yc[-1])]
    )
    return RegularGridInterpolator((g.xc, g.yc), rho.values)(p)


def density_via_characteristics(rho0: ScalarField, history: VelocityHistory, t: float, steps=None) -> ScalarField:
    """``rho(t, x) = rho0(X(0; t, x))`` evaluated at every cell centre."""
    g = rho0.grid
    if history.grid != g:
        raise ConfigurationError("history and density live on different grids")
    if t == 0.0:
        return rho0.copy()
    X, Y = g.cell_coords()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    foot = trace_characteristic(history, pts, t, history.times[0], steps)
    return ScalarField(g, sample_bilinear(rho0, foot).reshape(g.shape))
