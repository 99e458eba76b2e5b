"""Momentum update for the variable-density fluid with particle drag.

One step solves, on the MAC grid,

    (rho' u' - rho u) / dt + div(rho u_eps (x) u) - mu lap u' + grad p'
        + rho' e u' = rho' g + s,        div u' = 0,

with convection explicit and everything else implicit. Velocity and
pressure come out of a single sparse saddle-point solve, so ``u'`` is
divergence-free to round-off and the linear part is energy-stable for
any ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import elliptic as E
from .exceptions import ConfigurationError, SolverError
from .fields import (
    ScalarField,
    VectorField,
    dirichlet_energy,
    divergence,
    face_average,
    same_grid,
)
from .kinetic import PhaseDistribution, compute_moments, regularizer


@dataclass
class DragFields:
    """Internal coefficient ``e = R m0`` and external force density ``g = R m1``
    at cell centres."""

    e: ScalarField
    gx: ScalarField
    gy: ScalarField

    @classmethod
    def zeros(cls, grid):
        z = ScalarField.zeros(grid)
        return cls(z, z, z)

    def faces(self):
        """Face-averaged ``(e_x, e_y)`` and ``g`` (as a VectorField)."""
        ef = face_average(self.e)
        gxf = face_average(self.gx).x
        gyf = face_average(self.gy).y
        return ef, VectorField(self.e.grid, gxf, gyf)

    def is_zero(self) -> bool:
        return not (np.any(self.e.values) or np.any(self.gx.values) or np.any(self.gy.values))


def assemble_drag(f: PhaseDistribution, rho: ScalarField | None, delta: float) -> DragFields:
    """``e = R m0 f`` and ``g = R m1 f``; ``rho`` enters later, in the momentum solve."""
    m = compute_moments(f)
    R = regularizer(m, delta).R.values
    g = f.grid
    return DragFields(
        ScalarField(g, R * m.m0.values),
        ScalarField(g, R * m.m1x.values),
        ScalarField(g, R * m.m1y.values),
    )


@dataclass
class FluidStepReport:
    iterations: int
    divergence: float
    residual: float


def convection(rho: ScalarField, u_eps: VectorField, u: VectorField) -> VectorField:
    """Conservative central ``div(rho u_eps (x) u)`` on the faces (walls get zero)."""
    g = same_grid(rho, u_eps, u)
    r = rho.values
    # cell-centre and node interpolants
    uex_c, uey_c = u_eps.cell_centered()
    ux_c, uy_c = u.cell_centered()
    rn = np.zeros((g.nx + 1, g.ny + 1))
    rp = np.pad(r, 1, mode="edge")
    rn[:, :] = 0.25 * (rp[:-1, :-1] + rp[1:, :-1] + rp[:-1, 1:] + rp[1:, 1:])
    # u_eps normal components at nodes (zero on the walls)
    uey_n = np.zeros((g.nx + 1, g.ny + 1))
    uey_n[1:-1, :] = 0.5 * (u_eps.y[1:, :] + u_eps.y[:-1, :])
    uex_n = np.zeros((g.nx + 1, g.ny + 1))
    uex_n[:, 1:-1] = 0.5 * (u_eps.x[:, 1:] + u_eps.x[:, :-1])
    # transported components at nodes (no-slip: zero on walls)
    ux_n = np.zeros((g.nx + 1, g.ny + 1))
    ux_n[:, 1:-1] = 0.5 * (u.x[:, 1:] + u.x[:, :-1])
    uy_n = np.zeros((g.nx + 1, g.ny + 1))
    uy_n[1:-1, :] = 0.5 * (u.y[1:, :] + u.y[:-1, :])

    cx = np.zeros((g.nx + 1, g.ny))
    fxx = r * uex_c * ux_c  # at cells
    fxy = rn * uey_n * ux_n  # at nodes
    cx[1:-1, :] = (fxx[1:, :] - fxx[:-1, :]) / g.hx + (fxy[1:-1, 1:] - fxy[1:-1, :-1]) / g.hy

    cy = np.zeros((g.nx, g.ny + 1))
    fyy = r * uey_c * uy_c
    fyx = rn * uex_n * uy_n
    cy[:, 1:-1] = (fyy[:, 1:] - fyy[:, :-1]) / g.hy + (fyx[1:, 1:-1] - fyx[:-1, 1:-1]) / g.hx
    return VectorField(g, cx, cy)


def _saddle_matrix(A, G):
    """``[[A, G], [G^T, 0]]`` with the first pressure unknown removed."""
    Gp = G[:, 1:]
    n = Gp.shape[1]
    return sp.bmat([[A, Gp], [Gp.T, sp.csr_matrix((n, n))]], format="csc")


def advance_momentum(
    u: VectorField,
    rho: ScalarField,
    rho_prev: ScalarField,
    drag: DragFields | None,
    mu: float,
    dt: float,
    u_eps: VectorField | None,
    source: VectorField | None = None,
    rho_floor: float = 0.0,
    tol: float = 1e-10,
):
    """One implicit momentum step; returns ``(u_new, p, FluidStepReport)``.

    ``rho`` is the new density, ``rho_prev`` the old one. ``u_eps=None``
    switches convection off. ``p`` has zero mean.
    """
    g = same_grid(u, rho, rho_prev)
    if mu < 0:
        raise ConfigurationError(f"viscosity must be non-negative, got {mu}", key="physics.mu")
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt}", key="time.dt")
    rmin = min(rho.values.min(), rho_prev.values.min())
    if rmin <= rho_floor or rmin <= 0.0:
        raise ConfigurationError(f"density {rmin:.3e} at or below floor {rho_floor:.3e}")
    rf_new = E.pack(face_average(rho))
    rf_old = E.pack(face_average(rho_prev))
    rhs = rf_old * E.pack(u) / dt
    diag = rf_new / dt
    if drag is not None and not drag.is_zero():
        ef, gf = drag.faces()
        diag = diag + rf_new * E.pack(ef)
        rhs = rhs + rf_new * E.pack(gf)
    if u_eps is not None:
        rhs = rhs - E.pack(convection(rho_prev, u_eps, u))
    if source is not None:
        rhs = rhs + E.pack(source)
    A = sp.diags(diag) - mu * E.vector_laplacian_matrix(g)
    G = E.gradient_matrix(g)
    M = _saddle_matrix(A.tocsr(), G)
    b = np.concatenate([rhs, np.zeros(g.nx * g.ny - 1)])
    try:
        sol = splu(M).solve(b)
    except RuntimeError as exc:  # singular factorisation
        raise SolverError(f"momentum solve failed: {exc}") from exc
    nf = E.n_interior_faces(g)
    uvec = sol[:nf]
    p = np.concatenate([[0.0], sol[nf:]])
    res = np.linalg.norm(A @ uvec + G @ p - rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if not np.isfinite(res) or res > max(tol * scale, 1e-12):
        raise SolverError(f"momentum solve residual {res / scale:.3e} above tolerance", residual=res / scale)
    p -= p.mean()
    u_new = E.unpack(uvec, g)
    div = float(np.abs(divergence(u_new).values).max())
    return u_new, ScalarField(g, p.reshape(g.shape)), FluidStepReport(1, div, res / scale)


def leray_project(u_star: VectorField, rho: ScalarField | None = None, tol: float = 1e-10):
    """Project onto discretely divergence-free fields with zero wall flux.

    Returns ``(u, phi)`` with ``u = u* - grad(phi)`` (or ``u* - grad(phi)/rho``
    on faces when ``rho`` is given). Wall-normal components of ``u*`` are
    dropped first (no-penetration data).
    """
    g = u_star.grid
    us = E.pack(u_star)
    if rho is None:
        beta = None
    else:
        same_grid(u_star, rho)
        beta = 1.0 / E.pack(face_average(rho))
    solver = E.poisson_solver(g, beta, tol)
    G = E.gradient_matrix(g)
    # div(u*) on interior faces is -G^T u*
    phi = solver.solve(-(G.T @ us))
    grad = G @ phi
    if beta is not None:
        grad = beta * grad
    u = E.unpack(us - grad, g)
    return u, ScalarField(g, phi.reshape(g.shape))


def kinetic_energy_rate_terms(u_new, u_old, rho_new, rho_old, drag, mu, dt):
    """Both sides of the one-step energy inequality of the linear solve.

    Returns ``(lhs, rhs)``; without convection and with unchanged density the
    scheme guarantees ``lhs <= rhs``.
    """
    g = u_new.grid
    rfn = face_average(rho_new)
    rfo = face_average(rho_old)

    def wsum(wf, a, b):
        return float((np.sum(wf.x * a.x * b.x) + np.sum(wf.y * a.y * b.y)) * g.cell_area)

    lhs = wsum(rfn, u_new, u_new) + 2 * dt * mu * dirichlet_energy(u_new)
    rhs = wsum(rfo, u_old, u_old)
    if drag is not None:
        ef, gf = drag.faces()
        ew = VectorField(g, rfn.x * ef.x, rfn.y * ef.y)
        lhs += 2 * dt * wsum(ew, u_new, u_new)
        rhs += 2 * dt * wsum(rfn, gf, u_new)
    return lhs, rhs
