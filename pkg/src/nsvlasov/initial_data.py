"""Regularized initial data: smoothed density with a floor, and a weighted
Hodge decomposition of the initial momentum into ``rho u0 + grad q0``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elliptic as E
from .exceptions import ConfigurationError
from .fields import (
    Grid2D,
    Mollifier,
    ScalarField,
    VectorField,
    curl_nodes,
    divergence,
    face_average,
    mollify,
    same_grid,
)
from .kinetic import PhaseDistribution, VelocityGrid, compute_moments
from .state import SimState


def _check_density(rho: ScalarField, name="initial density"):
    if rho.values.min() < 0.0:
        raise ConfigurationError(f"{name} is negative (min {rho.values.min():.3e})", key="initial")


def regularize_density(rho0: ScalarField, eps: float) -> ScalarField:
    """``rho0 * theta_eps + eps``: bounded below by ``eps`` and above by ``max rho0 + eps``."""
    _check_density(rho0)
    if not eps > 0:
        raise ConfigurationError(f"epsilon must be positive, got {eps}", key="physics.epsilon")
    sm = mollify(rho0, Mollifier(eps, rho0.grid)).values
    # the kernel is non-negative, so round-off is the only way out of range
    sm = np.clip(sm, 0.0, rho0.values.max())
    return ScalarField(rho0.grid, sm + eps)


def wall_cutoff(grid: Grid2D, eps: float) -> VectorField:
    """Smooth face weights: 0 within ``eps`` of the walls, 1 beyond ``2 eps``."""

    def c(x, y):
        s = np.clip((grid.wall_distance(x, y) - eps) / eps, 0.0, 1.0)
        return s * s * (3.0 - 2.0 * s)

    xf, yf = grid.xface_coords()
    xg, yg = grid.yface_coords()
    return VectorField(grid, c(xf, yf), c(xg, yg))


def energy_density_ratio(m: VectorField, rho: ScalarField) -> VectorField:
    """``m / sqrt(rho_f)`` on faces, with 0/0 read as 0."""
    rf = face_average(rho)
    out = []
    for mc, rc in ((m.x, rf.x), (m.y, rf.y)):
        w = np.zeros_like(mc)
        pos = rc > 0.0
        w[pos] = mc[pos] / np.sqrt(rc[pos])
        if np.any((~pos) & (mc != 0.0)):
            raise ConfigurationError("momentum is non-zero where the density vanishes", key="initial")
        out.append(w)
    return VectorField(m.grid, *out)


def momentum_energy(m: VectorField, rho: ScalarField) -> float:
    """``integral of |m|^2 / rho`` on faces (0/0 read as 0)."""
    w = energy_density_ratio(m, rho)
    return float((np.sum(w.x**2) + np.sum(w.y**2)) * m.grid.cell_area)


def regularize_momentum(m0: VectorField, rho0: ScalarField, rho_eps: ScalarField, eps: float) -> VectorField:
    """Smooth the momentum through ``m0 / sqrt(rho0)`` so that its energy cannot grow.

    ``w = m0 / sqrt(rho0)`` is mollified, damped near the walls and mapped back
    with ``sqrt(rho_eps)``; then ``|m_eps|^2 / rho_eps = |w_eps|^2``.
    """
    same_grid(m0, rho0, rho_eps)
    w = energy_density_ratio(m0.with_walls(), rho0)
    w = mollify(w, Mollifier(eps, m0.grid))
    c = wall_cutoff(m0.grid, eps)
    rf = face_average(rho_eps)
    return VectorField(m0.grid, w.x * c.x * np.sqrt(rf.x), w.y * c.y * np.sqrt(rf.y)).with_walls()


@dataclass
class HodgeResult:
    """``m = rho u0 + grad q0`` with ``div u0 = 0`` (face quadrature throughout)."""

    u0: VectorField
    q0: ScalarField
    grad_q: VectorField
    decomposition_residual: float
    divergence: float
    velocity_energy: float  # integral rho |u0|^2
    potential_energy: float  # integral |grad q0|^2 / rho
    momentum_energy: float  # integral |m|^2 / rho

    @property
    def identity_defect(self) -> float:
        """Relative defect of ``rho|u0|^2 + |grad q0|^2/rho = |m|^2/rho``."""
        lhs = self.velocity_energy + self.potential_energy
        return abs(lhs - self.momentum_energy) / max(self.momentum_energy, 1e-300)


def hodge_project(m: VectorField, rho: ScalarField, tol: float = 1e-10) -> HodgeResult:
    """Solve ``div(grad q / rho) = div(m / rho)`` with zero-flux walls; ``u0 = (m - grad q) / rho``.

    Wall-normal components of ``m`` are ignored (no-penetration).
    """
    g = same_grid(m, rho)
    if rho.values.min() <= 0.0:
        raise ConfigurationError(f"Hodge projection needs positive density (min {rho.values.min():.3e})")
    rf = E.pack(face_average(rho))
    beta = 1.0 / rf
    mv = E.pack(m)
    G = E.gradient_matrix(g)
    solver = E.poisson_solver(g, beta, tol)
    # D = -G^T, so D(beta m) = -G^T(beta m)
    q = solver.solve(-(G.T @ (beta * mv)))
    gq = G @ q
    uv = beta * (mv - gq)
    dec = np.linalg.norm(rf * uv + gq - mv) / max(np.linalg.norm(mv), 1e-300)
    u0 = E.unpack(uv, g)
    div = float(np.abs(divergence(u0).values).max())
    a = g.cell_area
    return HodgeResult(
        u0=u0,
        q0=ScalarField(g, q.reshape(g.shape)),
        grad_q=E.unpack(gq, g),
        decomposition_residual=float(dec),
        divergence=div,
        velocity_energy=float(np.sum(rf * uv**2) * a),
        potential_energy=float(np.sum(gq**2 * beta) * a),
        momentum_energy=float(np.sum(mv**2 * beta) * a),
    )


@dataclass
class InitialDataSpec:
    """Raw initial data ``(rho0, m0, f0)`` and the regularization radius.

    ``smooth_momentum=False`` skips mollification and wall damping of the
    momentum (only the Hodge projection is applied).
    """

    rho0: ScalarField
    m0: VectorField
    f0: PhaseDistribution
    eps: float
    smooth_momentum: bool = True

    def __post_init__(self):
        same_grid(self.rho0, self.m0)
        if self.f0.grid != self.rho0.grid:
            raise ConfigurationError("initial distribution on a different grid", key="initial")
        _check_density(self.rho0)
        energy_density_ratio(self.m0.with_walls(), self.rho0)  # raises on m0 != 0 where rho0 = 0
        if self.f0.values.min() < 0.0:
            raise ConfigurationError("initial distribution is negative", key="initial")
        if not np.all(np.isfinite(compute_moments(self.f0).m3.values)):
            raise ConfigurationError("initial third moment is not finite", key="initial")
        if not self.eps > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.eps}", key="physics.epsilon")

    def energy_bound(self) -> float:
        """``integral |m0|^2/rho0 + integral integral (1 + |v|^2) f0``."""
        mm = compute_moments(self.f0)
        return momentum_energy(self.m0.with_walls(), self.rho0) + mm.m0.integral() + mm.m2.integral()


def build_initial_state(spec: InitialDataSpec, tol: float = 1e-10) -> SimState:
    """Regularized ``(rho0_eps, u0_eps, f0)`` at ``t = 0`` with zero pressure."""
    g = spec.rho0.grid
    rho_eps = regularize_density(spec.rho0, spec.eps)
    if spec.smooth_momentum:
        m = regularize_momentum(spec.m0, spec.rho0, rho_eps, spec.eps)
    else:
        m = spec.m0.with_walls()
    h = hodge_project(m, rho_eps, tol)
    return SimState(0.0, rho_eps, h.u0, ScalarField.zeros(g), spec.f0.copy())


# ---------------------------------------------------------------------------
# presets


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def rotation_stream_function(grid: Grid2D, omega=1.0, center=(0.5, 0.5), r_in=0.25, r_out=0.4) -> np.ndarray:
    """Node stream function of a rigid rotation with rate ``omega`` inside ``r_in``,
    smoothly brought to rest at ``r_out`` (the curl has zero wall flux)."""
    X, Y = grid.node_coords()
    r = np.hypot(X - center[0], Y - center[1])
    # psi'(r) = -omega r c(r) with c the radial cutoff; integrate on a fine line
    s = np.linspace(0.0, max(r.max(), r_out) + 1e-9, 4001)
    c = 1.0 - _smoothstep((s - r_in) / (r_out - r_in))
    integrand = -omega * s * c
    prof = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(s))])
    psi = np.interp(r, s, prof)
    # constant outside r_out; shift so the walls carry psi = 0
    return psi - np.interp(r_out + 1e-6, s, prof)


def vortex_stream_function(grid: Grid2D, amplitude=1.0) -> np.ndarray:
    """``A sin^2(pi x) sin^2(pi y)`` on the nodes (domain scaled to the unit box)."""
    X, Y = grid.node_coords()
    return amplitude * np.sin(np.pi * X / grid.Lx) ** 2 * np.sin(np.pi * Y / grid.Ly) ** 2


def maxwellian(vx, vy, temperature, wx=0.0, wy=0.0):
    """Unit-mass 2D Maxwellian ``exp(-|v - w|^2 / (2T)) / (2 pi T)``."""
    return np.exp(-((vx - wx) ** 2 + (vy - wy) ** 2) / (2.0 * temperature)) / (2.0 * np.pi * temperature)


def blob(grid: Grid2D, center, radius):
    """Smooth compact bump ``(1 - r^2)^4`` of the given radius, sampled at cell centres."""
    X, Y = grid.cell_coords()
    r2 = ((X - center[0]) ** 2 + (Y - center[1]) ** 2) / radius**2
    return np.where(r2 < 1.0, (1.0 - r2) ** 4, 0.0)


def _particles(grid, vgrid, number, center, radius, temperature, drift):
    if number == 0.0:
        return PhaseDistribution.zeros(grid, vgrid)
    n = number * blob(grid, center, radius)
    vx, vy = vgrid.mesh()
    fv = maxwellian(vx, vy, temperature, *drift)
    return PhaseDistribution(grid, vgrid, n[:, :, None, None] * fv[None, None])


def _from_stream(grid, rho0, psi):
    u = curl_nodes(psi, grid)
    rf = face_average(rho0)
    return VectorField(grid, u.x * rf.x, u.y * rf.y).with_walls()


def preset_uniform(grid, vgrid, rho=1.0):
    r = ScalarField.constant(grid, rho)
    return r, VectorField.zeros(grid), PhaseDistribution.zeros(grid, vgrid)


def preset_patch(grid, vgrid, rho_in=2.0, rho_out=0.0, cx=0.5, cy=0.5, half_width=0.2):
    """Indicator square of density ``rho_in`` over ``rho_out``, fluid at rest."""
    X, Y = grid.cell_coords()
    inside = (np.abs(X - cx) <= half_width) & (np.abs(Y - cy) <= half_width)
    r = ScalarField(grid, np.where(inside, rho_in, rho_out))
    return r, VectorField.zeros(grid), PhaseDistribution.zeros(grid, vgrid)


def preset_solid_rotation(grid, vgrid, rho=1.0, omega=1.0, r_in=0.25, r_out=0.4):
    r = ScalarField.constant(grid, rho)
    psi = rotation_stream_function(grid, omega, (0.5 * grid.Lx, 0.5 * grid.Ly), r_in, r_out)
    return r, _from_stream(grid, r, psi), PhaseDistribution.zeros(grid, vgrid)


def preset_maxwellian(grid, vgrid, rho=1.0, number=1.0, temperature=0.2, wx=0.0, wy=0.0):
    """Fluid at rest, spatially uniform Maxwellian particles drifting at ``w``."""
    r = ScalarField.constant(grid, rho)
    vx, vy = vgrid.mesh()
    fv = number * maxwellian(vx, vy, temperature, wx, wy)
    f = PhaseDistribution(grid, vgrid, np.broadcast_to(fv, (grid.nx, grid.ny) + fv.shape))
    return r, VectorField.zeros(grid), f


def preset_decaying(grid, vgrid, rho=1.0, rho_bump=0.5, amplitude=0.1, number=0.5, temperature=0.2):
    """Variable-density vortex with a resting particle cloud; no forcing, so energy decays."""
    c = (0.5 * grid.Lx, 0.5 * grid.Ly)
    r = ScalarField(grid, rho + rho_bump * blob(grid, (0.35 * grid.Lx, 0.4 * grid.Ly), 0.25))
    m = _from_stream(grid, r, vortex_stream_function(grid, amplitude))
    f = _particles(grid, vgrid, number, c, 0.3, temperature, (0.0, 0.0))
    return r, m, f


def preset_coupled(grid, vgrid, rho=1.0, rho_bump=0.5, amplitude=0.1, number=1.0, temperature=0.2, wx=0.6, wy=-0.3):
    """Vortex plus a drifting particle cloud, so drag exchanges momentum both ways."""
    r = ScalarField(grid, rho + rho_bump * blob(grid, (0.6 * grid.Lx, 0.55 * grid.Ly), 0.25))
    m = _from_stream(grid, r, vortex_stream_function(grid, amplitude))
    f = _particles(grid, vgrid, number, (0.4 * grid.Lx, 0.5 * grid.Ly), 0.25, temperature, (wx, wy))
    return r, m, f


def preset_file(grid, vgrid, path):
    """Load ``rho``, ``mx``, ``my`` and optionally ``f`` from an ``.npz`` file."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read initial data file {path}: {exc}", key="initial.path") from exc
    try:
        r = ScalarField(grid, data["rho"])
        m = VectorField(grid, data["mx"], data["my"])
        f = PhaseDistribution(grid, vgrid, data["f"]) if "f" in data else PhaseDistribution.zeros(grid, vgrid)
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad initial data file {path}: {exc}", key="initial.path") from exc
    return r, m, f


PRESETS = {
    "uniform": preset_uniform,
    "patch": preset_patch,
    "solid-rotation": preset_solid_rotation,
    "maxwellian": preset_maxwellian,
    "decaying": preset_decaying,
    "coupled": preset_coupled,
    "file": preset_file,
}


def make_initial_spec(name: str, grid: Grid2D, vgrid: VelocityGrid, eps: float, smooth_momentum=True, **params):
    """Build an :class:`InitialDataSpec` from a named preset."""
    try:
        fn = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown initial preset {name!r} (choose from {', '.join(sorted(PRESETS))})", key="initial.preset"
        ) from None
    try:
        rho0, m0, f0 = fn(grid, vgrid, **params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for preset {name!r}: {exc}", key="initial") from exc
    return InitialDataSpec(rho0, m0, f0, eps, smooth_momentum)
