"""Coupled time stepping, energy ledger and full runs.

One step mollifies the velocity, transports the density with it, advances
the particles with the stage-beginning density and velocity, assembles the
drag from the stage-beginning distribution and finally solves the momentum
equation. With ``subiterations > 1`` the stages are repeated with midpoint
values from the latest iterate (Picard).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .density import advance_density
from .exceptions import ConfigurationError, StageError
from .fields import Grid2D, ScalarField, dirichlet_energy, divergence, mollified_velocity, weighted_energy
from .fluid import DragFields, advance_momentum, assemble_drag
from .kinetic import (
    PhaseDistribution,
    VelocityGrid,
    VlasovReport,
    advance_vlasov,
    compute_moments,
    regularizer,
)
from .state import SimState

log = logging.getLogger(__name__)

# config field -> "section.key" used in messages and config files
CONFIG_KEYS = {
    "nx": "grid.nx",
    "ny": "grid.ny",
    "nv": "grid.nv",
    "Lx": "grid.lx",
    "Ly": "grid.ly",
    "vmax": "physics.vmax",
    "epsilon": "physics.epsilon",
    "delta": "physics.delta",
    "mu": "physics.mu",
    "dt": "time.dt",
    "cfl": "time.cfl",
    "T": "time.t_end",
    "subiterations": "solver.subiterations",
    "picard_tol": "solver.picard_tol",
    "tol": "solver.tol",
    "kinetic": "solver.kinetic",
    "output_every": "output.every",
    "seed": "output.seed",
    "defect_coeff": "solver.defect_coeff",
}


@dataclass(frozen=True)
class SimConfig:
    nx: int = 64
    ny: int = 64
    nv: int = 32
    Lx: float = 1.0
    Ly: float = 1.0
    vmax: float = 3.0
    epsilon: float = 0.1
    delta: float = 0.1
    mu: float = 0.05
    dt: float | None = None  # None: derived from cfl
    cfl: float = 0.35
    T: float = 0.5
    subiterations: int = 1
    picard_tol: float = 1e-12
    tol: float = 1e-10
    kinetic: bool = True  # False drops particles and drag entirely
    output_every: int = 10
    seed: int = 0
    defect_coeff: float = 0.02
    dt_ref: float | None = None  # defaults: this config's own dt and h
    h_ref: float | None = None

    def __post_init__(self):
        def bad(name, why):
            raise ConfigurationError(f"{CONFIG_KEYS.get(name, name)} {why}", key=CONFIG_KEYS.get(name, name))

        for name in ("nx", "ny"):
            if int(getattr(self, name)) < 4:
                bad(name, "must be at least 4")
        if self.nv < 4 or self.nv % 2:
            bad("nv", "must be even and at least 4")
        for name in ("Lx", "Ly", "vmax", "epsilon", "tol", "picard_tol"):
            if not getattr(self, name) > 0:
                bad(name, f"must be positive, got {getattr(self, name)}")
        for name in ("delta", "mu", "T", "defect_coeff"):
            if not getattr(self, name) >= 0:
                bad(name, f"must be non-negative, got {getattr(self, name)}")
        if not 0 < self.cfl <= 0.9:
            bad("cfl", f"must lie in (0, 0.9], got {self.cfl}")
        if self.dt is not None and not self.dt > 0:
            bad("dt", f"must be positive, got {self.dt}")
        if self.subiterations < 1:
            bad("subiterations", "must be at least 1")
        if self.output_every < 1:
            bad("output_every", "must be at least 1")

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.nx, self.ny, self.Lx, self.Ly)

    @property
    def vgrid(self) -> VelocityGrid:
        return VelocityGrid(self.nv, self.vmax)

    @property
    def h(self) -> float:
        return min(self.Lx / self.nx, self.Ly / self.ny)

    def base_dt(self) -> float:
        """Requested step: ``dt`` if given, else ``cfl min(h) / (sqrt(2) vmax)``."""
        if self.dt is not None:
            return float(self.dt)
        return self.cfl * self.h / (math.sqrt(2.0) * self.vmax)

    def schedule(self) -> tuple[int, float]:
        """``(n_steps, dt)`` with ``n_steps dt == T`` exactly."""
        if self.T == 0:
            return 0, self.base_dt()
        n = max(1, math.ceil(self.T / self.base_dt() - 1e-9))
        return n, self.T / n

    def defect_tolerance(self, e0: float) -> float:
        """``defect_coeff E0 (dt/dt_ref + h/h_ref)``."""
        _, dt = self.schedule()
        dt_ref = self.dt_ref or dt
        h_ref = self.h_ref or self.h
        return self.defect_coeff * e0 * (dt / dt_ref + self.h / h_ref)


# ---------------------------------------------------------------------------
# energy ledger

LEDGER_COLUMNS = ("step", "t", "E_fluid", "E_part", "D_visc", "D_drag", "defect", "M0f", "M3f", "overflow_mass")


@dataclass
class EnergyLedger:
    """Per-step energy rows (see ``LEDGER_COLUMNS``).

    Energies are not halved: ``E_fluid = integral rho |u|^2`` and
    ``E_part = integral integral (1 + |v|^2) f``, so the step defect
    ``(E_fluid + E_part)^{n+1} + D_visc + D_drag - (E_fluid + E_part)^n``
    is consistent with ``D_visc = 2 dt mu integral |grad u|^2``.
    """

    rows: list = field(default_factory=list)

    def append(self, row: dict):
        if set(row) != set(LEDGER_COLUMNS):
            raise ValueError("ledger row has the wrong columns")
        vals = [row[c] for c in LEDGER_COLUMNS]
        if not all(np.isfinite(vals)):
            raise ValueError(f"non-finite ledger entry at step {row['step']}")
        self.rows.append(dict(row))

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def energy(self) -> np.ndarray:
        return self.column("E_fluid") + self.column("E_part")

    @property
    def cumulative_dissipation(self) -> np.ndarray:
        return np.cumsum(self.column("D_visc") + self.column("D_drag"))

    @property
    def cumulative_defect(self) -> np.ndarray:
        """``E^n + sum of dissipation up to n - E^0``."""
        return self.energy + self.cumulative_dissipation - self.energy[0]

    def as_array(self) -> np.ndarray:
        return np.array([[r[c] for c in LEDGER_COLUMNS] for r in self.rows], dtype=float)


def particle_energy(f: PhaseDistribution) -> float:
    m = compute_moments(f)
    return m.m0.integral() + m.m2.integral()


def drag_dissipation(f: PhaseDistribution, rho: ScalarField, u, delta: float) -> float:
    """``integral integral R rho f |u - v|^2`` with ``u`` averaged to cell centres."""
    m = compute_moments(f)
    R = regularizer(m, delta).R.values
    ucx, ucy = u.cell_centered()
    dens = R * rho.values * (m.m0.values * (ucx**2 + ucy**2) - 2.0 * (ucx * m.m1x.values + ucy * m.m1y.values) + m.m2.values)
    return float(np.sum(dens) * f.grid.cell_area)


def energy_ledger_entry(state: SimState, prev_state: SimState | None, dt: float, mu: float, delta: float, overflow=0.0):
    """Ledger row for the step ``prev_state -> state`` (first row when ``prev_state`` is None).

    The drag dissipation pairs the distribution and density the particle step
    used with the new fluid velocity the momentum step used.
    """
    ef = weighted_energy(state.rho, state.u)
    ep = particle_energy(state.f)
    mm = compute_moments(state.f)
    row = {
        "step": state.step,
        "t": state.t,
        "E_fluid": ef,
        "E_part": ep,
        "D_visc": 0.0,
        "D_drag": 0.0,
        "defect": 0.0,
        "M0f": mm.m0.integral(),
        "M3f": mm.m3.integral(),
        "overflow_mass": float(overflow),
    }
    if prev_state is not None:
        dv = 2.0 * dt * mu * dirichlet_energy(state.u)
        dd = 2.0 * dt * max(drag_dissipation(prev_state.f, prev_state.rho, state.u, delta), 0.0)
        e_prev = weighted_energy(prev_state.rho, prev_state.u) + particle_energy(prev_state.f)
        row.update(D_visc=dv, D_drag=dd, defect=ef + ep + dv + dd - e_prev)
    return row


# ---------------------------------------------------------------------------
# stepping


@dataclass
class StepReport:
    dt: float
    picard_iterations: int
    picard_change: float
    vlasov: VlasovReport
    divergence: float
    momentum_residual: float


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is tagged with its stage
        raise StageError(name, exc) from exc


def step(state: SimState, cfg: SimConfig, dt: float | None = None) -> SimState:
    """Advance one time step; the :class:`StepReport` lands in ``new.cache['report']``."""
    if dt is None:
        dt = cfg.schedule()[1]
    g = state.grid
    rho_n, u_n, f_n = state.rho, state.u, state.f
    u_it = rho_it = f_it = None
    change = np.inf
    k = 0
    for k in range(1, cfg.subiterations + 1):
        if u_it is None:
            u_b, rho_b, f_b = u_n, rho_n, f_n
        else:
            u_b = (u_n + u_it).scale(0.5)
            rho_b = ScalarField(g, 0.5 * (rho_n.values + rho_it.values))
            f_b = PhaseDistribution(g, f_n.vgrid, 0.5 * (f_n.values + f_it.values), check=False)
        u_eps = _stage("mollify", mollified_velocity, u_b, cfg.epsilon)
        rho_new = _stage("density", advance_density, rho_n, u_eps, dt)
        if cfg.kinetic:
            f_new, vrep = _stage("vlasov", advance_vlasov, f_n, rho_b, u_b, cfg.delta, dt)
            drag = _stage("drag", assemble_drag, f_b, rho_b, cfg.delta)
        else:
            f_new, vrep, drag = f_n, VlasovReport(), None
        u_new, p_new, frep = _stage(
            "momentum", advance_momentum, u_n, rho_new, rho_n, drag, cfg.mu, dt, u_eps, tol=cfg.tol
        )
        if u_it is not None:
            diff = u_new - u_it
            change = math.sqrt(float(np.sum(diff.x**2) + np.sum(diff.y**2)) * g.cell_area)
        u_it, rho_it, f_it = u_new, rho_new, f_new
        if change <= cfg.picard_tol:
            break
    new = SimState(state.t + dt, rho_it, u_it, p_new, f_it, state.step + 1)
    new.cache["u_eps"] = u_eps
    new.cache["drag"] = drag if drag is not None else DragFields.zeros(g)
    new.cache["report"] = StepReport(dt, k, change, vrep, frep.divergence, frep.residual)
    return new


@dataclass
class Trajectory:
    """Snapshots at the output cadence plus the ledger and per-step diagnostics."""

    config: SimConfig
    snapshots: list = field(default_factory=list)
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    diagnostics: list = field(default_factory=list)
    error: Exception | None = None

    @property
    def final(self) -> SimState:
        return self.snapshots[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


def diagnostics_row(state: SimState, cfg: SimConfig, rho_mass_prev=None, f_mass_prev=None) -> dict:
    rep = state.cache.get("report")
    mm = compute_moments(state.f)
    Q = 1.0 - regularizer(mm, cfg.delta).R.values
    row = {
        "step": state.step,
        "t": state.t,
        "rho_mass": state.rho.integral(),
        "rho_min": float(state.rho.values.min()),
        "rho_max": float(state.rho.values.max()),
        "f_mass": state.f.total_mass(),
        "f_max": float(state.f.values.max()),
        "divergence": float(np.abs(divergence(state.u).values).max()),
        "p_mean": state.p.integral(),
        "Q_max": float(Q.max()),
        "Q_bound": cfg.delta * float(mm.m0.values.max() + mm.m1_norm.max()),
        "leaked_mass": rep.vlasov.leaked_mass if rep else 0.0,
        "picard_iterations": rep.picard_iterations if rep else 0,
        "x_substeps": rep.vlasov.x_substeps if rep else 0,
        "v_substeps": rep.vlasov.v_substeps if rep else 0,
    }
    return row


def run(cfg: SimConfig, init, record=None, keep_all=False, raise_errors=True) -> Trajectory:
    """Run from an :class:`InitialDataSpec` (or a ready :class:`SimState`) to ``cfg.T``.

    Snapshots every ``cfg.output_every`` steps (and the last step); all of
    them with ``keep_all``. ``record`` is called with every new state. On a
    stage failure the partial trajectory is kept in ``trajectory.error`` and
    the error re-raised unless ``raise_errors`` is false.
    """
    from .initial_data import InitialDataSpec, build_initial_state

    if isinstance(init, InitialDataSpec):
        if init.rho0.grid != cfg.grid or init.f0.vgrid != cfg.vgrid:
            raise ConfigurationError("initial data grid does not match the config", key="grid")
        state = _stage("initial", build_initial_state, init, cfg.tol)
    else:
        state = init
    if not cfg.kinetic and state.f.values.any():
        raise ConfigurationError("kinetic stage disabled but the initial distribution is non-zero", key="solver.kinetic")
    n_steps, dt = cfg.schedule()
    traj = Trajectory(cfg)
    traj.snapshots.append(state)
    traj.ledger.append(energy_ledger_entry(state, None, dt, cfg.mu, cfg.delta))
    traj.diagnostics.append(diagnostics_row(state, cfg))
    if record:
        record(state)
    log.info("run: %d steps of dt=%.4g on %dx%d x %d^2", n_steps, dt, cfg.nx, cfg.ny, cfg.nv)
    for n in range(n_steps):
        try:
            new = step(state, cfg, dt)
        except StageError as exc:
            traj.error = exc
            log.error("step %d failed: %s", n + 1, exc)
            if raise_errors:
                raise
            return traj
        if n + 1 == n_steps:
            new.t = cfg.T  # avoid round-off drift in the final time
        rep = new.cache["report"]
        traj.ledger.append(energy_ledger_entry(new, state, dt, cfg.mu, cfg.delta, rep.vlasov.leaked_mass))
        traj.diagnostics.append(diagnostics_row(new, cfg))
        if keep_all or (n + 1) % cfg.output_every == 0 or n + 1 == n_steps:
            traj.snapshots.append(new)
        if record:
            record(new)
        state = new
    return traj
