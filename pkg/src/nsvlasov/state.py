"""The simulation state shared by the engine, initial data and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fields import ScalarField, VectorField, divergence, same_grid
from .kinetic import PhaseDistribution


@dataclass
class SimState:
    """Solution triple ``(rho, u, f)`` at time ``t`` plus the pressure.

    ``cache`` holds derived quantities (mollified velocity, drag fields)
    keyed by name; :meth:`with_fields` returns a copy with an empty cache so
    stale entries never survive an update.
    """

    t: float
    rho: ScalarField
    u: VectorField
    p: ScalarField
    f: PhaseDistribution
    step: int = 0
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        same_grid(self.rho, self.u, self.p)
        if self.f.grid != self.rho.grid:
            raise ValueError("distribution lives on a different grid")

    @property
    def grid(self):
        return self.rho.grid

    @property
    def vgrid(self):
        return self.f.vgrid

    def with_fields(self, **kw) -> "SimState":
        return replace(self, cache={}, **kw)

    def copy(self) -> "SimState":
        return SimState(self.t, self.rho.copy(), self.u.copy(), self.p.copy(), self.f.copy(), self.step)

    def check(self, rho_max: float | None = None, div_tol: float = 1e-10):
        """Raise ``ValueError`` if a state invariant is broken."""
        r = self.rho.values
        if r.min() < 0.0:
            raise ValueError(f"negative density {r.min():.3e}")
        if rho_max is not None and r.max() > rho_max:
            raise ValueError(f"density {r.max():.6g} above bound {rho_max:.6g}")
        if self.f.values.min() < 0.0:
            raise ValueError("negative distribution")
        d = float(np.abs(divergence(self.u).values).max())
        if d > div_tol:
            raise ValueError(f"velocity divergence {d:.3e} above {div_tol:g}")
        return self
