import numpy as np
import pytest

from conftest import random_vector
from nsvlasov.exceptions import ConfigurationError
from nsvlasov.fields import Grid2D, ScalarField, VectorField, curl_nodes, divergence, gradient, inner, mollified_velocity
from nsvlasov.fluid import DragFields, advance_momentum, assemble_drag, kinetic_energy_rate_terms, leray_project
from nsvlasov.kinetic import PhaseDistribution, VelocityGrid
from nsvlasov.verify import stokes_mms


def solenoidal(g, rng):
    psi = rng.standard_normal((g.nx + 1, g.ny + 1))
    psi[0, :] = psi[-1, :] = psi[:, 0] = psi[:, -1] = 0.0
    return curl_nodes(psi, g)


def random_drag(g, vg, rng, delta=0.1):
    f = PhaseDistribution(g, vg, rng.exponential(1.0, (g.nx, g.ny, vg.nv, vg.nv)))
    return f, assemble_drag(f, None, delta)


def test_drag_of_zero_distribution(grid, vgrid):
    d = assemble_drag(PhaseDistribution.zeros(grid, vgrid), None, 0.1)
    assert d.is_zero()


def test_monokinetic_drag(grid, vgrid, rng):
    v = np.zeros((grid.nx, grid.ny, vgrid.nv, vgrid.nv))
    k, l = 8, 3
    v[:, :, k, l] = rng.uniform(0, 2, grid.shape)
    d = assemble_drag(PhaseDistribution(grid, vgrid, v), None, 0.3)
    w = vgrid.centers[[k, l]]
    np.testing.assert_allclose(d.gx.values, d.e.values * w[0], rtol=1e-14)
    np.testing.assert_allclose(d.gy.values, d.e.values * w[1], rtol=1e-14)


def test_drag_bounded_by_box(grid, vgrid, rng):
    for _ in range(10):
        _, d = random_drag(grid, vgrid, rng)
        assert np.all(d.e.values >= 0)
        assert np.all(np.abs(d.gx.values) <= vgrid.Vmax * d.e.values)
        assert np.all(np.abs(d.gy.values) <= vgrid.Vmax * d.e.values)


def test_rest_state_stays_at_rest(grid):
    rho = ScalarField.constant(grid, 1.3)
    u, p, rep = advance_momentum(VectorField.zeros(grid), rho, rho, None, 0.1, 0.01, VectorField.zeros(grid))
    assert not u.x.any() and not u.y.any() and not p.values.any()


def test_implicit_drag_decay(rng, square):
    u = solenoidal(square, rng)
    rho = ScalarField.constant(square, 1.0)
    c, dt = 2.0, 0.05
    drag = DragFields(ScalarField.constant(square, c), ScalarField.zeros(square), ScalarField.zeros(square))
    norm0 = np.sqrt(inner(u, u))
    v = u
    for n in range(1, 6):
        v, _, _ = advance_momentum(v, rho, rho, drag, 0.0, dt, None)
        assert np.sqrt(inner(v, v)) == pytest.approx(norm0 * (1 + c * dt) ** -n, rel=1e-10)


def test_stokes_order():
    rep = stokes_mms()
    assert rep.passed and rep.orders["error"] >= 2.0 - 0.25


def test_step_invariants(rng, square, vgrid):
    u = solenoidal(square, rng).scale(0.1)
    rho0 = ScalarField(square, rng.uniform(0.5, 2, square.shape))
    _, drag = random_drag(square, vgrid, rng)
    ue = mollified_velocity(u, 0.1)
    new, p, rep = advance_momentum(u, rho0, rho0, drag, 0.05, 1e-3, ue)
    assert np.abs(divergence(new).values).max() <= 1e-10
    assert rep.divergence <= 1e-10
    assert abs(p.values.sum()) < 1e-12 * max(1.0, np.abs(p.values).max()) * p.values.size


def test_linear_energy_inequality(rng, square, vgrid):
    for _ in range(5):
        u = solenoidal(square, rng)
        rho = ScalarField(square, rng.uniform(0.5, 2, square.shape))
        _, drag = random_drag(square, vgrid, rng)
        dt = 10 ** rng.uniform(-4, -1)
        new, _, _ = advance_momentum(u, rho, rho, drag, 0.05, dt, None)
        lhs, rhs = kinetic_energy_rate_terms(new, u, rho, rho, drag, 0.05, dt)
        assert lhs <= rhs * (1 + 1e-12)


def test_momentum_errors(grid):
    z = ScalarField.zeros(grid)
    one = ScalarField.constant(grid, 1.0)
    with pytest.raises(ConfigurationError):
        advance_momentum(VectorField.zeros(grid), z, one, None, 0.1, 0.01, None)
    with pytest.raises(ConfigurationError):
        advance_momentum(VectorField.zeros(grid), one, one, None, -0.1, 0.01, None)
    with pytest.raises(ConfigurationError):
        advance_momentum(VectorField.zeros(grid), one, one, None, 0.1, 0.01, None, rho_floor=2.0)


def test_projection_of_solenoidal(rng, grid):
    u = solenoidal(grid, rng)
    w, _ = leray_project(u)
    d = w - u
    assert max(np.abs(d.x).max(), np.abs(d.y).max()) <= 1e-10 * u.max_abs()


def test_projection_of_gradient(square):
    phi = ScalarField.from_function(square, lambda x, y: np.sin(3 * x) * np.cos(np.pi * y))
    w, _ = leray_project(gradient(phi))
    assert w.max_abs() <= 1e-10


def test_projection_random(rng, grid):
    for rho in (None, ScalarField(grid, rng.uniform(0.5, 2, grid.shape))):
        u = random_vector(grid, rng)
        w, phi = leray_project(u, rho)
        assert np.abs(divergence(w).values).max() <= 1e-10 * max(1.0, u.max_abs() / grid.hx)
        if rho is None:
            assert abs(inner(w, gradient(phi))) <= 1e-10 * inner(u, u)
        w2, _ = leray_project(w, rho)
        d = w2 - w
        assert max(np.abs(d.x).max(), np.abs(d.y).max()) <= 1e-10 * u.max_abs()
