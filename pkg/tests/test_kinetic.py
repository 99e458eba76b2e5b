import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from nsvlasov import _kernels
from nsvlasov.exceptions import CFLError, ConfigurationError
from nsvlasov.fields import Grid2D, ScalarField, VectorField, curl_nodes
from nsvlasov.initial_data import maxwellian
from nsvlasov.kinetic import (
    MomentFields,
    PhaseDistribution,
    VelocityGrid,
    advance_vlasov,
    compute_moments,
    drag_accelerate,
    free_stream,
    regularizer,
    specular_reflect,
)
from nsvlasov.verify import fit_order, free_stream_mms


def random_f(g, vg, rng, edge=True):
    v = rng.exponential(1.0, (g.nx, g.ny, vg.nv, vg.nv))
    if not edge:
        v[:, :, [0, -1], :] = 0.0
        v[:, :, :, [0, -1]] = 0.0
    return PhaseDistribution(g, vg, v)


def small_flow(g, rng, amp=0.5):
    psi = rng.standard_normal((g.nx + 1, g.ny + 1))
    psi[0, :] = psi[-1, :] = psi[:, 0] = psi[:, -1] = 0.0
    u = curl_nodes(psi, g)
    return u.scale(amp / u.max_abs())


def test_velocity_grid_is_mirror_symmetric():
    vg = VelocityGrid(10, 1.7)
    c = vg.centers
    assert np.array_equal(c[::-1], -c)
    assert np.array_equal(vg.faces[::-1], -vg.faces)
    with pytest.raises(ConfigurationError):
        VelocityGrid(7, 1.0)


def test_distribution_rejects_negative(grid, vgrid):
    v = np.zeros((grid.nx, grid.ny, vgrid.nv, vgrid.nv))
    v[0, 0, 3, 3] = -1e-3
    with pytest.raises(ValueError):
        PhaseDistribution(grid, vgrid, v)


def test_moments_of_zero(grid, vgrid):
    m = compute_moments(PhaseDistribution.zeros(grid, vgrid))
    assert all(t == 0.0 for t in m.totals())


def test_moments_single_cell():
    g = Grid2D(4, 4)
    vg = VelocityGrid(4, 2.0)  # dv = 1, centres +-0.5, +-1.5
    v = np.zeros((4, 4, 4, 4))
    c = 2.5
    v[1, 2, 3, 2] = c  # velocity (1.5, 0.5)
    m = compute_moments(PhaseDistribution(g, vg, v))
    assert m.m0.values[1, 2] == c
    assert m.m1x.values[1, 2] == 1.5 * c and m.m1y.values[1, 2] == 0.5 * c
    assert m.m2.values[1, 2] == pytest.approx(2.5 * c, rel=1e-15)
    assert m.m3.values[1, 2] == pytest.approx(2.5**1.5 * c, rel=1e-15)
    assert m.m0.values.sum() == c


def test_maxwellian_temperature_under_refinement():
    g = Grid2D(4, 4)
    T = 0.2
    errs = []
    for nv in (8, 12, 16):
        vg = VelocityGrid(nv, 3.0)
        f = PhaseDistribution.from_function(g, vg, lambda x, y, vx, vy: 0 * x + maxwellian(vx, vy, T))
        m = compute_moments(f)
        errs.append(abs(m.m2.values[0, 0] / m.m0.values[0, 0] - 2 * T))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-8


def test_moment_totals_match_integrals(rng, grid, vgrid):
    f = random_f(grid, vgrid, rng)
    m = compute_moments(f)
    assert m.totals()[0] == pytest.approx(f.total_mass(), rel=1e-13)


def test_regularizer_values(grid, vgrid, rng):
    m = compute_moments(random_f(grid, vgrid, rng))
    assert np.all(regularizer(m, 0.0).R.values == 1.0)
    zero = compute_moments(PhaseDistribution.zeros(grid, vgrid))
    assert np.all(regularizer(zero, 0.3).R.values == 1.0)
    R = regularizer(m, 0.2).R.values
    assert np.all((R > 0) & (R <= 1))
    with pytest.raises(ConfigurationError):
        regularizer(m, -0.1)


def test_regularizer_closed_form():
    g = Grid2D(4, 4)
    c = lambda v: ScalarField.constant(g, v)
    # m0 = 1 and |m1| = 2
    m = MomentFields(c(1.0), c(1.2), c(1.6), c(0.0), c(0.0))
    R = regularizer(m, 0.5).R.values
    assert np.abs(R - 0.4).max() < 1e-15


def test_regularizer_taylor_slope(rng, grid, vgrid):
    m = compute_moments(random_f(grid, vgrid, rng))
    s = m.m0.values + m.m1_norm
    deltas = 10.0 ** -np.arange(2, 6)
    errs = [np.abs(regularizer(m, d).Q.values - d * s).max() for d in deltas]
    assert fit_order(deltas, errs) == pytest.approx(2.0, abs=0.05)


def test_specular_examples():
    np.testing.assert_array_equal(specular_reflect([1.0, -1.0], [0.0, -1.0]), [1.0, 1.0])
    np.testing.assert_array_equal(specular_reflect([2.0, 0.0], [0.0, 1.0]), [2.0, 0.0])
    with pytest.raises(ValueError):
        specular_reflect([1.0, 0.0], [1.0, 1.0])


def test_specular_isometry_involution(rng):
    v = rng.standard_normal((1000, 2)) * 3
    a = rng.uniform(0, 2 * np.pi, 1000)
    nu = np.column_stack([np.cos(a), np.sin(a)])
    w = specular_reflect(v, nu)
    assert np.abs(np.linalg.norm(w, axis=1) - np.linalg.norm(v, axis=1)).max() <= 1e-14 * 10
    assert np.abs(specular_reflect(w, nu) - v).max() <= 1e-14 * 10


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, 2, elements=st.floats(-5, 5)), st.floats(0, 2 * np.pi))
def test_specular_property(v, a):
    nu = np.array([np.cos(a), np.sin(a)])
    w = specular_reflect(v, nu)
    assert abs(np.dot(w, w) - np.dot(v, v)) <= 1e-13 * (1 + np.dot(v, v))
    assert np.allclose(specular_reflect(w, nu), v, atol=1e-13, rtol=0)


def test_wall_flux_vanishes(rng):
    g = Grid2D(8, 6)
    vg = VelocityGrid(8, 1.5)
    for _ in range(10):
        f = random_f(g, vg, rng)
        m, e = _kernels.wall_energy_flux(f.values, vg.centers, g.hx, g.hy)
        assert abs(m) < 1e-12 and abs(e) < 1e-12


def test_free_stream_order():
    rep = free_stream_mms(levels=(16, 32, 64))
    assert rep.passed and rep.orders["error"] >= 1.0


def test_free_stream_cfl():
    g = Grid2D(8, 8)
    f = PhaseDistribution.zeros(g, VelocityGrid(4, 1.0))
    with pytest.raises(CFLError):
        free_stream(f, 1.0)


def test_free_stream_keeps_homogeneous_state(vgrid):
    g = Grid2D(10, 10)
    VX, VY = vgrid.mesh()
    fv = maxwellian(VX, VY, 0.3, 0.4, -0.2)
    f = PhaseDistribution(g, vgrid, np.broadcast_to(fv, (10, 10) + fv.shape))
    out, _ = free_stream(f, 0.02)
    # walls reflect: the state is not homogeneous in general, but its mass and |v|^2 are kept
    m0, m1 = compute_moments(f), compute_moments(out)
    assert out.total_mass() == pytest.approx(f.total_mass(), rel=1e-13)
    assert m1.m2.integral() == pytest.approx(m0.m2.integral(), rel=1e-13)


def test_advance_conserves_mass_and_sign(rng):
    g = Grid2D(12, 12)
    vg = VelocityGrid(12, 3.0)
    for _ in range(10):
        f = random_f(g, vg, rng, edge=False)
        rho = ScalarField(g, rng.uniform(0.5, 2.0, g.shape))
        u = small_flow(g, rng)
        out, rep = advance_vlasov(f, rho, u, 0.1, 0.01)
        assert out.values.min() >= 0.0
        assert abs(out.total_mass() + rep.leaked_mass - f.total_mass()) <= 1e-12 * f.total_mass()


def test_linf_growth_bound(rng):
    g = Grid2D(12, 12)
    vg = VelocityGrid(16, 3.0)
    VX, VY = vg.mesh()
    f = PhaseDistribution.from_function(g, vg, lambda x, y, vx, vy: maxwellian(vx, vy, 0.3, 0.5, 0) * (1 + 0 * x))
    rho = ScalarField(g, rng.uniform(0.5, 2.0, g.shape))
    u = small_flow(g, rng)
    f0max = f.values.max()
    dt, t = 0.01, 0.0
    for _ in range(30):
        f, _ = advance_vlasov(f, rho, u, 0.0, dt)
        t += dt
        assert f.values.max() <= f0max * np.exp(2 * rho.values.max() * t) * (1 + 1e-10)


def test_overflow_is_reported():
    g = Grid2D(4, 4)
    vg = VelocityGrid(8, 1.0)
    f = PhaseDistribution.from_function(g, vg, lambda x, y, vx, vy: 0 * x + maxwellian(vx, vy, 0.05, 0.6, 0.0))
    rho = ScalarField.constant(g, 1.0)
    u = VectorField.from_function(g, lambda x, y: 5 + 0 * x, lambda x, y: 0 * x, walls=False)
    out, leaked = f, 0.0
    for _ in range(10):
        out, lk, _ = drag_accelerate(out, rho, u, 0.0, 0.02)
        leaked += lk
    assert leaked > 0
    assert out.total_mass() + leaked == pytest.approx(f.total_mass(), rel=1e-12)


def test_advance_rejects_bad_input(grid, vgrid):
    f = PhaseDistribution.zeros(grid, vgrid)
    with pytest.raises(ConfigurationError):
        advance_vlasov(f, ScalarField.zeros(grid), VectorField.zeros(grid), -1.0, 0.001)
    with pytest.raises(CFLError):
        advance_vlasov(f, ScalarField.constant(grid, 100.0), VectorField.zeros(grid), 0.1, 0.001 * 50)
