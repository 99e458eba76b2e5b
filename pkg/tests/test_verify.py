import csv

import numpy as np
import pytest

from nsvlasov.engine import EnergyLedger, SimConfig, run
from nsvlasov.exceptions import ConfigurationError
from nsvlasov.fields import Grid2D, Mollifier, ScalarField, VectorField, divergence, mollify
from nsvlasov.initial_data import make_initial_spec
from nsvlasov.kinetic import PhaseDistribution, VelocityGrid, compute_moments, free_stream
from nsvlasov.state import SimState
from nsvlasov.verify import (
    TestFunctionSpec,
    VerificationReport,
    WeakResidualAccumulator,
    _fourier,
    check_energy_inequality,
    delta_sweep,
    epsilon_sweep,
    fit_order,
    initial_data_errors,
    moment_bound_check,
    time_factor,
    translation_bump,
    weak_residual_momentum,
    weak_residual_vlasov,
)

TINY = SimConfig(nx=16, ny=16, nv=8, vmax=2.0, epsilon=0.2, T=0.05, output_every=2)


def spec_for(name, **kw):
    return lambda c: make_initial_spec(name, c.grid, c.vgrid, c.epsilon, **kw)


@pytest.fixture(scope="module")
def coupled_run():
    return run(TINY, spec_for("coupled")(TINY), keep_all=True)


def zero_states(g, vg, n=4, T=1.0):
    z = ScalarField.zeros(g)
    return [SimState(T * k / (n - 1), z, VectorField.zeros(g), z, PhaseDistribution.zeros(g, vg)) for k in range(n)]


def streaming_states(n, T=0.2, nv=8):
    g, vg = Grid2D(n, n), VelocityGrid(nv, 1.0)
    f = PhaseDistribution.from_function(
        g, vg, lambda x, y, vx, vy: translation_bump(x, y, 0.5, 0.5, 0.3) * np.exp(-(vx**2 + vy**2))
    )
    z = ScalarField.zeros(g)
    u = VectorField.zeros(g)
    steps = int(np.ceil(T / (0.5 * g.hx / (np.sqrt(2) * vg.centers.max()))))
    states = [SimState(0.0, z, u, z, f)]
    for k in range(steps):
        f, _ = free_stream(f, T / steps)
        states.append(SimState(T * (k + 1) / steps, z, u, z, f))
    return states


def test_fit_order_exact():
    h = np.array([0.1, 0.05, 0.025])
    assert fit_order(h, 3 * h**2) == pytest.approx(2.0, abs=1e-12)
    assert np.isnan(fit_order(h, [1.0, 0.0, 1.0]))


def test_report_csv_roundtrip(tmp_path):
    rep = VerificationReport("x", True, [{"h": 0.5, "error": 0.1}, {"h": 0.25, "error": 0.025}], {"error": 2.0})
    rep.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert float(rows[1]["error"]) == 0.025
    assert rep.summary().startswith("PASS x")


def test_time_factor_vanishes_at_end():
    tau, dtau = time_factor(np.array([0.0, 1.0]), 1.0)
    assert tau[0] == 1.0 and tau[1] == 0.0 and dtau[1] == 0.0


def test_test_functions_are_admissible():
    g, vg = Grid2D(20, 16, 1.0, 0.8), VelocityGrid(12, 2.0)
    for seed in range(5):
        spec = TestFunctionSpec.random(seed, 1.0, vg.Vmax)
        phi = spec.velocity_field(g)
        assert np.abs(divergence(phi).values).max() < 1e-11
        assert not phi.x[[0, -1]].any() and not phi.y[:, [0, -1]].any()
        for _, _, _, B, _, _ in spec.kinetic_parts(g, vg):
            assert np.all(B[[0, -1], :] == 0) and np.all(B[:, [0, -1]] == 0)
    with pytest.raises(ConfigurationError):
        TestFunctionSpec.random(0, 1.0, 2.0, modes=5)


def test_fourier_gradient_matches_differences():
    coef = np.random.default_rng(3).standard_normal((4, 4))
    x, y, h = np.array([0.31]), np.array([0.57]), 1e-6
    A, Ax, Ay = _fourier(coef, x, y, 1.0, 1.0)
    assert Ax[0] == pytest.approx((_fourier(coef, x + h, y, 1, 1)[0] - _fourier(coef, x - h, y, 1, 1)[0])[0] / (2 * h), rel=1e-7)
    assert Ay[0] == pytest.approx((_fourier(coef, x, y + h, 1, 1)[0] - _fourier(coef, x, y - h, 1, 1)[0])[0] / (2 * h), rel=1e-7)


def test_residuals_vanish_on_zero_trajectory():
    states = zero_states(Grid2D(16, 16), VelocityGrid(8, 2.0))
    for seed in range(3):
        phi = TestFunctionSpec.random(seed, 1.0, 2.0)
        assert weak_residual_momentum(states, phi, mu=0.1) == 0.0
        assert weak_residual_vlasov(states, phi) == 0.0


def test_zero_test_function(coupled_run):
    phi = TestFunctionSpec.zero(TINY.T)
    assert weak_residual_momentum(coupled_run, phi) == 0.0
    assert weak_residual_vlasov(coupled_run, phi) == 0.0


def test_residuals_are_linear(coupled_run):
    a = TestFunctionSpec.random(1, TINY.T, TINY.vmax)
    b = TestFunctionSpec.random(2, TINY.T, TINY.vmax)
    for fn in (weak_residual_momentum, weak_residual_vlasov):
        ra, rb, rab = fn(coupled_run, a), fn(coupled_run, b), fn(coupled_run, a + b)
        assert abs(rab - ra - rb) <= 1e-12 * max(1.0, abs(ra) + abs(rb))


def test_accumulator_matches_batch(coupled_run):
    specs = [TestFunctionSpec.random(s, TINY.T, TINY.vmax) for s in range(3)]
    acc = WeakResidualAccumulator(specs, TINY.mu, TINY.epsilon, TINY.delta)
    for s in coupled_run.snapshots:
        acc(s)
    for i, s in enumerate(specs):
        assert acc.momentum[i] == pytest.approx(weak_residual_momentum(coupled_run, s), rel=1e-13)
        assert acc.vlasov[i] == pytest.approx(weak_residual_vlasov(coupled_run, s), rel=1e-13)


def test_residual_needs_two_snapshots(coupled_run):
    with pytest.raises(ConfigurationError):
        weak_residual_momentum(coupled_run.snapshots[:1], TestFunctionSpec.random(0, 1.0, 2.0), mu=0.1)


def test_velocity_independent_residual_matches_moment_balance(coupled_run):
    """With phi = tau(t) A(x) only the number density and flux enter."""
    spec = TestFunctionSpec.random(4, TINY.T, TINY.vmax, v_independent=True)
    coef = spec.kinetic[0][0]
    g = TINY.grid
    X, Y = g.cell_coords()
    A, Ax, Ay = _fourier(coef, X, Y, g.Lx, g.Ly)
    vals, ts = [], []
    for s in coupled_run.snapshots:
        m = compute_moments(s.f)
        tau, dtau = time_factor(s.t, TINY.T)
        vals.append(-np.sum(dtau * A * m.m0.values + tau * (Ax * m.m1x.values + Ay * m.m1y.values)) * g.cell_area)
        ts.append(s.t)
    expected = np.trapezoid(vals, ts) - np.sum(A * compute_moments(coupled_run.snapshots[0].f).m0.values) * g.cell_area
    assert weak_residual_vlasov(coupled_run, spec) == pytest.approx(expected, rel=1e-11)


def test_free_streaming_residual_converges():
    hs, res = [], []
    for n in (16, 32, 64):
        states = streaming_states(n)
        spec = TestFunctionSpec.random(7, 0.2, 1.0)
        res.append(abs(weak_residual_vlasov(states, spec, delta=0.0)))
        hs.append(1.0 / n)
    assert fit_order(hs, res) >= 1.0


def test_free_streaming_keeps_second_moment():
    states = streaming_states(16)
    rep = moment_bound_check(states, 2)
    M = [r["M"] for r in rep.rows]
    assert np.ptp(M) <= 1e-13 * M[0] and rep.passed


def test_moment_bound_zero_distribution():
    rep = moment_bound_check(zero_states(Grid2D(8, 8), VelocityGrid(4, 1.0)), 3)
    assert all(r["M"] == 0.0 and r["ratio"] == 0.0 for r in rep.rows)
    with pytest.raises(ConfigurationError):
        moment_bound_check(zero_states(Grid2D(8, 8), VelocityGrid(4, 1.0)), 4)


def test_moment_ratio_bounded(coupled_run):
    rep = moment_bound_check(coupled_run, 3, bound_ratio=1.0)
    assert rep.passed, rep.message


def test_energy_check_zero_ledger():
    led = EnergyLedger()
    for k in range(3):
        led.append(dict.fromkeys(("step", "t", "E_fluid", "E_part", "D_visc", "D_drag", "defect", "M0f", "M3f", "overflow_mass"), 0.0) | {"step": k})
    rep = check_energy_inequality(led, 0.0)
    assert rep.passed and max(r["cumulative_defect"] for r in rep.rows) == 0.0


def test_energy_check_names_corrupted_step(coupled_run):
    led = EnergyLedger()
    for r in coupled_run.ledger.rows:
        led.append(dict(r))
    tol = TINY.defect_tolerance(led.energy[0])
    assert check_energy_inequality(led, tol).passed
    led.rows[7]["E_fluid"] += 10 * tol + 1.0
    rep = check_energy_inequality(led, tol)
    assert not rep.passed and "step 7" in rep.message
    led.rows[7]["E_fluid"] -= 10 * tol + 1.0
    led.rows[4]["D_visc"] = -1.0
    rep = check_energy_inequality(led, tol)
    assert not rep.passed and "step 4" in rep.message


def test_delta_sweep_without_particles():
    rep = delta_sweep(TINY.replace(T=0.02), spec_for("coupled", number=0.0), [1e-1, 1e-2, 1e-3])
    assert rep.passed
    assert all(r["difference"] == 0.0 for r in rep.rows[1:])


def test_delta_sweep_validates_input():
    with pytest.raises(ConfigurationError):
        delta_sweep(TINY, spec_for("coupled"), [1e-1, 1e-2])
    with pytest.raises(ConfigurationError):
        delta_sweep(TINY, spec_for("coupled"), [1e-3, 1e-2, 1e-1])


def test_epsilon_sweep_uniform_density_error_is_floor():
    rep = epsilon_sweep(TINY, spec_for("uniform"), [0.4, 0.3, 0.2], run_members=False)
    for r in rep.rows:
        assert r["rho_L1"] == pytest.approx(r["epsilon"], rel=1e-13)
        assert r["m_L2"] == 0.0
    assert rep.passed


def test_mollification_error_second_order():
    g = Grid2D(128, 128)
    rho = ScalarField.from_function(g, lambda x, y: 1 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y))
    eps = [0.2, 0.1, 0.05]
    errs = [np.sum(np.abs(mollify(rho, Mollifier(e, g)).values - rho.values)) * g.cell_area for e in eps]
    assert fit_order(eps, errs) >= 1.75


def test_momentum_regularization_converges():
    g, vg = Grid2D(128, 128), VelocityGrid(4, 1.0)
    eps = [0.2, 0.1, 0.05]
    errs = [initial_data_errors(make_initial_spec("solid-rotation", g, vg, e), e)[1] for e in eps]
    assert errs[0] > errs[1] > errs[2] and fit_order(eps, errs) >= 0.75
