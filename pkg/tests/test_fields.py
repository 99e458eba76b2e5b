import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_vector
from nsvlasov.exceptions import ConfigurationError, GridMismatchError
from nsvlasov.fields import (
    Grid2D,
    Mollifier,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    inner,
    laplacian,
    mollified_velocity,
    mollify,
    stream_function,
    curl_nodes,
)


def brute_mollify(a, w):
    """Direct double loop over kernel offsets with even reflection at the walls."""
    a_half, b_half = (w.shape[0] - 1) // 2, (w.shape[1] - 1) // 2
    nx, ny = a.shape
    out = np.zeros_like(a)
    for i in range(nx):
        for j in range(ny):
            s = 0.0
            for p in range(-a_half, a_half + 1):
                ii = i + p
                ii = -ii - 1 if ii < 0 else (2 * nx - ii - 1 if ii >= nx else ii)
                for q in range(-b_half, b_half + 1):
                    jj = j + q
                    jj = -jj - 1 if jj < 0 else (2 * ny - jj - 1 if jj >= ny else jj)
                    s += w[p + a_half, q + b_half] * a[ii, jj]
            out[i, j] = s
    return out


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        Grid2D(3, 8)
    with pytest.raises(ConfigurationError):
        Grid2D(8, 8, 0.0, 1.0)
    g = Grid2D(8, 4, 2.0, 1.0)
    assert g.hx == 0.25 and g.hy == 0.25


def test_fields_reject_nonfinite(grid):
    v = np.zeros(grid.shape)
    v[1, 1] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid, v)


def test_kernel_normalisation_and_support(grid):
    m = Mollifier(0.15, grid)
    assert abs(m.weights.sum() - 1.0) < 1e-12
    assert abs(m.density().sum() * grid.cell_area - 1.0) < 1e-12
    assert m.weights.min() >= 0.0
    a, b = m.half_width
    ox = np.arange(-a, a + 1)[:, None] * grid.hx
    oy = np.arange(-b, b + 1)[None, :] * grid.hy
    assert np.all(m.weights[np.hypot(ox, oy) >= 0.15] == 0.0)


def test_kernel_too_small_or_too_large(grid):
    with pytest.raises(ConfigurationError):
        Mollifier(grid.hx, grid)
    with pytest.raises(ConfigurationError):
        Mollifier(0.9, grid)


def test_mollify_constant(grid):
    m = Mollifier(0.12, grid)
    out = mollify(ScalarField.constant(grid, 2.5), m)
    assert np.abs(out.values - 2.5).max() < 1e-14


def test_mollify_point_mass_gives_kernel(square):
    m = Mollifier(0.1, square)
    v = np.zeros(square.shape)
    v[16, 15] = 1.0
    out = mollify(ScalarField(square, v), m).values
    a, b = m.half_width
    np.testing.assert_allclose(out[16 - a : 16 + a + 1, 15 - b : 15 + b + 1], m.weights[::-1, ::-1], atol=1e-15)
    assert abs(out.sum() - 1.0) < 1e-14


def test_mollify_matches_direct_convolution(rng):
    g = Grid2D(12, 10, 1.0, 0.9)
    m = Mollifier(0.2, g)
    a = rng.standard_normal(g.shape)
    np.testing.assert_allclose(mollify(ScalarField(g, a), m).values, brute_mollify(a, m.weights), atol=1e-13)


def test_mollify_bounds_over_random_fields(rng):
    g = Grid2D(16, 16)
    m = Mollifier(0.15, g)
    for _ in range(100):
        a = rng.uniform(-3, 5, g.shape)
        ref = brute_mollify(a, m.weights) if _ < 3 else None
        out = mollify(ScalarField(g, a), m).values
        assert out.max() <= a.max() + 1e-13 and out.min() >= a.min() - 1e-13
        if ref is not None:
            np.testing.assert_allclose(out, ref, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31 - 1))
def test_mollify_is_linear(a, b, seed):
    g = Grid2D(10, 12)
    m = Mollifier(0.2, g)
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(g.shape), r.standard_normal(g.shape)
    lhs = mollify(ScalarField(g, a * x + b * y), m).values
    rhs = a * mollify(ScalarField(g, x), m).values + b * mollify(ScalarField(g, y), m).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + abs(a) + abs(b))


def test_mollify_grid_mismatch(grid, square):
    with pytest.raises(GridMismatchError):
        mollify(ScalarField.zeros(square), Mollifier(0.2, grid))


def test_mollified_velocity_zero(square):
    out = mollified_velocity(VectorField.zeros(square), 0.1)
    assert not out.x.any() and not out.y.any()


def test_mollified_velocity_uniform_flow():
    g = Grid2D(64, 64)
    eps = 0.1
    u = VectorField.from_function(g, lambda x, y: 1.0 + 0 * x, lambda x, y: 0 * x)
    ue = mollified_velocity(u, eps)
    X, Y = g.xface_coords()
    d = g.wall_distance(X, Y)
    deep = d > 1.5 * eps + 2 * g.hx
    assert np.abs(ue.x[deep] - 1.0).max() < 1e-12
    assert np.abs(ue.x[d < 0.5 * eps]).max() == 0.0
    Xy, Yy = g.yface_coords()
    assert np.abs(ue.y[g.wall_distance(Xy, Yy) < 0.5 * eps]).max() == 0.0


def test_mollified_velocity_divergence_free_and_zero_trace(rng, square):
    for _ in range(5):
        psi = rng.standard_normal((square.nx + 1, square.ny + 1))
        psi[0, :] = psi[-1, :] = psi[:, 0] = psi[:, -1] = 0.0
        u = curl_nodes(psi, square)
        ue = mollified_velocity(u, 0.15)
        assert np.abs(divergence(ue).values).max() <= 1e-10
        assert not ue.x[0].any() and not ue.x[-1].any() and not ue.y[:, 0].any() and not ue.y[:, -1].any()
        # tangential trace: the first interior rows are within eps/2 of the walls
        assert not ue.x[:, 0].any() and not ue.y[0, :].any()


def test_mollified_velocity_empty_interior():
    g = Grid2D(16, 16)
    with pytest.raises(ConfigurationError):
        mollified_velocity(VectorField.zeros(g), 0.5)


def test_stream_function_roundtrip(rng, square):
    psi = rng.standard_normal((square.nx + 1, square.ny + 1))
    psi[0, :] = psi[-1, :] = psi[:, 0] = psi[:, -1] = 0.0
    u = curl_nodes(psi, square)
    np.testing.assert_allclose(stream_function(u), psi, atol=1e-12)


def test_divergence_of_linear_strain(grid):
    u = VectorField.from_function(grid, lambda x, y: x, lambda x, y: -y, walls=False)
    assert np.abs(divergence(u).values).max() < 1e-13


def test_gradient_of_constant(grid):
    g = gradient(ScalarField.constant(grid, 3.0))
    assert not g.x.any() and not g.y.any()


def test_div_grad_adjoint(rng, grid):
    for _ in range(20):
        u = random_vector(grid, rng)
        p = ScalarField(grid, rng.standard_normal(grid.shape))
        lhs = inner(divergence(u), p)
        rhs = -inner(u, gradient(p))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_grid_mismatch(grid, square):
    with pytest.raises(GridMismatchError):
        inner(ScalarField.zeros(grid), ScalarField.zeros(square))


def test_laplacian_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid2D(n, n)
        k = 2 * np.pi
        p = ScalarField.from_function(g, lambda x, y: np.sin(k * x) + 0 * y)
        lap = laplacian(p, bc=("dirichlet", "neumann"))
        errs.append(np.abs(lap.values + k**2 * p.values).max())
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.9)


def test_laplacian_rejects_other_types():
    with pytest.raises(TypeError):
        laplacian(np.zeros((4, 4)))
