import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porous_spde.errors import ConfigurationError
from porous_spde.geometry import (
    Field,
    Grid,
    build_basis,
    discrete_eigenvalues,
    from_spectral,
    laplacian_apply,
    to_spectral,
)

from conftest import dense_laplacian, sine_coefficients

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_grid_spacing_and_points():
    g = Grid(255)
    assert g.h * (g.n + 1) == 1.0
    assert g.xi[0] == pytest.approx(g.h)
    assert g.xi[-1] == pytest.approx(1 - g.h)
    assert g.shape == (255,)
    assert Grid(15, dim=2).shape == (15, 15)


@pytest.mark.parametrize("n,dim", [(4, 1), (7, 1), (100, 1), (255, 3)])
def test_grid_rejects_bad_sizes(n, dim):
    with pytest.raises(ConfigurationError):
        Grid(n, dim)


def test_build_basis_rejects_large_K():
    with pytest.raises(ConfigurationError):
        build_basis(Grid(15), 16)
    with pytest.raises(ConfigurationError):
        build_basis(Grid(15), 0)


def test_first_continuum_eigenvalue(basis255):
    assert basis255.lambda_continuum[0] == pytest.approx(9.8696044, abs=1e-6)
    assert basis255.lambda_continuum[0] == pytest.approx(np.pi**2, rel=1e-15)


def test_discrete_eigenvalues_match_dense_matrix():
    n = 63
    ev = np.sort(-np.linalg.eigvalsh(dense_laplacian(n)))
    np.testing.assert_allclose(discrete_eigenvalues(n), ev, rtol=1e-11)
    h = 1 / (n + 1)
    k = np.arange(1, n + 1)
    np.testing.assert_allclose(discrete_eigenvalues(n), (2 / h**2) * (1 - np.cos(k * np.pi * h)), rtol=1e-12)


def test_eigenvalues_strictly_increasing(basis255):
    assert np.all(np.diff(basis255.lam) > 0)
    assert basis255.lam[0] > 0


def test_orthonormality(basis63):
    M = basis63.h * basis63.modes @ basis63.modes.T
    np.testing.assert_allclose(M, np.eye(basis63.n_modes), atol=1e-12)


def test_e3_unit_norm(basis255):
    e3 = basis255.mode(3)
    assert basis255.h * np.sum(e3 * e3) == pytest.approx(1.0, abs=1e-12)


def test_eigen_relation(basis255):
    for k in (1, 2, 17, 64):
        e = basis255.mode(k)
        r = laplacian_apply(e, basis255.grid) + basis255.lam[k - 1] * e
        # relative to |lambda_k e_k|: round-off grows with lambda_k
        assert np.max(np.abs(r)) <= 1e-12 * basis255.lam[k - 1] * np.max(np.abs(e)) + 1e-10


def test_modes_are_sampled_sines(basis255):
    g = basis255.grid
    np.testing.assert_allclose(basis255.mode(5), np.sqrt(2) * np.sin(5 * np.pi * g.xi), atol=1e-13)


def test_laplacian_of_zero(basis255):
    assert not np.any(laplacian_apply(basis255.grid.zeros(), basis255.grid))


def test_laplacian_exact_on_quadratic():
    g = Grid(127)
    xi = g.xi
    np.testing.assert_allclose(laplacian_apply(xi * (1 - xi), g), -2.0, atol=1e-9)


def test_laplacian_matches_dense(rng):
    n = 31
    g = Grid(n)
    x = rng.standard_normal(n)
    np.testing.assert_allclose(laplacian_apply(x, g), dense_laplacian(n) @ x, rtol=1e-12, atol=1e-9)


def test_laplacian_2d_tensor(rng):
    g = Grid(15, 2)
    x = rng.standard_normal(g.shape)
    L = dense_laplacian(15)
    expected = L @ x + x @ L.T
    np.testing.assert_allclose(laplacian_apply(x, g), expected, rtol=1e-12, atol=1e-9)


def test_spectral_of_mode_is_delta(basis255):
    c = to_spectral(basis255.mode(5), basis255.grid)
    expected = np.zeros(255)
    expected[4] = 1.0
    np.testing.assert_allclose(c, expected, atol=1e-12)


def test_transform_matches_direct_sum(rng):
    x = rng.standard_normal(63)
    np.testing.assert_allclose(to_spectral(x, Grid(63)), sine_coefficients(x), atol=1e-12)


def test_parseval(rng):
    g = Grid(255)
    x = rng.standard_normal(255)
    c = to_spectral(x, g)
    assert g.h * np.sum(x * x) == pytest.approx(np.sum(c * c), rel=1e-10)


def test_zero_transform(basis255):
    assert not np.any(to_spectral(basis255.grid.zeros(), basis255.grid))


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=31, max_size=31), st.lists(finite, min_size=31, max_size=31), finite)
def test_round_trip_and_linearity(xs, ys, a):
    g = Grid(31)
    x, y = np.array(xs), np.array(ys)
    scale = 1 + np.max(np.abs(x)) + np.max(np.abs(y))
    np.testing.assert_allclose(from_spectral(to_spectral(x, g), g), x, atol=1e-12 * scale)
    lhs = to_spectral(a * x + y, g)
    rhs = a * to_spectral(x, g) + to_spectral(y, g)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * scale * (1 + abs(a)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_laplacian_symmetric_negative(seed):
    rng = np.random.default_rng(seed)
    g = Grid(63)
    x, y = rng.standard_normal(63), rng.standard_normal(63)
    lx, ly = laplacian_apply(x, g), laplacian_apply(y, g)
    a, b = g.h * np.sum(lx * y), g.h * np.sum(x * ly)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
    assert g.h * np.sum(lx * x) <= 1e-10


def test_round_trip_2d(rng):
    g = Grid(15, 2)
    x = rng.standard_normal(g.shape)
    np.testing.assert_allclose(from_spectral(to_spectral(x, g), g), x, atol=1e-12)


def test_2d_basis_sorted_and_orthonormal():
    b = build_basis(Grid(15, 2), 4)
    assert b.n_modes == 16
    assert np.all(np.diff(b.lam) >= 0)
    M = b.grid.cell_volume * np.einsum("aij,bij->ab", b.modes, b.modes)
    np.testing.assert_allclose(M, np.eye(16), atol=1e-12)
    e = b.mode(3)
    np.testing.assert_allclose(laplacian_apply(e, b.grid), -b.lam[2] * e, atol=1e-9)


@pytest.mark.parametrize("n", [127, 255])
def test_eigenvalue_convergence(n):
    b = build_basis(Grid(n), 64)
    k = np.arange(1, 64 // 4 + 1)
    cont = (k * np.pi) ** 2
    err = np.abs(b.lam[: k.size] - cont)
    assert np.all(err <= (k * np.pi) ** 4 * b.h**2 / 12 * 1.5)


def test_field_cache_coherent(rng):
    g = Grid(63)
    x = rng.standard_normal(63)
    f = Field(g, x)
    np.testing.assert_allclose(from_spectral(f.spectral, g), x, atol=1e-12)
    f2 = Field.from_spectral(g, f.spectral)
    np.testing.assert_allclose(np.asarray(f2), x, atol=1e-12)


def test_spectral_filter_on_mode(basis255):
    e = basis255.mode(4)
    w = 1 / (1 + 0.01 * basis255.eigenvalues)
    np.testing.assert_allclose(basis255.spectral_filter(e, w), e / (1 + 0.01 * basis255.lam[3]), atol=1e-12)
