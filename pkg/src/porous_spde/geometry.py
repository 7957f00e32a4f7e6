"""Uniform Dirichlet grids on the unit interval/square and their sine eigenbasis.

The discrete Laplacian is the standard second-order central difference with
zero ghost values.  Its eigenvectors are exactly the sampled sine modes

    e_k(xi_i) = sqrt(2) sin(k pi xi_i),   lambda_k^h = (2/h^2) (1 - cos(k pi h)),

so grid-space operations and spectral operations agree to round-off.  All
transforms are DST-I (``scipy.fft.dstn``) scaled to be orthonormal for the
discrete inner product ``h^dim * sum_i x_i y_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import ConfigurationError

__all__ = [
    "Grid",
    "SpectralBasis",
    "Field",
    "build_basis",
    "laplacian_apply",
    "to_spectral",
    "from_spectral",
    "discrete_eigenvalues",
]


@dataclass(frozen=True)
class Grid:
    """Interior points of a uniform grid on (0, 1)^dim.

    ``n`` is the number of interior points per axis and must be ``2**j - 1``
    so that the sine transforms run at power-of-two lengths.
    """

    n: int
    dim: int = 1

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ConfigurationError(f"n must be >= 8, got {self.n}")
        if (self.n + 1) & self.n:
            raise ConfigurationError(f"n must be 2**j - 1, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def xi(self) -> np.ndarray:
        """1-D interior coordinates ``i*h``, i = 1..n."""
        return np.arange(1, self.n + 1) * self.h

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to ``shape`` (one per axis)."""
        if self.dim == 1:
            return (self.xi,)
        return tuple(np.meshgrid(self.xi, self.xi, indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise ConfigurationError(f"field shape {x.shape} does not match grid shape {self.shape}")
        return x


def discrete_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues (2/h^2)(1 - cos(k pi h)) of the 1-D Dirichlet second difference, k = 1..n."""
    h = 1.0 / (n + 1)
    k = np.arange(1, n + 1)
    # 4/h^2 sin^2(k pi h / 2) is the same quantity without cancellation at small k
    return 4.0 / h**2 * np.sin(0.5 * np.pi * k * h) ** 2


def to_spectral(x: np.ndarray, grid: Grid) -> np.ndarray:
    """Coefficients ``h^dim * sum_i x_i e_k(xi_i)`` for every grid mode.

    The result has the grid's shape; entry ``[k-1]`` (or ``[j-1, k-1]``) is the
    coefficient of mode ``k`` (or ``(j, k)``).
    """
    x = grid.check(x)
    scale = (grid.h / np.sqrt(2.0)) ** grid.dim
    return scale * fft.dstn(x, type=1)


def from_spectral(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of :func:`to_spectral`.  Short 1-D coefficient vectors are zero-padded."""
    c = np.asarray(c, dtype=float)
    if grid.dim == 1 and c.ndim == 1 and c.shape[0] < grid.n:
        c = np.concatenate([c, np.zeros(grid.n - c.shape[0])])
    c = grid.check(c)
    return fft.dstn(c, type=1) / np.sqrt(2.0) ** grid.dim


def laplacian_apply(x: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order central difference with zero Dirichlet ghost values."""
    x = grid.check(x)
    padded = np.pad(x, 1)
    out = -2.0 * grid.dim * x
    if grid.dim == 1:
        out = out + padded[:-2] + padded[2:]
    else:
        out = out + padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
    return out / grid.h**2


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Discrete Dirichlet eigenbasis on ``grid`` with ``K`` retained modes per axis.

    ``eigenvalues`` covers every grid mode (same shape as a field) and is what
    all H^{-1} bookkeeping uses.  ``lam``/``modes`` hold the retained modes
    sorted by eigenvalue; in 2-D these are the K*K tensor products.
    """

    grid: Grid
    K: int
    eigenvalues: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n_modes(self) -> int:
        return int(self.lam.shape[0])

    @cached_property
    def lambda_continuum(self) -> np.ndarray:
        """Continuum eigenvalues pi^2 |k|^2 of the retained modes."""
        return np.pi**2 * np.sum(self.index.astype(float) ** 2, axis=1)

    @cached_property
    def modes(self) -> np.ndarray:
        """Retained modes sampled on the grid, shape ``(n_modes, *grid.shape)``."""
        s1 = np.sqrt(2.0) * np.sin(np.pi * np.outer(np.arange(1, self.K + 1), self.grid.xi))
        if self.grid.dim == 1:
            return s1[self.index[:, 0] - 1]
        return s1[self.index[:, 0] - 1][:, :, None] * s1[self.index[:, 1] - 1][:, None, :]

    def mode(self, k: int) -> np.ndarray:
        """Retained mode number ``k`` (1-based, in eigenvalue order)."""
        return self.modes[k - 1]

    def to_spectral(self, x: np.ndarray) -> np.ndarray:
        return to_spectral(x, self.grid)

    def from_spectral(self, c: np.ndarray) -> np.ndarray:
        return from_spectral(c, self.grid)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        return laplacian_apply(x, self.grid)

    def spectral_filter(self, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Multiply the coefficients of ``x`` by ``weights`` (field-shaped) and transform back."""
        return self.from_spectral(self.to_spectral(x) * weights)


def build_basis(grid: Grid, K: int | None = None) -> SpectralBasis:
    """Eigenbasis of the discrete Dirichlet Laplacian on ``grid``.

    ``K`` defaults to ``grid.n`` (all modes).  Raises ConfigurationError if
    ``K`` exceeds the number of points per axis.
    """
    if K is None:
        K = grid.n
    if not 1 <= K <= grid.n:
        raise ConfigurationError(f"K must satisfy 1 <= K <= n = {grid.n}, got {K}")
    lam1 = discrete_eigenvalues(grid.n)
    if grid.dim == 1:
        eig = lam1.copy()
        index = np.arange(1, K + 1)[:, None]
        lam = lam1[:K].copy()
    else:
        eig = lam1[:, None] + lam1[None, :]
        jj, kk = np.meshgrid(np.arange(1, K + 1), np.arange(1, K + 1), indexing="ij")
        index = np.stack([jj.ravel(), kk.ravel()], axis=1)
        lam_all = lam1[index[:, 0] - 1] + lam1[index[:, 1] - 1]
        # stable sort keeps (j, k) lexicographic order among degenerate pairs
        order = np.argsort(lam_all, kind="stable")
        index = index[order]
        lam = lam_all[order]
    eig.setflags(write=False)
    lam.setflags(write=False)
    index.setflags(write=False)
    return SpectralBasis(grid=grid, K=K, eigenvalues=eig, lam=lam, index=index)


@dataclass(frozen=True, eq=False)
class Field:
    """Grid values with lazily cached spectral coefficients."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = self.grid.check(self.values).copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def spectral(self) -> np.ndarray:
        c = to_spectral(self.values, self.grid)
        c.setflags(write=False)
        return c

    @classmethod
    def from_spectral(cls, grid: Grid, coeffs: np.ndarray) -> "Field":
        f = cls(grid, from_spectral(coeffs, grid))
        # keep the exact coefficients so the cache is coherent with the input
        c = grid.check(np.asarray(coeffs, dtype=float)) if np.shape(coeffs) == grid.shape else to_spectral(f.values, grid)
        c = np.array(c)
        c.setflags(write=False)
        f.__dict__["spectral"] = c
        return f

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)
