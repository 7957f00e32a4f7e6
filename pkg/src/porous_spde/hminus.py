"""H^{-1} calculus on the discrete grid: inverse Laplacian, inner product, L^p norms.

Everything is computed with the discrete eigenvalues lambda_k^h, so that
``-laplacian(inverse_laplacian(x)) == x`` to round-off and the spectral inner
product equals grid quadrature of ``(-Delta_h)^{-1} x * z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import SpectralBasis

__all__ = [
    "HNorms",
    "inverse_laplacian",
    "hminus_inner",
    "hminus_norm",
    "hminus_norm_sq",
    "l2_inner",
    "lp_norm",
    "lp_norm_p",
    "norms",
    "multiplier_hminus_norm",
    "multiplier_hminus_bound",
    "measure_c1",
]


@dataclass(frozen=True)
class HNorms:
    hminus: float
    l2: float
    lp: dict[float, float] = field(default_factory=dict)


def inverse_laplacian(x: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Solve ``-Delta_h y = x`` with zero Dirichlet data."""
    return basis.spectral_filter(x, 1.0 / basis.eigenvalues)


def hminus_inner(x: np.ndarray, z: np.ndarray, basis: SpectralBasis) -> float:
    """``<x, z>_{-1} = sum_k x_k z_k / lambda_k^h``."""
    cx = basis.to_spectral(x)
    cz = cx if z is x else basis.to_spectral(z)
    return float(np.sum(cx * cz / basis.eigenvalues))


def hminus_norm_sq(x: np.ndarray, basis: SpectralBasis) -> float:
    c = basis.to_spectral(x)
    return float(np.sum(c * c / basis.eigenvalues))


def hminus_norm(x: np.ndarray, basis: SpectralBasis) -> float:
    return float(np.sqrt(hminus_norm_sq(x, basis)))


def l2_inner(x: np.ndarray, z: np.ndarray, basis: SpectralBasis) -> float:
    return float(basis.grid.cell_volume * np.sum(x * z))


def lp_norm_p(x: np.ndarray, p: float, cell_volume: float) -> float:
    """``h^dim * sum |x_i|^p`` (the p-th power of the L^p norm)."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    a = np.abs(x)
    if p == 2:
        return float(cell_volume * np.sum(a * a))
    return float(cell_volume * np.sum(a**p))


def lp_norm(x: np.ndarray, p: float, basis: SpectralBasis) -> float:
    """Discrete L^p norm ``(h^dim * sum_i |x_i|^p)^(1/p)``; ``p = inf`` gives ``max |x_i|``.

    Only interior points enter the sum (boundary values are zero), so the
    constant function 1 has norm ``(n h)^(dim/p) = (1 - h)^(dim/p)``.
    """
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    x = np.asarray(x, dtype=float)
    if np.isinf(p):
        return float(np.max(np.abs(x))) if x.size else 0.0
    return lp_norm_p(x, p, basis.grid.cell_volume) ** (1.0 / p)


def norms(x: np.ndarray, basis: SpectralBasis, ps=(4.0,)) -> HNorms:
    return HNorms(
        hminus=hminus_norm(x, basis),
        l2=lp_norm(x, 2.0, basis),
        lp={float(p): lp_norm(x, p, basis) for p in ps},
    )


def _multiplier_ops(weight: np.ndarray, basis: SpectralBasis):
    # Work in coordinates u_k = c_k / sqrt(lambda_k), where |x|_{-1} = |u|.
    sq = np.sqrt(basis.eigenvalues)

    def forward(u):
        x = basis.from_spectral(u * sq)
        return basis.to_spectral(x * weight) / sq

    def adjoint(v):
        # the transpose of to_spectral is h^dim * from_spectral and vice versa
        x = basis.from_spectral(v / sq)
        return basis.to_spectral(x * weight) * sq

    return forward, adjoint


def multiplier_hminus_norm(
    weight: np.ndarray,
    basis: SpectralBasis,
    *,
    tol: float = 1e-10,
    max_iter: int = 5000,
    seed: int = 0,
) -> float:
    """Operator norm of ``x -> weight * x`` on discrete H^{-1}, by power iteration.

    Iterates on ``T^T T`` where ``T`` is the multiplier in H^{-1}-isometric
    coordinates; returns ``sqrt`` of the converged Rayleigh quotient.
    """
    weight = basis.grid.check(weight)
    if not np.any(weight):
        return 0.0
    forward, adjoint = _multiplier_ops(weight, basis)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(basis.grid.shape)
    u /= np.linalg.norm(u)
    est = 0.0
    for _ in range(max_iter):
        tu = forward(u)
        new = float(np.sum(tu * tu))
        w = adjoint(tu)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        u = w / nw
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.sqrt(est))


def multiplier_hminus_bound(k: int, basis: SpectralBasis, **kwargs) -> float:
    """Measured H^{-1} operator norm of multiplication by the retained mode ``e_k``."""
    return multiplier_hminus_norm(basis.mode(k), basis, **kwargs)


def measure_c1(basis: SpectralBasis, n_modes: int, **kwargs) -> tuple[float, np.ndarray]:
    """Smallest ``c1`` with ``|x e_k|_{-1} <= sqrt(c1) lambda_k |x|_{-1}`` for k <= n_modes.

    Returns ``(c1, ratios)`` where ``ratios[k-1] = (norm_k / lambda_k)^2``.
    """
    ratios = np.array(
        [(multiplier_hminus_bound(k, basis, **kwargs) / basis.lam[k - 1]) ** 2 for k in range(1, n_modes + 1)]
    )
    return float(ratios.max()), ratios
