"""Nonlinear resolvent ``J_eps`` and Yosida approximation ``A_eps`` of ``A x = -Delta_h beta(x)``.

``y = J_eps(x)`` solves the discrete elliptic problem

    y - eps * Delta_h beta(y) = x,

and ``A_eps(x) = (x - y) / eps = -Delta_h beta(y)``.

The solve is a damped Newton iteration.  Both unknowns used here are
critical points of a strictly convex energy whose gradient is the residual,
so the Newton direction is always a descent direction and backtracking on
that energy converges from any starting point:

* ``w = beta(y)`` form when beta is strictly increasing: Jacobian
  ``diag(1/beta'(y)) + eps L`` is symmetric positive definite.
* ``y`` form when beta is degenerate (beta'(0) = 0): Jacobian
  ``I + eps L diag(beta'(y))``, nonsingular because ``L = -Delta_h`` is SPD.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, solve_banded
from scipy.sparse.linalg import spsolve

from .errors import ConfigurationError, NumericalError, SolverError
from .geometry import Grid, SpectralBasis
from .hminus import hminus_inner, hminus_norm, inverse_laplacian, lp_norm
from .nonlinearity import Nonlinearity, beta_eval, beta_inverse, beta_prime, j_eval

__all__ = [
    "ResolventConfig",
    "ResolventSolution",
    "resolvent_solve",
    "resolvent",
    "yosida_apply",
    "resolvent_monotone_gap",
    "lipschitz_ratio_l2",
    "sign_property_integral",
    "yosida_consistency",
]


@dataclass(frozen=True)
class ResolventConfig:
    """Parameters of one resolvent solve.

    The Newton iteration stops once the H^{-1} residual is at most
    ``rtol * |x|_{-1} + atol``.  ``polish`` further full Newton steps are then
    taken while they keep reducing the residual, which pins the solution
    down to round-off at the price of about one extra linear solve.
    """

    epsilon: float
    rtol: float = 1e-10
    atol: float = 1e-14
    max_iters: int = 100
    min_step: float = 1.0 / 1024
    levenberg: float = 1e-12
    continuation_depth: int = 6
    form: str = "auto"
    polish: int = 1

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if not (self.rtol > 0 or self.atol > 0) or self.rtol < 0 or self.atol < 0:
            raise ConfigurationError("newton tolerances must be non-negative and not both zero")
        if self.form not in ("auto", "w", "y"):
            raise ConfigurationError(f"form must be 'auto', 'w' or 'y', got {self.form!r}")
        if self.polish < 0:
            raise ConfigurationError("polish must be >= 0")

    def tolerance(self, x_norm: float) -> float:
        return self.rtol * x_norm + self.atol

    def with_epsilon(self, epsilon: float) -> "ResolventConfig":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class ResolventSolution:
    y: np.ndarray
    a_eps: np.ndarray
    beta_y: np.ndarray
    iterations: int
    residual: float
    tolerance: float
    form: str


@lru_cache(maxsize=16)
def _neg_laplacian_sparse(n: int, dim: int) -> sp.csc_matrix:
    h = 1.0 / (n + 1)
    t = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    if dim == 1:
        return sp.csc_matrix(t)
    eye = sp.identity(n)
    return sp.csc_matrix(sp.kron(t, eye) + sp.kron(eye, t))


def _neg_lap(x: np.ndarray, grid: Grid) -> np.ndarray:
    padded = np.pad(x, 1)
    if grid.dim == 1:
        out = 2.0 * x - padded[:-2] - padded[2:]
    else:
        out = 4.0 * x - padded[:-2, 1:-1] - padded[2:, 1:-1] - padded[1:-1, :-2] - padded[1:-1, 2:]
    return out / grid.h**2


def _solve_y_jacobian(dbeta, rhs, eps, grid, shift):
    """Solve ``(I + eps L diag(dbeta) + shift I) d = rhs``."""
    if grid.dim == 1:
        c = eps / grid.h**2
        ab = np.zeros((3, grid.n))
        ab[0, 1:] = -c * dbeta[1:]
        ab[1] = 1.0 + shift + 2.0 * c * dbeta
        ab[2, :-1] = -c * dbeta[:-1]
        return solve_banded((1, 1), ab, rhs, check_finite=False)
    L = _neg_laplacian_sparse(grid.n, grid.dim)
    J = sp.identity(grid.n**2, format="csc") * (1.0 + shift) + eps * (L @ sp.diags(dbeta.ravel()))
    return spsolve(sp.csc_matrix(J), rhs.ravel()).reshape(grid.shape)


def _solve_w_jacobian(inv_dbeta, rhs, eps, grid, shift):
    """Solve ``(diag(inv_dbeta) + eps L + shift I) d = rhs`` (SPD)."""
    if grid.dim == 1:
        c = eps / grid.h**2
        ab = np.zeros((3, grid.n))
        ab[0, 1:] = -c
        ab[1] = inv_dbeta + shift + 2.0 * c
        ab[2, :-1] = -c
        return solve_banded((1, 1), ab, rhs, check_finite=False)
    L = _neg_laplacian_sparse(grid.n, grid.dim)
    J = sp.diags(inv_dbeta.ravel() + shift) + eps * L
    return spsolve(sp.csc_matrix(J), rhs.ravel()).reshape(grid.shape)


class _Problem:
    """Residual, energy and Newton step for one of the two formulations."""

    def __init__(self, x, eps, nl, basis, form):
        self.x, self.eps, self.nl, self.basis, self.form = x, eps, nl, basis, form
        self.grid = basis.grid
        self.vol = basis.grid.cell_volume
        if form == "y":
            self._lx = inverse_laplacian(x, basis)

    # unknown u is y (y form) or w = beta(y) (w form)
    def split(self, u):
        if self.form == "y":
            return u, beta_eval(self.nl, u)
        return beta_inverse(self.nl, u), u

    def residual(self, u):
        y, b = self.split(u)
        return y + self.eps * _neg_lap(b, self.grid) - self.x

    def energy(self, u):
        y, b = self.split(u)
        if self.form == "y":
            ly = inverse_laplacian(y, self.basis)
            return self.vol * (0.5 * np.sum(y * ly) - np.sum(self._lx * y) + self.eps * np.sum(j_eval(self.nl, y)))
        # conjugate of j: j*(w) = w y - j(y)
        jstar = b * y - j_eval(self.nl, y)
        return self.vol * (np.sum(jstar) + 0.5 * self.eps * np.sum(b * _neg_lap(b, self.grid)) - np.sum(self.x * b))

    def slope(self, F, d):
        # directional derivative of the energy along d
        if self.form == "y":
            return hminus_inner(F, d, self.basis)
        return self.vol * float(np.sum(F * d))

    def newton_direction(self, u, F, shift):
        y, _ = self.split(u)
        dbeta = beta_prime(self.nl, y)
        if self.form == "y":
            return _solve_y_jacobian(dbeta, -F, self.eps, self.grid, shift)
        return _solve_w_jacobian(1.0 / dbeta, -F, self.eps, self.grid, shift)


def _choose_form(nl: Nonlinearity, form: str) -> str:
    if form != "auto":
        if form == "w" and not nl.strictly_monotone:
            raise ConfigurationError("w form requires a strictly increasing beta")
        return form
    return "w" if nl.strictly_monotone else "y"


def _newton(x, y0, cfg, nl, basis, tol):
    form = _choose_form(nl, cfg.form)
    prob = _Problem(x, cfg.epsilon, nl, basis, form)
    u = y0.copy() if form == "y" else beta_eval(nl, y0)
    F = prob.residual(u)
    res = hminus_norm(F, basis)
    energy = None
    it = 0
    while res > tol:
        if it >= cfg.max_iters:
            raise SolverError(f"Newton reached max_iters={cfg.max_iters}", residual=res, iterations=it)
        it += 1
        d = None
        for shift in (0.0, cfg.levenberg, 1e3 * cfg.levenberg):
            try:
                d = prob.newton_direction(u, F, shift)
            except (LinAlgError, ValueError, ZeroDivisionError):
                continue
            if np.all(np.isfinite(d)):
                break
            d = None
        if d is None:
            raise NumericalError("Newton linear solve produced non-finite values")
        if energy is None:
            energy = prob.energy(u)
        slope = prob.slope(F, d)
        t = 1.0
        while True:
            u_new = u + t * d
            F_new = prob.residual(u_new)
            if not np.all(np.isfinite(F_new)):
                accepted = False
            else:
                res_new = hminus_norm(F_new, basis)
                e_new = prob.energy(u_new)
                # energy decrease gives global convergence; residual decrease handles
                # the endgame where energy differences fall below round-off
                accepted = e_new <= energy + 1e-4 * t * slope or res_new <= (1.0 - 1e-4 * t) * res
            if accepted:
                break
            t *= 0.5
            if t < cfg.min_step:
                raise SolverError("Newton line search failed", residual=res, iterations=it)
        u, F, res, energy = u_new, F_new, res_new, e_new
    for _ in range(cfg.polish):
        if res == 0.0:
            break
        try:
            d = prob.newton_direction(u, F, 0.0)
        except (LinAlgError, ValueError, ZeroDivisionError):
            break
        u_new = u + d
        F_new = prob.residual(u_new)
        if not np.all(np.isfinite(F_new)):
            break
        res_new = hminus_norm(F_new, basis)
        if not res_new < res:
            break
        u, F, res = u_new, F_new, res_new
        it += 1
    y, b = prob.split(u)
    return y, b, it, res, form


def resolvent_solve(
    x: np.ndarray,
    cfg: ResolventConfig,
    nl: Nonlinearity,
    basis: SpectralBasis,
    y0: np.ndarray | None = None,
) -> ResolventSolution:
    """Solve ``y - eps Delta_h beta(y) = x``.

    Starts from ``y0`` (default ``x``).  If Newton fails, the solve is retried
    by continuation: solve at ``2 eps`` and warm-start ``eps`` from it.

    Raises
    ------
    NumericalError
        NaN/Inf in the input or the iterates.
    SolverError
        No convergence even after continuation; carries the last residual.
    """
    x = basis.grid.check(x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("resolvent input contains NaN/Inf")
    tol = cfg.tolerance(hminus_norm(x, basis))
    start = x if y0 is None else basis.grid.check(y0)
    y, b, it, res, form = _continuation(x, start, cfg, nl, basis, tol, cfg.continuation_depth)
    a_eps = (x - y) / cfg.epsilon
    return ResolventSolution(y=y, a_eps=a_eps, beta_y=b, iterations=it, residual=res, tolerance=tol, form=form)


def _continuation(x, start, cfg, nl, basis, tol, depth):
    try:
        return _newton(x, start, cfg, nl, basis, tol)
    except SolverError as err:
        if depth <= 0:
            raise
        coarse = cfg.with_epsilon(2.0 * cfg.epsilon)
        y_c, _, it_c, _, _ = _continuation(x, start, coarse, nl, basis, coarse.tolerance(hminus_norm(x, basis)), depth - 1)
        try:
            y, b, it, res, form = _newton(x, y_c, cfg, nl, basis, tol)
        except SolverError as err2:
            raise SolverError(f"resolvent failed after continuation: {err2}", residual=err2.residual,
                              iterations=err.iterations + it_c + err2.iterations) from err
        return y, b, it + it_c + err.iterations, res, form


def resolvent(x, epsilon, nl, basis, **kwargs) -> np.ndarray:
    """Shorthand for ``resolvent_solve(x, ResolventConfig(epsilon), nl, basis).y``."""
    return resolvent_solve(x, ResolventConfig(epsilon, **kwargs), nl, basis).y


def yosida_apply(x, cfg: ResolventConfig, nl: Nonlinearity, basis: SpectralBasis) -> np.ndarray:
    """``A_eps(x) = (x - J_eps(x)) / eps``."""
    return resolvent_solve(x, cfg, nl, basis).a_eps


def resolvent_monotone_gap(x, xbar, cfg, nl, basis) -> float:
    """``<A_eps x - A_eps xbar, x - xbar>_{-1}``; non-negative by monotonicity."""
    if x is xbar or np.array_equal(x, xbar):
        return 0.0
    ax = yosida_apply(x, cfg, nl, basis)
    axb = yosida_apply(xbar, cfg, nl, basis)
    return hminus_inner(ax - axb, x - xbar, basis)


def lipschitz_ratio_l2(x, xbar, cfg, nl, basis) -> float:
    """``|J_eps x - J_eps xbar|_2 / |x - xbar|_2``."""
    dx = lp_norm(x - xbar, 2, basis)
    if dx == 0:
        return 0.0
    y = resolvent_solve(x, cfg, nl, basis).y
    yb = resolvent_solve(xbar, cfg, nl, basis).y
    return lp_norm(y - yb, 2, basis) / dx


def _forward_differences(u: np.ndarray, grid: Grid) -> list[np.ndarray]:
    padded = np.pad(u, 1)
    if grid.dim == 1:
        return [np.diff(padded) / grid.h]
    return [np.diff(padded[:, 1:-1], axis=0) / grid.h, np.diff(padded[1:-1, :], axis=1) / grid.h]


def sign_property_integral(y: np.ndarray, nl: Nonlinearity, g, basis: SpectralBasis) -> float:
    """``h^dim sum grad_h beta(y) . grad_h g(y)`` with forward differences and zero boundary values.

    For non-decreasing ``g`` with ``g(0) = 0`` every term is a product of two
    increments of the same sign, so the sum is non-negative.
    """
    gb = _forward_differences(beta_eval(nl, y), basis.grid)
    gg = _forward_differences(g(y), basis.grid)
    return float(basis.grid.cell_volume * sum(np.sum(a * b) for a, b in zip(gb, gg)))


def yosida_consistency(x, eps_values, nl, basis, **cfg_kwargs) -> tuple[np.ndarray, np.ndarray]:
    """Errors ``|A_eps(x) + Delta_h beta(x)|_{-1}`` for each eps and the pairwise log-log rates."""
    target = _neg_lap(beta_eval(nl, x), basis.grid)
    errs = np.array([
        hminus_norm(yosida_apply(x, ResolventConfig(e, **cfg_kwargs), nl, basis) - target, basis)
        for e in eps_values
    ])
    eps = np.asarray(eps_values, dtype=float)
    rates = np.log(errs[1:] / errs[:-1]) / np.log(eps[1:] / eps[:-1])
    return errs, rates


def contraction_factor(dt: float, epsilon: float) -> float:
    """Factor ``(dt/eps) / (1 + dt/eps)`` of the implicit-step fixed-point map."""
    r = dt / epsilon
    return r / (1.0 + r)


def fixed_point_iteration_bound(dt: float, epsilon: float, tol: float = 1e-11) -> int:
    """Geometric-series bound ``ceil(log(tol) / log(rho))`` on fixed-point iterations."""
    return math.ceil(math.log(tol) / math.log(contraction_factor(dt, epsilon)))
