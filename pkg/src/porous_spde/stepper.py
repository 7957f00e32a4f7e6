"""Time integration of ``dX + A_eps(X) dt = sigma(X) dW`` on the discrete grid.

The default scheme is implicit in the Yosida drift and explicit
(Euler-Maruyama) in the noise:

    X_{n+1} + dt A_eps(X_{n+1}) = X_n + sigma(X_n) dW_n =: b.

With ``Y = J_{eps+dt}(b)`` the exact solution of this implicit equation is
``X_{n+1} = (dt Y + eps b) / (eps + dt)``, and ``J_eps(X_{n+1}) = Y`` by the
resolvent identity.  One nonlinear solve per step therefore gives both the
new state and the ``Y_eps`` needed for the recorded functionals.  The
fixed-point map ``X <- (b + (dt/eps) J_eps(X)) / (1 + dt/eps)`` (contraction
factor ``(dt/eps)/(1+dt/eps)``) is kept as ``inner="fixed-point"`` for
cross-checking.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError, SolverError, StepError
from .geometry import SpectralBasis
from .hminus import hminus_inner, hminus_norm, hminus_norm_sq, lp_norm_p
from .noise import NoiseModel, NoisePath, apply_sigma, generate_path
from .nonlinearity import Nonlinearity, j_eval, regularize
from .resolvent import ResolventConfig, contraction_factor, resolvent_solve

__all__ = [
    "SimConfig",
    "Trajectory",
    "StepResult",
    "PicardReport",
    "negativity_functional",
    "step_semi_implicit",
    "step_mild_exponential",
    "simulate_path",
    "simulate_regularized",
    "simulate_ensemble",
    "picard_construct",
]

SCHEMES = ("semi-implicit-yosida", "mild-exponential")


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping parameters.

    ``epsilon`` defaults to ``max(dt, 1e-3)``.  ``p`` is the exponent of the
    recorded L^p and negativity functionals.  ``record_every = 0`` disables
    field snapshots (the final state is always kept).
    """

    T: float
    dt: float
    epsilon: float | None = None
    scheme: str = "semi-implicit-yosida"
    record_every: int = 0
    p: float = 4.0
    inner: str = "resolvent"
    newton_rtol: float = 1e-10
    fixed_point_tol: float = 1e-11
    fixed_point_max_iter: int = 500
    mollify_lambda: float | None = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if not self.T >= self.dt:
            raise ConfigurationError(f"T must be >= dt, got T={self.T}, dt={self.dt}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", max(self.dt, 1e-3))
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.inner not in ("resolvent", "fixed-point"):
            raise ConfigurationError(f"inner must be 'resolvent' or 'fixed-point', got {self.inner!r}")
        if self.record_every < 0:
            raise ConfigurationError("record_every must be >= 0")
        if self.p < 1:
            raise ConfigurationError("p must be >= 1")
        if self.mollify_lambda is not None and self.mollify_lambda < 0:
            raise ConfigurationError("mollify_lambda must be >= 0")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigurationError(f"T = {self.T} is not a multiple of dt = {self.dt}")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def contraction_factor(self) -> float:
        return contraction_factor(self.dt, self.epsilon)

    def resolvent_config(self, epsilon: float | None = None) -> ResolventConfig:
        return ResolventConfig(self.epsilon if epsilon is None else epsilon, rtol=self.newton_rtol)


@dataclass
class Trajectory:
    """Per-step functionals of one path plus optional field snapshots.

    Arrays indexed by step (length ``n_steps + 1``):
    ``hminus_sq`` = |X|_{-1}^2, ``lp_p`` = |X|_p^p, ``phi_p`` = |X^-|_p^p / p,
    ``j_integral`` = h^dim sum j(J_eps X), ``dissipation`` = <A_eps X, X>_{-1},
    ``minimum`` = min over the grid of X, ``phi_mollified`` = negativity
    functional of the spectrally mollified state (only if requested).
    """

    path_index: int
    times: np.ndarray
    hminus_sq: np.ndarray
    lp_p: np.ndarray
    phi_p: np.ndarray
    j_integral: np.ndarray
    dissipation: np.ndarray
    minimum: np.ndarray
    final: np.ndarray
    p: float
    snapshot_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    snapshots: np.ndarray | None = None
    newton_iterations: int = 0
    noise_key: tuple = ()
    phi_mollified: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return int(self.times.shape[0] - 1)

    def accumulated_dissipation(self, dt: float) -> np.ndarray:
        """``sum_{i=1..n} dt <A_eps X_i, X_i>_{-1}`` (right endpoints, matching the implicit step)."""
        return np.concatenate([[0.0], np.cumsum(self.dissipation[1:]) * dt])

    def accumulated_j(self, dt: float) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.j_integral[1:]) * dt])


@dataclass(frozen=True)
class StepResult:
    X: np.ndarray
    Y: np.ndarray
    newton_iterations: int
    inner_iterations: int


@dataclass(frozen=True)
class PicardReport:
    """Gaps ``d_i = sup_t mean_paths |X^(i+1)(t) - X^(i)(t)|_{-1}^2`` of the frozen-noise map."""

    gaps: np.ndarray
    ratios: np.ndarray
    n_paths: int
    T: float

    @property
    def geometric_ratio(self) -> float:
        r = self.ratios[np.isfinite(self.ratios)]
        return float(np.exp(np.mean(np.log(r)))) if r.size and np.all(r > 0) else float("nan")


def negativity_functional(x: np.ndarray, p: float, cell_volume: float) -> float:
    """``(1/p) |x^-|_p^p`` with ``x^- = max(-x, 0)``."""
    neg = np.maximum(-x, 0.0)
    if not neg.any():
        return 0.0
    return lp_norm_p(neg, p, cell_volume) / p


def _check_finite(X, step):
    if not np.all(np.isfinite(X)):
        raise StepError(f"non-finite state at step {step}", step=step)


def step_semi_implicit(
    X_n: np.ndarray,
    dW_n: np.ndarray,
    cfg: SimConfig,
    nl: Nonlinearity,
    nm: NoiseModel,
    basis: SpectralBasis,
    y_guess: np.ndarray | None = None,
    sigma_of: np.ndarray | None = None,
) -> StepResult:
    """One step of ``X_{n+1} + dt A_eps(X_{n+1}) = X_n + sigma(X_n) dW_n``.

    ``sigma_of`` replaces ``X_n`` as the argument of the noise coefficient
    (used by the frozen-noise Picard map).  Returns the new state and
    ``Y = J_eps(X_{n+1})``.
    """
    if not (np.all(np.isfinite(X_n)) and np.all(np.isfinite(dW_n))):
        raise NumericalError("non-finite input to step")
    noise_arg = X_n if sigma_of is None else sigma_of
    b = X_n + apply_sigma(noise_arg, dW_n, nm) if not nm.is_zero else X_n.copy()
    eps, dt = cfg.epsilon, cfg.dt
    if cfg.inner == "resolvent":
        sol = resolvent_solve(b, cfg.resolvent_config(eps + dt), nl, basis, y0=y_guess)
        X = (dt * sol.y + eps * b) / (eps + dt)
        return StepResult(X=X, Y=sol.y, newton_iterations=sol.iterations, inner_iterations=1)

    rho = contraction_factor(dt, eps)
    r = dt / eps
    tol = cfg.fixed_point_tol * (1.0 + hminus_norm(b, basis))
    rcfg = cfg.resolvent_config(eps)
    X = b.copy()
    y = y_guess
    newton = 0
    for it in range(1, cfg.fixed_point_max_iter + 1):
        sol = resolvent_solve(X, rcfg, nl, basis, y0=y)
        y = sol.y
        newton += sol.iterations
        X_new = (b + r * y) / (1.0 + r)
        upd = hminus_norm(X_new - X, basis)
        X = X_new
        if upd < tol:
            Y = resolvent_solve(X, rcfg, nl, basis, y0=y)
            return StepResult(X=X, Y=Y.y, newton_iterations=newton + Y.iterations, inner_iterations=it)
    raise StepError(f"fixed-point iteration (rho = {rho:.3g}) exceeded {cfg.fixed_point_max_iter} iterations",
                    residual=upd, iterations=cfg.fixed_point_max_iter)


def step_mild_exponential(
    X_n: np.ndarray,
    Y_n: np.ndarray,
    dW_n: np.ndarray,
    cfg: SimConfig,
    nm: NoiseModel,
) -> np.ndarray:
    """Exponential Euler step for ``dX + X/eps dt = J_eps(X)/eps dt + sigma(X) dW``.

    ``Y_n`` must be ``J_eps(X_n)``.  The result is a convex combination of
    ``X_n + sigma(X_n) dW_n`` and ``Y_n``.
    """
    decay = math.exp(-cfg.dt / cfg.epsilon)
    b = X_n + apply_sigma(X_n, dW_n, nm) if not nm.is_zero else X_n
    return decay * b + (1.0 - decay) * Y_n


def _increments(nm: NoiseModel, cfg: SimConfig, path_index: int, noise: NoisePath | None) -> np.ndarray:
    if noise is None:
        if nm.is_zero:
            return np.zeros((cfg.n_steps, nm.K_noise))
        noise = generate_path(nm.seed, path_index, cfg.dt, cfg.n_steps, nm.K_noise)
    if noise.increments.shape != (cfg.n_steps, nm.K_noise):
        raise ConfigurationError(
            f"noise path has shape {noise.increments.shape}, expected {(cfg.n_steps, nm.K_noise)}"
        )
    if abs(noise.dt - cfg.dt) > 1e-15 * cfg.dt:
        raise ConfigurationError(f"noise path dt = {noise.dt} differs from dt = {cfg.dt}")
    return noise.increments


def simulate_path(
    x0: np.ndarray,
    cfg: SimConfig,
    nl: Nonlinearity,
    nm: NoiseModel,
    basis: SpectralBasis,
    path_index: int = 0,
    noise: NoisePath | None = None,
) -> Trajectory:
    """Integrate one path on [0, T]; deterministic given ``(nm.seed, path_index)`` or ``noise``.

    Raises StepError annotated with the failing step index.
    """
    x0 = basis.grid.check(x0)
    if not np.all(np.isfinite(x0)):
        raise NumericalError("initial datum contains NaN/Inf")
    dW = _increments(nm, cfg, path_index, noise)
    N = cfg.n_steps
    vol = basis.grid.cell_volume
    p = cfg.p
    rcfg = cfg.resolvent_config()

    hm = np.empty(N + 1)
    lp = np.empty(N + 1)
    phi = np.empty(N + 1)
    jint = np.empty(N + 1)
    diss = np.empty(N + 1)
    mins = np.empty(N + 1)
    snap_steps = np.arange(0, N + 1, cfg.record_every) if cfg.record_every else np.zeros(0, dtype=int)
    snaps = np.empty((snap_steps.size,) + basis.grid.shape) if snap_steps.size else None
    snap_pos = 0
    phi_m = np.empty(N + 1) if cfg.mollify_lambda is not None else None
    if phi_m is not None:
        filt = 1.0 / (1.0 + cfg.mollify_lambda * basis.eigenvalues)

    def record(n, X, Y):
        nonlocal snap_pos
        hm[n] = hminus_norm_sq(X, basis)
        lp[n] = lp_norm_p(X, p, vol)
        phi[n] = negativity_functional(X, p, vol)
        if phi_m is not None:
            phi_m[n] = negativity_functional(basis.spectral_filter(X, filt), p, vol) if cfg.mollify_lambda else phi[n]
        jint[n] = vol * float(np.sum(j_eval(nl, Y)))
        diss[n] = hminus_inner((X - Y) / cfg.epsilon, X, basis)
        mins[n] = float(X.min())
        if snaps is not None and snap_pos < snap_steps.size and snap_steps[snap_pos] == n:
            snaps[snap_pos] = X
            snap_pos += 1

    X = x0.astype(float, copy=True)
    try:
        Y = resolvent_solve(X, rcfg, nl, basis).y
    except SolverError as err:
        raise StepError(f"initial resolvent failed: {err}", step=0, residual=err.residual) from err
    record(0, X, Y)
    iters = 0
    for n in range(N):
        try:
            if cfg.scheme == "semi-implicit-yosida":
                res = step_semi_implicit(X, dW[n], cfg, nl, nm, basis, y_guess=Y)
                X, Y = res.X, res.Y
                iters += res.newton_iterations
            else:
                X = step_mild_exponential(X, Y, dW[n], cfg, nm)
                sol = resolvent_solve(X, rcfg, nl, basis, y0=Y)
                Y = sol.y
                iters += sol.iterations
        except StepError as err:
            err.step = n + 1
            raise
        except SolverError as err:
            raise StepError(f"step {n + 1}: {err}", step=n + 1, residual=err.residual) from err
        except NumericalError as err:
            raise StepError(f"step {n + 1}: {err}", step=n + 1) from err
        _check_finite(X, n + 1)
        record(n + 1, X, Y)

    return Trajectory(
        path_index=path_index,
        times=cfg.times,
        hminus_sq=hm,
        lp_p=lp,
        phi_p=phi,
        j_integral=jint,
        dissipation=diss,
        minimum=mins,
        final=X,
        p=p,
        snapshot_steps=snap_steps,
        snapshots=snaps,
        newton_iterations=iters,
        noise_key=(nm.seed, path_index, cfg.dt, N, nm.K_noise) if noise is None else noise.key,
        phi_mollified=phi_m,
    )


def simulate_regularized(x0, lam, cfg, nl, nm, basis, path_index=0, noise=None) -> Trajectory:
    """:func:`simulate_path` with ``beta + lam * r``; ``lam = 0`` runs the unmodified problem."""
    if lam < 0:
        raise ConfigurationError("lambda must be >= 0")
    nl_lam = regularize(nl, lam) if lam > 0 else nl
    return simulate_path(x0, cfg, nl_lam, nm, basis, path_index=path_index, noise=noise)


def _simulate_star(args):
    return simulate_path(*args)


def simulate_ensemble(
    x0: np.ndarray,
    cfg: SimConfig,
    nl: Nonlinearity,
    nm: NoiseModel,
    basis: SpectralBasis,
    path_indices,
    workers: int = 1,
) -> list[Trajectory]:
    """Simulate independent paths; results are ordered by ``path_indices`` whatever ``workers`` is."""
    path_indices = list(path_indices)
    jobs = [(x0, cfg, nl, nm, basis, int(k)) for k in path_indices]
    if workers <= 1 or len(jobs) <= 1:
        return [_simulate_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _frozen_noise_trajectory(x0, frozen, dW, cfg, nl, nm, basis):
    """States of ``dX + A_eps X dt = sigma(frozen(t)) dW`` at every step."""
    N = cfg.n_steps
    out = np.empty((N + 1,) + basis.grid.shape)
    out[0] = x0
    X = np.array(x0, dtype=float)
    Y = None
    for n in range(N):
        res = step_semi_implicit(X, dW[n], cfg, nl, nm, basis, y_guess=Y, sigma_of=frozen[n])
        X, Y = res.X, res.Y
        out[n + 1] = X
    return out


def picard_construct(
    x0: np.ndarray,
    paths: list[NoisePath],
    n_outer: int,
    cfg: SimConfig,
    nl: Nonlinearity,
    nm: NoiseModel,
    basis: SpectralBasis,
    initial: list[np.ndarray] | None = None,
) -> PicardReport:
    """Iterate the map ``X -> X*`` where ``X*`` solves the equation with noise coefficient ``sigma(X)``.

    ``initial`` gives ``X^(0)`` per path as arrays of shape ``(n_steps+1, *grid)``;
    by default ``X^(0)(t) = x0`` for all t.  Returns the gaps ``d_0..d_{n_outer-1}``.
    """
    if n_outer < 2:
        raise ConfigurationError("n_outer must be >= 2")
    if not paths:
        raise ConfigurationError("need at least one noise path")
    N = cfg.n_steps
    incs = [_increments(nm, cfg, p.path_index, p) for p in paths]
    if initial is None:
        current = [np.broadcast_to(x0, (N + 1,) + basis.grid.shape) for _ in paths]
    else:
        current = list(initial)
    gaps = []
    for _ in range(n_outer):
        nxt = [_frozen_noise_trajectory(x0, cur, dW, cfg, nl, nm, basis) for cur, dW in zip(current, incs)]
        per_t = np.zeros(N + 1)
        for a, b in zip(nxt, current):
            d = a - b
            per_t += np.array([hminus_norm_sq(d[n], basis) for n in range(N + 1)])
        gaps.append(float(np.max(per_t / len(paths))))
        current = nxt
    gaps = np.array(gaps)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = gaps[1:] / gaps[:-1]
    return PicardReport(gaps=gaps, ratios=ratios, n_paths=len(paths), T=cfg.T)
