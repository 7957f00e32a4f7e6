"""Machine-checkable reports for the a-priori estimates, over simulated ensembles.

Every estimate holds in expectation, so statistical checks compare a
Monte-Carlo mean against its bound inflated by the 95% confidence
half-width, and every report carries the measured margin alongside its
pass flag.  Reports are pure functions of trajectories and parameters.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidExperimentError
from .geometry import SpectralBasis
from .hminus import hminus_norm_sq, lp_norm, lp_norm_p
from .stepper import Trajectory, negativity_functional

__all__ = [
    "Z95",
    "Report",
    "EnsembleStats",
    "ensemble_stats",
    "energy_report",
    "positivity_report",
    "contraction_report",
    "epsilon_convergence",
    "lambda_convergence",
    "lp_growth_report",
    "picard_report",
    "mollify",
    "phi",
    "phi_mollified",
    "phi_derivative",
    "barenblatt_profile",
    "barenblatt_support_radius",
    "barenblatt_compare",
    "heat_compare",
]

Z95 = 1.959963984540054


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class Report:
    """Outcome of one check.

    ``margin`` is the smallest relative slack ``(bound - value) / bound`` over
    the checked quantities; negative means violated.
    """

    name: str
    reference: str
    passed: bool
    margin: float
    constants: dict[str, Any] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    external: bool = False

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: margin={self.margin:.3g}"


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time means and 95% half-widths over i.i.d. paths."""

    n_paths: int
    times: np.ndarray
    mean: dict[str, np.ndarray]
    half_width: dict[str, np.ndarray]


def _mean_hw(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    hw = Z95 * samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    return mean, hw


def _require(trajs):
    if not trajs:
        raise ConfigurationError("ensemble is empty")
    n = {t.n_steps for t in trajs}
    if len(n) != 1:
        raise ConfigurationError("trajectories have different lengths")


def ensemble_stats(trajs: Sequence[Trajectory], dt: float) -> EnsembleStats:
    _require(trajs)
    quantities = {
        "hminus_sq": np.array([t.hminus_sq for t in trajs]),
        "lp_p": np.array([t.lp_p for t in trajs]),
        "phi_p": np.array([t.phi_p for t in trajs]),
        "j_accumulated": np.array([t.accumulated_j(dt) for t in trajs]),
        "dissipation_accumulated": np.array([t.accumulated_dissipation(dt) for t in trajs]),
    }
    mean, hw = {}, {}
    for k, v in quantities.items():
        mean[k], hw[k] = _mean_hw(v)
    return EnsembleStats(n_paths=len(trajs), times=trajs[0].times, mean=mean, half_width=hw)


def _relative_hw(samples):
    mean, hw = _mean_hw(samples)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mean > 0, hw / mean, 0.0)
    return mean, rel


def _margin(value, bound, times=None):
    """Smallest relative slack; with ``times``, t = 0 (where the bound is an identity) is skipped."""
    value, bound = np.asarray(value, dtype=float), np.asarray(bound, dtype=float)
    if times is not None and np.any(times > 0):
        keep = np.asarray(times) > 0
        value, bound = value[keep], bound[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(bound > 0, (bound - value) / bound, np.where(value <= 0, 0.0, -np.inf))
    return float(np.min(m))


def energy_report(trajs: Sequence[Trajectory], x0: np.ndarray, basis: SpectralBasis, dt: float,
                  C: float, c1: float) -> Report:
    """Check ``(1/2) E|X(t)|^2 + E sum dt <A_eps X, X> <= exp(c1 C t) (1/2)|x0|^2 (1 + delta)``.

    The same bound is checked with the j-integral ``E sum dt h sum j(J_eps X)``
    in place of the dissipation.
    """
    _require(trajs)
    times = trajs[0].times
    e0 = 0.5 * hminus_norm_sq(x0, basis)
    growth = np.exp(c1 * C * times)
    lhs_samples = np.array([0.5 * t.hminus_sq + t.accumulated_dissipation(dt) for t in trajs])
    j_samples = np.array([0.5 * t.hminus_sq + t.accumulated_j(dt) for t in trajs])
    lhs, rel = _relative_hw(lhs_samples)
    lhs_j, rel_j = _relative_hw(j_samples)
    bound = growth * e0 * (1.0 + rel)
    bound_j = growth * e0 * (1.0 + rel_j)
    tol = 1e-12 * max(e0, 1e-300)
    ok = bool(np.all(lhs <= bound + tol)) and bool(np.all(lhs_j <= bound_j + tol))
    return Report(
        name="energy",
        reference="H^-1 energy estimate with Gronwall envelope exp(c1*C*t)",
        passed=ok,
        margin=min(_margin(lhs, bound + tol, times), _margin(lhs_j, bound_j + tol, times)),
        constants={"c1": c1, "C": C, "c1C": c1 * C, "n_paths": len(trajs)},
        details={"times": times, "lhs": lhs, "bound": bound, "lhs_j": lhs_j, "delta_stat": rel,
                 "mean_hminus_sq": np.mean([t.hminus_sq for t in trajs], axis=0)},
    )


def positivity_report(trajs: Sequence[Trajectory], x0: np.ndarray, basis: SpectralBasis,
                      tol_pos: float | None = None, phi_rtol: float = 1e-12) -> Report:
    """Per-path space-time minima and the mean negativity functional.

    Fails if any path goes below ``-tol_pos`` (default ``1e-8 |x0|_inf``) or if
    ``sup_t E phi_p(X(t)) > phi_rtol |x0|_p^p``.
    """
    _require(trajs)
    if np.any(x0 < 0):
        raise InvalidExperimentError("positivity needs x0 >= 0")
    scale = float(np.max(np.abs(x0))) if x0.size else 0.0
    if tol_pos is None:
        tol_pos = 1e-8 * scale
    p = trajs[0].p
    mins = np.array([t.minimum.min() for t in trajs])
    phi_mean = np.mean([t.phi_p for t in trajs], axis=0)
    phi_bound = phi_rtol * lp_norm_p(x0, p, basis.grid.cell_volume)
    worst = float(mins.min())
    ok = worst >= -tol_pos and float(phi_mean.max()) <= phi_bound
    margin = (worst + tol_pos) / tol_pos if tol_pos > 0 else (0.0 if worst >= 0 else -np.inf)
    return Report(
        name="positivity",
        reference="nonnegative initial data give nonnegative solutions",
        passed=bool(ok),
        margin=float(margin),
        constants={"tol_pos": tol_pos, "p": p, "n_paths": len(trajs), "phi_bound": phi_bound},
        details={"path_minima": mins, "min": worst, "sup_mean_phi": float(phi_mean.max()), "mean_phi": phi_mean},
    )


def _distance_series(ta: Trajectory, tb: Trajectory, basis: SpectralBasis) -> np.ndarray:
    if ta.snapshots is None or tb.snapshots is None:
        raise ConfigurationError("distance checks need snapshots (record_every >= 1)")
    if not np.array_equal(ta.snapshot_steps, tb.snapshot_steps):
        raise ConfigurationError("trajectories were recorded at different steps")
    return np.array([hminus_norm_sq(a - b, basis) for a, b in zip(ta.snapshots, tb.snapshots)])


def _check_keys(a: Sequence[Trajectory], b: Sequence[Trajectory]):
    if len(a) != len(b):
        raise ConfigurationError("ensembles have different sizes")
    for ta, tb in zip(a, b):
        if ta.noise_key != tb.noise_key:
            raise ConfigurationError(f"noise keys differ: {ta.noise_key} vs {tb.noise_key}")


def contraction_report(trajs_a: Sequence[Trajectory], trajs_b: Sequence[Trajectory], x0_a: np.ndarray,
                       x0_b: np.ndarray, basis: SpectralBasis, C: float, c1: float) -> Report:
    """``E|X_a(t) - X_b(t)|^2 <= exp(c1 C t) |x0_a - x0_b|^2 (1 + delta)`` under shared noise."""
    _require(trajs_a)
    _check_keys(trajs_a, trajs_b)
    steps = trajs_a[0].snapshot_steps
    times = trajs_a[0].times[steps]
    samples = np.array([_distance_series(a, b, basis) for a, b in zip(trajs_a, trajs_b)])
    d0 = hminus_norm_sq(x0_a - x0_b, basis)
    mean, rel = _relative_hw(samples)
    bound = np.exp(c1 * C * times) * d0 * (1.0 + rel)
    identical = bool(np.array_equal(x0_a, x0_b))
    if identical:
        bitwise = all(np.array_equal(a.snapshots, b.snapshots) and np.array_equal(a.final, b.final)
                      for a, b in zip(trajs_a, trajs_b))
        ok = bitwise and float(samples.max()) <= 1e-20
        margin = 0.0 if ok else -np.inf
    else:
        bitwise = False
        tol = 1e-12 * d0
        ok = bool(np.all(mean <= bound + tol))
        margin = _margin(mean, bound + tol, times)
    return Report(
        name="contraction",
        reference="H^-1 stability under shared noise with Gronwall envelope exp(c1*C*t)",
        passed=bool(ok),
        margin=float(margin),
        constants={"c1": c1, "C": C, "C_hat": c1 * C, "d0_sq": d0, "n_paths": len(trajs_a)},
        details={"times": times, "mean_distance_sq": mean, "bound": bound, "identical_initial_data": identical,
                 "bitwise_identical": bitwise},
    )


def _order(gaps: np.ndarray, params: np.ndarray) -> np.ndarray:
    # squared distances -> order of the distance itself
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * np.log(gaps[:-1] / gaps[1:]) / np.log(params[:-1] / params[1:])


def epsilon_convergence(runs: dict[float, Sequence[Trajectory]], basis: SpectralBasis,
                        expected_order: tuple[float, float] | None = None) -> Report:
    """Gaps ``sup_t E|X_eps - X_eps'|_{-1}^2`` between consecutive entries of a decreasing eps list.

    Passes if the gaps strictly decrease and, when ``expected_order`` is given,
    the order measured on the finest pair lies within it.  The order refers
    to the root-mean-square distance.
    """
    eps = np.array(sorted(runs, reverse=True), dtype=float)
    if eps.size < 3:
        raise ConfigurationError("need at least 3 epsilon values")
    gaps = []
    for e1, e2 in zip(eps[:-1], eps[1:]):
        _check_keys(runs[e1], runs[e2])
        d = np.mean([_distance_series(a, b, basis) for a, b in zip(runs[e1], runs[e2])], axis=0)
        gaps.append(float(d.max()))
    gaps = np.array(gaps)
    decreasing = bool(np.all(np.diff(gaps) < 0))
    orders = _order(gaps, eps[:-1])
    finest = float(orders[-1]) if orders.size else float("nan")
    ok = decreasing
    margin = float(np.min(-np.diff(gaps) / gaps[:-1])) if gaps.size > 1 else 0.0
    if expected_order is not None:
        lo, hi = expected_order
        ok = ok and lo <= finest <= hi
        margin = min(margin, (finest - lo) / (hi - lo), (hi - finest) / (hi - lo))
    return Report(
        name="epsilon_convergence",
        reference="Yosida approximations converge as eps -> 0 (Cauchy in sup_t E|.|_{-1}^2)",
        passed=bool(ok),
        margin=margin,
        constants={"finest_order": finest, "expected_order": expected_order},
        details={"epsilon": eps, "gaps": gaps, "orders": orders, "strictly_decreasing": decreasing},
    )


def lambda_convergence(base: Sequence[Trajectory], regularized: dict[float, Sequence[Trajectory]],
                       basis: SpectralBasis, slope_range: tuple[float, float] = (1.5, 2.5)) -> Report:
    """``E|X^lam(T) - X(T)|_{-1}^2`` across a decreasing list of ``lam`` and its log-log slope."""
    lams = np.array(sorted(regularized, reverse=True), dtype=float)
    if lams.size < 2:
        raise ConfigurationError("need at least 2 lambda values")
    dist = []
    for lam in lams:
        _check_keys(base, regularized[lam])
        dist.append(float(np.mean([hminus_norm_sq(a.final - b.final, basis) for a, b in zip(regularized[lam], base)])))
    dist = np.array(dist)
    decreasing = bool(np.all(np.diff(dist) < 0))
    positive = bool(np.all(dist > 0))
    slope = float(np.polyfit(np.log(lams), np.log(dist), 1)[0]) if positive else float("nan")
    lo, hi = slope_range
    ok = decreasing and positive and lo <= slope <= hi
    margin = min((slope - lo) / (hi - lo), (hi - slope) / (hi - lo)) if positive else -np.inf
    return Report(
        name="lambda_convergence",
        reference="strictly monotone regularization beta + lam*r converges as lam -> 0",
        passed=bool(ok),
        margin=float(margin),
        constants={"slope": slope, "slope_range": slope_range},
        details={"lambda": lams, "distance_sq": dist, "strictly_decreasing": decreasing},
    )


def lp_growth_report(trajs: Sequence[Trajectory], x0: np.ndarray, basis: SpectralBasis,
                     margin_factor: float = 0.0) -> Report:
    """Measure the smallest ``gamma >= 0`` with ``exp(-gamma t) E|X(t)|_p^p <= |x0|_p^p``.

    With ``R = 2|x0|_p + margin_factor`` the ensemble then stays in
    ``{exp(-gamma t) E|X(t)|_p^p <= R^p}``; the check asserts gamma is finite
    and the bound holds at every recorded time.
    """
    _require(trajs)
    p = trajs[0].p
    times = trajs[0].times
    x0p = lp_norm_p(x0, p, basis.grid.cell_volume)
    mean = np.mean([t.lp_p for t in trajs], axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where((times > 0) & (x0p > 0), np.log(mean / x0p) / times, 0.0)
    gamma = float(max(0.0, np.nanmax(rates)))
    R = 2.0 * lp_norm(x0, p, basis) + margin_factor
    scaled = np.exp(-gamma * times) * mean
    ok = math.isfinite(gamma) and bool(np.all(scaled <= R**p * (1 + 1e-12)))
    return Report(
        name="lp_growth",
        reference="exponentially weighted L^p bound of the Yosida solutions",
        passed=ok,
        margin=_margin(scaled, np.full_like(scaled, R**p)),
        constants={"gamma": gamma, "R": R, "p": p},
        details={"times": times, "mean_lp_p": mean},
    )


def picard_report(gaps: np.ndarray, first: int = 1, last: int | None = None) -> Report:
    """Monotone decay of frozen-noise Picard gaps ``d_first..d_last``."""
    gaps = np.asarray(gaps, dtype=float)
    last = gaps.size - 1 if last is None else last
    window = gaps[first:last + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = window[1:] / window[:-1]
    ok = bool(window.size >= 2 and np.all(np.diff(window) < 0))
    geo = float(np.exp(np.mean(np.log(ratios)))) if ok else float("nan")
    return Report(
        name="picard_contraction",
        reference="the frozen-noise map X -> X* contracts on short horizons",
        passed=ok and geo < 1,
        margin=float(1.0 - np.max(ratios)) if ratios.size else -np.inf,
        constants={"geometric_ratio": geo},
        details={"gaps": gaps, "ratios": ratios, "window": [first, last]},
    )


def mollify(x: np.ndarray, lam: float, basis: SpectralBasis) -> np.ndarray:
    """Spectral filter ``x_k / (1 + lam lambda_k^h)``, i.e. ``(I - lam Delta_h)^{-1} x``."""
    if lam < 0:
        raise ConfigurationError("lambda must be >= 0")
    if lam == 0:
        return np.array(x, dtype=float)
    return basis.spectral_filter(x, 1.0 / (1.0 + lam * basis.eigenvalues))


def phi(x: np.ndarray, p: float, basis: SpectralBasis) -> float:
    """Negativity functional ``(1/p) |x^-|_p^p``."""
    return negativity_functional(np.asarray(x, dtype=float), p, basis.grid.cell_volume)


def phi_mollified(x: np.ndarray, p: float, lam: float, basis: SpectralBasis) -> float:
    return phi(mollify(x, lam, basis), p, basis)


def phi_derivative(x: np.ndarray, p: float) -> np.ndarray:
    """Gradient density ``-(x^-)^(p-1)``; the directional derivative along v is ``h^dim sum grad * v``."""
    return -np.maximum(-np.asarray(x, dtype=float), 0.0) ** (p - 1)


def barenblatt_profile(t: float, x: np.ndarray, m: float, C: float, center: float = 0.5) -> np.ndarray:
    """Self-similar solution of ``u_t = (u^m)_xx`` on the line (m > 1)."""
    if m <= 1:
        raise ConfigurationError("Barenblatt profile needs m > 1")
    a = 1.0 / (m + 1.0)
    k = (m - 1.0) / (2.0 * m * (m + 1.0))
    core = C - k * (x - center) ** 2 * t ** (-2.0 * a)
    return t ** (-a) * np.maximum(core, 0.0) ** (1.0 / (m - 1.0))


def barenblatt_support_radius(t: float, m: float, C: float) -> float:
    a = 1.0 / (m + 1.0)
    k = (m - 1.0) / (2.0 * m * (m + 1.0))
    return math.sqrt(C / k) * t**a


def barenblatt_compare(final: np.ndarray, t0: float, t1: float, m: float, C: float, basis: SpectralBasis,
                       center: float = 0.5, rtol: float = 0.02) -> Report:
    """Relative L^2 error of a deterministic run from ``t0`` to ``t1`` against the Barenblatt profile.

    Raises InvalidExperimentError if the support reaches the boundary by ``t1``.
    """
    if basis.grid.dim != 1:
        raise InvalidExperimentError("Barenblatt comparison is 1-D only")
    r = barenblatt_support_radius(t1, m, C)
    if center - r <= 0.0 or center + r >= 1.0:
        raise InvalidExperimentError(f"support [{center - r:.4g}, {center + r:.4g}] reaches the boundary by t1 = {t1}")
    exact = barenblatt_profile(t1, basis.grid.xi, m, C, center)
    denom = lp_norm(exact, 2, basis)
    err = lp_norm(final - exact, 2, basis) / denom if denom > 0 else lp_norm(final - exact, 2, basis)
    return Report(
        name="barenblatt",
        reference="external oracle: Barenblatt self-similar solution of the deterministic porous medium equation",
        passed=bool(err <= rtol),
        margin=float((rtol - err) / rtol),
        constants={"m": m, "C": C, "t0": t0, "t1": t1, "rtol": rtol},
        details={"relative_l2_error": float(err), "support_radius_t1": r},
        external=True,
    )


def heat_compare(final: np.ndarray, x0: np.ndarray, T: float, epsilon: float, basis: SpectralBasis,
                 rtol: float = 1e-3) -> Report:
    """Linear beta: compare with the per-mode exact solution ``exp(-lambda T / (1 + eps lambda)) x_k``."""
    lam = basis.eigenvalues
    exact = basis.spectral_filter(x0, np.exp(-lam * T / (1.0 + epsilon * lam)))
    err = lp_norm(final - exact, 2, basis) / lp_norm(exact, 2, basis)
    return Report(
        name="heat",
        reference="external oracle: spectral solution of the linear (heat) case",
        passed=bool(err <= rtol),
        margin=float((rtol - err) / rtol),
        constants={"T": T, "epsilon": epsilon, "rtol": rtol},
        details={"relative_l2_error": float(err)},
        external=True,
    )
