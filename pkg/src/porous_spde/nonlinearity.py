"""Monotone nonlinearities beta for the porous media operator -Delta beta(x).

Built-in kinds are odd power laws ``|r|^(m-1) r`` optionally plus a linear
term; ``lambda_reg`` adds a further linear slope (strict-monotonicity
regularization).  Custom nonlinearities are monotone piecewise-linear tables.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, ExtrapolationError

__all__ = [
    "Nonlinearity",
    "AssumptionReport",
    "power_law",
    "power_plus_linear",
    "from_table",
    "load_table_csv",
    "beta_eval",
    "beta_prime",
    "j_eval",
    "beta_inverse",
    "regularize",
    "check_assumptions",
]

KINDS = ("power", "power_linear", "table")


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """A non-decreasing function beta with beta(0) = 0 for the built-in kinds.

    ``alpha`` holds the constants (alpha_1..alpha_4) of the growth/coercivity
    assumptions; they are only used by :func:`check_assumptions`.
    """

    kind: str = "power"
    m: float = 2.0
    a: float = 0.0
    alpha: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    lambda_reg: float = 0.0
    table_r: np.ndarray | None = field(default=None, repr=False)
    table_beta: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        if self.m < 1:
            raise ConfigurationError(f"m must be >= 1, got {self.m}")
        if self.lambda_reg < 0 or self.a < 0:
            raise ConfigurationError("linear slopes a and lambda_reg must be >= 0")
        if len(self.alpha) != 4:
            raise ConfigurationError("alpha must have four entries")
        if self.kind == "table":
            r = np.asarray(self.table_r, dtype=float)
            b = np.asarray(self.table_beta, dtype=float)
            if r.ndim != 1 or r.shape != b.shape or r.size < 2:
                raise ConfigurationError("table needs two equal-length columns with at least two rows")
            if np.any(np.diff(r) <= 0):
                raise ConfigurationError("table r values must be strictly increasing")
            if np.any(np.diff(b) < 0):
                raise ConfigurationError("table beta values must be non-decreasing")
            if not r[0] <= 0.0 <= r[-1]:
                raise ConfigurationError("table range must contain r = 0")
            r.setflags(write=False)
            b.setflags(write=False)
            object.__setattr__(self, "table_r", r)
            object.__setattr__(self, "table_beta", b)

    @property
    def slope(self) -> float:
        """Linear slope added on top of the power law (``a + lambda_reg``)."""
        return self.a + self.lambda_reg

    @property
    def min_slope(self) -> float:
        """Lower bound on beta' over the real line (0 for degenerate beta)."""
        if self.kind == "table":
            return float(np.min(np.diff(self.table_beta) / np.diff(self.table_r))) + self.lambda_reg
        base = 1.0 if self.m == 1 else 0.0
        return base + self.slope

    @property
    def strictly_monotone(self) -> bool:
        return self.min_slope > 0.0

    @property
    def is_odd(self) -> bool:
        return self.kind != "table"

    def __call__(self, r):
        return beta_eval(self, r)


@dataclass(frozen=True)
class AssumptionReport:
    growth: bool
    coercivity: bool
    monotone: bool
    mean_value: bool
    worst_growth_r: float
    worst_coercivity_r: float
    notes: tuple[str, ...] = ()

    @property
    def all_pass(self) -> bool:
        return self.growth and self.coercivity and self.monotone and self.mean_value


def power_law(m: float = 2.0, lambda_reg: float = 0.0, alpha=(1.0, 1.0, 1.0, 1.0)) -> Nonlinearity:
    return Nonlinearity(kind="power", m=m, lambda_reg=lambda_reg, alpha=tuple(alpha))


def power_plus_linear(m: float, a: float, lambda_reg: float = 0.0, alpha=(1.0, 1.0, 1.0, 1.0)) -> Nonlinearity:
    return Nonlinearity(kind="power_linear", m=m, a=a, lambda_reg=lambda_reg, alpha=tuple(alpha))


def from_table(r, beta, lambda_reg: float = 0.0, alpha=(1.0, 1.0, 1.0, 1.0)) -> Nonlinearity:
    return Nonlinearity(kind="table", m=1.0, table_r=np.asarray(r, float), table_beta=np.asarray(beta, float),
                        lambda_reg=lambda_reg, alpha=tuple(alpha))


def load_table_csv(path: str | Path, **kwargs) -> Nonlinearity:
    """Read a two-column CSV ``r, beta(r)``; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ConfigurationError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise ConfigurationError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    r, b = np.array(rows).T
    return from_table(r, b, **kwargs)


def _check_table_range(nl: Nonlinearity, r: np.ndarray) -> None:
    lo, hi = nl.table_r[0], nl.table_r[-1]
    if np.any(r < lo) or np.any(r > hi):
        bad = r[(r < lo) | (r > hi)].flat[0]
        raise ExtrapolationError(f"r = {bad} outside table range [{lo}, {hi}]")


def beta_eval(nl: Nonlinearity, r):
    r = np.asarray(r, dtype=float)
    if nl.kind == "table":
        _check_table_range(nl, r)
        return np.interp(r, nl.table_r, nl.table_beta) + nl.lambda_reg * r
    a = np.abs(r)
    if nl.m == 1:
        core = r
    elif nl.m == 2:
        core = a * r
    else:
        core = a ** (nl.m - 1) * r
    return core + nl.slope * r if nl.slope else core


def beta_prime(nl: Nonlinearity, r):
    """Derivative of beta; for tables the slope of the containing segment (right-continuous)."""
    r = np.asarray(r, dtype=float)
    if nl.kind == "table":
        _check_table_range(nl, r)
        slopes = np.diff(nl.table_beta) / np.diff(nl.table_r)
        idx = np.clip(np.searchsorted(nl.table_r, r, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx] + nl.lambda_reg
    if nl.m == 1:
        core = np.ones_like(r)
    elif nl.m == 2:
        core = 2.0 * np.abs(r)
    else:
        core = nl.m * np.abs(r) ** (nl.m - 1)
    return core + nl.slope


def _table_cumulative(nl: Nonlinearity) -> np.ndarray:
    # exact integral of the piecewise-linear interpolant from table_r[0]
    seg = 0.5 * (nl.table_beta[1:] + nl.table_beta[:-1]) * np.diff(nl.table_r)
    return np.concatenate([[0.0], np.cumsum(seg)])


def j_eval(nl: Nonlinearity, r):
    """Antiderivative ``j(r) = int_0^r beta(s) ds``."""
    r = np.asarray(r, dtype=float)
    if nl.kind == "table":
        _check_table_range(nl, r)
        tr, tb = nl.table_r, nl.table_beta
        cum = _table_cumulative(nl)

        def prim(x):
            i = np.clip(np.searchsorted(tr, x, side="right") - 1, 0, tr.size - 2)
            dx = x - tr[i]
            slope = (tb[i + 1] - tb[i]) / (tr[i + 1] - tr[i])
            return cum[i] + tb[i] * dx + 0.5 * slope * dx * dx

        return prim(r) - prim(np.zeros(())) + 0.5 * nl.lambda_reg * r * r
    a = np.abs(r)
    core = a ** (nl.m + 1) / (nl.m + 1)
    return core + 0.5 * nl.slope * r * r


def beta_inverse(nl: Nonlinearity, w, *, tol: float = 1e-15, max_iter: int = 100):
    """Inverse of a strictly increasing beta, evaluated pointwise."""
    if not nl.strictly_monotone:
        raise DomainError("beta_inverse needs a strictly increasing beta")
    w = np.asarray(w, dtype=float)
    if nl.kind == "table":
        if nl.lambda_reg == 0:
            lo, hi = nl.table_beta[0], nl.table_beta[-1]
            if np.any(w < lo) or np.any(w > hi):
                raise ExtrapolationError("value outside the table's range of beta")
            return np.interp(w, nl.table_beta, nl.table_r)
        # beta + lambda_reg r: invert on the table nodes, then solve within the segment
        nodes = nl.table_beta + nl.lambda_reg * nl.table_r
        lo, hi = nodes[0], nodes[-1]
        if np.any(w < lo) or np.any(w > hi):
            raise ExtrapolationError("value outside the table's range of beta")
        return np.interp(w, nodes, nl.table_r)
    if nl.m == 1:
        return w / (1.0 + nl.slope)
    # odd power law plus slope s: solve |y|^(m-1) y + s y = w for |y| by safeguarded Newton
    s = nl.slope
    aw = np.abs(w)
    y = np.minimum(aw / s, aw ** (1.0 / nl.m))
    for _ in range(max_iter):
        f = y**nl.m + s * y - aw
        df = nl.m * y ** (nl.m - 1) + s
        step = f / df
        y = np.maximum(y - step, 0.5 * y)
        if np.all(np.abs(step) <= tol * np.maximum(y, 1e-300)):
            break
    return np.sign(w) * y


def regularize(nl: Nonlinearity, lam: float) -> Nonlinearity:
    """Copy of ``nl`` with ``lam`` added to the linear slope (beta + lam * r)."""
    if not lam > 0:
        raise DomainError(f"regularization parameter must be > 0, got {lam}")
    return replace(nl, lambda_reg=nl.lambda_reg + lam)


def check_assumptions(
    nl: Nonlinearity,
    sample_range: tuple[float, float] = (-10.0, 10.0),
    n_samples: int = 1001,
    rtol: float = 1e-12,
) -> AssumptionReport:
    """Check growth, coercivity, monotonicity and ``r beta(r) >= j(r)`` on samples.

    ``rtol`` is a relative slack for inequalities that hold with equality.
    """
    if n_samples < 100:
        raise ConfigurationError("n_samples must be >= 100")
    a1, a2, a3, a4 = nl.alpha
    r = np.linspace(sample_range[0], sample_range[1], n_samples)
    # dense logarithmic samples near 0, where the a4 r^2 bound is tightest
    g = np.geomspace(1e-6, max(abs(sample_range[0]), abs(sample_range[1])), 200)
    r = np.union1d(r, np.concatenate([-g, g]))
    r = r[(r >= sample_range[0]) & (r <= sample_range[1])]
    b = beta_eval(nl, r)
    bp = beta_prime(nl, r)
    jr = j_eval(nl, r)
    ar = np.abs(r)

    growth_rhs = a1 * ar ** (nl.m - 1) + a2
    growth_gap = growth_rhs - np.abs(bp)
    growth_ok = growth_gap >= -rtol * np.maximum(growth_rhs, 1.0)

    coerc_rhs = a3 * ar ** (nl.m + 1) + a4 * r * r
    coerc_gap = jr - coerc_rhs
    coerc_ok = coerc_gap >= -rtol * np.maximum(coerc_rhs, 1e-300)

    monotone = bool(np.all(np.diff(b) >= 0))
    mv = r * b - jr
    mean_value = bool(np.all(mv >= -rtol * np.maximum(np.abs(r * b), 1e-300)))

    notes = []
    if not coerc_ok.all():
        bad = r[~coerc_ok]
        near_zero = np.min(np.abs(bad))
        notes.append(
            f"coercivity j(r) >= a3|r|^(m+1) + a4 r^2 fails on {bad.size} samples (closest to 0: |r| = {near_zero:.3g})"
        )
        if nl.slope == 0 and nl.m > 1 and a4 > 0 and near_zero < 1e-3:
            notes.append("pure power law without a linear term cannot satisfy the a4 r^2 bound near r = 0")
    if not growth_ok.all():
        notes.append(f"growth bound |beta'| <= a1|r|^(m-1) + a2 fails on {int((~growth_ok).sum())} samples")
    if not monotone:
        notes.append("beta is not non-decreasing on the samples")
    if not mean_value:
        notes.append("r beta(r) >= j(r) fails on the samples")

    return AssumptionReport(
        growth=bool(growth_ok.all()),
        coercivity=bool(coerc_ok.all()),
        monotone=monotone,
        mean_value=mean_value,
        worst_growth_r=float(r[np.argmin(growth_gap)]),
        worst_coercivity_r=float(r[np.argmin(coerc_gap)]),
        notes=tuple(notes),
    )
