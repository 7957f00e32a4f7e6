"""Multiplicative spectral noise ``sigma(X) dW = sum_k mu_k X e_k dB_k``.

Brownian increments come from counter-based Philox streams keyed by
``(seed, path_index, mode)``; the step index is the position in the stream.
A path is therefore reproducible on its own, independent of which other
paths are generated, in which order, or how many modes are retained.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .geometry import SpectralBasis
from .hminus import hminus_norm_sq

__all__ = [
    "NoiseModel",
    "NoisePath",
    "default_mu",
    "make_noise_model",
    "generate_path",
    "apply_sigma",
    "hs_norm_sq",
    "write_noise_path",
    "read_noise_path",
    "summability_threshold",
]

NOISE_MAGIC = b"SPDENOIS"
NOISE_VERSION = 1
_HEADER = struct.Struct("<8sIQqdqq")  # magic, version, seed, path_index, dt, n_steps, K_noise


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Mode amplitudes ``mu_k`` and the modes they multiply.

    ``C`` is the retained sum ``sum_k mu_k^2 lambda_k^2``; ``tail`` is the same
    sum over the grid modes that were *not* retained (same decay law).
    """

    mu: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    seed: int = 0
    mubar: float = 0.0
    s: float = 1.5
    C: float = 0.0
    tail: float = 0.0
    summable: bool = True

    @property
    def K_noise(self) -> int:
        return int(self.mu.shape[0])

    @property
    def tail_fraction(self) -> float:
        total = self.C + self.tail
        return self.tail / total if total > 0 else 0.0

    @property
    def is_zero(self) -> bool:
        return not np.any(self.mu)

    @property
    def weighted_modes(self) -> np.ndarray:
        return self.mu.reshape((-1,) + (1,) * (self.modes.ndim - 1)) * self.modes


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian increments ``dB[step, mode]`` ~ N(0, dt) for one ensemble member."""

    seed: int
    path_index: int
    dt: float
    increments: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return int(self.increments.shape[0])

    @property
    def K_noise(self) -> int:
        return int(self.increments.shape[1])

    @property
    def key(self) -> tuple:
        return (self.seed, self.path_index, self.dt, self.n_steps, self.K_noise)

    def negated(self) -> "NoisePath":
        return NoisePath(self.seed, self.path_index, self.dt, -self.increments)


def summability_threshold(dim: int) -> float:
    """Decay exponent above which ``sum mu_k^2 lambda_k^2`` converges in the continuum limit.

    lambda_k grows like k^(2/dim), so the terms ``lambda_k^(2-2s)`` are summable
    iff ``(2/dim)(2s - 2) > 1``.
    """
    return 1.0 + dim / 4.0


def make_noise_model(mu, basis: SpectralBasis, seed: int = 0, *, mubar: float = float("nan"),
                     s: float = float("nan"), tail: float = 0.0, summable: bool = True) -> NoiseModel:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise ConfigurationError("mu must be one-dimensional")
    if np.any(mu < 0):
        raise ConfigurationError("mu_k must be non-negative")
    if mu.shape[0] > basis.n_modes:
        raise ConfigurationError(f"K_noise = {mu.shape[0]} exceeds the {basis.n_modes} retained basis modes")
    K = mu.shape[0]
    lam = np.array(basis.lam[:K])
    modes = np.array(basis.modes[:K])
    C = float(np.sum(mu**2 * lam**2))
    return NoiseModel(mu=mu, modes=modes, lam=lam, seed=int(seed), mubar=mubar, s=s, C=C,
                      tail=tail, summable=summable)


def default_mu(basis: SpectralBasis, mubar: float = 1.0, s: float | None = None, K_noise: int = 32,
               seed: int = 0) -> NoiseModel:
    """Noise with ``mu_k = mubar * lambda_k^(-s)`` on the first ``K_noise`` modes.

    ``s`` defaults to 3/2 in 1-D and 2 in 2-D.  A warning is issued when ``s``
    is at or below the summability threshold (5/4 in 1-D, 3/2 in 2-D); the
    model remains usable.
    """
    dim = basis.grid.dim
    if s is None:
        s = 1.5 if dim == 1 else 2.0
    if mubar < 0:
        raise ConfigurationError("mubar must be >= 0")
    if K_noise < 1:
        raise ConfigurationError("K_noise must be >= 1")
    summable = s > summability_threshold(dim)
    if not summable:
        warnings.warn(
            f"s = {s} <= {summability_threshold(dim)}: sum mu_k^2 lambda_k^2 diverges as the grid is refined",
            stacklevel=2,
        )
    lam = np.asarray(basis.lam[:K_noise], dtype=float)
    mu = mubar * lam ** (-s)
    # neglected tail over every remaining grid mode
    all_eig = np.sort(basis.eigenvalues.ravel())
    rest = all_eig[K_noise:]
    tail = float(np.sum(mubar**2 * rest ** (2 - 2 * s)))
    return make_noise_model(mu, basis, seed, mubar=mubar, s=s, tail=tail, summable=summable)


def _mode_stream(seed: int, path_index: int, mode: int) -> np.random.Generator:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, path_index, mode])
    return np.random.Generator(np.random.Philox(ss))


def generate_path(seed: int, path_index: int, dt: float, n_steps: int, K_noise: int) -> NoisePath:
    """Increments for one path; bit-identical for identical arguments."""
    if dt <= 0 or n_steps < 0 or K_noise < 0:
        raise ConfigurationError("need dt > 0, n_steps >= 0, K_noise >= 0")
    sd = np.sqrt(dt)
    inc = np.empty((n_steps, K_noise))
    for k in range(K_noise):
        inc[:, k] = sd * _mode_stream(seed, path_index, k).standard_normal(n_steps)
    inc.setflags(write=False)
    return NoisePath(seed=seed, path_index=path_index, dt=dt, increments=inc)


def noise_field(dW: np.ndarray, nm: NoiseModel) -> np.ndarray:
    """``sum_k mu_k dW_k e_k`` on the grid."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (nm.K_noise,):
        raise ConfigurationError(f"expected {nm.K_noise} increments, got shape {dW.shape}")
    return np.tensordot(nm.mu * dW, nm.modes, axes=1)


def apply_sigma(X: np.ndarray, dW: np.ndarray, nm: NoiseModel) -> np.ndarray:
    """``sigma(X) dW = sum_k mu_k dW_k X e_k`` evaluated pointwise."""
    return X * noise_field(dW, nm)


def hs_norm_sq(X: np.ndarray, nm: NoiseModel, basis: SpectralBasis) -> float:
    """Squared Hilbert-Schmidt norm ``sum_k mu_k^2 |X e_k|_{-1}^2`` of sigma(X) into H^{-1}."""
    return float(sum(mu * mu * hminus_norm_sq(X * e, basis) for mu, e in zip(nm.mu, nm.modes) if mu))


def write_noise_path(path: NoisePath, target: str | Path) -> None:
    """Binary export: fixed little-endian header then increments as float64, row-major (step, mode)."""
    with open(target, "wb") as fh:
        fh.write(_HEADER.pack(NOISE_MAGIC, NOISE_VERSION, path.seed, path.path_index, path.dt,
                              path.n_steps, path.K_noise))
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def read_noise_path(source: str | Path) -> NoisePath:
    data = Path(source).read_bytes()
    if len(data) < _HEADER.size:
        raise ConfigurationError(f"{source}: truncated noise header")
    magic, version, seed, path_index, dt, n_steps, K = _HEADER.unpack_from(data)
    if magic != NOISE_MAGIC or version != NOISE_VERSION:
        raise ConfigurationError(f"{source}: not a version-{NOISE_VERSION} noise file")
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if payload.size != n_steps * K:
        raise ConfigurationError(f"{source}: expected {n_steps * K} increments, found {payload.size}")
    inc = payload.reshape(n_steps, K).astype(float)
    inc.setflags(write=False)
    return NoisePath(seed=seed, path_index=path_index, dt=dt, increments=inc)
