"""Experiment runner: ``spde run <config>``, ``spde replay <manifest>``, ``spde report <run-dir>``.

A run is fully determined by one INI-style config file::

    [grid]
    n = 255
    K = 64

    [nonlinearity]
    kind = power
    m = 2

    [noise]
    mubar = 0.5
    K_noise = 32
    seed = 7

    [sim]
    T = 0.25
    dt = 1e-3

    [initial]
    kind = bump

    [ensemble]
    n_paths = 20
    parallelism = 4

    [experiment]
    kind = verify-positivity
    output = runs/positivity

The only environment override is ``SPDE_OUTPUT_DIR`` for the output
directory.  Outputs: ``manifest.json``, ``functionals.csv``, optional
``snapshots.bin`` and, for checking experiments, ``report.json``.

Exit status: 0 success, 1 a check failed or a replay diverged,
2 invalid configuration, 3 simulation error.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import math
import os
import re
import struct
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, verify
from .errors import ConfigurationError, InvalidExperimentError, SPDEError
from .geometry import Grid, SpectralBasis, build_basis
from .hminus import measure_c1
from .noise import NoiseModel, default_mu, generate_path
from .nonlinearity import Nonlinearity, power_law, power_plus_linear, regularize
from .stepper import SimConfig, Trajectory, picard_construct, simulate_ensemble

log = logging.getLogger("porous_spde.cli")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
OUTPUT_ENV = "SPDE_OUTPUT_DIR"
KINDS = ("simulate", "verify-positivity", "verify-energy", "converge-eps", "converge-lambda", "picard", "barenblatt")
CSV_NAME, SNAP_NAME, REPORT_NAME, MANIFEST_NAME = "functionals.csv", "snapshots.bin", "report.json", "manifest.json"

SNAP_MAGIC = b"SPDESNAP"
SNAP_VERSION = 1
# magic, version, dim, n, dt, record_every
SNAP_HEADER = struct.Struct("<8sIIIdI")


class _KeyError(ConfigurationError):
    """Validation failure tied to one key; the parser adds the line number."""

    def __init__(self, key: str, msg: str):
        super().__init__(msg)
        self.key = key


def _need(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise _KeyError(key, f"{key}: {msg}")


# ---------------------------------------------------------------- config sections


@dataclass(frozen=True)
class GridSection:
    n: int = 255
    dim: int = 1
    K: int = 64

    def validate(self):
        _need(self.n >= 8 and ((self.n + 1) & self.n) == 0, "n", f"must be 2^j - 1 >= 8, got {self.n}")
        _need(self.dim in (1, 2), "dim", f"must be 1 or 2, got {self.dim}")
        _need(1 <= self.K <= self.n, "K", f"must be in [1, n], got {self.K}")


@dataclass(frozen=True)
class NonlinearitySection:
    kind: str = "power"
    m: float = 2.0
    a: float = 0.0
    lambda_reg: float = 0.0

    def validate(self):
        _need(self.kind in ("power", "power_linear"), "kind", f"must be 'power' or 'power_linear', got {self.kind!r}")
        _need(self.m >= 1, "m", f"must be >= 1, got {self.m}")
        _need(self.a >= 0, "a", f"must be >= 0, got {self.a}")
        _need(self.lambda_reg >= 0, "lambda_reg", f"must be >= 0, got {self.lambda_reg}")


@dataclass(frozen=True)
class NoiseSection:
    mubar: float = 0.0
    s: float | None = None
    K_noise: int = 32
    seed: int = 0

    def validate(self):
        _need(self.mubar >= 0, "mubar", f"must be >= 0, got {self.mubar}")
        _need(self.K_noise >= 1, "K_noise", f"must be >= 1, got {self.K_noise}")
        _need(self.s is None or self.s > 0, "s", f"must be > 0, got {self.s}")
        _need(self.seed >= 0, "seed", f"must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class SimSection:
    T: float | None = None
    dt: float = 1e-3
    epsilon: float | None = None
    scheme: str = "semi-implicit-yosida"
    record_every: int = 0
    p: float = 4.0

    def validate(self):
        _need(self.dt > 0, "dt", f"must be > 0, got {self.dt}")
        _need(self.T is None or self.T >= self.dt, "T", f"must be >= dt, got {self.T}")
        _need(self.epsilon is None or self.epsilon > 0, "epsilon", f"must be > 0, got {self.epsilon}")
        _need(self.scheme in ("semi-implicit-yosida", "mild-exponential"), "scheme", f"unknown scheme {self.scheme!r}")
        _need(self.record_every >= 0, "record_every", f"must be >= 0, got {self.record_every}")
        _need(self.p >= 1, "p", f"must be >= 1, got {self.p}")


@dataclass(frozen=True)
class InitialSection:
    """``bump``: amplitude * max(0, 1 - (r/width)^2)^2 around ``center``;
    ``sine``: amplitude * e_mode; ``constant``; ``zero``.  Barenblatt
    experiments ignore this section when m > 1."""

    kind: str = "bump"
    amplitude: float = 1.0
    center: float = 0.5
    width: float = 0.25
    mode: int = 1

    def validate(self):
        _need(self.kind in ("bump", "sine", "constant", "zero"), "kind", f"unknown initial datum {self.kind!r}")
        _need(self.width > 0, "width", f"must be > 0, got {self.width}")
        _need(self.mode >= 1, "mode", f"must be >= 1, got {self.mode}")


@dataclass(frozen=True)
class EnsembleSection:
    n_paths: int = 1
    parallelism: int = 1

    def validate(self):
        _need(self.n_paths >= 1, "n_paths", f"must be >= 1, got {self.n_paths}")
        _need(self.parallelism >= 1, "parallelism", f"must be >= 1, got {self.parallelism}")


@dataclass(frozen=True)
class ExperimentSection:
    kind: str = "simulate"
    output: str = "spde-run"
    epsilons: tuple[float, ...] = ()
    expected_order: tuple[float, ...] = ()
    lambdas: tuple[float, ...] = ()
    slope_range: tuple[float, ...] = (1.5, 2.5)
    n_outer: int = 5
    t0: float = 0.01
    t1: float = 0.02
    barenblatt_C: float = 0.15
    rtol: float | None = None

    def validate(self):
        _need(self.kind in KINDS, "kind", f"must be one of {', '.join(KINDS)}; got {self.kind!r}")
        _need(bool(self.output), "output", "must not be empty")
        if self.kind == "converge-eps":
            _need(len(self.epsilons) >= 3, "epsilons", "need at least 3 values")
            _need(all(e > 0 for e in self.epsilons), "epsilons", "must be > 0")
            _need(all(a > b for a, b in zip(self.epsilons, self.epsilons[1:])), "epsilons", "must be strictly decreasing")
            _need(len(self.expected_order) in (0, 2), "expected_order", "give two numbers: low, high")
        if self.kind == "converge-lambda":
            _need(len(self.lambdas) >= 2, "lambdas", "need at least 2 values")
            _need(all(x > 0 for x in self.lambdas), "lambdas", "must be > 0")
            _need(all(a > b for a, b in zip(self.lambdas, self.lambdas[1:])), "lambdas", "must be strictly decreasing")
            _need(len(self.slope_range) == 2, "slope_range", "give two numbers: low, high")
        if self.kind == "picard":
            _need(self.n_outer >= 3, "n_outer", f"must be >= 3, got {self.n_outer}")
        if self.kind == "barenblatt":
            _need(0 < self.t0 < self.t1, "t1", f"need 0 < t0 < t1, got t0={self.t0}, t1={self.t1}")
            _need(self.barenblatt_C > 0, "barenblatt_C", "must be > 0")
        _need(self.rtol is None or self.rtol > 0, "rtol", "must be > 0")


SECTIONS: dict[str, type] = {
    "grid": GridSection,
    "nonlinearity": NonlinearitySection,
    "noise": NoiseSection,
    "sim": SimSection,
    "initial": InitialSection,
    "ensemble": EnsembleSection,
    "experiment": ExperimentSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    sim: SimSection = field(default_factory=SimSection)
    initial: InitialSection = field(default_factory=InitialSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def validate(self) -> None:
        for name in SECTIONS:
            try:
                getattr(self, name).validate()
            except _KeyError as err:
                err.section = name
                raise
        kind = self.experiment.kind
        if kind == "barenblatt":
            _need_section(self.noise.mubar == 0, "noise", "mubar", "barenblatt experiments are deterministic (mubar = 0)")
            _need_section(self.grid.dim == 1, "grid", "dim", "barenblatt experiments are 1-D")
            T = self.barenblatt_horizon()
            if self.sim.T is not None:
                _need_section(abs(self.sim.T - T) <= 1e-12 * T, "sim", "T",
                              f"must equal t1 - t0 = {T!r} for barenblatt (or be omitted)")
        else:
            _need_section(self.sim.T is not None, "sim", "T", "is required")
        T = self.horizon()
        n = round(T / self.sim.dt)
        _need_section(abs(n * self.sim.dt - T) <= 1e-9 * T, "sim", "T", f"T = {T} is not a multiple of dt = {self.sim.dt}")
        _need_section(self.noise.K_noise <= self.grid.K, "noise", "K_noise", "must not exceed grid K")
        if kind == "verify-positivity":
            _need_section(self.initial.kind != "sine" or self.initial.mode == 1, "initial", "kind",
                          "positivity needs nonnegative initial data")
            _need_section(self.initial.amplitude >= 0, "initial", "amplitude", "positivity needs amplitude >= 0")

    def barenblatt_horizon(self) -> float:
        T = self.experiment.t1 - self.experiment.t0
        # snap to the step grid so that t1 - t0 = 0.001 is not lost to round-off
        n = round(T / self.sim.dt)
        return n * self.sim.dt if n >= 1 and abs(n * self.sim.dt - T) <= 1e-9 * T else T

    def horizon(self) -> float:
        if self.experiment.kind == "barenblatt":
            return self.barenblatt_horizon()
        return float(self.sim.T)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        sections = {}
        for name, klass in SECTIONS.items():
            raw = dict(data.get(name, {}))
            kwargs = {}
            for f in dataclasses.fields(klass):
                if f.name in raw:
                    v = raw.pop(f.name)
                    kwargs[f.name] = tuple(v) if isinstance(v, list) else v
            if raw:
                raise ConfigurationError(f"[{name}] unknown keys: {', '.join(sorted(raw))}")
            sections[name] = klass(**kwargs)
        cfg = cls(**sections)
        cfg.validate()
        return cfg

    def to_ini(self) -> str:
        lines = []
        for name, section in self.to_dict().items():
            lines.append(f"[{name}]")
            for key, value in section.items():
                if value is None:
                    continue
                if isinstance(value, (list, tuple)):
                    value = ", ".join(repr(float(v)) for v in value)
                elif isinstance(value, float):
                    value = repr(value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def _need_section(cond, section, key, msg):
    if not cond:
        err = _KeyError(key, f"{key}: {msg}")
        err.section = section
        raise err


# ---------------------------------------------------------------- parsing

_KEY_RE = re.compile(r"^\s*([^=:\s][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_index(text: str) -> dict[tuple[str | None, str | None], int]:
    """Line numbers of section headers ``(section, None)`` and keys ``(section, key)``."""
    where: dict[tuple[str | None, str | None], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith(("#", ";")):
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), lineno)
    return where


def _convert(raw: str, ftype: Any, key: str):
    raw = raw.strip()
    text = str(ftype)
    try:
        if "tuple" in text:
            return tuple(float(v) for v in raw.replace(",", " ").split()) if raw else ()
        if raw.lower() in ("none", "") and "None" in text:
            return None
        if text.startswith("int") or ftype is int:
            return int(raw)
        if "float" in text:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        return raw
    except ValueError:
        raise _KeyError(key, f"{key}: cannot parse {raw!r} as {text}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate; every error message names ``source:line``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as err:
        raise ConfigurationError(f"{source}:{err.lineno}: expected a [section] header") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as err:
        raise ConfigurationError(f"{source}:{err.lineno}: {err.message.splitlines()[0]}") from None
    except configparser.ParsingError as err:
        lineno = err.errors[0][0] if err.errors else 0
        raise ConfigurationError(f"{source}:{lineno}: malformed line") from None
    where = _line_index(text)

    def fail(section, key, msg):
        line = where.get((section, key)) or where.get((section, None)) or 0
        raise ConfigurationError(f"{source}:{line}: [{section}] {msg}")

    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            fail(name, None, f"unknown section (expected one of {', '.join(SECTIONS)})")
    for name, klass in SECTIONS.items():
        types = {f.name: f.type for f in dataclasses.fields(klass)}
        kwargs = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in types:
                    fail(name, key, f"unknown key {key!r}")
                try:
                    kwargs[key] = _convert(raw, types[key], key)
                except _KeyError as err:
                    fail(name, key, str(err))
        sections[name] = klass(**kwargs)
    cfg = ExperimentConfig(**sections)
    try:
        cfg.validate()
    except _KeyError as err:
        fail(getattr(err, "section", "?"), err.key, str(err))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigurationError(f"{path}: cannot read config ({err.strerror})") from None
    return parse_config(text, source=str(path))


# ---------------------------------------------------------------- building blocks


@dataclass
class Setup:
    cfg: ExperimentConfig
    basis: SpectralBasis
    nl: Nonlinearity
    nm: NoiseModel
    sim: SimConfig
    x0: np.ndarray
    c1: float


def initial_datum(sec: InitialSection, basis: SpectralBasis) -> np.ndarray:
    grid = basis.grid
    if sec.kind == "zero":
        return grid.zeros()
    if sec.kind == "constant":
        return np.full(grid.shape, sec.amplitude)
    if sec.kind == "sine":
        if sec.mode > basis.n_modes:
            raise ConfigurationError(f"[initial] mode {sec.mode} exceeds the {basis.n_modes} retained modes")
        return sec.amplitude * basis.mode(sec.mode)
    r2 = sum((pt - sec.center) ** 2 for pt in grid.points)
    return sec.amplitude * np.maximum(0.0, 1.0 - r2 / sec.width**2) ** 2


def build_setup(cfg: ExperimentConfig) -> Setup:
    basis = build_basis(Grid(cfg.grid.n, cfg.grid.dim), cfg.grid.K)
    nls = cfg.nonlinearity
    if nls.kind == "power":
        nl = power_law(nls.m, lambda_reg=nls.lambda_reg)
    else:
        nl = power_plus_linear(nls.m, nls.a, lambda_reg=nls.lambda_reg)
    nz = cfg.noise
    nm = default_mu(basis, mubar=nz.mubar, s=nz.s, K_noise=nz.K_noise, seed=nz.seed)
    sm = cfg.sim
    sim = SimConfig(T=cfg.horizon(), dt=sm.dt, epsilon=sm.epsilon, scheme=sm.scheme,
                    record_every=sm.record_every, p=sm.p)
    if cfg.experiment.kind == "barenblatt" and nls.m > 1:
        e = cfg.experiment
        x0 = verify.barenblatt_profile(e.t0, basis.grid.xi, nls.m, e.barenblatt_C)
        r = verify.barenblatt_support_radius(e.t1, nls.m, e.barenblatt_C)
        if r >= 0.5:
            raise InvalidExperimentError(f"Barenblatt support reaches the boundary before t1 (radius {r:.4g})")
    else:
        x0 = initial_datum(cfg.initial, basis)
    c1, _ = measure_c1(basis, nz.K_noise)
    return Setup(cfg=cfg, basis=basis, nl=nl, nm=nm, sim=sim, x0=x0, c1=c1)


def _ensemble(setup: Setup, sim: SimConfig | None = None, nl: Nonlinearity | None = None) -> list[Trajectory]:
    cfg = setup.cfg
    return simulate_ensemble(setup.x0, sim or setup.sim, nl or setup.nl, setup.nm, setup.basis,
                             range(cfg.ensemble.n_paths), workers=cfg.ensemble.parallelism)


def _with_snapshots(sim: SimConfig) -> SimConfig:
    return sim if sim.record_every else dataclasses.replace(sim, record_every=1)


def run_experiment(setup: Setup) -> tuple[list[Trajectory], verify.Report | None]:
    """Simulate and check; returns the trajectories written to ``functionals.csv`` and the report."""
    cfg, basis = setup.cfg, setup.basis
    kind = cfg.experiment.kind
    e = cfg.experiment
    if kind == "simulate":
        return _ensemble(setup), None
    if kind == "verify-positivity":
        trajs = _ensemble(setup)
        return trajs, verify.positivity_report(trajs, setup.x0, basis)
    if kind == "verify-energy":
        trajs = _ensemble(setup)
        return trajs, verify.energy_report(trajs, setup.x0, basis, setup.sim.dt, setup.nm.C, setup.c1)
    if kind == "converge-eps":
        runs = {}
        for eps in e.epsilons:
            sim = dataclasses.replace(_with_snapshots(setup.sim), epsilon=eps)
            runs[eps] = _ensemble(setup, sim)
        order = tuple(e.expected_order) if e.expected_order else None
        report = verify.epsilon_convergence(runs, basis, expected_order=order)
        return _strip(runs[e.epsilons[-1]], setup.sim), report
    if kind == "converge-lambda":
        base = _ensemble(setup)
        reg = {lam: _ensemble(setup, nl=regularize(setup.nl, lam)) for lam in e.lambdas}
        return base, verify.lambda_convergence(base, reg, basis, slope_range=tuple(e.slope_range))
    if kind == "picard":
        paths = [generate_path(setup.nm.seed, k, setup.sim.dt, setup.sim.n_steps, setup.nm.K_noise)
                 for k in range(cfg.ensemble.n_paths)]
        pr = picard_construct(setup.x0, paths, e.n_outer, setup.sim, setup.nl, setup.nm, basis)
        report = verify.picard_report(pr.gaps, first=1, last=min(4, pr.gaps.size - 1))
        return _ensemble(setup), report
    if kind == "barenblatt":
        trajs = _ensemble(setup)
        final = trajs[0].final
        if cfg.nonlinearity.m > 1:
            report = verify.barenblatt_compare(final, e.t0, e.t1, cfg.nonlinearity.m, e.barenblatt_C, basis,
                                               rtol=e.rtol or 0.02)
        else:
            report = verify.heat_compare(final, setup.x0, setup.sim.T, setup.sim.epsilon, basis, rtol=e.rtol or 1e-3)
        return trajs, report
    raise ConfigurationError(f"unknown experiment kind {kind!r}")


def _strip(trajs: list[Trajectory], sim: SimConfig) -> list[Trajectory]:
    """Drop snapshots that were recorded only for in-memory distance checks."""
    if sim.record_every:
        return trajs
    return [dataclasses.replace(t, snapshots=None, snapshot_steps=np.zeros(0, dtype=int)) for t in trajs]


# ---------------------------------------------------------------- output files


def write_functionals(trajs: list[Trajectory], target: Path) -> None:
    with open(target, "w", newline="\n") as fh:
        fh.write("time,path_index,hminus_sq,lp_p,phi_p,j_integral\n")
        for t in trajs:
            for i in range(t.times.shape[0]):
                fh.write(f"{float(t.times[i])!r},{t.path_index},{float(t.hminus_sq[i])!r},"
                         f"{float(t.lp_p[i])!r},{float(t.phi_p[i])!r},{float(t.j_integral[i])!r}\n")


def write_snapshots(trajs: list[Trajectory], grid: Grid, sim: SimConfig, target: Path) -> None:
    """Header then frames (path-major, then recorded step) of float64 interior values, row-major."""
    with open(target, "wb") as fh:
        fh.write(SNAP_HEADER.pack(SNAP_MAGIC, SNAP_VERSION, grid.dim, grid.n, sim.dt, sim.record_every))
        for t in trajs:
            if t.snapshots is not None:
                fh.write(np.ascontiguousarray(t.snapshots, dtype="<f8").tobytes())


def read_snapshots(source: str | Path) -> tuple[dict, np.ndarray]:
    """Returns ``(header, frames)`` with frames of shape ``(n_frames, *grid)``."""
    data = Path(source).read_bytes()
    if len(data) < SNAP_HEADER.size:
        raise ConfigurationError(f"{source}: truncated snapshot header")
    magic, version, dim, n, dt, every = SNAP_HEADER.unpack_from(data)
    if magic != SNAP_MAGIC or version != SNAP_VERSION:
        raise ConfigurationError(f"{source}: not a version-{SNAP_VERSION} snapshot file")
    frame = n**dim
    payload = np.frombuffer(data, dtype="<f8", offset=SNAP_HEADER.size)
    if payload.size % frame:
        raise ConfigurationError(f"{source}: payload is not a whole number of frames")
    header = {"dim": dim, "n": n, "dt": dt, "record_every": every}
    return header, payload.reshape((-1,) + (n,) * dim).astype(float)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve_output(cfg: ExperimentConfig, override: str | Path | None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ENV) or cfg.experiment.output)


def execute(cfg: ExperimentConfig, out: Path) -> tuple[int, dict]:
    """Run ``cfg`` writing into ``out``; returns the exit status and the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {
        "format": 1,
        "version": __version__,
        "config": cfg.to_dict(),
        "constants": {},
        "files": {},
        "status": "running",
        "error": None,
        "checks_passed": None,
    }
    files = {}
    status = EXIT_OK
    try:
        setup = build_setup(cfg)
        manifest["constants"] = {
            "c1": setup.c1,
            "C": setup.nm.C,
            "c1_C": setup.c1 * setup.nm.C,
            "noise_tail": setup.nm.tail,
            "noise_tail_fraction": setup.nm.tail_fraction,
            "epsilon": setup.sim.epsilon,
            "n_steps": setup.sim.n_steps,
        }
        trajs, report = run_experiment(setup)
        write_functionals(trajs, out / CSV_NAME)
        files[CSV_NAME] = out / CSV_NAME
        if setup.sim.record_every:
            write_snapshots(trajs, setup.basis.grid, setup.sim, out / SNAP_NAME)
            files[SNAP_NAME] = out / SNAP_NAME
        if report is not None:
            (out / REPORT_NAME).write_text(report.to_json(indent=2) + "\n")
            files[REPORT_NAME] = out / REPORT_NAME
            manifest["checks_passed"] = bool(report.passed)
            log.info(report.summary())
            if not report.passed:
                status = EXIT_CHECK_FAILED
        manifest["status"] = "ok"
    except (ConfigurationError, InvalidExperimentError) as err:
        manifest["status"] = "error"
        manifest["error"] = f"{type(err).__name__}: {err}"
        status = EXIT_CONFIG
    except (SPDEError, ArithmeticError, RuntimeError) as err:
        manifest["status"] = "error"
        manifest["error"] = f"{type(err).__name__}: {err}"
        status = EXIT_RUNTIME
    manifest["files"] = {name: _sha256(p) for name, p in sorted(files.items()) if p.exists()}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status, manifest


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.parallelism is not None:
            cfg = dataclasses.replace(cfg, ensemble=dataclasses.replace(cfg.ensemble, parallelism=args.parallelism))
            cfg.validate()
    except ConfigurationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = _resolve_output(cfg, args.output)
    status, manifest = execute(cfg, out)
    if manifest["error"]:
        print(f"error: {manifest['error']}", file=sys.stderr)
    print(f"{cfg.experiment.kind}: status={manifest['status']} checks_passed={manifest['checks_passed']} -> {out}")
    return status


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        stored = json.loads(path.read_text())
        cfg = ExperimentConfig.from_dict(stored["config"])
    except (OSError, ValueError, KeyError) as err:
        print(f"error: cannot load manifest {path}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as err:
        print(f"error: {path}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.parallelism is not None:
        cfg = dataclasses.replace(cfg, ensemble=dataclasses.replace(cfg.ensemble, parallelism=args.parallelism))
    with tempfile.TemporaryDirectory(prefix="spde-replay-") as tmp:
        out = Path(args.output) if args.output else Path(tmp)
        status, manifest = execute(cfg, out)
        if manifest["error"]:
            print(f"error: replay failed: {manifest['error']}", file=sys.stderr)
            return status
        expected, got = stored.get("files", {}), manifest["files"]
        order = [CSV_NAME, SNAP_NAME, REPORT_NAME]
        names = sorted(set(expected) | set(got), key=lambda n: (order.index(n) if n in order else len(order), n))
        for name in names:
            if expected.get(name) != got.get(name):
                print(f"mismatch: {name} (stored {expected.get(name)}, replayed {got.get(name)})")
                return EXIT_CHECK_FAILED
    print(f"replay OK: {len(names)} file(s) match")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    path = run_dir / REPORT_NAME
    try:
        report = json.loads(path.read_text())
    except OSError:
        print(f"error: no {REPORT_NAME} in {run_dir}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        print(f"error: {path}: invalid JSON ({err})", file=sys.stderr)
        return EXIT_CONFIG
    flag = "PASS" if report.get("passed") else "FAIL"
    print(f"{report.get('name')}: {flag}  margin={report.get('margin')}")
    print(f"  reference: {report.get('reference')}")
    if report.get("external"):
        print("  (external oracle)")
    for key, value in sorted(report.get("constants", {}).items()):
        print(f"  {key} = {value}")
    if args.full:
        print(json.dumps(report.get("details", {}), indent=2, sort_keys=True))
    return EXIT_OK if report.get("passed") else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spde", description="Stochastic porous media experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("config")
    p.add_argument("-o", "--output", help=f"output directory (overrides config and ${OUTPUT_ENV})")
    p.add_argument("--parallelism", type=int, help="override ensemble parallelism (does not change outputs)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="re-run from a manifest and compare output digests")
    p.add_argument("manifest", help="manifest.json or the run directory containing it")
    p.add_argument("-o", "--output", help="keep replayed outputs here instead of a temporary directory")
    p.add_argument("--parallelism", type=int, help="override ensemble parallelism")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="pretty-print report.json of a run directory")
    p.add_argument("run_dir")
    p.add_argument("--full", action="store_true", help="also print the per-time details")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
