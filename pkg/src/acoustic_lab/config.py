"""Run configuration: line-oriented ``section.key = value`` files.

Every key has a typed default; unknown keys are errors.  ``serialize``
writes every key, so parse(serialize(cfg)) == cfg exactly (floats are
written with repr).
"""
from __future__ import annotations

import hashlib
import os
import typing
from dataclasses import dataclass, field, fields, replace

from .collision_ops import KernelSpec
from .errors import ConfigError
from .kinetic_solver import EPS_MAX, SolverConfig
from .torus import Torus
from .velocity_space import VelocityGrid, build_grid

CACHE_ENV = "ACOUSTIC_LAB_CACHE"


@dataclass(frozen=True)
class KernelBlock:
    family: str = "boltzmann"
    gamma: float = 1.0
    angular_kernel: str = "abs_cos"
    angular_nodes: int = 8
    impact_nodes: int = 8
    C_B: float = 1.0


@dataclass(frozen=True)
class GridBlock:
    V_max: float = 6.0
    counts: tuple[int, ...] = (16, 16, 16)
    rule: str = "uniform-midpoint"
    tol_moment: float = 1e-5
    d: int = 1
    N_x: int = 64


@dataclass(frozen=True)
class SolverBlock:
    epsilon: float = 0.1
    epsilons: tuple[float, ...] = (0.02, 0.01, 0.005, 0.0025)
    dt: float = 0.01
    t_end: float = 1.0
    mode: str = "linearized"
    scheme: str = "lie"
    initial: str = "sound"
    amplitude: float = 1e-3
    wave: int = 1
    max_entries: int = 0


@dataclass(frozen=True)
class DiagnosticsBlock:
    N: int = 2
    l: float = 1.0
    t_probe: tuple[float, ...] = (0.5, 1.0)
    tol_sym: float = 1e-10
    tol_null: float = 1e-6
    tol_psd: float = 1e-8
    tol_conserve: float = 1e-8
    tol_step: float = 1e-10
    tol_energy_bound: float = 0.05
    tol_acoustic: float = 1e-10
    min_order: float = 0.8
    tol_pos: float = 0.0


@dataclass(frozen=True)
class IOBlock:
    out: str = "out"
    cadence: int = 10
    cache: str = ".acoustic-lab-cache"
    dump: bool = False
    jobs: int = 1


SECTIONS = {
    "kernel": KernelBlock,
    "grid": GridBlock,
    "solver": SolverBlock,
    "diagnostics": DiagnosticsBlock,
    "io": IOBlock,
}


@dataclass(frozen=True)
class RunConfig:
    kernel: KernelBlock = field(default_factory=KernelBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    diagnostics: DiagnosticsBlock = field(default_factory=DiagnosticsBlock)
    io: IOBlock = field(default_factory=IOBlock)

    def __post_init__(self):
        tolerances = {k: v for k, v in vars(self.diagnostics).items() if k.startswith("tol_") and k != "tol_pos"}
        for k, v in tolerances.items():
            if not v > 0:
                raise ConfigError(f"diagnostics.{k} must be positive")
        if self.diagnostics.tol_pos < 0:
            raise ConfigError("diagnostics.tol_pos must be nonnegative")
        eps = self.solver.epsilons
        if not eps or any(not 0 < e <= EPS_MAX for e in eps) or not 0 < self.solver.epsilon <= EPS_MAX:
            raise ConfigError(f"epsilon values must lie in (0, {EPS_MAX}]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("solver.epsilons must be strictly decreasing")
        if self.io.jobs < 1 or self.io.cadence < 1:
            raise ConfigError("io.jobs and io.cadence must be >= 1")

    # -- construction of domain objects

    def kernel_spec(self) -> KernelSpec:
        k = self.kernel
        return KernelSpec(k.family, k.gamma, k.angular_kernel, k.angular_nodes, k.impact_nodes, k.C_B)

    def velocity_grid(self) -> VelocityGrid:
        g = self.grid
        return build_grid(g.V_max, tuple(g.counts), g.rule, tol_moment=g.tol_moment)

    def torus(self) -> Torus:
        return Torus(self.grid.d, self.grid.N_x)

    def solver_config(self, grid: VelocityGrid | None = None, epsilon: float | None = None) -> SolverConfig:
        s, d = self.solver, self.diagnostics
        return SolverConfig(
            epsilon=self.solver.epsilon if epsilon is None else epsilon,
            dt=s.dt, t_end=s.t_end, grid=grid or self.velocity_grid(), torus=self.torus(),
            kernel=self.kernel_spec(), mode=s.mode, scheme=s.scheme, output_every=self.io.cadence,
            tol_conserve=d.tol_conserve, tol_pos=d.tol_pos, energy_N=d.N, energy_l=d.l,
        )

    def cache_dir(self) -> str:
        return os.environ.get(CACHE_ENV) or self.io.cache

    def digest(self) -> str:
        """Hash of everything that can change results; output location and job count excluded."""
        text = serialize(replace(self, io=replace(self.io, out="", cache="", jobs=1)))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def updated(self, **dotted) -> "RunConfig":
        """Copy with ``section__key=value`` overrides, e.g. updated(io__out="x")."""
        blocks = {}
        for key, value in dotted.items():
            sec, name = key.split("__", 1)
            blocks.setdefault(sec, {})[name] = value
        return replace(self, **{sec: replace(getattr(self, sec), **kw) for sec, kw in blocks.items()})


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(text: str, typ, key: str):
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typing.get_origin(typ) is tuple:
            inner = typing.get_args(typ)[0]
            return tuple(inner(p) for p in text.replace(",", " ").split())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r}") from None


def serialize(cfg: RunConfig) -> str:
    lines = []
    for sec in SECTIONS:
        block = getattr(cfg, sec)
        for f in fields(block):
            lines.append(f"{sec}.{f.name} = {_format(getattr(block, f.name))}")
    return "\n".join(lines) + "\n"


def parse(text: str) -> RunConfig:
    values = {sec: {} for sec in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        sec, _, name = key.partition(".")
        if sec not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {sec!r}")
        hints = typing.get_type_hints(SECTIONS[sec])
        if name not in hints:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[sec][name] = _convert(value, hints[name], key)
    return RunConfig(**{sec: SECTIONS[sec](**kw) for sec, kw in values.items()})


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
