"""Time integration of d_t f + v.grad f + (1/eps) L f = Gamma(f, f) on T^d.

One Lie step is exact transport in Fourier space, then an implicit
collision solve (I + dt/eps L)^-1 applied to f + dt Gamma(f, f).  The
resolvent is built once per (dt, eps, operator) from the eigenpairs of L
in symmetric coordinates, so it is an exact contraction in the discrete
L^2 norm whenever L is positive semidefinite.
"""
from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .collision_ops import AssembledL, GammaOperator, KernelSpec
from .errors import GridMismatch, InadmissibleInitialData, PositivityWarning, SolveFailure
from .hydrodynamics import HydroState, MomentBasis, global_conservation_residual, reconstruct
from .io_formats import write_field_dump
from .torus import Torus
from .velocity_space import VelocityGrid

MODES = ("linearized", "nonlinear")
SCHEMES = ("lie", "strang")
EPS_MAX = 0.25


@dataclass
class PerturbationField:
    """f[x..., v] on a torus times a velocity grid."""

    values: np.ndarray
    torus: Torus
    grid: VelocityGrid
    epsilon: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.torus.shape + (self.grid.size,):
            raise GridMismatch(
                f"field shape {self.values.shape} != {self.torus.shape + (self.grid.size,)}"
            )

    @classmethod
    def zeros(cls, torus: Torus, grid: VelocityGrid, epsilon=None) -> "PerturbationField":
        return cls(np.zeros(torus.shape + (grid.size,)), torus, grid, epsilon)

    def fourier(self) -> np.ndarray:
        return self.torus.fft(self.values)

    def with_values(self, values) -> "PerturbationField":
        return PerturbationField(values, self.torus, self.grid, self.epsilon)

    def l2_norm(self) -> float:
        """||f|| over T^d x R^3 with the discrete quadrature."""
        return float(np.sqrt(np.sum(self.torus.mean(self.values**2) * self.grid.weights)))


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float
    dt: float
    t_end: float
    grid: VelocityGrid
    torus: Torus
    kernel: KernelSpec = KernelSpec()
    mode: str = "linearized"
    scheme: str = "lie"
    output_every: int = 1
    tol_conserve: float = 1e-8
    tol_pos: float = 0.0
    energy_N: int = 2
    energy_l: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon <= EPS_MAX:
            raise ValueError(f"epsilon must lie in (0, {EPS_MAX}], got {self.epsilon}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")
        if self.mode == "nonlinear" and self.kernel.family != "boltzmann":
            raise ValueError("nonlinear mode needs a Boltzmann kernel")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_end / self.dt - 1e-9)) if self.t_end > 0 else 0

    @property
    def step(self) -> float:
        """The dt actually used: t_end split into n_steps equal steps."""
        return self.t_end / self.n_steps if self.n_steps else self.dt

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon, "dt": self.step, "t_end": self.t_end, "mode": self.mode,
            "scheme": self.scheme, "kernel": self.kernel.tag, "grid": self.grid.digest,
            "torus": [self.torus.d, self.torus.n], "output_every": self.output_every,
            "tol_conserve": self.tol_conserve, "tol_pos": self.tol_pos,
            "energy_N": self.energy_N, "energy_l": self.energy_l,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.summary(), sort_keys=True).encode()).hexdigest()[:16]


class Stepper:
    """Precomputed transport phases and collision resolvent for one config."""

    def __init__(self, cfg: SolverConfig, opL: AssembledL):
        if opL.grid != cfg.grid:
            raise GridMismatch("operator and config use different velocity grids")
        self.cfg = cfg
        dt = cfg.step
        self.dt = dt
        lam, V = opL.eig
        fac = 1.0 / (1.0 + (dt / cfg.epsilon) * np.maximum(lam, 0.0))
        R = (V * fac) @ V.T
        if not np.all(np.isfinite(R)):
            raise SolveFailure("collision resolvent is not finite")
        self.resolvent = 0.5 * (R + R.T)
        self.sw = np.sqrt(cfg.grid.weights)
        kv = np.tensordot(np.moveaxis(cfg.torus.wavevectors, 0, -1), cfg.grid.nodes.T, axes=1)
        tau = dt / 2 if cfg.scheme == "strang" else dt
        self.phase = np.exp(-1j * tau * kv)
        self.gamma_op = GammaOperator(cfg.grid, cfg.kernel) if cfg.mode == "nonlinear" else None
        self.gamma_seconds = 0.0

    def transport(self, f: np.ndarray) -> np.ndarray:
        torus = self.cfg.torus
        return torus.ifft(torus.fft(f) * self.phase)

    def collide(self, f: np.ndarray) -> np.ndarray:
        if self.gamma_op is not None:
            t0 = time.perf_counter()
            f = f + self.dt * self.gamma_op(f, f)
            self.gamma_seconds += time.perf_counter() - t0
        return ((f * self.sw) @ self.resolvent) / self.sw

    def __call__(self, f: np.ndarray) -> np.ndarray:
        if self.cfg.scheme == "strang":
            return self.transport(self.collide(self.transport(f)))
        return self.collide(self.transport(f))


def imex_step(f: PerturbationField, cfg: SolverConfig, opL: AssembledL, stepper: Stepper | None = None) -> PerturbationField:
    """Advance by one step of size ``cfg.step``; pass a Stepper to reuse the factorization."""
    stepper = stepper or Stepper(cfg, opL)
    out = stepper(f.values)
    if not np.all(np.isfinite(out)):
        raise SolveFailure("non-finite values after the step")
    if cfg.mode == "nonlinear":
        screen_positivity(out, cfg)
    return f.with_values(out)


def positivity_min(f: np.ndarray, grid: VelocityGrid, epsilon: float) -> float:
    """min over nodes of (mu + eps sqrt(mu) f) / mu, i.e. the relative density floor."""
    return float(np.min(1.0 + epsilon * f / grid.sqrt_mu))


def screen_positivity(f: np.ndarray, cfg: SolverConfig) -> float:
    m = positivity_min(f, cfg.grid, cfg.epsilon)
    if m < -cfg.tol_pos:
        warnings.warn(f"mu + eps sqrt(mu) f reached {m:.3e} (relative)", PositivityWarning, stacklevel=3)
    return m


def well_prepared_data(hydro: HydroState, grid: VelocityGrid, torus: Torus | None = None, basis: MomentBasis | None = None):
    """f = {rho + v.u + (|v|^2/2 - 3/2) theta} sqrt(mu); a PerturbationField when a torus is given."""
    basis = basis or MomentBasis(grid)
    values = reconstruct(hydro, basis)
    if torus is None:
        return values
    return PerturbationField(values, torus, grid)


@dataclass
class Trajectory:
    cfg: SolverConfig
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    gamma_seconds: float = 0.0
    wall_seconds: float = 0.0

    def state_at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no stored state at t={t}")
        return self.states[i]

    def field_at(self, t: float) -> PerturbationField:
        return PerturbationField(self.state_at(t), self.cfg.torus, self.cfg.grid, self.cfg.epsilon)


def run_simulation(
    cfg: SolverConfig, f0: PerturbationField, opL: AssembledL,
    record_times=(), reports: bool = True, dissipation=None,
) -> Trajectory:
    """Integrate from f0 to cfg.t_end.

    States are kept every ``output_every`` steps, at the final step and at
    the steps nearest to ``record_times``.  With ``reports`` set, an
    EnergyReport is computed for every kept state.
    """
    from .diagnostics import energy_report

    if f0.torus != cfg.torus or f0.grid != cfg.grid:
        raise GridMismatch("initial data and config use different grids")
    basis = MomentBasis(cfg.grid)
    inv0 = global_conservation_residual(f0.values, basis, cfg.torus)
    if np.max(np.abs(inv0)) > cfg.tol_conserve:
        raise InadmissibleInitialData(
            f"initial data carries nonzero conserved moments (max {np.max(np.abs(inv0)):.3e})"
        )
    if cfg.mode == "nonlinear" and positivity_min(f0.values, cfg.grid, cfg.epsilon) < -cfg.tol_pos:
        raise InadmissibleInitialData("mu + eps sqrt(mu) f0 is negative at some node")

    t_wall = time.perf_counter()
    traj = Trajectory(cfg)
    n = cfg.n_steps
    keep = {n} | {int(round(t / cfg.step)) for t in record_times if n}
    keep |= set(range(0, n + 1, cfg.output_every))

    def record(i, f):
        t = i * cfg.step if n else 0.0
        traj.times.append(t)
        traj.states.append(f.copy())
        if reports:
            traj.reports.append(energy_report(f, t, cfg, basis, inv0, dissipation=dissipation))

    f = f0.values.copy()
    record(0, f)
    if n:
        stepper = Stepper(cfg, opL)
        for i in range(1, n + 1):
            f = stepper(f)
            if not np.all(np.isfinite(f)):
                raise SolveFailure(f"non-finite values at step {i}")
            if cfg.mode == "nonlinear":
                screen_positivity(f, cfg)
            if i in keep:
                record(i, f)
        traj.gamma_seconds = stepper.gamma_seconds
    traj.wall_seconds = time.perf_counter() - t_wall
    return traj


def write_manifest(path, cfg: SolverConfig, config_hash: str | None = None, extra: dict | None = None) -> None:
    """Plain key: value text recording hashes and tolerances of a run."""
    lines = {
        "config_hash": config_hash or cfg.digest(),
        "solver_hash": cfg.digest(),
        "grid_hash": cfg.grid.digest,
        "kernel_hash": cfg.kernel.digest,
        **cfg.summary(),
        **(extra or {}),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k}: {json.dumps(v)}\n" for k, v in lines.items()))


def dump_state(path, f: np.ndarray, cfg: SolverConfig, t: float) -> None:
    write_field_dump(path, f, {"t": t, "grid": cfg.grid.digest, "solver": cfg.digest(), "torus": [cfg.torus.d, cfg.torus.n]})


def with_epsilon(cfg: SolverConfig, epsilon: float) -> SolverConfig:
    return replace(cfg, epsilon=epsilon)
