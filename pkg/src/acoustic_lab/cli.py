"""Command-line entry point: ``acoustic-lab {assemble,simulate,sweep,acoustic,check}``.

Exit status is 0 iff no invariant or tolerance check failed; 2 signals a
configuration or usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import config as config_mod
from .acoustic_solver import AcousticState, acoustic_energy, propagate, sound_mode, write_fourier_csv, write_hydro_csv
from .collision_ops import (
    AssembledL,
    GammaOperator,
    assemble_L,
    coercivity_delta,
    operator_from_matrix,
)
from .diagnostics import convergence_sweep, energy_monitor, write_report_csv
from .errors import AcousticLabError, ConfigError, InadmissibleInitialData, PositivityWarning
from .hydrodynamics import HydroState, MomentBasis, hydro_fields, project_P
from .io_formats import fmt, read_operator_cache
from .kinetic_solver import PerturbationField, dump_state, run_simulation, well_prepared_data, write_manifest
from .velocity_space import build_grid, collision_invariants, moment_residuals

log = logging.getLogger("acoustic_lab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class Context:
    """Per-invocation state: the parsed config, its hash and the output directory."""

    def __init__(self, cfg: config_mod.RunConfig, out: Path):
        self.cfg = cfg
        self.hash = cfg.digest()
        self.out = out
        self.failures: list[str] = []

    def emit(self, key: str, value) -> None:
        print(f"{key} = {value if isinstance(value, str) else fmt(value)}")

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))
        if not ok:
            self.failures.append(name)
        return ok


# -- operator with cache ------------------------------------------------------------

def cache_path(cfg: config_mod.RunConfig, grid, kernel) -> Path:
    return Path(cfg.cache_dir()) / f"L-{grid.digest}-{kernel.digest}.bin"


def load_operator(cfg: config_mod.RunConfig, grid=None) -> tuple[AssembledL, bool]:
    """(operator, cache_hit).  Assembles and stores on a miss."""
    grid = grid or cfg.velocity_grid()
    kernel = cfg.kernel_spec()
    path = cache_path(cfg, grid, kernel)
    matrix = read_operator_cache(path, grid.digest, kernel.digest)
    if matrix is not None:
        log.info("operator cache hit at %s: assembly skipped", path)
        return operator_from_matrix(matrix, grid, kernel), True
    t0 = time.perf_counter()
    opL = assemble_L(grid, kernel, tol_null=cfg.diagnostics.tol_null, max_entries=cfg.solver.max_entries or None)
    log.info("assembled %s on %d nodes in %.1f s", kernel.tag, grid.size, time.perf_counter() - t0)
    opL.save(path)
    return opL, False


def operator_metrics(opL: AssembledL) -> dict:
    return {
        "symmetry_defect": opL.symmetry_defect(),
        "null_residual": opL.null_residual(),
        "min_eigenvalue": opL.min_eigenvalue(),
        "delta": coercivity_delta(opL).delta,
    }


# -- initial data ------------------------------------------------------------------

def initial_hydro(cfg: config_mod.RunConfig, torus) -> HydroState:
    k = (cfg.solver.wave, 0, 0)
    return sound_mode(torus, k, amplitude=cfg.solver.amplitude)


def initial_field(cfg: config_mod.RunConfig, grid, torus, basis: MomentBasis) -> PerturbationField:
    """``sound``: well-prepared sound wave; ``mixed``: sound wave plus microscopic parts;
    ``bump``: a constant density excess (violates the zero-moment constraint)."""
    kind = cfg.solver.initial
    A = cfg.solver.amplitude
    if kind == "sound":
        return well_prepared_data(initial_hydro(cfg, torus), grid, torus, basis)
    if kind == "mixed":
        return mixed_initial_data(grid, torus, A)
    if kind == "bump":
        return PerturbationField(A * np.broadcast_to(grid.sqrt_mu, torus.shape + (grid.size,)), torus, grid)
    raise ConfigError(f"solver.initial must be sound, mixed or bump, got {kind!r}")


def mixed_initial_data(grid, torus, amplitude: float) -> PerturbationField:
    """Mean-zero data with macroscopic and microscopic parts along x1."""
    x = torus.coords[0][..., None]
    v = grid.nodes
    s = grid.sqrt_mu
    f = (
        np.sin(2 * np.pi * x) * (1.0 + v[:, 0] + 0.5 * grid.speed2 - 1.5) * s
        + np.cos(2 * np.pi * x) * (v[:, 0] ** 2 - 1.0) * s
        + np.sin(4 * np.pi * x) * v[:, 0] * v[:, 1] * s
    )
    return PerturbationField(amplitude * f, torus, grid)


# -- commands ----------------------------------------------------------------------

def cmd_assemble(ctx: Context) -> None:
    opL, hit = load_operator(ctx.cfg)
    d = ctx.cfg.diagnostics
    m = operator_metrics(opL)
    lines = [f"config_hash = {ctx.hash}", f"kernel = {opL.kernel.tag}", f"n_v = {opL.n_v}"]
    lines += [f"{k} = {fmt(v)}" for k, v in m.items()]
    print("\n".join(lines))
    (ctx.out / "assemble_report.txt").write_text("\n".join(lines) + "\n")
    ctx.check("symmetry", m["symmetry_defect"] <= d.tol_sym)
    ctx.check("nullspace", m["null_residual"] <= d.tol_null)
    ctx.check("psd", m["min_eigenvalue"] >= -d.tol_psd)
    ctx.check("coercivity", m["delta"] > 0)


def cmd_simulate(ctx: Context) -> None:
    cfg = ctx.cfg
    grid = cfg.velocity_grid()
    scfg = cfg.solver_config(grid)
    basis = MomentBasis(grid)
    opL, _ = load_operator(cfg, grid)
    f0 = initial_field(cfg, grid, scfg.torus, basis)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PositivityWarning)
        traj = run_simulation(scfg, f0, opL, dissipation=opL.dissipation)
    n_pos = sum(issubclass(w.category, PositivityWarning) for w in caught)
    summary = energy_monitor(traj.reports)
    comments = [f"config_hash = {ctx.hash}", f"solver_hash = {scfg.digest()}"]
    write_report_csv(ctx.out / "energy.csv", traj.reports, comments)
    for i, (t, f) in enumerate(zip(traj.times, traj.states)):
        write_hydro_csv(ctx.out / f"hydro_{i:05d}.csv", hydro_fields(f, basis), scfg.torus, comments + [f"t = {fmt(t)}"])
        if cfg.io.dump:
            dump_state(ctx.out / f"f_{i:05d}.bin", f, scfg, t)
    write_manifest(ctx.out / "manifest.txt", scfg, ctx.hash, {
        "snapshots": len(traj.times), "gamma_seconds": traj.gamma_seconds,
        "wall_seconds": traj.wall_seconds, "positivity_warnings": n_pos,
    })
    ctx.emit("config_hash", ctx.hash)
    ctx.emit("snapshots", str(len(traj.times)))
    for k, v in summary.items():
        ctx.emit(k, v)
    d = cfg.diagnostics
    t_end = max(scfg.t_end, 1.0)
    ctx.check("invariant-drift", summary["max_drift"] <= d.tol_conserve * t_end)
    if scfg.mode == "linearized":
        ctx.check("l2-monotone", summary["l2_max_increase"] <= d.tol_step * max(scfg.n_steps, 1))
    else:
        ctx.check("energy-bound", summary["sup_ratio"] <= 1.0 + d.tol_energy_bound)
        if n_pos:
            log.warning("positivity screen tripped %d times", n_pos)


def cmd_sweep(ctx: Context) -> None:
    cfg = ctx.cfg
    grid = cfg.velocity_grid()
    opL, _ = load_operator(cfg, grid)
    scfg = cfg.solver_config(grid, epsilon=cfg.solver.epsilons[0])
    h0 = initial_hydro(cfg, scfg.torus)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        res = convergence_sweep(cfg.solver.epsilons, scfg, h0, cfg.diagnostics.t_probe, opL, jobs=cfg.io.jobs)
    res.write_csv(ctx.out / "sweep.csv", [f"config_hash = {ctx.hash}"])
    ctx.emit("config_hash", ctx.hash)
    for row in res.rows():
        print(",".join(fmt(v) for v in row))
    ctx.emit("fitted_order", "none" if res.fitted_order is None else fmt(res.fitted_order))
    if len(res.epsilons) < 2:
        log.warning("single epsilon: degenerate sweep, no order fitted")
        return
    if cfg.solver.amplitude == 0:
        ctx.check("zero-error", bool(np.all(res.errors == 0)))
        return
    err = res.errors[:, :, 3]
    ctx.check("error-monotone", bool(np.all(np.diff(err, axis=0) < 0)))
    ctx.check("micro-monotone", bool(np.all(np.diff(res.micro.max(axis=1)) < 0)))
    ctx.check("order-guard", res.fitted_order is not None and res.fitted_order >= cfg.diagnostics.min_order,
              f"order {res.fitted_order}")


def cmd_acoustic(ctx: Context) -> None:
    cfg = ctx.cfg
    torus = cfg.torus()
    st0 = AcousticState.from_hydro(initial_hydro(cfg, torus), torus)
    times = sorted({0.0, *cfg.diagnostics.t_probe, cfg.solver.t_end})
    e0 = [acoustic_energy(st0, s) for s in (0, 1, 2)]
    worst = 0.0
    comments = [f"config_hash = {ctx.hash}"]
    for i, t in enumerate(times):
        st = propagate(st0, t)
        write_fourier_csv(ctx.out / f"acoustic_fourier_{i:03d}.csv", st, comments + [f"t = {fmt(t)}"])
        write_hydro_csv(ctx.out / f"acoustic_hydro_{i:03d}.csv", st.to_hydro(), torus, comments + [f"t = {fmt(t)}"])
        for s, e in zip((0, 1, 2), e0):
            if e > 0:
                worst = max(worst, abs(acoustic_energy(st, s) / e - 1.0))
    ctx.emit("config_hash", ctx.hash)
    ctx.emit("energy_drift", worst)
    ctx.check("acoustic-energy", worst <= cfg.diagnostics.tol_acoustic)


# -- check suite -------------------------------------------------------------------

def _check_grid(ctx, state):
    g = ctx.cfg.grid
    grid = build_grid(g.V_max, tuple(g.counts), g.rule, tol_moment=g.tol_moment, check=False)
    res = moment_residuals(grid)
    bad = [k for k, v in res.items() if not v <= g.tol_moment]
    state["grid"] = None if bad else grid
    detail = ", ".join(f"{k}={v:.3e}" for k, v in res.items())
    return not bad, (f"moment {bad[0]} residual exceeds {g.tol_moment:g}; " if bad else "") + detail


def _need_operator(ctx, state):
    if "opL" not in state:
        state["opL"] = load_operator(ctx.cfg, state["grid"])[0]
    return state["opL"]


def _check_null(ctx, state):
    r = _need_operator(ctx, state).null_residual()
    return r <= ctx.cfg.diagnostics.tol_null, f"{r:.3e}"


def _check_sym(ctx, state):
    r = _need_operator(ctx, state).symmetry_defect()
    return r <= ctx.cfg.diagnostics.tol_sym, f"{r:.3e}"


def _check_psd(ctx, state):
    r = _need_operator(ctx, state).min_eigenvalue()
    return r >= -ctx.cfg.diagnostics.tol_psd, f"{r:.3e}"


def _check_gamma(ctx, state):
    grid = state["grid"]
    kernel = ctx.cfg.kernel_spec()
    if kernel.family != "boltzmann":
        return True, "skipped for the landau family"
    rng = np.random.default_rng(0)
    f = rng.standard_normal((2, grid.size)) * grid.sqrt_mu
    g = rng.standard_normal((2, grid.size)) * grid.sqrt_mu
    q = GammaOperator(grid, kernel)(f, g)
    inv = collision_invariants(grid)
    mom = np.abs((q * grid.weights) @ inv.T)
    scale = np.sqrt(np.sum(q**2 * grid.weights, axis=-1))[:, None] * np.sqrt(np.sum(inv**2 * grid.weights, axis=-1))
    r = float(np.max(mom / np.maximum(scale, 1e-300)))
    return r <= ctx.cfg.diagnostics.tol_null, f"{r:.3e}"


def _check_P(ctx, state):
    grid = state["grid"]
    basis = MomentBasis(grid)
    f = np.random.default_rng(1).standard_normal((4, grid.size))
    Pf = project_P(f, basis)[0]
    r = float(np.max(np.abs(project_P(Pf, basis)[0] - Pf)))
    return r <= ctx.cfg.diagnostics.tol_null, f"{r:.3e}"


def _check_acoustic(ctx, state):
    from .torus import Torus

    torus = Torus(ctx.cfg.grid.d, min(ctx.cfg.grid.N_x, 16))
    arr = np.random.default_rng(2).standard_normal(torus.shape + (5,))
    st = AcousticState.from_hydro(HydroState.from_array(arr), torus)
    e0 = acoustic_energy(st, 1)
    r = max(abs(acoustic_energy(propagate(st, t), 1) / e0 - 1.0) for t in (0.1, 1.0, 10.0))
    return r <= ctx.cfg.diagnostics.tol_acoustic, f"{r:.3e}"


CHECKS = {
    "grid-moments": (_check_grid, False),
    "L-symmetry": (_check_sym, True),
    "L-nullspace": (_check_null, True),
    "L-psd": (_check_psd, True),
    "gamma-orthogonality": (_check_gamma, True),
    "P-idempotence": (_check_P, True),
    "acoustic-energy": (_check_acoustic, False),
}


def cmd_check(ctx: Context, list_only: bool = False) -> None:
    if list_only:
        print("\n".join(CHECKS))
        return
    ctx.emit("config_hash", ctx.hash)
    state = {}
    for name, (fn, needs_grid) in CHECKS.items():
        if needs_grid and state.get("grid") is None:
            ctx.check(name, False, "skipped: no valid velocity grid")
            continue
        try:
            ok, detail = fn(ctx, state)
        except AcousticLabError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ctx.check(name, ok, detail)


COMMANDS = {
    "assemble": cmd_assemble,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "acoustic": cmd_acoustic,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acoustic-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", required=True, help="key = value run configuration")
    p.add_argument("--out", help="output directory (overrides io.out)")
    p.add_argument("--jobs", type=int, help="concurrent sweep runs (overrides io.jobs)")
    p.add_argument("--list", action="store_true", help="check: list check names and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.list and args.command != "check":
        print("--list is only valid with the check command", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = config_mod.load(args.config)
        overrides = {}
        if args.out:
            overrides["io__out"] = args.out
        if args.jobs:
            overrides["io__jobs"] = args.jobs
        cfg = cfg.updated(**overrides) if overrides else cfg
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.io.out)
    ctx = Context(cfg, out)
    try:
        if args.command == "check":
            cmd_check(ctx, args.list)
        else:
            out.mkdir(parents=True, exist_ok=True)
            COMMANDS[args.command](ctx)
    except InadmissibleInitialData as exc:
        print(f"InadmissibleInitialData: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except AcousticLabError as exc:
        msg, name = str(exc), type(exc).__name__
        print(msg if msg.startswith(name) else f"{name}: {msg}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL if ctx.failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
