"""Instant energy, dissipation rate, energy monitoring and the eps-sweep.

The functionals are the explicit norm sums

    E = sum_{|a|<=N+1} ||d_a f||^2 + sum_{|a|+|b|<=N} ||w^p(b) d_a^b f||^2
    D = sum_{|a|<=N+1} (eps ||d_a P f||^2 + (1/eps) ||d_a (I-P) f||_D^2)
        + (1/eps) sum_{|a|+|b|<=N} ||w^p(b) d_a^b (I-P) f||_D^2

with p(b) = l (hard), (l - |b|)|gamma| (soft) or l - |b| (Landau).
x-derivatives are spectral, v-derivatives finite differences.
"""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .acoustic_solver import AcousticState, propagate
from .collision_ops import AssembledL, KernelSpec, grid_collision_frequency
from .errors import UnsupportedN
from .hydrodynamics import HydroState, MomentBasis, global_conservation_residual, hydro_fields, project_P
from .io_formats import fmt, write_csv
from .kinetic_solver import PerturbationField, SolverConfig, positivity_min, run_simulation, well_prepared_data
from .torus import Torus
from .velocity_space import VelocityGrid, WeightFn, velocity_derivative

REPORT_HEADER = [
    "t", "E", "D", "dEdt_plus_D", "l2", "micro_nu",
    "drift_mass", "drift_mom1", "drift_mom2", "drift_mom3", "drift_energy", "pos_min",
]
SWEEP_HEADER = ["epsilon", "t_probe", "err_rho", "err_u", "err_theta", "err_total"]


def multi_indices(order: int, dim: int = 3):
    """All multi-indices of length ``dim`` with total order exactly ``order``."""
    for c in itertools.combinations_with_replacement(range(dim), order):
        idx = [0] * dim
        for i in c:
            idx[i] += 1
        yield tuple(idx)


def _alphas(torus: Torus, max_order: int):
    # only axes present on the torus can carry x-derivatives
    for k in range(max_order + 1):
        for a in multi_indices(k, torus.d):
            yield a + (0,) * (3 - torus.d)


def weight_exponent(kernel: KernelSpec, l: float, beta_order: int) -> float:
    """Exponent of w in the mixed-derivative terms for each kernel family."""
    if kernel.family == "landau":
        return l - beta_order
    if kernel.gamma < 0:
        return (l - beta_order) * abs(kernel.gamma)
    return l


def _check_N(N: int, grid: VelocityGrid):
    if N < 0:
        raise UnsupportedN("N must be nonnegative")
    if N + 1 > min(grid.counts):
        raise UnsupportedN(f"N={N} needs more than {min(grid.counts)} nodes per velocity axis")


def _field(f, torus=None, grid=None):
    if isinstance(f, PerturbationField):
        return f.values, f.torus, f.grid
    return np.asarray(f, dtype=float), torus, grid


def _norm2(g: np.ndarray, torus: Torus, vweight: np.ndarray) -> float:
    return float(np.sum(torus.mean(g * g) * vweight))


@dataclass(frozen=True)
class EnergyTerm:
    alpha: tuple
    beta: tuple
    weight_power: float | None  # None for the unweighted pure-x block
    value: float


def energy_terms(f, N: int = 2, l: float = 1.0, kernel: KernelSpec = KernelSpec(), torus=None, grid=None) -> list[EnergyTerm]:
    values, torus, grid = _field(f, torus, grid)
    _check_N(N, grid)
    terms = []
    for a in _alphas(torus, N + 1):
        terms.append(EnergyTerm(a, (0, 0, 0), None, _norm2(torus.derivative(values, a), torus, grid.weights)))
    for a in _alphas(torus, N):
        da = torus.derivative(values, a)
        for nb in range(N - sum(a) + 1):
            p = weight_exponent(kernel, l, nb)
            w2 = grid.weights * WeightFn(2 * p)(grid.nodes)
            for b in multi_indices(nb):
                terms.append(EnergyTerm(a, b, p, _norm2(velocity_derivative(da, grid, b), torus, w2)))
    return terms


def instant_energy(f, N: int = 2, l: float = 1.0, kernel: KernelSpec = KernelSpec(), torus=None, grid=None) -> float:
    return math.fsum(t.value for t in energy_terms(f, N, l, kernel, torus, grid))


def default_dissipation(kernel: KernelSpec, grid: VelocityGrid, opL: AssembledL | None = None):
    """nu at the nodes, or the operator's sigma form for the Landau family."""
    if opL is not None:
        return opL.dissipation
    if kernel.family == "landau":
        from .collision_ops import landau_form

        return landau_form(grid)
    return grid_collision_frequency(grid, kernel.gamma)


def _dnorm2(g: np.ndarray, torus: Torus, grid: VelocityGrid, dissipation: np.ndarray) -> float:
    if dissipation.ndim == 1:
        return _norm2(g, torus, grid.weights * dissipation)
    y = g * np.sqrt(grid.weights)
    return float(np.sum(torus.mean((y @ dissipation) * y)))


@dataclass(frozen=True)
class DissipationParts:
    macro: float  # sum ||d_a P f||^2, before the eps factor
    micro: float  # sum ||d_a (I-P) f||_D^2 + weighted mixed sums, before 1/eps

    def total(self, epsilon: float) -> float:
        return epsilon * self.macro + self.micro / epsilon


def dissipation_parts(f, N: int = 2, l: float = 1.0, kernel: KernelSpec = KernelSpec(), torus=None, grid=None,
                      dissipation=None, basis: MomentBasis | None = None) -> DissipationParts:
    values, torus, grid = _field(f, torus, grid)
    _check_N(N, grid)
    basis = basis or MomentBasis(grid)
    dissipation = default_dissipation(kernel, grid) if dissipation is None else dissipation
    Pf = project_P(values, basis)[0]
    micro = values - Pf
    macro_sum, micro_terms = [], []
    for a in _alphas(torus, N + 1):
        macro_sum.append(_norm2(torus.derivative(Pf, a), torus, grid.weights))
        micro_terms.append(_dnorm2(torus.derivative(micro, a), torus, grid, dissipation))
    for a in _alphas(torus, N):
        da = torus.derivative(micro, a)
        for nb in range(N - sum(a) + 1):
            wv = WeightFn(weight_exponent(kernel, l, nb))(grid.nodes)
            for b in multi_indices(nb):
                g = velocity_derivative(da, grid, b) * wv
                micro_terms.append(_dnorm2(g, torus, grid, dissipation))
    return DissipationParts(math.fsum(macro_sum), math.fsum(micro_terms))


def dissipation_rate(f, epsilon: float, N: int = 2, l: float = 1.0, kernel: KernelSpec = KernelSpec(),
                     torus=None, grid=None, dissipation=None, basis=None) -> float:
    return dissipation_parts(f, N, l, kernel, torus, grid, dissipation, basis).total(epsilon)


@dataclass
class EnergyReport:
    t: float
    E: float
    D: float
    l2: float
    micro_nu: float
    drift: np.ndarray
    pos_min: float
    dEdt_plus_D: float = float("nan")

    def row(self) -> list:
        return [self.t, self.E, self.D, self.dEdt_plus_D, self.l2, self.micro_nu, *self.drift, self.pos_min]


def energy_report(f: np.ndarray, t: float, cfg: SolverConfig, basis: MomentBasis, inv0: np.ndarray,
                  dissipation=None) -> EnergyReport:
    grid, torus = cfg.grid, cfg.torus
    dissipation = default_dissipation(cfg.kernel, grid) if dissipation is None else dissipation
    micro = f - project_P(f, basis)[0]
    return EnergyReport(
        t=t,
        E=instant_energy(f, cfg.energy_N, cfg.energy_l, cfg.kernel, torus, grid),
        D=dissipation_rate(f, cfg.epsilon, cfg.energy_N, cfg.energy_l, cfg.kernel, torus, grid, dissipation, basis),
        l2=float(np.sqrt(_norm2(f, torus, grid.weights))),
        micro_nu=float(np.sqrt(_dnorm2(micro, torus, grid, dissipation))),
        drift=global_conservation_residual(f, basis, torus) - inv0,
        pos_min=positivity_min(f, grid, cfg.epsilon),
    )


def energy_monitor(reports: list[EnergyReport], tol_energy: float = 1e-8) -> dict:
    """Fill dE/dt + D by central differences (one-sided at the ends).

    Returns counts of sign violations beyond ``tol_energy`` (relative to
    E(0)) and the ratio sup_t E / E(0).
    """
    t = np.array([r.t for r in reports])
    E = np.array([r.E for r in reports])
    if len(reports) > 1:
        dE = np.gradient(E, t, edge_order=1)
        for r, d in zip(reports, dE):
            r.dEdt_plus_D = float(d + r.D)
    scale = max(E[0], np.finfo(float).tiny)
    violations = sum(1 for r in reports if r.dEdt_plus_D > tol_energy * scale)
    l2 = np.array([r.l2 for r in reports])
    return {
        "sup_ratio": float(E.max() / E[0]) if E[0] > 0 else 0.0,
        "violations": violations,
        "l2_max_increase": float(np.max(np.diff(l2), initial=0.0)),
        "max_drift": float(np.max([np.max(np.abs(r.drift)) for r in reports])),
    }


def write_report_csv(path, reports: list[EnergyReport], comments=None) -> None:
    write_csv(path, REPORT_HEADER, [r.row() for r in reports], comments)


# -- convergence study ------------------------------------------------------------

@dataclass
class SweepResult:
    epsilons: list
    t_probe: list
    errors: np.ndarray  # (n_eps, n_probe, 4): rho, u, theta, total
    micro: np.ndarray  # (n_eps, n_probe): ||(I-P) f|| at each probe time
    fitted_order: float | None

    def rows(self):
        for i, e in enumerate(self.epsilons):
            for j, t in enumerate(self.t_probe):
                yield [e, t, *self.errors[i, j]]

    def write_csv(self, path, comments=None) -> None:
        write_csv(path, SWEEP_HEADER, list(self.rows()), comments)
        with open(path, "a") as fh:
            order = "none" if self.fitted_order is None else fmt(self.fitted_order)
            fh.write(f"# fitted_order = {order}\n")


def hydro_error(a: HydroState, b: HydroState, torus: Torus) -> np.ndarray:
    """Unweighted L^2(T^d) errors of rho, u, theta and of all five together."""
    er = torus.norm2(a.rho - b.rho)
    eu = torus.norm2(a.u - b.u)
    et = torus.norm2(a.theta - b.theta)
    return np.sqrt([er, eu, et, er + eu + et])


def fit_order(epsilons, errors) -> float | None:
    """Least-squares slope of log error against log eps."""
    e = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if len(e) < 2 or np.any(err <= 0):
        return None
    return float(np.polyfit(np.log(e), np.log(err), 1)[0])


def convergence_sweep(epsilons, base_cfg: SolverConfig, f0_hydro: HydroState, t_probe, opL: AssembledL,
                      jobs: int = 1) -> SweepResult:
    """Run the kinetic solver for each eps and compare (rho, u, theta) with the acoustic flow."""
    epsilons = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    t_probe = [float(t) for t in t_probe]
    if len(epsilons) < 2:
        warnings.warn("single epsilon: no order can be fitted", UserWarning, stacklevel=2)
    torus, grid = base_cfg.torus, base_cfg.grid
    basis = MomentBasis(grid)
    f0 = well_prepared_data(f0_hydro, grid, torus, basis)
    ac0 = AcousticState.from_hydro(hydro_fields(f0.values, basis), torus)
    refs = [propagate(ac0, t).to_hydro() for t in t_probe]
    cfg_end = max(t_probe)

    def one(eps):
        cfg = replace(base_cfg, epsilon=eps, t_end=cfg_end)
        cfg = replace(cfg, output_every=max(cfg.n_steps, 1))
        traj = run_simulation(cfg, f0, opL, record_times=t_probe, reports=False)
        errs, micro = [], []
        for t, ref in zip(t_probe, refs):
            f = traj.state_at(t)
            errs.append(hydro_error(hydro_fields(f, basis), ref, torus))
            m = f - project_P(f, basis)[0]
            micro.append(float(np.sqrt(_norm2(m, torus, grid.weights))))
        return np.array(errs), np.array(micro)

    # numpy releases the GIL in the matrix products, so threads overlap
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        results = list(ex.map(one, epsilons))
    errors = np.stack([r[0] for r in results])
    micro = np.stack([r[1] for r in results])
    per_eps = errors[:, :, 3].max(axis=1)
    order = fit_order(epsilons, per_eps) if len(epsilons) > 1 else None
    return SweepResult(epsilons, t_probe, errors, micro, order)
