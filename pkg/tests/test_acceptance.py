"""Acceptance criteria AC-1 .. AC-7.

Each test prints one ``AC-n PASS|FAIL`` line with the measured numbers
before asserting.  The 16^3 operator is assembled once per session.
"""
from pathlib import Path

import numpy as np
import pytest

from acoustic_lab import config as config_mod
from acoustic_lab.acoustic_solver import SOUND_SPEED, AcousticState, acoustic_energy, propagate, symbol_eigen, symbol_matrix
from acoustic_lab.cli import initial_hydro, mixed_initial_data
from acoustic_lab.collision_ops import GammaOperator, KernelSpec, coercivity_delta, gamma_bilinear
from acoustic_lab.diagnostics import (
    convergence_sweep,
    dissipation_parts,
    dissipation_rate,
    energy_monitor,
    energy_terms,
    instant_energy,
    weight_exponent,
)
from acoustic_lab.hydrodynamics import HydroState, MomentBasis, reconstruct
from acoustic_lab.kinetic_solver import SolverConfig, run_simulation
from acoustic_lab.torus import Torus
from acoustic_lab.velocity_space import WeightFn, collision_invariants, velocity_derivative
from oracles import brute_gamma

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def test_ac1_operator_structure(opL16, report):
    sym = opL16.symmetry_defect()
    null = opL16.null_residual()
    lam = opL16.min_eigenvalue()
    delta = coercivity_delta(opL16).delta
    secs = opL16.assembly_seconds
    ok = sym <= 1e-10 and null <= 1e-6 and lam >= -1e-8 and delta > 0 and secs <= 600
    report("AC-1", ok, f"symmetry {sym:.2e}, null {null:.2e}, min eig {lam:.2e}, delta {delta:.4f}, "
                       f"assembly+eig {secs:.0f} s")
    assert ok


def test_ac2_gamma_invariants(gh8, tiny, report):
    op = GammaOperator(gh8, KernelSpec())
    rng = np.random.default_rng(2024)
    f = rng.standard_normal((100, gh8.size)) * gh8.sqrt_mu
    g = rng.standard_normal((100, gh8.size)) * gh8.sqrt_mu
    q = op(f, g)
    inv = collision_invariants(gh8)
    qn = np.sqrt(np.sum(q * q * gh8.weights, axis=-1))[:, None]
    pn = np.sqrt(np.sum(inv * inv * gh8.weights, axis=-1))[None, :]
    moments = float(np.max(np.abs((q * gh8.weights) @ inv.T) / (qn * pn)))
    maxw = float(np.max(np.abs(op(gh8.sqrt_mu, gh8.sqrt_mu))))
    kernel = KernelSpec(angular_nodes=8, impact_nodes=8)
    r = np.random.default_rng(5)
    a, b = r.standard_normal((2, tiny.size)) * tiny.sqrt_mu
    brute = float(np.max(np.abs(gamma_bilinear(a, b, kernel, tiny, conservative=False) - brute_gamma(tiny, kernel, a, b))))
    ok = moments <= 1e-6 and maxw <= 1e-8 and brute <= 1e-12
    report("AC-2", ok, f"max relative moment {moments:.2e} over 100 pairs, |Gamma(sqrt mu, sqrt mu)| {maxw:.2e}, "
                       f"brute-force oracle {brute:.2e}")
    assert ok


def test_ac3_acoustic_solver(report):
    torus = Torus(1, 64)
    arr = np.random.default_rng(9).standard_normal(torus.shape + (5,))
    st = AcousticState.from_hydro(HydroState.from_array(arr), torus)
    e0 = acoustic_energy(st)
    drift = max(abs(acoustic_energy(propagate(st, t)) / e0 - 1.0) for t in np.linspace(0, 10, 41))
    freq = 0.0
    for k in [(1, 0, 0), (3, 0, 0), (1, 2, 0), (2, -1, 3), (0, 0, 7)]:
        kappa = 2 * np.pi * np.array(k, dtype=float)
        # independent check: eigenvalues of the unsymmetrized symbol
        ev = np.sort(np.linalg.eigvals(symbol_matrix(kappa)).real)
        c = SOUND_SPEED * np.linalg.norm(kappa)
        want = np.array([-c, 0, 0, 0, c])
        freq = max(freq, np.max(np.abs(ev - want)) / c, np.max(np.abs(np.sort(symbol_eigen(k).frequencies) - want)) / c)
    ok = drift <= 1e-10 and freq <= 1e-10
    report("AC-3", ok, f"energy drift {drift:.2e} over t in [0, 10], frequency error {freq:.2e}")
    assert ok


def test_ac4_conservation_and_stability(opL16, report):
    grid = opL16.grid
    torus = Torus(1, 64)
    f0 = mixed_initial_data(grid, torus, 1.0)
    rows = []
    ok = True
    for eps in (0.2, 0.1, 0.05, 0.025):
        cfg = SolverConfig(epsilon=eps, dt=0.01, t_end=1.0, grid=grid, torus=torus, energy_N=0)
        tr = run_simulation(cfg, f0, opL16, dissipation=opL16.dissipation)
        tr.states.clear()
        mon = energy_monitor(tr.reports)
        l2 = np.array([r.l2 for r in tr.reports])
        finite = bool(np.all(np.isfinite(l2))) and l2[-1] <= l2[0]
        drift_rate = mon["max_drift"] / cfg.t_end
        ok &= drift_rate <= 1e-8 and mon["l2_max_increase"] <= 1e-10 and finite
        rows.append(f"eps={eps}: drift/t {drift_rate:.1e}, max l2 step increase {mon['l2_max_increase']:.1e}, "
                    f"l2 {l2[0]:.3f}->{l2[-1]:.3f}")
    report("AC-4", ok, "; ".join(rows))
    assert ok


def test_ac5_acoustic_limit(opL16, report):
    rc = config_mod.load(CONFIGS / "sweep.cfg")
    grid = rc.velocity_grid()
    assert grid == opL16.grid
    scfg = rc.solver_config(grid, epsilon=rc.solver.epsilons[0])
    res = convergence_sweep(rc.solver.epsilons, scfg, initial_hydro(rc, scfg.torus), rc.diagnostics.t_probe, opL16)
    err = res.errors[:, :, 3]
    micro = res.micro.max(axis=1)
    err_ok = bool(np.all(np.diff(err, axis=0) < 0))
    micro_ok = bool(np.all(np.diff(micro) < 0))
    order_ok = res.fitted_order >= 0.8
    table = ", ".join(f"eps={e}: {err[i, 0]:.3e}/{err[i, 1]:.3e}" for i, e in enumerate(res.epsilons))
    ok = err_ok and micro_ok and order_ok
    report("AC-5", ok, f"errors at t=0.5/1.0 {table}; micro {np.array2string(micro, precision=3)}; "
                       f"fitted order {res.fitted_order:.3f}")
    assert ok


def test_ac6_energy_structure(gh8, report):
    torus = Torus(1, 16)
    rng = np.random.default_rng(6)
    x = torus.coords[0][..., None]
    f = (np.sin(2 * np.pi * x) * rng.standard_normal(gh8.size)
         + np.cos(4 * np.pi * x) * rng.standard_normal(gh8.size)) * gh8.sqrt_mu
    hard, soft, landau = KernelSpec(), KernelSpec(gamma=-2.0), KernelSpec(family="landau")
    # quadratic scaling
    scale = 0.0
    for c in (2.0, -0.3, 1e-3):
        e1, e2 = instant_energy(f, 2, 1.0, hard, torus, gh8), instant_energy(c * f, 2, 1.0, hard, torus, gh8)
        d1, d2 = dissipation_rate(f, 0.1, 2, 1.0, hard, torus, gh8), dissipation_rate(c * f, 0.1, 2, 1.0, hard, torus, gh8)
        scale = max(scale, abs(e2 / (c * c * e1) - 1), abs(d2 / (c * c * d1) - 1))
    # eps-homogeneity: macroscopic data scales like eps, microscopic like 1/eps
    from acoustic_lab.hydrodynamics import micro_part

    basis = MomentBasis(gh8)
    fm = reconstruct(HydroState.from_array(np.stack([np.sin(2 * np.pi * torus.coords[0])] * 5, axis=-1)), basis)
    fu = micro_part(f, basis)
    pm = dissipation_parts(fm, 2, 1.0, hard, torus, gh8)
    pu = dissipation_parts(fu, 2, 1.0, hard, torus, gh8)
    homog = pm.micro <= 1e-24 * pm.macro and pu.macro <= 1e-24 * pu.micro
    eps = (0.2, 0.1, 0.05, 0.025)
    dm = [dissipation_rate(fm, e, 2, 1.0, hard, torus, gh8) / e for e in eps]
    du = [dissipation_rate(fu, e, 2, 1.0, hard, torus, gh8) * e for e in eps]
    homog &= max(abs(v / dm[0] - 1) for v in dm) <= 1e-15 and max(abs(v / du[0] - 1) for v in du) <= 1e-15
    # weight-law dispatch by direct term inspection on x-independent data
    g = (1 + gh8.nodes[:, 0] + gh8.speed2) * gh8.sqrt_mu
    flat = np.broadcast_to(g, (4, gh8.size))
    dispatch = True
    laws = {"hard": (hard, lambda l, b: l), "soft": (soft, lambda l, b: (l - b) * 2.0), "landau": (landau, lambda l, b: l - b)}
    for name, (kern, law) in laws.items():
        for t in energy_terms(flat, 2, 1.5, kern, Torus(1, 4), gh8):
            if t.weight_power is None or any(t.alpha):
                continue
            nb = sum(t.beta)
            db = velocity_derivative(g, gh8, t.beta)
            direct = np.sum(gh8.weights * WeightFn(2 * law(1.5, nb))(gh8.nodes) * db * db)
            dispatch &= t.weight_power == law(1.5, nb) == weight_exponent(kern, 1.5, nb)
            dispatch &= abs(t.value - direct) <= 1e-13 * abs(direct)
    ok = scale <= 1e-13 and homog and dispatch
    report("AC-6", ok, f"quadratic scaling error {scale:.1e}, eps-homogeneity {'exact' if homog else 'broken'}, "
                       f"weight laws {'match' if dispatch else 'mismatch'} (hard, soft, landau)")
    assert ok


def test_ac7_small_data_energy_bound(gh8, opL_gh8, report):
    rc = config_mod.load(CONFIGS / "nonlinear.cfg")
    grid = rc.velocity_grid()
    assert grid == gh8
    rows = []
    ok = True
    for dt in (rc.solver.dt, rc.solver.dt / 2):
        scfg = rc.updated(solver__dt=dt).solver_config(grid)
        f0 = mixed_initial_data(grid, scfg.torus, rc.solver.amplitude)
        tr = run_simulation(scfg, f0, opL_gh8, dissipation=opL_gh8.dissipation)
        mon = energy_monitor(tr.reports)
        pos = min(r.pos_min for r in tr.reports)
        ok &= mon["sup_ratio"] <= 1.05 and pos > 0
        rows.append(f"dt={dt}: sup E/E(0) {mon['sup_ratio']:.4f}, E(5)/E(0) {tr.reports[-1].E / tr.reports[0].E:.3e}, "
                    f"min density ratio {pos:.4f}, Gamma {tr.gamma_seconds:.0f} s")
    report("AC-7", ok, "; ".join(rows))
    assert ok
