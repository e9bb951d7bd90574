import math
import warnings

import numpy as np
import pytest

from acoustic_lab.acoustic_solver import sound_mode
from acoustic_lab.collision_ops import KernelSpec
from acoustic_lab.diagnostics import (
    EnergyReport,
    SweepResult,
    convergence_sweep,
    default_dissipation,
    dissipation_parts,
    dissipation_rate,
    energy_monitor,
    energy_terms,
    fit_order,
    hydro_error,
    instant_energy,
    multi_indices,
    weight_exponent,
)
from acoustic_lab.errors import UnsupportedN
from acoustic_lab.hydrodynamics import HydroState, MomentBasis
from acoustic_lab.io_formats import read_csv
from acoustic_lab.kinetic_solver import SolverConfig
from acoustic_lab.torus import Torus
from acoustic_lab.velocity_space import WeightFn

HARD = KernelSpec()
SOFT = KernelSpec(gamma=-2.0)
LANDAU = KernelSpec(family="landau")


@pytest.fixture(scope="module")
def torus():
    return Torus(1, 16)


def _field(torus, grid, seed=0):
    r = np.random.default_rng(seed)
    x = torus.coords[0][..., None]
    return (np.sin(2 * np.pi * x) * r.standard_normal(grid.size)
            + np.cos(6 * np.pi * x) * r.standard_normal(grid.size)) * grid.sqrt_mu


def test_multi_indices():
    assert sorted(multi_indices(2)) == sorted({(2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)})
    assert list(multi_indices(0)) == [(0, 0, 0)]
    assert len(list(multi_indices(3))) == 10
    assert list(multi_indices(2, 1)) == [(2,)]


@pytest.mark.parametrize(
    "kernel,l,nb,expected",
    [(HARD, 1.0, 0, 1.0), (HARD, 1.0, 2, 1.0), (SOFT, 1.0, 0, 2.0), (SOFT, 1.0, 1, 0.0),
     (SOFT, 3.0, 2, 2.0), (LANDAU, 1.0, 0, 1.0), (LANDAU, 1.0, 2, -1.0)],
)
def test_weight_exponent_dispatch(kernel, l, nb, expected):
    assert weight_exponent(kernel, l, nb) == expected


def test_energy_closed_form(gh8):
    """f = sin(2 pi x) sqrt(mu): E = 1/2 + (2 pi)^2 / 2 + 1/2 for N = 0, l = 0."""
    torus = Torus(1, 16)
    f = np.sin(2 * np.pi * torus.coords[0][..., None]) * gh8.sqrt_mu
    assert instant_energy(f, 0, 0.0, HARD, torus, gh8) == pytest.approx(1 + 2 * np.pi**2, rel=1e-13)


def test_energy_zero(gh8, torus):
    z = np.zeros(torus.shape + (gh8.size,))
    assert instant_energy(z, 2, 1.0, HARD, torus, gh8) == 0.0
    assert dissipation_rate(z, 0.1, torus=torus, grid=gh8) == 0.0


@pytest.mark.parametrize("kernel", [HARD, SOFT])
def test_quadratic_scaling(gh8, torus, kernel):
    f = _field(torus, gh8)
    for c in (3.0, -0.5, 1e-3):
        e1 = instant_energy(f, 2, 1.0, kernel, torus, gh8)
        assert instant_energy(c * f, 2, 1.0, kernel, torus, gh8) == pytest.approx(c * c * e1, rel=1e-14)
        d1 = dissipation_rate(f, 0.1, 2, 1.0, kernel, torus, gh8)
        assert dissipation_rate(c * f, 0.1, 2, 1.0, kernel, torus, gh8) == pytest.approx(c * c * d1, rel=1e-14)


def test_eps_homogeneity(gh8, torus):
    f = _field(torus, gh8)
    parts = dissipation_parts(f, 2, 1.0, HARD, torus, gh8)
    assert parts.macro > 0 and parts.micro > 0
    for eps in (0.2, 0.05, 0.0125):
        assert parts.total(eps) == eps * parts.macro + parts.micro / eps
        assert dissipation_rate(f, eps, 2, 1.0, HARD, torus, gh8) == parts.total(eps)
    # the parts themselves do not depend on eps
    again = dissipation_parts(f, 2, 1.0, HARD, torus, gh8)
    assert again == parts


def test_macroscopic_data_has_no_micro_dissipation(gh8, torus):
    h = sound_mode(torus, (1, 0, 0))
    from acoustic_lab.hydrodynamics import reconstruct

    f = reconstruct(h, MomentBasis(gh8))
    parts = dissipation_parts(f, 2, 1.0, HARD, torus, gh8)
    assert parts.micro <= 1e-24 * parts.macro


@pytest.mark.parametrize("kernel,l", [(HARD, 1.0), (SOFT, 1.0), (LANDAU, 2.0)])
def test_weighted_terms_by_inspection(gh8, kernel, l):
    """x-independent crafted data: only alpha = 0 terms survive and each equals its direct sum."""
    torus = Torus(1, 4)
    g = (1 + gh8.nodes[:, 0] + gh8.speed2) * gh8.sqrt_mu
    f = np.broadcast_to(g, torus.shape + (gh8.size,))
    terms = energy_terms(f, 2, l, kernel, torus, gh8)
    from acoustic_lab.velocity_space import velocity_derivative

    for t in terms:
        if any(t.alpha):
            assert t.value == pytest.approx(0.0, abs=1e-20)
            continue
        if t.weight_power is None:
            assert t.value == pytest.approx(np.sum(gh8.weights * g * g), rel=1e-13)
            continue
        nb = sum(t.beta)
        assert t.weight_power == weight_exponent(kernel, l, nb)
        db = velocity_derivative(g, gh8, t.beta)
        direct = np.sum(gh8.weights * WeightFn(2 * t.weight_power)(gh8.nodes) * db * db)
        assert t.value == pytest.approx(direct, rel=1e-13)
    # term count: 4 pure-x (|a| <= 3 in d = 1) + mixed |a| + |b| <= 2
    assert len(terms) == 4 + (1 + 3 + 6) + (1 + 3) + 1


def test_landau_dissipation_uses_sigma_form(gh8, torus):
    D = default_dissipation(LANDAU, gh8)
    assert D.shape == (gh8.size, gh8.size)
    assert np.allclose(D, D.T)
    f = _field(torus, gh8)
    a = dissipation_parts(f, 1, 1.0, LANDAU, torus, gh8)
    b = dissipation_parts(2 * f, 1, 1.0, LANDAU, torus, gh8)
    assert b.micro == pytest.approx(4 * a.micro, rel=1e-13)


def test_unsupported_N(gh8, torus):
    f = _field(torus, gh8)
    with pytest.raises(UnsupportedN):
        instant_energy(f, 8, 1.0, HARD, torus, gh8)
    with pytest.raises(UnsupportedN):
        dissipation_rate(f, 0.1, -1, 1.0, HARD, torus, gh8)


def _rep(t, E, D, l2=1.0):
    return EnergyReport(t=t, E=E, D=D, l2=l2, micro_nu=0.0, drift=np.zeros(5), pos_min=1.0)


def test_energy_monitor():
    t = np.linspace(0, 1, 11)
    reps = [_rep(ti, math.exp(-ti), math.exp(-ti)) for ti in t]
    out = energy_monitor(reps, 5e-2)  # one-sided ends are O(h)
    assert out["sup_ratio"] == 1.0 and out["violations"] == 0
    assert abs(reps[5].dEdt_plus_D) < 1e-2
    reps = [_rep(ti, 1 + ti, 0.0, 1 + ti) for ti in t]
    out = energy_monitor(reps)
    assert out["sup_ratio"] == pytest.approx(2.0) and out["violations"] == 11
    assert out["l2_max_increase"] == pytest.approx(0.1)


def test_hydro_error_and_order(torus):
    h = sound_mode(torus)
    assert np.array_equal(hydro_error(h, h, torus), np.zeros(4))
    z = HydroState.zeros(torus.shape)
    e = hydro_error(h, z, torus)
    assert e[0] == pytest.approx(np.sqrt(0.5), rel=1e-14)
    assert e[3] ** 2 == pytest.approx(e[0] ** 2 + e[1] ** 2 + e[2] ** 2, rel=1e-14)
    eps = [0.1, 0.05, 0.025]
    assert fit_order(eps, [3 * x for x in eps]) == pytest.approx(1.0, rel=1e-12)
    assert fit_order(eps, [0, 1, 2]) is None
    assert fit_order([0.1], [1.0]) is None


def test_sweep_zero_amplitude_and_guards(gh8, opL_gh8, tmp_path):
    torus = Torus(1, 8)
    cfg = SolverConfig(epsilon=0.1, dt=0.01, t_end=0.1, grid=gh8, torus=torus)
    res = convergence_sweep([0.1, 0.05], cfg, sound_mode(torus, amplitude=0.0), [0.05, 0.1], opL_gh8)
    assert not np.any(res.errors) and res.fitted_order is None
    with pytest.raises(ValueError):
        convergence_sweep([0.05, 0.1], cfg, sound_mode(torus), [0.1], opL_gh8)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        res = convergence_sweep([0.1], cfg, sound_mode(torus, amplitude=0.1), [0.1], opL_gh8)
    assert any("single epsilon" in str(x.message) for x in w)
    p = tmp_path / "s.csv"
    res.write_csv(p)
    header, rows, comments = read_csv(p)
    assert header[0] == "epsilon" and len(rows) == 1
    assert any("fitted_order = none" in c for c in comments)


def test_sweep_parallel_matches_serial(gh8, opL_gh8):
    torus = Torus(1, 8)
    cfg = SolverConfig(epsilon=0.1, dt=0.01, t_end=0.1, grid=gh8, torus=torus)
    h = sound_mode(torus, amplitude=1.0)
    a = convergence_sweep([0.1, 0.05], cfg, h, [0.1], opL_gh8, jobs=1)
    b = convergence_sweep([0.1, 0.05], cfg, h, [0.1], opL_gh8, jobs=2)
    assert np.array_equal(a.errors, b.errors)
    assert isinstance(a, SweepResult) and a.fitted_order is not None
