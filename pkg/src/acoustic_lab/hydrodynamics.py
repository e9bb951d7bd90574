"""Macroscopic/microscopic decomposition and moment bookkeeping.

Phase-space fields are arrays ``f[x..., v]``; every projection acts
pointwise in x on the trailing velocity axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, IllConditionedGram
from .torus import Torus
from .velocity_space import VelocityGrid

GRAM_COND_MAX = 1e12


@dataclass
class HydroState:
    """Density, velocity and temperature fluctuations on the torus.

    ``rho`` and ``theta`` have the spatial shape; ``u`` has a trailing axis
    of length three.
    """

    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "HydroState":
        shape = tuple(shape)
        return cls(np.zeros(shape), np.zeros(shape + (3,)), np.zeros(shape))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "HydroState":
        """Inverse of :meth:`as_array` (components on the last axis)."""
        return cls(a[..., 0].copy(), a[..., 1:4].copy(), a[..., 4].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.rho[..., None], self.u, self.theta[..., None]], axis=-1)

    @property
    def shape(self):
        return self.rho.shape

    def to_abc(self, basis: "MomentBasis") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The same fields in the {1, v, |v|^2} sqrt(mu) parameterization."""
        abc = self.as_array() @ basis.hfield_to_abc.T
        return abc[..., 0], abc[..., 1:4], abc[..., 4]

    def spatial_means(self, torus: Torus) -> np.ndarray:
        return torus.mean(self.as_array())


class MomentBasis:
    """Invariant and 13-moment families sampled on a velocity grid.

    All Gram matrices use the discrete quadrature of the grid, so the
    projections are exactly orthogonal in the discrete inner product.
    """

    def __init__(self, grid: VelocityGrid):
        self.grid = grid
        v = grid.nodes
        s = grid.sqrt_mu
        self.hfield = np.stack([s, v[:, 0] * s, v[:, 1] * s, v[:, 2] * s, (0.5 * grid.speed2 - 1.5) * s])
        self.abc = np.stack([s, v[:, 0] * s, v[:, 1] * s, v[:, 2] * s, grid.speed2 * s])
        fam = [s] + [v[:, i] * s for i in range(3)]
        self.pairs = [(i, j) for i in range(3) for j in range(i, 3)]
        fam += [v[:, i] * v[:, j] * s for i, j in self.pairs]
        fam += [v[:, i] * grid.speed2 * s for i in range(3)]
        self.family13 = np.stack(fam)
        self.labels13 = (
            ["1"] + [f"v{i + 1}" for i in range(3)]
            + [f"v{i + 1}v{j + 1}" for i, j in self.pairs]
            + [f"v{i + 1}|v|2" for i in range(3)]
        )
        self.gram5 = self._gram(self.hfield, self.hfield)
        self.gram13 = self._gram(self.family13, self.family13)
        self.gram13_cond = float(np.linalg.cond(self.gram13))
        # coefficients in the (a, b, c) basis for each hfield element
        self.hfield_to_abc = np.linalg.solve(self._gram(self.abc, self.abc), self._gram(self.abc, self.hfield))

    def _gram(self, A, B):
        return (A * self.grid.weights) @ B.T

    @cached_property
    def orthonormal_invariants(self) -> np.ndarray:
        """Rows orthonormal in the discrete inner product, spanning the invariants."""
        L = np.linalg.cholesky(self.gram5)
        return np.linalg.solve(L, self.hfield)

    def check_gram13(self) -> None:
        if not self.gram13_cond < GRAM_COND_MAX:
            raise IllConditionedGram(f"13-moment Gram condition number {self.gram13_cond:.3e}")


def _values(f):
    return np.asarray(getattr(f, "values", f), dtype=float)


def hydro_fields(f, basis: MomentBasis) -> HydroState:
    """(rho, u, theta) of P f by a Gram solve at every spatial point."""
    f = basis.grid.check(_values(f))
    rhs = (f * basis.grid.weights) @ basis.hfield.T
    c = np.linalg.solve(basis.gram5, rhs.reshape(-1, 5).T).T.reshape(rhs.shape)
    return HydroState.from_array(c)


def reconstruct(hydro: HydroState, basis: MomentBasis) -> np.ndarray:
    """{rho + v.u + (|v|^2/2 - 3/2) theta} sqrt(mu) on the grid."""
    return hydro.as_array() @ basis.hfield


def project_P(f, basis: MomentBasis) -> tuple[np.ndarray, HydroState]:
    if basis.grid.size != _values(f).shape[-1]:
        raise GridMismatch("field and moment basis live on different grids")
    fields = hydro_fields(f, basis)
    return reconstruct(fields, basis), fields


def micro_part(f, basis: MomentBasis) -> np.ndarray:
    f = _values(f)
    return f - project_P(f, basis)[0]


def project_13moment(f, basis: MomentBasis) -> np.ndarray:
    """L^2_v projection onto span[sqrt(mu), v_i sqrt(mu), v_i v_j sqrt(mu), v_i |v|^2 sqrt(mu)]."""
    basis.check_gram13()
    return moment13_coefficients(f, basis) @ basis.family13


def moment13_coefficients(f, basis: MomentBasis) -> np.ndarray:
    basis.check_gram13()
    f = basis.grid.check(_values(f))
    rhs = (f * basis.grid.weights) @ basis.family13.T
    return np.linalg.solve(basis.gram13, rhs.reshape(-1, 13).T).T.reshape(rhs.shape)


def global_conservation_residual(f, basis: MomentBasis, torus: Torus) -> np.ndarray:
    """(f, [1, v, |v|^2] sqrt(mu)) over T^d x R^3, as a 5-vector."""
    f = basis.grid.check(_values(f))
    moments = (f * basis.grid.weights) @ basis.abc.T
    return torus.mean(moments)


def _stream(f: np.ndarray, grid: VelocityGrid, torus: Torus) -> np.ndarray:
    """v . grad_x f."""
    grad = torus.gradient(f)
    return np.einsum("i...k,ki->...k", grad, grid.nodes)


@dataclass
class LocalResidual:
    mass: float
    momentum: float
    energy: float
    fields: tuple[np.ndarray, np.ndarray, np.ndarray]

    def as_tuple(self):
        return (self.mass, self.momentum, self.energy)


def local_conservation_residual(f_now, f_prev, dt: float, basis: MomentBasis, torus: Torus) -> LocalResidual:
    """Residuals of the three local conservation laws in (a, b, c) form.

        d_t a                    = (1/2) <v.grad (I-P) f, |v|^2 sqrt(mu)>
        d_t c + (1/3) div b      = -(1/6) <v.grad (I-P) f, |v|^2 sqrt(mu)>
        d_t b + grad a + 5 grad c = -<v.grad (I-P) f, v sqrt(mu)>

    with a backward difference in time and spectral derivatives evaluated
    at ``f_now``.  Returned scalars are L^2(T^d) norms.
    """
    f_now = basis.grid.check(_values(f_now))
    f_prev = basis.grid.check(_values(f_prev))
    if f_now.shape != f_prev.shape:
        raise GridMismatch("consecutive states differ in shape")
    w = basis.grid.weights
    a1, b1, c1 = hydro_fields(f_now, basis).to_abc(basis)
    a0, b0, c0 = hydro_fields(f_prev, basis).to_abc(basis)
    micro = f_now - project_P(f_now, basis)[0]
    st = _stream(micro, basis.grid, torus)
    z_energy = (st * w) @ (basis.grid.speed2 * basis.grid.sqrt_mu)
    z_mom = (st * w) @ (basis.grid.nodes * basis.grid.sqrt_mu[:, None])
    div_b = sum(torus.derivative(b1[..., i], [1 if q == i else 0 for q in range(3)]) for i in range(torus.d))
    grad_a = np.moveaxis(torus.gradient(a1), 0, -1)
    grad_c = np.moveaxis(torus.gradient(c1), 0, -1)
    r_a = (a1 - a0) / dt - 0.5 * z_energy
    r_c = (c1 - c0) / dt + div_b / 3.0 + z_energy / 6.0
    r_b = (b1 - b0) / dt + grad_a + 5.0 * grad_c + z_mom
    return LocalResidual(
        mass=np.sqrt(torus.norm2(r_a)),
        momentum=np.sqrt(torus.norm2(r_b)),
        energy=np.sqrt(torus.norm2(r_c)),
        fields=(r_a, r_b, r_c),
    )


@dataclass
class MacroCoefficients:
    """13-moment coefficient fields of the macroscopic equation.

    ``lhs`` expands (d_t + v.grad) P f; ``l`` expands
    -(d_t + v.grad)(I-P) f - (1/eps) L (I-P) f; ``h`` expands Gamma(f, f).
    Each has shape (*spatial, 13) ordered as ``MomentBasis.labels13``.
    """

    lhs: np.ndarray
    l: np.ndarray
    h: np.ndarray

    @property
    def imbalance(self) -> np.ndarray:
        return self.lhs - self.l - self.h


def macroscopic_coefficients(
    f_now, f_prev, dt: float, basis: MomentBasis, torus: Torus,
    opL=None, epsilon: float | None = None, gamma_op=None,
) -> MacroCoefficients:
    basis.check_gram13()
    f_now = basis.grid.check(_values(f_now))
    f_prev = basis.grid.check(_values(f_prev))
    P1, _ = project_P(f_now, basis)
    P0, _ = project_P(f_prev, basis)
    m1 = f_now - P1
    m0 = f_prev - P0
    lhs = (P1 - P0) / dt + _stream(P1, basis.grid, torus)
    l_term = -(m1 - m0) / dt - _stream(m1, basis.grid, torus)
    if opL is not None:
        l_term = l_term - opL.apply(m1) / epsilon
    h_term = np.zeros_like(f_now) if gamma_op is None else gamma_op(f_now, f_now)
    return MacroCoefficients(
        lhs=moment13_coefficients(lhs, basis),
        l=moment13_coefficients(l_term, basis),
        h=moment13_coefficients(h_term, basis),
    )
