"""Linearized collision operators, the bilinear term and the spectral gap.

Nodal velocity functions ``g`` are perturbations in sqrt(mu)-normalized form
(F = mu + sqrt(mu) g).  Operators act on the last axis.

Discretization notes
--------------------
* Angular integration happens in the collision frame of v - u (polar angle
  measured from v - u), Gauss-Legendre in cos(theta) on the upper hemisphere
  and uniform in azimuth.  The hemisphere suffices because omega and -omega
  give the same post-collision pair.  The angular kernel is normalized to
  unit mass on the sphere, so the loss term is exactly nu(v) * g.
* Off-grid values at v', u' come from a clamped trilinear stencil applied to
  g / sqrt(mu) and multiplied back by sqrt(mu) at the target point.  This
  reproduces sqrt(mu) exactly, so L sqrt(mu) = 0 and Gamma(sqrt(mu), sqrt(mu))
  = 0 hold before any correction.
* The raw quadrature is then made self-adjoint and conservative: L is
  symmetrized in the discrete inner product and compressed onto the
  orthogonal complement of the five invariants; Gamma has its invariant
  moments projected out (the least-squares conservative correction).
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import integrate, sparse

from . import _backend
from .errors import (
    AssemblyBudgetExceeded,
    GammaOutOfRange,
    GridMismatch,
    NonpositiveGap,
    NullspaceDefect,
    UnsupportedKernel,
)
from .velocity_space import VelocityGrid, collision_invariants

log = logging.getLogger(__name__)

TOL_SYM = 1e-10
TOL_NULL = 1e-6
TOL_PSD = 1e-8

ANGULAR_KERNELS = {
    "abs_cos": lambda c: np.abs(c),
    "cos2": lambda c: c * c,
}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "boltzmann"
    gamma: float = 1.0
    angular_kernel: str = "abs_cos"
    angular_nodes: int = 8
    impact_nodes: int = 8
    C_B: float = 1.0

    def __post_init__(self):
        if self.family not in ("boltzmann", "landau"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "boltzmann":
            check_gamma(self.gamma)
            if self.angular_kernel not in ANGULAR_KERNELS:
                raise ValueError(f"unknown angular kernel {self.angular_kernel!r}")
            c = np.linspace(-1.0, 1.0, 201)
            if np.any(ANGULAR_KERNELS[self.angular_kernel](c) > self.C_B * np.abs(c) + 1e-15):
                raise ValueError("angular kernel violates B(theta) <= C_B |cos theta|")
            if self.angular_nodes < 8 or self.impact_nodes < 8:
                raise ValueError("angular_nodes and impact_nodes must be >= 8")

    @property
    def tag(self) -> str:
        if self.family == "landau":
            return "landau"
        return f"boltzmann(gamma={self.gamma:g},B={self.angular_kernel},{self.impact_nodes}x{self.angular_nodes})"

    @property
    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


def check_gamma(gamma: float) -> None:
    if not (-3.0 < gamma <= 1.0):
        raise GammaOutOfRange(gamma)


def angular_quadrature(kernel: KernelSpec):
    """(cos_theta, weight, cos_phi, sin_phi) on the collision-frame hemisphere.

    Weights are per (theta, phi) node and sum to one.
    """
    x, w = np.polynomial.legendre.leggauss(kernel.impact_nodes)
    cth = 0.5 * (x + 1.0)
    wth = 0.5 * w
    phi = 2.0 * np.pi * np.arange(kernel.angular_nodes) / kernel.angular_nodes
    b = ANGULAR_KERNELS[kernel.angular_kernel](cth) * wth
    b = b / (b.sum() * kernel.angular_nodes)
    return cth, b, np.cos(phi), np.sin(phi)


# -- singular cell averages ---------------------------------------------------

def _box_average(func, degree: float, half_sides, order: int = 24) -> float:
    """Average over the box prod [-a_i, a_i] of a function homogeneous of ``degree``.

    The positive octant is split into three pyramids (one per dominant axis);
    in each the radial integral is exact and the remaining 2-D integrand is
    smooth.  ``func`` must be even in each coordinate.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    W = np.outer(wt, wt)
    a = np.asarray(half_sides, dtype=float)
    total = 0.0
    for i in range(3):
        j, k = [q for q in range(3) if q != i]
        pts = np.zeros(T1.shape + (3,))
        pts[..., i] = a[i]
        pts[..., j] = a[j] * T1
        pts[..., k] = a[k] * T2
        total += np.sum(W * func(pts))
    return total / (3.0 + degree)


def cell_speed_average(gamma: float, half_sides) -> float:
    """Mean of |x|^gamma over a velocity cell centred at the singularity."""
    return _box_average(lambda p: np.sum(p * p, axis=-1) ** (0.5 * gamma), gamma, half_sides)


def _half_sides(grid: VelocityGrid) -> np.ndarray:
    mesh = np.meshgrid(*grid.axis_weights, indexing="ij")
    return 0.5 * np.stack([m.ravel() for m in mesh], axis=-1)


def self_interaction(grid: VelocityGrid, gamma: float) -> np.ndarray:
    """Value used for |v - u|^gamma at coincident nodes."""
    if gamma > 0:
        return np.zeros(grid.size)
    if gamma == 0:
        return np.ones(grid.size)
    hs = _half_sides(grid)
    uniq, inv = np.unique(np.round(hs, 14), axis=0, return_inverse=True)
    vals = np.array([cell_speed_average(gamma, h) for h in uniq])
    return vals[np.ravel(inv)]


def relative_speed_matrix(grid: VelocityGrid, gamma: float) -> np.ndarray:
    """R[k, m] = |v_k - v_m|^gamma with the cell-averaged diagonal."""
    d = grid.nodes[:, None, :] - grid.nodes[None, :, :]
    r = np.sqrt(np.sum(d * d, axis=-1))
    with np.errstate(divide="ignore"):
        R = np.ones_like(r) if gamma == 0 else r**gamma
    np.fill_diagonal(R, self_interaction(grid, gamma))
    return R


# -- collision frequency and Landau diffusion matrix --------------------------

def _nu_radial(speed: float, gamma: float) -> float:
    # angular integral done in closed form; one radial quadrature remains
    r = float(speed)
    g2 = gamma + 2.0
    rad = lambda s: s * s * np.exp(-0.5 * s * s) / (2.0 * np.pi) ** 1.5
    if r < 1e-12:
        val, _ = integrate.quad(lambda s: rad(s) * s**gamma, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12)
        return 4.0 * np.pi * val

    def integrand(s):
        if s == 0.0:
            return 0.0
        return rad(s) * ((r + s) ** g2 - abs(r - s) ** g2) / (r * s * g2)

    upper = r + 40.0
    val, _ = integrate.quad(integrand, 0.0, upper, points=[r], limit=200, epsabs=1e-14, epsrel=1e-12)
    return 2.0 * np.pi * val


def collision_frequency(v, gamma: float):
    """nu(v) = int |v - v'|^gamma mu(v') dv' by adaptive radial quadrature.

    ``v`` is a 3-vector or an array of 3-vectors (last axis).
    """
    check_gamma(gamma)
    v = np.asarray(v, dtype=float)
    speeds = np.sqrt(np.sum(v * v, axis=-1))
    out = np.vectorize(lambda s: _nu_radial(s, gamma), otypes=[float])(speeds)
    return float(out) if out.ndim == 0 else out


def grid_collision_frequency(grid: VelocityGrid, gamma: float) -> np.ndarray:
    """nu at the grid nodes using the same u-quadrature as the assembled L."""
    check_gamma(gamma)
    R = relative_speed_matrix(grid, gamma)
    return R @ (grid.weights * grid.mu)


def landau_sigma(v) -> np.ndarray:
    """sigma_ij(v) = int phi_ij(v - u) mu(u) du.

    In spherical coordinates about v the 1/|v - u| singularity cancels
    against the Jacobian; the azimuthal integral is done in closed form,
    leaving a smooth 2-D integral in (r, cos) split into transverse and
    parallel parts.
    """
    v = np.asarray(v, dtype=float)
    R = float(np.linalg.norm(v))
    vhat = v / R if R > 0 else np.array([0.0, 0.0, 1.0])
    mu = lambda r, c: (2.0 * np.pi) ** -1.5 * np.exp(-0.5 * (R * R + r * r - 2.0 * r * R * c))

    def part(kind):
        if kind == "perp":
            f = lambda c, r: 2.0 * np.pi * r * mu(r, c) * 0.5 * (1.0 + c * c)
        else:
            f = lambda c, r: 2.0 * np.pi * r * mu(r, c) * (1.0 - c * c)
        lo = max(0.0, R - 40.0)
        pts = (R,) if R > 0 else None
        val, _ = integrate.quad(
            lambda r: integrate.quad(f, -1.0, 1.0, args=(r,), epsabs=1e-13, epsrel=1e-11)[0],
            lo, R + 40.0, points=pts, limit=200, epsabs=1e-13, epsrel=1e-11,
        )
        return val

    s_perp = part("perp")
    s_par = part("par")
    P = np.outer(vhat, vhat)
    return s_perp * (np.eye(3) - P) + s_par * P


def _phi(d: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(d * d, axis=-1))
    safe = np.where(r == 0, 1.0, r)
    out = (np.eye(3) - d[..., :, None] * d[..., None, :] / (safe**2)[..., None, None]) / safe[..., None, None]
    out[r == 0] = 0.0
    return out


def grid_landau_sigma(grid: VelocityGrid) -> np.ndarray:
    """sigma at every node (shape (n_v, 3, 3)) by grid quadrature.

    The coincident node contributes the cell average of phi, which is
    diagonal by the box symmetry.
    """
    wmu = grid.weights * grid.mu
    sig = np.zeros((grid.size, 3, 3))
    for k in range(grid.size):
        sig[k] = np.einsum("mij,m->ij", _phi(grid.nodes[k] - grid.nodes), wmu)
    hs = _half_sides(grid)
    uniq, inv = np.unique(np.round(hs, 14), axis=0, return_inverse=True)
    inv = np.ravel(inv)
    for q, h in enumerate(uniq):
        diag = [
            _box_average(
                lambda p, i=i: (1.0 - p[..., i] ** 2 / np.sum(p * p, axis=-1)) / np.sqrt(np.sum(p * p, axis=-1)),
                -1.0, h,
            )
            for i in range(3)
        ]
        sel = np.nonzero(inv == q)[0]
        sig[sel] += wmu[sel][:, None, None] * np.diag(diag)[None]
    return sig


# -- assembled linear operator -------------------------------------------------

@dataclass(eq=False)
class AssembledL:
    """Dense linearized collision operator on nodal values.

    ``matrix`` acts on g; ``sym`` is the same operator in the symmetric
    coordinates y = W^(1/2) g (W the quadrature weights).  ``raw`` keeps the
    unsymmetrized quadrature matrix when it was assembled in this process.
    """

    matrix: np.ndarray
    sym: np.ndarray
    kernel: KernelSpec
    grid: VelocityGrid
    dissipation: np.ndarray  # nu at nodes, or the sigma form in sym coordinates (landau)
    raw: np.ndarray | None = None
    raw_null_residual: float | None = None
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def n_v(self) -> int:
        return self.grid.size

    def apply(self, g: np.ndarray) -> np.ndarray:
        g = self.grid.check(g)
        return g @ self.matrix.T

    def quadratic_form(self, f, g=None) -> np.ndarray:
        g = f if g is None else g
        return np.sum(self.apply(f) * g * self.grid.weights, axis=-1)

    def dissipation_norm2(self, g) -> np.ndarray:
        """|g|_nu^2 (Boltzmann) or |g|_sigma^2 (Landau) over the last axis."""
        g = self.grid.check(g)
        if self.dissipation.ndim == 1:
            return np.sum(g * g * self.grid.weights * self.dissipation, axis=-1)
        y = g * np.sqrt(self.grid.weights)
        return np.sum((y @ self.dissipation) * y, axis=-1)

    @property
    def eig(self):
        """Eigenpairs of ``sym`` (ascending)."""
        if self._eig is None:
            lam, V = np.linalg.eigh(self.sym)
            self._eig = (lam, V)
        return self._eig

    def symmetry_defect(self) -> float:
        s = np.sqrt(self.grid.weights)
        S = s[:, None] * self.matrix / s[None, :]
        return float(np.max(np.abs(S - S.T)))

    def null_residual(self) -> float:
        """max over the five invariants of |L phi|_D / |phi|_D."""
        return max(
            float(np.sqrt(self.dissipation_norm2(self.apply(phi)) / self.dissipation_norm2(phi)))
            for phi in collision_invariants(self.grid)
        )

    def min_eigenvalue(self) -> float:
        return float(self.eig[0][0])

    def save(self, path) -> None:
        from .io_formats import write_operator_cache

        write_operator_cache(path, self.matrix, self.grid.digest, self.kernel.digest)


def _invariant_projector_sym(grid: VelocityGrid) -> np.ndarray:
    """Orthonormal basis (columns) of the invariant span in sym coordinates."""
    E = collision_invariants(grid).T * np.sqrt(grid.weights)[:, None]
    Qm, _ = np.linalg.qr(E)
    return Qm


def _compress(S: np.ndarray, U: np.ndarray) -> np.ndarray:
    """(I - U U^T) S (I - U U^T), exactly symmetric."""
    SU = S @ U
    out = S - SU @ U.T - U @ SU.T + U @ (U.T @ SU) @ U.T
    return 0.5 * (out + out.T)


def boltzmann_raw_matrix(grid: VelocityGrid, kernel: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Raw quadrature of L on nodal values, and nu at the nodes.

    (L g)_k = nu_k g_k + sum_m w_m R_km sqrt(mu_k mu_m) g_m - gain_k, with
    the gain assembled by the compiled kernel.
    """
    cth, bth, cphi, sphi = angular_quadrature(kernel)
    rself = self_interaction(grid, kernel.gamma)
    wmu = grid.weights * grid.mu
    M = _backend.kernels.gain_matrix(
        *[np.ascontiguousarray(a) for a in grid.axes],
        np.ascontiguousarray(grid.nodes), np.ascontiguousarray(wmu), float(kernel.gamma),
        rself, cth, np.ascontiguousarray(bth), cphi, sphi, bool(grid.uniform),
    )
    s = grid.sqrt_mu
    gain = s[:, None] * M / s[None, :]
    R = relative_speed_matrix(grid, kernel.gamma)
    nu = R @ wmu
    K1 = R * (grid.weights * s)[None, :] * s[:, None]
    raw = K1 - gain
    raw[np.diag_indices_from(raw)] += nu
    return raw, nu


def landau_form(grid: VelocityGrid) -> np.ndarray:
    """The discrete sigma quadratic form in sym coordinates.

    y^T S y = sum_k w_k [grad g^T sigma grad g + (v^T sigma v) g^2]_k with
    y = W^(1/2) g and centred/one-sided finite-difference gradients.
    """
    sig = grid_landau_sigma(grid)
    n = grid.counts
    D1 = []
    for a in grid.axes:
        m = len(a)
        G = np.zeros((m, m))
        for i in range(m):
            e = np.zeros(m)
            e[i] = 1.0
            G[:, i] = np.gradient(e, a, edge_order=1)
        D1.append(sparse.csr_matrix(G))
    eye = [sparse.identity(c, format="csr") for c in n]
    D = [
        sparse.kron(sparse.kron(D1[0], eye[1]), eye[2]).toarray(),
        sparse.kron(sparse.kron(eye[0], D1[1]), eye[2]).toarray(),
        sparse.kron(sparse.kron(eye[0], eye[1]), D1[2]).toarray(),
    ]
    w = grid.weights
    B = np.zeros((grid.size, grid.size))
    for i in range(3):
        for j in range(3):
            B += D[i].T @ ((w * sig[:, i, j])[:, None] * D[j])
    vsv = np.einsum("ki,kij,kj->k", grid.nodes, sig, grid.nodes)
    B[np.diag_indices_from(B)] += w * vsv
    s = 1.0 / np.sqrt(w)
    S = s[:, None] * B * s[None, :]
    return 0.5 * (S + S.T)


def assemble_L(
    grid: VelocityGrid,
    kernel: KernelSpec,
    tol_null: float = TOL_NULL,
    max_entries: int | None = None,
    check: bool = True,
) -> AssembledL:
    if max_entries is not None and grid.size**2 > max_entries:
        raise AssemblyBudgetExceeded(
            f"{grid.size}^2 = {grid.size**2} entries exceeds the budget of {max_entries}"
        )
    w = grid.weights
    sw = np.sqrt(w)
    U = _invariant_projector_sym(grid)
    raw = None
    if kernel.family == "boltzmann":
        raw, nu = boltzmann_raw_matrix(grid, kernel)
        S_raw = sw[:, None] * raw / sw[None, :]
        S = _compress(0.5 * (S_raw + S_raw.T), U)
        dissipation = nu
    else:
        if min(grid.counts) < 12:
            raise ValueError("landau assembly needs at least 12 nodes per axis")
        form = landau_form(grid)
        S = _compress(form, U)
        dissipation = form
    L = S * (1.0 / sw)[:, None] * sw[None, :]
    op = AssembledL(matrix=L, sym=S, kernel=kernel, grid=grid, dissipation=dissipation, raw=raw)
    if raw is not None:
        op.raw_null_residual = max(
            float(np.sqrt(op.dissipation_norm2(phi @ raw.T) / op.dissipation_norm2(phi)))
            for phi in collision_invariants(grid)
        )
        log.info("raw quadrature null residual %.3e (removed by the conservative correction)",
                 op.raw_null_residual)
    if check:
        res = op.null_residual()
        if res > tol_null:
            raise NullspaceDefect(f"invariant residual {res:.3e} exceeds tol_null {tol_null:.1e}")
    return op


def operator_from_matrix(matrix: np.ndarray, grid: VelocityGrid, kernel: KernelSpec) -> AssembledL:
    """Rebuild an AssembledL around a cached matrix."""
    if matrix.shape != (grid.size, grid.size):
        raise GridMismatch("cached operator does not match the grid")
    sw = np.sqrt(grid.weights)
    S = sw[:, None] * matrix / sw[None, :]
    S = 0.5 * (S + S.T)
    if kernel.family == "boltzmann":
        dissipation = grid_collision_frequency(grid, kernel.gamma)
    else:
        dissipation = landau_form(grid)
    return AssembledL(matrix=matrix, sym=S, kernel=kernel, grid=grid, dissipation=dissipation)


# -- bilinear collision operator ------------------------------------------------

class GammaOperator:
    """Gamma(f, g) = mu^(-1/2) Q(sqrt(mu) f, sqrt(mu) g) on a fixed grid."""

    def __init__(self, grid: VelocityGrid, kernel: KernelSpec):
        if kernel.family != "boltzmann":
            raise UnsupportedKernel("Gamma is implemented for the Boltzmann family only")
        self.grid = grid
        self.kernel = kernel
        self._quad = angular_quadrature(kernel)
        self._rself = self_interaction(grid, kernel.gamma)
        self._wmu = np.ascontiguousarray(grid.weights * grid.mu)
        R = relative_speed_matrix(grid, kernel.gamma)
        self._loss = R * (grid.weights * grid.sqrt_mu)[None, :]
        self._U = collision_invariants(grid).T * np.sqrt(grid.weights)[:, None]
        self._U, _ = np.linalg.qr(self._U)

    def gain(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        grid = self.grid
        lead = f.shape[:-1]
        s = grid.sqrt_mu
        hf = np.ascontiguousarray((f / s).reshape(-1, grid.size).T)
        hg = np.ascontiguousarray((g / s).reshape(-1, grid.size).T)
        cth, bth, cphi, sphi = self._quad
        G = _backend.kernels.gain_bilinear(
            *[np.ascontiguousarray(a) for a in grid.axes],
            np.ascontiguousarray(grid.nodes), self._wmu, float(self.kernel.gamma),
            self._rself, cth, np.ascontiguousarray(bth), cphi, sphi, bool(grid.uniform), hf, hg,
        )
        return (s[:, None] * G).T.reshape(lead + (grid.size,))

    def loss(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return f * (g @ self._loss.T)

    def project_out_invariants(self, q: np.ndarray) -> np.ndarray:
        sw = np.sqrt(self.grid.weights)
        y = q * sw
        y = y - (y @ self._U) @ self._U.T
        return y / sw

    def __call__(self, f, g, conservative: bool = True) -> np.ndarray:
        f = self.grid.check(np.asarray(f, dtype=float))
        g = self.grid.check(np.asarray(g, dtype=float))
        f, g = np.broadcast_arrays(f, g)
        out = self.gain(f, g) - self.loss(f, g)
        if conservative:
            out = self.project_out_invariants(out)
        return out


def gamma_bilinear(f, g, kernel: KernelSpec, grid: VelocityGrid, conservative: bool = True) -> np.ndarray:
    return GammaOperator(grid, kernel)(f, g, conservative=conservative)


# -- coercivity ------------------------------------------------------------------

@dataclass(frozen=True)
class CoercivityReport:
    delta: float
    n_v: int
    kernel: str


def microscopic_basis(grid: VelocityGrid) -> np.ndarray:
    """Orthonormal basis (sym coordinates) of the complement of the invariants."""
    E = collision_invariants(grid).T * np.sqrt(grid.weights)[:, None]
    Qfull, _ = np.linalg.qr(E, mode="complete")
    return Qfull[:, E.shape[1]:]


def coercivity_delta(opL: AssembledL) -> CoercivityReport:
    """Smallest <Lf, f> / |(I-P) f|_D^2 over microscopic f."""
    Z = microscopic_basis(opL.grid)
    A = Z.T @ opL.sym @ Z
    if opL.dissipation.ndim == 1:
        B = Z.T @ (opL.dissipation[:, None] * Z)
    else:
        B = Z.T @ opL.dissipation @ Z
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    delta = float(sla.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])[0])
    if not delta > 0:
        raise NonpositiveGap(f"measured coercivity constant {delta:.3e} is not positive")
    return CoercivityReport(delta=delta, n_v=opL.n_v, kernel=opL.kernel.tag)
