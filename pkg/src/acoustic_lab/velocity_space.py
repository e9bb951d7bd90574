"""Truncated velocity grids, the global Maxwellian and weighted inner products.

Velocity functions are plain numpy arrays whose last axis runs over the grid
nodes (flattened C-order over the three velocity axes).  Leading axes are
free, so a whole phase-space field ``f[x..., v]`` can be passed anywhere a
single velocity function is accepted.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatch, MomentResidualTooLarge

RULES = ("uniform-midpoint", "gauss-hermite")
TOL_MOMENT = 1e-5


def maxwellian(v) -> np.ndarray:
    """(2 pi)^(-3/2) exp(-|v|^2 / 2), evaluated over the last axis of ``v``."""
    v = np.asarray(v, dtype=float)
    return (2.0 * np.pi) ** -1.5 * np.exp(-0.5 * np.sum(v * v, axis=-1))


@dataclass(frozen=True)
class WeightFn:
    """The polynomial weight w(v) = (1 + |v|^2)^(1/2) raised to ``power``."""

    power: float = 1.0

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return (1.0 + np.sum(v * v, axis=-1)) ** (0.5 * self.power)


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    axis_weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    extent: float
    rule: str = "uniform-midpoint"
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        wmesh = np.meshgrid(*self.axis_weights, indexing="ij")
        weights = (wmesh[0] * wmesh[1] * wmesh[2]).ravel()
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def counts(self) -> tuple[int, int, int]:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def mu(self) -> np.ndarray:
        return maxwellian(self.nodes)

    @cached_property
    def sqrt_mu(self) -> np.ndarray:
        return np.sqrt(self.mu)

    @cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.nodes**2, axis=-1)

    @cached_property
    def uniform(self) -> bool:
        return all(np.allclose(np.diff(a), a[1] - a[0], rtol=0, atol=1e-13) for a in self.axes)

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.rule.encode())
        for a, w in zip(self.axes, self.axis_weights):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(w, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def reshape(self, f: np.ndarray) -> np.ndarray:
        """View the trailing node axis as the three velocity axes."""
        return f.reshape(f.shape[:-1] + self.counts)

    def check(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-1] != self.size:
            raise GridMismatch(
                f"velocity axis has {f.shape[-1]} samples, grid has {self.size} nodes"
            )
        return f

    def integrate(self, f) -> np.ndarray:
        """Quadrature of ``f`` over velocity space (last axis)."""
        return self.check(f) @ self.weights

    def __eq__(self, other):
        return isinstance(other, VelocityGrid) and self.digest == other.digest

    def __hash__(self):
        return hash(self.digest)


def _axis_rule(V_max: float, n: int, rule: str) -> tuple[np.ndarray, np.ndarray]:
    if rule == "uniform-midpoint":
        h = 2.0 * V_max / n
        x = -V_max + h * (np.arange(n) + 0.5)
        # enforce exact +-v symmetry of the node set
        x = 0.5 * (x - x[::-1])
        return x, np.full(n, h)
    if rule == "gauss-hermite":
        x, w = np.polynomial.hermite_e.hermegauss(n)
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1]) * np.exp(0.5 * x * x)
        return x, w
    raise ValueError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")


def gaussian_moment(powers) -> float:
    """Closed-form moment E[V1^a V2^b V3^c] of a standard 3-D Gaussian."""
    out = 1.0
    for p in powers:
        if p % 2:
            return 0.0
        out *= float(np.prod(np.arange(p - 1, 0, -2))) if p else 1.0
    return out


def moment_residuals(grid: VelocityGrid) -> dict[str, float]:
    """Mass, momentum and energy defects of the discrete Maxwellian."""
    mu = grid.mu
    return {
        "mass": abs(grid.integrate(mu) - 1.0),
        "momentum": float(np.linalg.norm(grid.integrate(grid.nodes.T * mu))),
        "energy": abs(grid.integrate(grid.speed2 * mu) - 3.0),
    }


def polynomial_moment_defect(grid: VelocityGrid, max_degree: int = 4) -> float:
    """Largest quadrature error over monomials of total degree <= max_degree."""
    worst = 0.0
    mu = grid.mu
    v = grid.nodes
    for a in range(max_degree + 1):
        for b in range(max_degree + 1 - a):
            for c in range(max_degree + 1 - a - b):
                val = grid.integrate(v[:, 0] ** a * v[:, 1] ** b * v[:, 2] ** c * mu)
                worst = max(worst, abs(val - gaussian_moment((a, b, c))))
    return worst


def build_grid(
    V_max: float = 6.0,
    counts=(16, 16, 16),
    rule: str = "uniform-midpoint",
    tol_moment: float = TOL_MOMENT,
    check: bool = True,
) -> VelocityGrid:
    """Tensor velocity grid on [-V_max, V_max]^3.

    For ``gauss-hermite`` the nodes are the probabilists' Hermite roots and
    ``V_max`` is ignored; ``extent`` records the outermost node instead.
    Raises MomentResidualTooLarge naming the first offending moment.
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3:
        raise ValueError("counts must have three entries")
    if V_max <= 0:
        raise ValueError("V_max must be positive")
    for c in counts:
        if c < 4 or c % 2:
            raise ValueError(f"each count must be even and >= 4, got {counts}")
    pairs = [_axis_rule(V_max, n, rule) for n in counts]
    extent = V_max if rule == "uniform-midpoint" else max(float(p[0][-1]) for p in pairs)
    grid = VelocityGrid(
        axes=tuple(p[0] for p in pairs),
        axis_weights=tuple(p[1] for p in pairs),
        extent=float(extent),
        rule=rule,
    )
    if check:
        for name, res in moment_residuals(grid).items():
            if not res <= tol_moment:
                raise MomentResidualTooLarge(name, res, tol_moment)
    return grid


def weighted_inner(f, g, grid: VelocityGrid, weight=None) -> np.ndarray:
    """Sum_k weights_k * weight(v_k) * f_k * g_k over the node axis.

    ``weight`` may be None, a WeightFn, or an array of nodal values (e.g. the
    collision frequency).  Leading axes broadcast.
    """
    f = grid.check(f)
    g = grid.check(g)
    if weight is None:
        wv = grid.weights
    elif isinstance(weight, WeightFn):
        wv = grid.weights * weight(grid.nodes)
    else:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (grid.size,):
            raise GridMismatch("weight array does not match the grid")
        wv = grid.weights * weight
    return np.sum(f * g * wv, axis=-1)


def collision_invariants(grid: VelocityGrid) -> np.ndarray:
    """The five functions sqrt(mu) * [1, v1, v2, v3, |v|^2] as rows."""
    s = grid.sqrt_mu
    v = grid.nodes
    return np.stack([s, v[:, 0] * s, v[:, 1] * s, v[:, 2] * s, grid.speed2 * s])


def velocity_derivative(f: np.ndarray, grid: VelocityGrid, beta) -> np.ndarray:
    """Apply d^beta in v by repeated finite differences.

    Centered differences in the interior and first-order one-sided
    differences at the box faces (np.gradient, edge_order=1).
    """
    f = grid.check(f)
    if not any(beta):
        return f
    lead = f.ndim - 1
    out = grid.reshape(f)
    for ax, order in enumerate(beta):
        for _ in range(order):
            out = np.gradient(out, grid.axes[ax], axis=lead + ax, edge_order=1)
    return out.reshape(f.shape)
