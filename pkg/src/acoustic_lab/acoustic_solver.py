"""Spectral solver for the linear acoustic system on the unit torus.

    d_t rho + div u           = 0
    d_t u   + grad(rho + theta) = 0
    d_t theta + (2/3) div u   = 0

In Fourier variables d_t U = -i A(kappa) U with kappa = 2 pi k.  A is
symmetric after the scaling D = diag(1, 1, 1, 1, 3/2), which is also the
weight of the conserved energy, so propagation is an exact unitary map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hydrodynamics import HydroState
from .io_formats import read_csv, write_csv
from .torus import Torus

SOUND_SPEED = np.sqrt(5.0 / 3.0)
FIELDS = ("rho", "u1", "u2", "u3", "theta")
ENERGY_WEIGHTS = np.array([1.0, 1.0, 1.0, 1.0, 1.5])
_SQ = np.sqrt(ENERGY_WEIGHTS)


def symbol_matrix(kappa) -> np.ndarray:
    """A(kappa) for an array of physical wave vectors with a leading axis of length 3."""
    kappa = np.asarray(kappa, dtype=float)
    A = np.zeros(kappa.shape[1:] + (5, 5))
    for i in range(3):
        A[..., 0, 1 + i] = kappa[i]
        A[..., 1 + i, 0] = kappa[i]
        A[..., 1 + i, 4] = kappa[i]
        A[..., 4, 1 + i] = 2.0 / 3.0 * kappa[i]
    return A


@dataclass(frozen=True)
class AcousticSymbol:
    """Symbol at one integer wave vector with its eigen-decomposition.

    ``vectors[:, j]`` is a right eigenvector of ``matrix`` with eigenvalue
    ``frequencies[j]``.
    """

    k: tuple
    matrix: np.ndarray
    frequencies: np.ndarray
    vectors: np.ndarray


def symbol_eigen(k) -> AcousticSymbol:
    k = tuple(int(c) for c in k) + (0,) * (3 - len(k))
    kappa = 2.0 * np.pi * np.array(k, dtype=float)
    A = symbol_matrix(kappa.reshape(3))
    lam, Q = np.linalg.eigh(_SQ[:, None] * A / _SQ[None, :])
    return AcousticSymbol(k=k, matrix=A, frequencies=lam, vectors=Q / _SQ[:, None])


@dataclass
class AcousticState:
    """Fourier coefficients (torus-normalized) of (rho, u, theta), shape (*torus.shape, 5)."""

    torus: Torus
    coeffs: np.ndarray
    t: float = 0.0

    @classmethod
    def from_hydro(cls, hydro: HydroState, torus: Torus, t: float = 0.0) -> "AcousticState":
        return cls(torus, torus.fft(hydro.as_array()), t)

    def to_hydro(self) -> HydroState:
        return HydroState.from_array(self.torus.ifft(self.coeffs))

    def scaled(self, c: float) -> "AcousticState":
        return AcousticState(self.torus, c * self.coeffs, self.t)


def _propagator(torus: Torus, t: float) -> np.ndarray:
    kappa = torus.wavevectors
    S = _SQ[:, None] * symbol_matrix(kappa) / _SQ[None, :]
    # the Nyquist mode of a real field has no consistent first derivative
    S[torus.nyquist] = 0.0
    lam, Q = np.linalg.eigh(S)
    phase = np.exp(-1j * t * lam)
    U = np.einsum("...ij,...j,...kj->...ik", Q, phase, Q)
    return U / _SQ[:, None] * _SQ[None, :]


def propagate(state: AcousticState, t: float) -> AcousticState:
    """exp(-i t A(kappa)) applied mode by mode; exact in time."""
    if t == 0:
        return AcousticState(state.torus, state.coeffs.copy(), state.t)
    U = _propagator(state.torus, t)
    return AcousticState(state.torus, np.einsum("...ij,...j->...i", U, state.coeffs), state.t + t)


def acoustic_energy(state: AcousticState, s: int = 0) -> float:
    """||rho||^2_{H^s} + ||u||^2_{H^s} + (3/2)||theta||^2_{H^s} with multiplier (1 + |kappa|^2)^s."""
    kappa2 = np.sum(state.torus.wavevectors**2, axis=0)
    mult = (1.0 + kappa2) ** s
    dens = np.abs(state.coeffs) ** 2 @ ENERGY_WEIGHTS
    return float(np.sum(mult * dens))


def sound_mode(torus: Torus, k=(1, 0, 0), amplitude: float = 1.0, direction: int = 1) -> HydroState:
    """Real plane sound wave travelling along +kappa (direction=1) or -kappa.

    Built from the eigenvector with frequency direction * c |kappa|, so it
    propagates as a pure phase shift.
    """
    sym = symbol_eigen(k)
    j = int(np.argmax(direction * sym.frequencies))
    vec = sym.vectors[:, j].real
    vec = vec / vec[0]
    phase = 2.0 * np.pi * np.tensordot(np.array(sym.k[: torus.d], dtype=float), torus.coords, axes=1)
    fields = amplitude * np.cos(phase)[..., None] * vec
    return HydroState.from_array(fields)


def write_fourier_csv(path, state: AcousticState, comments=None) -> None:
    modes = state.torus.modes[: state.torus.d].reshape(state.torus.d, -1).T.astype(int)
    c = state.coeffs.reshape(-1, 5)
    rows = []
    for idx, k in enumerate(modes):
        kstr = " ".join(str(x) for x in k)
        for j, name in enumerate(FIELDS):
            rows.append([kstr, name, c[idx, j].real, c[idx, j].imag])
    write_csv(path, ["k", "field", "re", "im"], rows, comments)


def read_fourier_csv(path, torus: Torus, t: float = 0.0) -> AcousticState:
    _, rows, _ = read_csv(path)
    coeffs = np.zeros(torus.shape + (5,), dtype=complex)
    n = torus.n
    for kstr, name, re, im in rows:
        k = tuple(int(x) % n for x in kstr.split())
        coeffs[k + (FIELDS.index(name),)] = complex(float(re), float(im))
    return AcousticState(torus, coeffs, t)


def write_hydro_csv(path, hydro: HydroState, torus: Torus, comments=None) -> None:
    """Physical-space snapshot: grid index, x, rho, u1, u2, u3, theta."""
    arr = hydro.as_array().reshape(-1, 5)
    x = torus.coords.reshape(torus.d, -1).T
    rows = []
    for idx in range(arr.shape[0]):
        xs = " ".join(format(float(c), ".17g") for c in x[idx])
        rows.append([idx, xs, *arr[idx]])
    write_csv(path, ["index", "x", "rho", "u1", "u2", "u3", "theta"], rows, comments)


def read_hydro_csv(path, torus: Torus) -> HydroState:
    _, rows, _ = read_csv(path)
    arr = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(torus.shape + (5,))
    return HydroState.from_array(arr)
