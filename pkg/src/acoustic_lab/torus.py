"""The periodic unit torus T^d and its Fourier machinery."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Torus:
    """Uniform grid of ``n`` points per axis on [0, 1)^d."""

    d: int = 1
    n: int = 64

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("spatial dimension must be 1, 2 or 3")
        if self.n < 2:
            raise ValueError("need at least two points per axis")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @cached_property
    def coords(self) -> np.ndarray:
        """Point coordinates, shape (d, *shape)."""
        x = np.arange(self.n) / self.n
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wave-vector indices, shape (3, *shape); unused axes are 0."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        ks = np.meshgrid(*([k] * self.d), indexing="ij")
        out = np.zeros((3,) + self.shape)
        for i in range(self.d):
            out[i] = ks[i]
        return out

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Physical wave vectors 2 pi k, shape (3, *shape)."""
        return 2.0 * np.pi * self.modes

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Mask of modes whose derivative symbol is not Hermitian-resolvable."""
        if self.n % 2:
            return np.zeros(self.shape, dtype=bool)
        return np.any(np.abs(self.modes[: self.d]) == self.n // 2, axis=0)

    def fft(self, a: np.ndarray) -> np.ndarray:
        """Normalized coefficients (Parseval: mean |a|^2 = sum |a_k|^2) over the leading d axes."""
        return np.fft.fftn(a, axes=tuple(range(self.d))) / self.size

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(a * self.size, axes=tuple(range(self.d))).real

    def derivative(self, a: np.ndarray, alpha) -> np.ndarray:
        """Spectral d^alpha in x over the leading d axes of ``a``.

        Odd derivatives zero the Nyquist mode so real fields stay real.
        """
        alpha = tuple(alpha) + (0,) * (3 - len(alpha))
        if not any(alpha):
            return a
        sym = np.ones(self.shape, dtype=complex)
        for i, p in enumerate(alpha):
            if p:
                sym = sym * (1j * self.wavevectors[i]) ** p
        if sum(alpha) % 2:
            sym = np.where(self.nyquist, 0.0, sym)
        extra = a.ndim - self.d
        sym = sym.reshape(self.shape + (1,) * extra)
        return self.ifft(self.fft(a) * sym)

    def gradient(self, a: np.ndarray) -> np.ndarray:
        """(3, ...) spectral gradient; components along absent axes are zero."""
        out = np.zeros((3,) + a.shape)
        for i in range(self.d):
            alpha = [0, 0, 0]
            alpha[i] = 1
            out[i] = self.derivative(a, alpha)
        return out

    def mean(self, a: np.ndarray) -> np.ndarray:
        """Integral over the unit torus (mean over the leading d axes)."""
        return np.mean(a, axis=tuple(range(self.d)))

    def norm2(self, a: np.ndarray) -> float:
        """Squared L^2(T^d) norm summed over any trailing component axes."""
        return float(np.sum(self.mean(a * a)))
