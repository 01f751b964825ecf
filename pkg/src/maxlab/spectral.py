"""FFT-based differential operators on a :class:`TorusGrid`.

Transforms use the real-to-complex layout of ``scipy.fft.rfftn`` over the
trailing spatial axes. First-derivative multipliers zero the Nyquist
wavenumber so that derivatives of real fields stay real and odd multipliers
stay odd under ``k -> -k``; every derivative of order ``m`` is the ``m``-th
power of that multiplier, which keeps discrete identities such as
``div curl = 0`` and ``div grad = laplacian`` exact up to roundoff.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from maxlab.fields import TorusGrid

_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of threads used inside each FFT (results do not depend on it)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


class Spectral:
    """Spectral derivative operators for one grid."""

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        d = grid.dim
        self.axes = tuple(range(-d, 0))
        ks, iks = [], []
        for axis in range(d):
            n = grid.n[axis]
            if axis == d - 1:
                k = 2 * np.pi * np.fft.rfftfreq(n, d=grid.spacing[axis])
            else:
                k = grid.wavenumbers(axis)
            knz = k.copy()
            knz[np.abs(np.abs(k) - np.pi / grid.spacing[axis]) < 1e-9 * np.pi / grid.spacing[axis]] = 0.0
            shape = [1] * d
            shape[axis] = k.size
            ks.append(k.reshape(shape))
            iks.append(1j * knz.reshape(shape))
        self.k = ks
        self.ik = iks
        self.spectral_shape = tuple(np.broadcast_shapes(*[k.shape for k in ks]))
        self.k_abs = np.sqrt(sum(k**2 for k in ks))
        last = grid.n[-1]
        w = np.full(last // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * d
        shape[-1] = w.size
        self.rfft_weights = np.broadcast_to(w.reshape(shape), self.spectral_shape)

    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self.axes, workers=_WORKERS)

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.grid.shape, axes=self.axes, workers=_WORKERS)

    def apply_multiplier(self, f: np.ndarray, m: np.ndarray) -> np.ndarray:
        return self.ifft(m * self.fft(f))

    def deriv(self, f: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        return self.ifft(self.ik[axis] ** order * self.fft(f))

    def grad(self, f: np.ndarray) -> np.ndarray:
        F = self.fft(f)
        return np.stack([self.ifft(ik * F) for ik in self.ik])

    def div(self, v: np.ndarray) -> np.ndarray:
        F = sum(self.ik[i] * self.fft(v[i]) for i in range(self.grid.dim))
        return self.ifft(F)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(sum(ik**2 for ik in self.ik) * self.fft(f))

    def curl(self, v: np.ndarray) -> np.ndarray:
        """Curl of a 3-vector field on a 3D grid."""
        V = [self.fft(v[i]) for i in range(3)]
        ik = self.ik
        return np.stack([
            self.ifft(ik[1] * V[2] - ik[2] * V[1]),
            self.ifft(ik[2] * V[0] - ik[0] * V[2]),
            self.ifft(ik[0] * V[1] - ik[1] * V[0]),
        ])

    def curl2(self, v: np.ndarray) -> np.ndarray:
        """Scalar curl ``d1 v2 - d2 v1`` of a planar vector field."""
        return self.ifft(self.ik[0] * self.fft(v[1]) - self.ik[1] * self.fft(v[0]))

    def perp_grad(self, f: np.ndarray) -> np.ndarray:
        """``(d2 f, -d1 f)``, the adjoint of :meth:`curl2`."""
        F = self.fft(f)
        return np.stack([self.ifft(self.ik[1] * F), self.ifft(-self.ik[0] * F)])


@lru_cache(maxsize=32)
def spectral(grid: TorusGrid) -> Spectral:
    return Spectral(grid)
