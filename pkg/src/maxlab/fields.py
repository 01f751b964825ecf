"""Grids, field states and coefficient sets on the reflected torus.

Coordinates along every axis are ``x_j = -L/2 + j*h`` for ``j = 0..n-1``. The
boundary plane ``x_d = 0`` sits on the grid point ``j = n/2`` of the normal axis
and the reflection ``x_d -> -x_d`` is the index map ``j -> (n - j) mod n``. The
point ``j = 0`` (``x_d = -L/2``, identified with ``+L/2``) is a second mirror
plane, so the torus models the slab ``0 <= x_d <= L/2``; runs are set up so that
fields stay negligible near that far plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from maxlab import pointwise as pw
from maxlab.errors import EllipticityError, GridMismatch, RejectedInput

EVEN = 1
ODD = -1

COMPONENT_NAMES = {
    2: ("E1", "E2", "H"),
    3: ("E1", "E2", "E3", "H1", "H2", "H3"),
}


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid standing in for the reflected half-space.

    Parameters
    ----------
    n : tuple of int
        Points per axis, all even.
    length : tuple of float
        Period per axis. Along the normal axis this is twice the modelled
        slab thickness.
    normal_axis : int
        Axis orthogonal to the boundary plane (default: last axis).
    """

    n: tuple[int, ...]
    length: tuple[float, ...]
    normal_axis: int = -1

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        length = tuple(float(v) for v in np.atleast_1d(self.length))
        if len(length) == 1 and len(n) > 1:
            length = length * len(n)
        if len(n) not in (2, 3):
            raise RejectedInput(f"grid dimension must be 2 or 3, got {len(n)}")
        if len(length) != len(n):
            raise RejectedInput("n and length must have the same number of axes")
        if any(v < 4 or v % 2 for v in n):
            raise RejectedInput(f"points per axis must be even and >= 4, got {n}")
        if not all(np.isfinite(length)) or any(v <= 0 for v in length):
            raise RejectedInput(f"axis lengths must be positive, got {length}")
        axis = self.normal_axis % len(n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)
        object.__setattr__(self, "normal_axis", axis)

    @classmethod
    def cube(cls, dim: int, n: int, length: float = 2 * np.pi, normal_axis: int = -1) -> "TorusGrid":
        return cls((n,) * dim, (length,) * dim, normal_axis)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.length, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    @property
    def boundary_index(self) -> int:
        """Index of the boundary plane ``x_d = 0`` along the normal axis."""
        return self.n[self.normal_axis] // 2

    @property
    def boundary_area(self) -> float:
        return float(np.prod([L for i, L in enumerate(self.length) if i != self.normal_axis]))

    @property
    def boundary_cell_area(self) -> float:
        return float(np.prod([h for i, h in enumerate(self.spacing) if i != self.normal_axis]))

    def coords(self, axis: int) -> np.ndarray:
        n, L = self.n[axis], self.length[axis]
        return -L / 2 + np.arange(n) * (L / n)

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.n[axis]
            out.append(self.coords(axis).reshape(shape))
        return tuple(out)

    def full_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.broadcast_to(x, self.shape) for x in self.mesh())

    def wavenumbers(self, axis: int) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n[axis], d=self.spacing[axis])

    def mirror_index(self) -> np.ndarray:
        n = self.n[self.normal_axis]
        return (n - np.arange(n)) % n

    def mirror(self, f: np.ndarray) -> np.ndarray:
        """Reflect ``f`` across the boundary plane (trailing axes are spatial)."""
        axis = f.ndim - self.dim + self.normal_axis
        return np.take(f, self.mirror_index(), axis=axis)

    def half_indices(self) -> np.ndarray:
        """Normal-axis indices of the closed half ``0 <= x_d <= L/2``."""
        n = self.n[self.normal_axis]
        return np.concatenate([np.arange(n // 2, n), [0]])

    def half_coords(self) -> np.ndarray:
        n, L = self.n[self.normal_axis], self.length[self.normal_axis]
        return np.arange(n // 2 + 1) * (L / n)

    def half_shape(self) -> tuple[int, ...]:
        s = list(self.shape)
        s[self.normal_axis] = s[self.normal_axis] // 2 + 1
        return tuple(s)

    def half_mesh(self) -> tuple[np.ndarray, ...]:
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            c = self.half_coords() if axis == self.normal_axis else self.coords(axis)
            shape[axis] = c.size
            out.append(c.reshape(shape))
        return tuple(out)

    def refined(self, factor: float) -> "TorusGrid":
        n = tuple(int(round(v * factor / 2)) * 2 for v in self.n)
        return TorusGrid(n, self.length, self.normal_axis)

    def with_dim(self, extra_n: int, extra_length: float) -> "TorusGrid":
        """Append one periodic axis (used for the cylindrical lift)."""
        return TorusGrid(self.n + (extra_n,), self.length + (extra_length,), self.normal_axis)


def field_parity(dim: int, normal_axis: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Parities of (E components, H components) for a perfect conductor.

    Tangential E and normal H are odd, the rest even.
    """
    e = tuple(EVEN if j == normal_axis else ODD for j in range(dim))
    if dim == 2:
        return e, (EVEN,)
    h = tuple(ODD if j == normal_axis else EVEN for j in range(3))
    return e, h


def _check_same_grid(a: TorusGrid, b: TorusGrid) -> None:
    if a != b:
        raise GridMismatch(f"grid mismatch: {a} vs {b}")


@dataclass(eq=False)
class FieldState:
    """Electric and magnetic fields on a torus grid with parity tags.

    ``E`` has shape ``(d, *grid.shape)``; ``H`` has shape ``(1, *grid.shape)``
    in 2D and ``(3, *grid.shape)`` in 3D. Treat the arrays as read-only once
    spectra have been requested, or call :meth:`invalidate`.
    """

    grid: TorusGrid
    E: np.ndarray
    H: np.ndarray
    time: float = 0.0
    parity: tuple[int, ...] | None = None
    _spectra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d = self.grid.dim
        self.E = np.asarray(self.E, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        if self.H.shape == self.grid.shape and d == 2:
            self.H = self.H[None]
        nh = 1 if d == 2 else 3
        if self.E.shape != (d,) + self.grid.shape:
            raise RejectedInput(f"E must have shape {(d,) + self.grid.shape}, got {self.E.shape}")
        if self.H.shape != (nh,) + self.grid.shape:
            raise RejectedInput(f"H must have shape {(nh,) + self.grid.shape}, got {self.H.shape}")
        if self.parity is None:
            pe, ph = field_parity(d, self.grid.normal_axis)
            self.parity = pe + ph
        self.parity = tuple(int(p) for p in self.parity)
        if len(self.parity) != d + nh or any(p not in (EVEN, ODD) for p in self.parity):
            raise RejectedInput(f"invalid parity tags {self.parity}")

    @classmethod
    def zeros(cls, grid: TorusGrid, time: float = 0.0) -> "FieldState":
        nh = 1 if grid.dim == 2 else 3
        return cls(grid, np.zeros((grid.dim,) + grid.shape), np.zeros((nh,) + grid.shape), time)

    @property
    def names(self) -> tuple[str, ...]:
        return COMPONENT_NAMES[self.grid.dim]

    @property
    def components(self) -> np.ndarray:
        """All components stacked, shape ``(n_components, *grid.shape)``."""
        return np.concatenate([self.E, self.H], axis=0)

    def component(self, name: str) -> np.ndarray:
        return self.components[self.names.index(name)]

    def replace(self, E: np.ndarray | None = None, H: np.ndarray | None = None,
                time: float | None = None) -> "FieldState":
        return FieldState(
            self.grid,
            self.E if E is None else E,
            self.H if H is None else H,
            self.time if time is None else time,
            self.parity,
        )

    def copy(self) -> "FieldState":
        return FieldState(self.grid, self.E.copy(), self.H.copy(), self.time, self.parity)

    def invalidate(self) -> None:
        self._spectra.clear()

    def spectrum(self, index: int) -> np.ndarray:
        """Cached full FFT of component ``index``."""
        if index not in self._spectra:
            self._spectra[index] = np.fft.fftn(self.components[index])
        return self._spectra[index]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.E)) and np.all(np.isfinite(self.H)))

    def parity_defect(self) -> float:
        """Largest relative violation of the declared parities."""
        worst = 0.0
        scale = max(float(np.max(np.abs(self.components))), np.finfo(float).tiny)
        for f, p in zip(self.components, self.parity):
            worst = max(worst, float(np.max(np.abs(f - p * self.grid.mirror(f)))))
        return worst / scale

    def __add__(self, other: "FieldState") -> "FieldState":
        _check_same_grid(self.grid, other.grid)
        return self.replace(self.E + other.E, self.H + other.H)

    def __sub__(self, other: "FieldState") -> "FieldState":
        _check_same_grid(self.grid, other.grid)
        return self.replace(self.E - other.E, self.H - other.H)

    def scaled(self, c: float) -> "FieldState":
        return self.replace(c * self.E, c * self.H)


def _as_field(value, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        return np.full(shape, float(arr))
    return np.broadcast_to(arr, shape).astype(float)


@dataclass(eq=False)
class CoefficientSet:
    """Material and metric coefficients on the torus.

    Parameters
    ----------
    grid : TorusGrid
    eps : ndarray
        Permittivity, scalar field ``(*grid)`` or 2x2 matrix field
        ``(2, 2, *grid)`` (2D only).
    mu : ndarray
        Scalar permeability field.
    A : ndarray
        Jacobian factor with cometric ``g^{-1} = A A^T``, shape ``(d, d, *grid)``.
    h : ndarray
        Volume factor ``sqrt(g)``; equals ``1/det A`` for a consistent set.
    eps_prime, mu_prime : ndarray
        Conservative weights ``h A eps A^T`` and ``h A A^T mu`` (3D) or
        ``h mu`` (2D, scalar).
    truncation, lam : optional
        Provenance of frequency-truncated variants.
    """

    grid: TorusGrid
    eps: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    h: np.ndarray
    eps_prime: np.ndarray
    mu_prime: np.ndarray
    truncation: str | None = None
    lam: float | None = None

    @classmethod
    def from_factors(cls, grid: TorusGrid, eps=1.0, mu=1.0, A=None, h=None,
                     truncation: str | None = None, lam: float | None = None) -> "CoefficientSet":
        d, shape = grid.dim, grid.shape
        eps = np.asarray(eps, dtype=float)
        if eps.ndim >= 2 and eps.shape[:2] == (d, d) and eps.ndim == d + 2:
            if d != 2:
                raise RejectedInput("matrix permittivity is only supported in 2D")
            eps = np.broadcast_to(eps, (d, d) + shape).astype(float)
        else:
            eps = _as_field(eps, shape)
        mu = _as_field(mu, shape)
        A = pw.identity_field(d, shape) if A is None else np.broadcast_to(np.asarray(A, float), (d, d) + shape).astype(float)
        detA = pw.det(A)
        if np.any(detA <= 0):
            raise EllipticityError("Jacobian factor must have positive determinant")
        h = 1.0 / detA if h is None else _as_field(h, shape)
        ginv = pw.matmul(A, pw.transpose(A))
        if eps.ndim == d + 2:
            # tensor permittivity transforms covariantly: h A eps A^T
            eps_prime = h * pw.matmul(pw.matmul(A, eps), pw.transpose(A))
        else:
            eps_prime = h * eps * ginv
        mu_prime = h * mu if d == 2 else h * mu * ginv
        return cls(grid, eps, mu, A, h, eps_prime, mu_prime, truncation, lam)

    @classmethod
    def flat(cls, grid: TorusGrid, eps=1.0, mu=1.0) -> "CoefficientSet":
        return cls.from_factors(grid, eps, mu)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def ginv(self) -> np.ndarray:
        return pw.matmul(self.A, pw.transpose(self.A))

    @property
    def sqrt_g(self) -> np.ndarray:
        return self.h

    @property
    def g_lower(self) -> np.ndarray:
        return pw.inv(self.ginv)

    @property
    def eps_is_matrix(self) -> bool:
        return self.eps.ndim == self.grid.dim + 2

    @cached_property
    def eps_prime_inv(self) -> np.ndarray:
        return pw.inv(self.eps_prime)

    @cached_property
    def mu_prime_inv(self) -> np.ndarray:
        if self.dim == 2:
            return 1.0 / self.mu_prime
        return pw.inv(self.mu_prime)

    def eps_eigenvalues(self) -> np.ndarray:
        if self.eps_is_matrix:
            return pw.eigvalsh(self.eps)
        return self.eps[None]

    def ellipticity_bounds(self) -> tuple[float, float]:
        """Smallest and largest eigenvalue of eps and mu over all samples."""
        e = self.eps_eigenvalues()
        lo = min(float(e.min()), float(self.mu.min()))
        hi = max(float(e.max()), float(self.mu.max()))
        return lo, hi

    def validate(self, lower: float = 0.0, upper: float = np.inf) -> None:
        """Raise if ellipticity, geodesic normalization or evenness fail."""
        lo, hi = self.ellipticity_bounds()
        if not (lo > lower and hi <= upper) or not np.isfinite(hi):
            raise EllipticityError(f"coefficients outside ellipticity bounds: eig in [{lo}, {hi}]")
        g = self.ginv
        if np.any(pw.eigvalsh(g)[0] <= 0):
            raise EllipticityError("cometric is not positive definite")
        k = self.grid.normal_axis
        if self.truncation is None:
            if np.max(np.abs(g[k, k] - 1.0)) > 1e-12:
                raise EllipticityError("cometric normal-normal entry must equal 1")
            off = [g[k, j] for j in range(self.dim) if j != k]
            if off and max(float(np.max(np.abs(o))) for o in off) > 1e-12:
                raise EllipticityError("cometric must be block diagonal across the normal axis")
        if self.evenness_defect() > 1e-12:
            raise EllipticityError("coefficients are not even across the boundary plane")

    def evenness_defect(self) -> float:
        worst = 0.0
        for f in (self.eps, self.mu, self.A, self.h):
            scale = max(float(np.max(np.abs(f))), 1.0)
            worst = max(worst, float(np.max(np.abs(f - self.grid.mirror(f)))) / scale)
        return worst

    def max_wave_speed(self) -> float:
        """Upper bound for the propagation speed, used for the CFL condition."""
        if self.dim == 2:
            inv_e = pw.eigvalsh(self.eps_prime_inv)[-1]
            return float(np.sqrt(np.max(inv_e * self.mu_prime_inv)))
        inv_e = pw.eigvalsh(self.eps_prime_inv)[-1]
        inv_m = pw.eigvalsh(self.mu_prime_inv)[-1]
        return float(np.sqrt(np.max(inv_e) * np.max(inv_m)))
