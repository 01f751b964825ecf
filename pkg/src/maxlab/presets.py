"""Named coefficient sets and initial data used by the command line and the tests."""

from __future__ import annotations

import math

import numpy as np

from maxlab.errors import ConfigError
from maxlab.fields import CoefficientSet, FieldState, TorusGrid, field_parity
from maxlab.norms import sobolev_norm
from maxlab.reflect import geodesic_coefficients
from maxlab.spectral import spectral

COEFFICIENT_PRESETS = ("flat", "smooth", "kink", "metric")
DATA_PRESETS = ("standing-wave", "random", "packet", "zero", "charged", "kerr-small")


def _angle(x: np.ndarray, length: float) -> np.ndarray:
    return 2 * np.pi * x / length


def coefficient_preset(name: str, grid: TorusGrid) -> CoefficientSet:
    """Even coefficients on ``grid``.

    ``flat``: vacuum. ``smooth``: smooth variable ``eps``, ``mu`` and tangential
    metric. ``kink``: permittivity linear in the distance to the boundary, so
    its even extension is Lipschitz with a kink on the boundary plane.
    ``metric``: curved tangential metric with constant materials.
    """
    d, k = grid.dim, grid.normal_axis
    L = grid.length
    t0 = [j for j in range(d) if j != k][0]

    def xn(*mesh):
        return mesh[k]

    def xt(*mesh):
        return mesh[t0]

    if name == "flat":
        return CoefficientSet.flat(grid)
    if name == "smooth":
        return geodesic_coefficients(
            grid,
            g11=lambda *m: 1.0 + 0.2 * np.cos(_angle(xt(*m), L[t0])) ** 2,
            g12=0.0,
            g22=lambda *m: 1.0 + 0.1 * np.cos(_angle(xn(*m), L[k])),
            eps=lambda *m: 1.5 + 0.3 * np.cos(_angle(xt(*m), L[t0])) * np.cos(_angle(xn(*m), L[k])),
            mu=lambda *m: 1.2 + 0.1 * np.cos(2 * _angle(xn(*m), L[k])),
        )
    if name == "kink":
        return geodesic_coefficients(grid, eps=lambda *m: 1.5 + 0.4 * xn(*m) / (L[k] / 2), mu=1.0)
    if name == "metric":
        return geodesic_coefficients(
            grid,
            g11=lambda *m: 1.0 + 0.3 * np.sin(_angle(xn(*m), L[k])) ** 2,
            g12=lambda *m: 0.1 * np.cos(_angle(xt(*m), L[t0])) * np.cos(_angle(xn(*m), L[k])),
            g22=1.0,
        )
    raise ConfigError(f"unknown coefficient preset {name!r}")


def standing_wave(grid: TorusGrid, mode: int = 1, amplitude: float = 1.0, t: float = 0.0) -> FieldState:
    """Exact flat-space standing wave satisfying the conducting boundary condition.

    ``E(0)`` is a single divergence-free Fourier shell of radius ``omega``;
    ``E(t) = cos(omega t) E(0)`` and ``H(t) = -sin(omega t)/omega K* E(0)``.
    """
    d, k = grid.dim, grid.normal_axis
    mesh = grid.full_mesh()
    tang = [j for j in range(d) if j != k]
    a = [_angle(mesh[j], grid.length[j]) * mode for j in range(d)]
    E0 = np.zeros((d,) + grid.shape)
    if d == 2:
        E0[k] = amplitude * np.cos(a[tang[0]])
    else:
        E0[tang[1]] = amplitude * np.cos(a[tang[0]]) * np.sin(a[k])
    omega = standing_wave_frequency(grid, mode)
    sp = spectral(grid)
    KE = sp.curl(E0) if d == 3 else sp.curl2(E0)[None]
    return FieldState(grid, math.cos(omega * t) * E0, -math.sin(omega * t) / omega * KE, t)


def standing_wave_frequency(grid: TorusGrid, mode: int = 1) -> float:
    k = grid.normal_axis
    t0 = [j for j in range(grid.dim) if j != k][0]
    if grid.dim == 2:
        return 2 * np.pi * mode / grid.length[t0]
    return 2 * np.pi * mode * math.hypot(1 / grid.length[t0], 1 / grid.length[k])


def _symmetrize(comps: np.ndarray, parity, grid: TorusGrid) -> np.ndarray:
    return np.array([0.5 * (c + p * grid.mirror(c)) for c, p in zip(comps, parity)])


def random_data(grid: TorusGrid, seed: int, amplitude: float = 1.0, kmax: float | None = None,
                decay: float = 2.0) -> FieldState:
    """Smooth random data with the reflection parities, normalized to ``L^2`` norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    sp = spectral(grid)
    nh = 1 if grid.dim == 2 else 3
    cut = (min(np.pi / h for h in grid.spacing) / 3) if kmax is None else kmax
    weight = (1 + sp.k_abs**2) ** (-decay / 2) * (sp.k_abs <= cut)
    comps = []
    for _ in range(grid.dim + nh):
        F = (rng.standard_normal(sp.spectral_shape) + 1j * rng.standard_normal(sp.spectral_shape)) * weight
        comps.append(sp.ifft(F))
    pe, ph = field_parity(grid.dim, grid.normal_axis)
    comps = _symmetrize(np.array(comps), pe + ph, grid)
    comps *= amplitude / sobolev_norm(comps, 0, grid)
    return FieldState(grid, comps[:grid.dim], comps[grid.dim:])


def wave_packet(grid: TorusGrid, amplitude: float = 1.0, width: float | None = None,
                wavenumber: int = 3) -> FieldState:
    """Gaussian packet centred off the boundary plane, mirrored with the parities."""
    d, k = grid.dim, grid.normal_axis
    mesh = grid.full_mesh()
    w = min(grid.length) / 12 if width is None else width
    centre = [0.0] * d
    centre[k] = grid.length[k] / 6
    r2 = sum((m - c) ** 2 for m, c in zip(mesh, centre))
    bump = amplitude * np.exp(-r2 / (2 * w * w))
    t0 = [j for j in range(d) if j != k][0]
    E = np.zeros((d,) + grid.shape)
    E[k] = bump * np.cos(wavenumber * _angle(mesh[t0], grid.length[t0]))
    nh = 1 if d == 2 else 3
    H = np.zeros((nh,) + grid.shape)
    pe, ph = field_parity(d, k)
    comps = _symmetrize(np.concatenate([E, H]), pe + ph, grid)
    return FieldState(grid, comps[:d], comps[d:])


def charged_data(grid: TorusGrid, amplitude: float = 1.0) -> FieldState:
    """``E = grad(phi)`` with ``phi`` odd across the boundary, so ``div E = Lap phi`` is nonzero.

    An artifact-chosen charged family; ``H = 0``.
    """
    d, k = grid.dim, grid.normal_axis
    mesh = grid.full_mesh()
    t0 = [j for j in range(d) if j != k][0]
    phi = amplitude * np.sin(_angle(mesh[k], grid.length[k])) * np.cos(_angle(mesh[t0], grid.length[t0]))
    E = spectral(grid).grad(phi)
    nh = 1 if d == 2 else 3
    return FieldState(grid, E, np.zeros((nh,) + grid.shape))


def data_preset(name: str, grid: TorusGrid, seed: int = 0, amplitude: float = 1.0) -> FieldState:
    if name == "standing-wave":
        return standing_wave(grid, 1, amplitude)
    if name == "random":
        return random_data(grid, seed, amplitude)
    if name == "packet":
        return wave_packet(grid, amplitude)
    if name == "zero":
        return FieldState.zeros(grid)
    if name == "charged":
        return charged_data(grid, amplitude)
    if name == "kerr-small":
        s = random_data(grid, seed, 1.0, kmax=4.0)
        return s.scaled(amplitude / sobolev_norm(s.components, 2, grid))
    raise ConfigError(f"unknown data preset {name!r}")
