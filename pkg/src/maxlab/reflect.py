"""Reflection across the boundary plane and boundary compatibility checks.

Half-space samples cover the closed interval ``0 <= x_d <= L/2`` of the normal
axis (``n/2 + 1`` points). Extension mirrors them onto the torus with sign
``+1`` (even) or ``-1`` (odd). Odd extension writes exact zeros on the boundary
plane and on the far mirror plane ``x_d = L/2``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from maxlab import pointwise as pw
from maxlab.errors import CompatibilityError, EllipticityError, RejectedInput, UnsupportedCondition
from maxlab.fields import (COMPONENT_NAMES, EVEN, ODD, CoefficientSet, FieldState, TorusGrid,
                           field_parity)
from maxlab.spectral import spectral

log = logging.getLogger(__name__)

TRACE_TOL = 1e-10


def parity_name(p: int) -> str:
    return "even" if p == EVEN else "odd"


@dataclass(frozen=True)
class ParityPlan:
    """Parity of every physical quantity under the reflection of the normal axis."""

    dim: int
    normal_axis: int
    E: tuple[int, ...]
    H: tuple[int, ...]
    J: tuple[int, ...]
    rho: int = ODD
    coefficients: int = EVEN

    @classmethod
    def standard(cls, dim: int, normal_axis: int = -1) -> "ParityPlan":
        k = normal_axis % dim
        e, h = field_parity(dim, k)
        return cls(dim, k, e, h, e)

    @classmethod
    def for_grid(cls, grid: TorusGrid) -> "ParityPlan":
        return cls.standard(grid.dim, grid.normal_axis)

    @property
    def fields(self) -> tuple[int, ...]:
        return self.E + self.H

    def as_dict(self) -> dict[str, str]:
        out = {name: parity_name(p) for name, p in zip(COMPONENT_NAMES[self.dim], self.fields)}
        out.update({f"J{i + 1}": parity_name(p) for i, p in enumerate(self.J)})
        out["rho"] = parity_name(self.rho)
        return out


PLAN_2D = ParityPlan.standard(2)
PLAN_3D = ParityPlan.standard(3)


def _normal_axis_of(arr: np.ndarray, grid: TorusGrid) -> int:
    return arr.ndim - grid.dim + grid.normal_axis


def boundary_trace(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Restriction of a torus field to the boundary plane."""
    return np.take(f, grid.boundary_index, axis=_normal_axis_of(f, grid))


def restrict_to_half(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return np.take(f, grid.half_indices(), axis=_normal_axis_of(f, grid))


def extend_half_to_torus(half: np.ndarray, parity: int, grid: TorusGrid, name: str = "field",
                         tol: float = TRACE_TOL) -> np.ndarray:
    """Mirror half-space samples onto the torus.

    Parameters
    ----------
    half : ndarray
        Samples with trailing spatial shape ``grid.half_shape()``.
    parity : int
        ``EVEN`` (+1) or ``ODD`` (-1).

    Raises
    ------
    CompatibilityError
        Odd parity requested for data whose boundary trace exceeds ``tol``.
    """
    half = np.asarray(half, dtype=float)
    if half.shape[half.ndim - grid.dim:] != grid.half_shape():
        raise RejectedInput(f"half field must have trailing shape {grid.half_shape()}, got {half.shape}")
    if parity not in (EVEN, ODD):
        raise RejectedInput(f"parity must be +1 or -1, got {parity}")
    ax = _normal_axis_of(half, grid)
    n = grid.n[grid.normal_axis]
    m = n // 2
    if parity == ODD:
        trace = float(np.max(np.abs(np.take(half, 0, axis=ax))))
        if trace > tol:
            raise CompatibilityError(f"{name}: odd extension of data with boundary trace {trace:.3e}", (name,))
        far = float(np.max(np.abs(np.take(half, m, axis=ax))))
        if far > tol:
            log.warning("%s: nonzero samples (%.3e) on the far mirror plane are replaced by 0", name, far)
    idx = np.empty(n, dtype=int)
    sign = np.ones(n)
    for j in range(n):
        if j >= m:
            idx[j] = j - m
        elif j == 0:
            idx[j] = m
            sign[j] = parity
        else:
            idx[j] = m - j
            sign[j] = parity
    out = np.take(half, idx, axis=ax)
    shape = [1] * out.ndim
    shape[ax] = n
    out = out * sign.reshape(shape)
    if parity == ODD:
        sl = [slice(None)] * out.ndim
        for j in (0, m):
            sl[ax] = j
            out[tuple(sl)] = 0.0
    return out


@dataclass
class HalfState:
    """Field samples on the closed half-space part of a grid."""

    grid: TorusGrid
    E: np.ndarray
    H: np.ndarray
    time: float = 0.0

    @classmethod
    def from_state(cls, state: FieldState) -> "HalfState":
        g = state.grid
        return cls(g, restrict_to_half(state.E, g), restrict_to_half(state.H, g), state.time)


def extend_state(half_state: HalfState, plan: ParityPlan | None = None) -> FieldState:
    """Extend every component by its parity; all trace violations are reported together."""
    grid = half_state.grid
    plan = plan or ParityPlan.for_grid(grid)
    if plan.dim != grid.dim or plan.normal_axis != grid.normal_axis:
        raise RejectedInput("parity plan does not match the grid")
    names = COMPONENT_NAMES[grid.dim]
    E = np.asarray(half_state.E, dtype=float)
    H = np.asarray(half_state.H, dtype=float)
    if grid.dim == 2 and H.ndim == grid.dim:
        H = H[None]
    comps = list(E) + list(H)
    bad, out = [], []
    for name, f, p in zip(names, comps, plan.fields):
        try:
            out.append(extend_half_to_torus(f, p, grid, name))
        except CompatibilityError:
            bad.append(name)
    if bad:
        raise CompatibilityError(f"boundary traces incompatible with the parity plan: {', '.join(bad)}", tuple(bad))
    d = grid.dim
    return FieldState(grid, np.stack(out[:d]), np.stack(out[d:]), half_state.time, plan.fields)


def _plane_l2(r: np.ndarray, grid: TorusGrid) -> float:
    return float(np.sqrt(grid.boundary_cell_area * np.sum(r**2)))


def _check_mu_boundary(coeffs: CoefficientSet, tol: float = 1e-6) -> None:
    """Raise unless the permeability has vanishing gradient on the boundary plane."""
    grid = coeffs.grid
    sp = spectral(grid)
    mu = coeffs.mu
    scale = max(1.0, float(np.max(np.abs(mu))))
    for axis in range(grid.dim):
        if axis == grid.normal_axis:
            continue
        if float(np.max(np.abs(boundary_trace(sp.deriv(mu, axis), grid)))) > tol * scale:
            raise UnsupportedCondition("second-order conditions need a permeability with zero boundary gradient")
    half = restrict_to_half(mu, grid)
    ax = _normal_axis_of(half, grid)
    hn = grid.spacing[grid.normal_axis]
    m0, m1, m2 = (np.take(half, j, axis=ax) for j in range(3))
    one_sided = (-3 * m0 + 4 * m1 - m2) / (2 * hn)
    if float(np.max(np.abs(one_sided))) > max(tol, 4 * hn**2) * scale:
        raise UnsupportedCondition("second-order conditions need a permeability with zero normal derivative")


def compatibility_residuals(state: FieldState, coeffs: CoefficientSet | None = None, order: int = 0,
                            dim: int | None = None) -> list[tuple[str, int, float]]:
    """Boundary-plane L2 norms of the compatibility conditions up to ``order``.

    Derivatives are spectral; traces restrict the result to the boundary plane.
    Second-order conditions need ``coeffs`` and assume the permeability has
    zero gradient on the boundary.

    Returns
    -------
    list of (condition id, order, residual)
    """
    grid = state.grid
    dim = grid.dim if dim is None else dim
    if dim != grid.dim:
        raise RejectedInput("dimension does not match the state")
    if order not in (0, 1, 2):
        raise RejectedInput("order must be 0, 1 or 2")
    sp = spectral(grid)
    k = grid.normal_axis
    tang = [j for j in range(dim) if j != k]
    out: list[tuple[str, int, float]] = []

    def add(cid: str, o: int, field_: np.ndarray) -> None:
        out.append((cid, o, _plane_l2(boundary_trace(field_, grid), grid)))

    E, H = state.E, state.H
    for j in tang:
        add(f"E{j + 1}", 0, E[j])
    if dim == 3:
        add(f"H{k + 1}", 0, H[k])
    if order >= 1:
        if dim == 3:
            for j in tang:
                add(f"d{k + 1}H{j + 1}", 1, sp.deriv(H[j], k))
        else:
            add(f"d{k + 1}H", 1, sp.deriv(H[0], k))
    if order >= 2:
        if coeffs is None:
            raise RejectedInput("second-order conditions need coefficients")
        _check_mu_boundary(coeffs)
        inv_sqrt_g = 1.0 / coeffs.sqrt_g
        if dim == 2:
            add(f"d{k + 1}(curlE/sqrt_g)", 2, sp.deriv(inv_sqrt_g * sp.curl2(E), k))
        else:
            if k != 2:
                raise UnsupportedCondition("3D second-order conditions are implemented for the last normal axis")
            g = coeffs.g_lower
            c1 = sp.deriv(E[2], 1) - sp.deriv(E[1], 2)
            c2 = sp.deriv(E[0], 2) - sp.deriv(E[2], 0)
            for i in (0, 1):
                X = inv_sqrt_g * (g[i, 0] * c1 + g[i, 1] * c2)
                add(f"d3(g{i + 1}j curlE_j/sqrt_g)", 2, sp.deriv(X, 2))
    return out


def compat_csv(rows: list[tuple[str, int, float]], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "order", "residual"])
    for cid, o, r in rows:
        w.writerow([cid, o, format(r, ".17g")])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


Profile = float | np.ndarray | Callable[..., np.ndarray]


def _sample_half(value: Profile, grid: TorusGrid) -> np.ndarray:
    shape = grid.half_shape()
    if callable(value):
        arr = np.asarray(value(*grid.half_mesh()), dtype=float)
    else:
        arr = np.asarray(value, dtype=float)
    return np.broadcast_to(arr, shape).astype(float)


def evenly_extended(value: Profile, grid: TorusGrid) -> np.ndarray:
    """Sample a coefficient on the half-space and extend it evenly."""
    return extend_half_to_torus(_sample_half(value, grid), EVEN, grid)


def geodesic_coefficients(grid: TorusGrid, g11: Profile = 1.0, g12: Profile = 0.0, g22: Profile = 1.0,
                          eps: Profile = 1.0, mu: Profile = 1.0) -> CoefficientSet:
    """Assemble a coefficient set in geodesic normal form.

    The tangential cometric block is ``[[g11, g12], [g12, g22]]`` (3D) or
    ``g11`` (2D); the normal-normal entry is 1 and the mixed entries vanish.
    Callables receive the broadcastable half-space coordinates. Every field is
    sampled on the half-space and extended evenly; ``A`` is the lower Cholesky
    factor of the cometric and ``h = sqrt(g) = 1/det A``.
    """
    d, k = grid.dim, grid.normal_axis
    tang = [j for j in range(d) if j != k]
    G11 = evenly_extended(g11, grid)
    ginv = pw.identity_field(d, grid.shape)
    ginv[tang[0], tang[0]] = G11
    if d == 3:
        G12 = evenly_extended(g12, grid)
        G22 = evenly_extended(g22, grid)
        ginv[tang[0], tang[1]] = ginv[tang[1], tang[0]] = G12
        ginv[tang[1], tang[1]] = G22
        if np.any(G11 <= 0) or np.any(G11 * G22 - G12**2 <= 0):
            raise EllipticityError("tangential cometric block is not positive definite")
    elif np.any(G11 <= 0):
        raise EllipticityError("tangential cometric entry must be positive")
    A = pw.cholesky(ginv)
    A[np.abs(A) < 1e-300] = 0.0
    coeffs = CoefficientSet.from_factors(grid, evenly_extended(eps, grid), evenly_extended(mu, grid), A)
    coeffs.validate()
    return coeffs
