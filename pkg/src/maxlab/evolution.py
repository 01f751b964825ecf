"""Time stepping for the reflected linear system and the 2D Kerr system.

Both integrators advance conservative variables ``(D, B)`` and recover
``(E, H)`` pointwise, so the discrete divergence of ``D`` is conserved exactly
(the spectral ``div curl`` vanishes identically).

Operators, with ``K`` acting on ``H`` and ``K*`` on ``E``:

* 3D: ``dD/dt = curl H - J``, ``dB/dt = -curl E``
* 2D: ``dD/dt = (d2 H, -d1 H) - J``, ``dB/dt = -(d1 E2 - d2 E1)``

The leapfrog is a kick-drift-kick on ``B`` and conserves
``<D, E> + <B, H> - dt^2/4 <K* E, mu'^{-1} K* E>`` exactly for linear runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erf

from maxlab import pointwise as pw
from maxlab.errors import CFLError, EllipticityError, RejectedInput, SupportMarginError
from maxlab.fields import CoefficientSet, FieldState, TorusGrid
from maxlab.spectral import spectral

log = logging.getLogger(__name__)

INTEGRATORS = ("leapfrog", "rk4")
NONLINEARITIES = ("none", "kerr2d")
# stability limits of dt * |omega| on the imaginary axis
_STABILITY = {"leapfrog": 2.0, "rk4": 2.0 * math.sqrt(2.0)}


@dataclass
class EvolutionConfig:
    """Run parameters.

    ``dt`` overrides the CFL-derived step when given; otherwise
    ``dt = cfl * min(spacing) / c_max`` shrunk so that ``T`` is a whole number
    of steps. ``forcing`` is ``J(t) -> (d, *grid)`` or ``None``.
    ``smallness`` is an optional bound on the initial ``H^2`` norm.
    """

    T: float = 1.0
    cfl: float = 0.25
    dt: float | None = None
    integrator: str = "leapfrog"
    nonlinearity: str = "none"
    forcing: Callable[[float], np.ndarray] | None = None
    smallness: float | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise RejectedInput("T must be positive")
        if not 0 < self.cfl <= 0.5:
            raise CFLError(f"CFL fraction must lie in (0, 0.5], got {self.cfl}")
        if self.dt is not None and not self.dt > 0:
            raise RejectedInput("dt must be positive")
        if self.integrator not in INTEGRATORS:
            raise RejectedInput(f"unknown integrator {self.integrator!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise RejectedInput(f"unknown nonlinearity {self.nonlinearity!r}")

    def resolve(self, grid: TorusGrid, c_max: float) -> tuple[float, int]:
        """Return ``(dt, steps)`` honoring the CFL fraction and spectral stability."""
        if self.nonlinearity == "kerr2d" and grid.dim != 2:
            raise RejectedInput("the Kerr system is only evolved in 2D")
        hmin = min(grid.spacing)
        limit = 0.5 * hmin / c_max
        dt = self.cfl * hmin / c_max if self.dt is None else self.dt
        if dt > limit * (1 + 1e-12):
            raise CFLError(f"dt={dt} exceeds CFL fraction 0.5 (limit {limit})")
        steps = max(1, math.ceil(self.T / dt - 1e-9))
        dt = self.T / steps
        kmax = math.sqrt(sum((np.pi / h) ** 2 for h in grid.spacing))
        if dt * c_max * kmax >= _STABILITY[self.integrator]:
            raise CFLError(f"dt*c*|k|max = {dt * c_max * kmax:.3f} exceeds the {self.integrator} stability bound")
        return dt, steps


def kerr_invert(D: np.ndarray) -> np.ndarray:
    """Solve ``(1 + |E|^2) E = D`` for ``E`` (component axis first).

    ``e = |E|`` is the unique real root of ``e^3 + e = |D|``, given in closed
    form by ``e = (2/sqrt 3) sinh(asinh(3 sqrt(3) |D| / 2) / 3)``.
    """
    D = np.asarray(D, dtype=float)
    mag = np.sqrt(np.sum(D**2, axis=0))
    e = (2.0 / math.sqrt(3.0)) * np.sinh(np.arcsinh(1.5 * math.sqrt(3.0) * mag) / 3.0)
    scale = np.divide(e, mag, out=np.zeros_like(mag), where=mag > 0)
    return scale * D


def kerr_displacement(E: np.ndarray) -> np.ndarray:
    E = np.asarray(E, dtype=float)
    return (1.0 + np.sum(E**2, axis=0)) * E


def effective_permittivity(E: np.ndarray) -> np.ndarray:
    """``(1 + |E|^2) I + 2 E (x) E``, eigenvalues ``1 + 3|E|^2`` and ``1 + |E|^2``."""
    E = np.asarray(E, dtype=float)
    d = E.shape[0]
    out = 2.0 * E[:, None] * E[None, :]
    base = 1.0 + np.sum(E**2, axis=0)
    for i in range(d):
        out[i, i] += base
    return out


class _Operators:
    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.sp = spectral(grid)

    def curl_E(self, E: np.ndarray) -> np.ndarray:
        if self.grid.dim == 3:
            return self.sp.curl(E)
        return self.sp.curl2(E)[None]

    def curl_H(self, H: np.ndarray) -> np.ndarray:
        if self.grid.dim == 3:
            return self.sp.curl(H)
        return self.sp.perp_grad(H[0])

    def div(self, D: np.ndarray) -> np.ndarray:
        return self.sp.div(D)


def charge(state: FieldState, coeffs: CoefficientSet | None = None, dim: int | None = None,
           kerr: bool = False) -> np.ndarray:
    """Charge density ``div D`` of the conservative field (odd across the boundary)."""
    if dim is not None and dim != state.grid.dim:
        raise RejectedInput("dimension does not match the state")
    if kerr:
        D = kerr_displacement(state.E)
    elif coeffs is None:
        D = state.E
    else:
        D = pw.matvec(coeffs.eps_prime, state.E)
    return spectral(state.grid).div(D)


def _check_forcing(J: np.ndarray, grid: TorusGrid, tol: float = 1e-12) -> None:
    from maxlab.fields import field_parity

    pe, _ = field_parity(grid.dim, grid.normal_axis)
    if J.shape != (grid.dim,) + grid.shape:
        raise RejectedInput("forcing has the wrong shape")
    scale = max(float(np.max(np.abs(J))), 1.0)
    for comp, p in zip(J, pe):
        if np.max(np.abs(comp - p * grid.mirror(comp))) > tol * scale:
            raise RejectedInput("forcing violates the reflection parities")
    k = grid.normal_axis
    idx = [slice(None)] * grid.dim
    idx[k] = grid.boundary_index
    if np.max(np.abs(J[k][tuple(idx)])) > 1e-10 * scale:
        raise RejectedInput("normal component of the forcing must vanish on the boundary")


@dataclass
class StepRecord:
    time: float
    energy: float
    energy_modified: float
    charge_drift: float
    parity_defect: float


class Evolver:
    """Holds ``(D, B)`` and advances them; see the module docstring.

    Parameters
    ----------
    state : FieldState
        Initial ``(E, H)``.
    coeffs : CoefficientSet or None
        Linear coefficients; ``None`` means flat. Ignored for Kerr runs
        (which use ``mu = 1``, flat metric).
    config : EvolutionConfig
    """

    def __init__(self, state: FieldState, coeffs: CoefficientSet | None, config: EvolutionConfig,
                 c_max: float | None = None):
        grid = state.grid
        self.grid = grid
        self.config = config
        self.kerr = config.nonlinearity == "kerr2d"
        if self.kerr and grid.dim != 2:
            raise RejectedInput("the Kerr system is only evolved in 2D")
        if coeffs is None or self.kerr:
            coeffs = CoefficientSet.flat(grid)
        elif coeffs.grid != grid:
            raise RejectedInput("coefficients live on a different grid")
        self.coeffs = coeffs
        if not state.is_finite():
            raise RejectedInput("initial state contains non-finite values")
        if config.smallness is not None:
            from maxlab.norms import sobolev_norm
            if sobolev_norm(state.components, 2, grid) > config.smallness:
                raise RejectedInput("initial data exceed the smallness budget")
        try:
            self._einv = coeffs.eps_prime_inv
            self._minv = coeffs.mu_prime_inv
        except np.linalg.LinAlgError as exc:
            raise EllipticityError("coefficient inversion failed") from exc
        if c_max is None:
            # Kerr permittivity is >= 1, so the flat speed bounds the system
            c_max = 1.0 if self.kerr else coeffs.max_wave_speed()
        self.c_max = c_max
        self.dt, self.steps = config.resolve(grid, c_max)
        self.ops = _Operators(grid)
        self.parity = state.parity
        self.time = float(state.time)
        self.D = self.D_of_E(state.E)
        self.B = self.B_of_H(state.H)
        self.rho0 = self.ops.div(self.D)
        self._charge_scale = self._l2(self.rho0) + self._h1(self.D)

    # conversions
    def D_of_E(self, E):
        if self.kerr:
            return kerr_displacement(E)
        return pw.matvec(self.coeffs.eps_prime, E)

    def B_of_H(self, H):
        if self.grid.dim == 2:
            return self.coeffs.mu_prime * H
        return pw.matvec(self.coeffs.mu_prime, H)

    def E_of_D(self, D):
        if self.kerr:
            return kerr_invert(D)
        return pw.matvec(self._einv, D)

    def H_of_B(self, B):
        if self.grid.dim == 2:
            return self._minv * B
        return pw.matvec(self._minv, B)

    def _forcing(self, t: float):
        J = self.config.forcing
        if J is None:
            return 0.0
        val = np.asarray(J(t), dtype=float)
        _check_forcing(val, self.grid)
        return val

    # steppers
    def _leapfrog(self, dt: float) -> None:
        B = self.B - 0.5 * dt * self.ops.curl_E(self.E_of_D(self.D))
        self.D = self.D + dt * (self.ops.curl_H(self.H_of_B(B)) - self._forcing(self.time + 0.5 * dt))
        self.B = B - 0.5 * dt * self.ops.curl_E(self.E_of_D(self.D))

    def _rhs(self, t, D, B):
        return (self.ops.curl_H(self.H_of_B(B)) - self._forcing(t),
                -self.ops.curl_E(self.E_of_D(D)))

    def _rk4(self, dt: float) -> None:
        t, D, B = self.time, self.D, self.B
        k1 = self._rhs(t, D, B)
        k2 = self._rhs(t + dt / 2, D + dt / 2 * k1[0], B + dt / 2 * k1[1])
        k3 = self._rhs(t + dt / 2, D + dt / 2 * k2[0], B + dt / 2 * k2[1])
        k4 = self._rhs(t + dt, D + dt * k3[0], B + dt * k3[1])
        self.D = D + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        self.B = B + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])

    def step(self, direction: int = 1) -> None:
        dt = direction * self.dt
        if self.config.integrator == "leapfrog":
            self._leapfrog(dt)
        else:
            self._rk4(dt)
        self.time += dt

    # diagnostics
    def _l2(self, f) -> float:
        return math.sqrt(self.grid.cell_volume * float(np.sum(f**2)))

    def _h1(self, f) -> float:
        sp = spectral(self.grid)
        f = f.reshape((-1,) + self.grid.shape)
        return math.sqrt(sum(self._l2(sp.deriv(c, a)) ** 2 for c in f for a in range(self.grid.dim)))

    @property
    def state(self) -> FieldState:
        return FieldState(self.grid, self.E_of_D(self.D), self.H_of_B(self.B), self.time, self.parity)

    def energy(self) -> float:
        """``M = int_half (D.E + B.H)``, evaluated as half the torus integral."""
        E, H = self.E_of_D(self.D), self.H_of_B(self.B)
        return 0.5 * self.grid.cell_volume * float(np.sum(self.D * E) + np.sum(self.B * H))

    def energy_modified(self) -> float:
        """Discrete invariant of the leapfrog; equals :meth:`energy` for RK4 runs."""
        M = self.energy()
        if self.config.integrator != "leapfrog":
            return M
        cE = self.ops.curl_E(self.E_of_D(self.D))
        return M - 0.125 * self.dt**2 * self.grid.cell_volume * float(np.sum(cE * self.H_of_B(cE)))

    def charge(self) -> np.ndarray:
        return self.ops.div(self.D)

    def charge_drift(self) -> float:
        """``||rho(t) - rho(0)||_2 / (||rho(0)||_2 + ||D(0)||_{H^1 seminorm})``."""
        if self._charge_scale == 0:
            return 0.0
        return self._l2(self.charge() - self.rho0) / self._charge_scale

    def record(self) -> StepRecord:
        return StepRecord(self.time, self.energy(), self.energy_modified(), self.charge_drift(),
                          self.state.parity_defect())

    def run(self, steps: int | None = None, direction: int = 1,
            callback: Callable[["Evolver", int], None] | None = None) -> "Evolver":
        steps = self.steps if steps is None else steps
        for i in range(steps):
            self.step(direction)
            if not (np.all(np.isfinite(self.D)) and np.all(np.isfinite(self.B))):
                raise FloatingPointError(f"solution blew up at step {i + 1}")
            if callback is not None:
                callback(self, i + 1)
        return self


def step_linear(state: FieldState, coeffs: CoefficientSet | None, config: EvolutionConfig) -> FieldState:
    """Advance ``state`` by one step of ``config``'s integrator."""
    ev = Evolver(state, coeffs, config)
    ev.step()
    return ev.state


def step_kerr_2d(state: FieldState, config: EvolutionConfig) -> FieldState:
    if config.nonlinearity != "kerr2d":
        config = EvolutionConfig(config.T, config.cfl, config.dt, config.integrator, "kerr2d",
                                 config.forcing, config.smallness)
    ev = Evolver(state, None, config)
    ev.step()
    return ev.state


@dataclass
class RunResult:
    records: list[StepRecord]
    history: list[FieldState]
    final: FieldState
    dt: float
    steps: int

    def max_energy_drift(self, modified: bool = True) -> float:
        vals = np.array([r.energy_modified if modified else r.energy for r in self.records])
        return float(np.max(np.abs(vals - vals[0])) / abs(vals[0])) if vals[0] else 0.0

    def max_charge_drift(self) -> float:
        return max(r.charge_drift for r in self.records)

    def max_parity_defect(self) -> float:
        return max(r.parity_defect for r in self.records)


def evolve(state: FieldState, coeffs: CoefficientSet | None, config: EvolutionConfig,
           keep_every: int = 0, record_every: int = 1) -> RunResult:
    """Run to ``config.T``; keep every ``keep_every``-th state in ``history`` (0: none)."""
    ev = Evolver(state, coeffs, config)
    records = [ev.record()]
    history = [ev.state] if keep_every else []

    def cb(e: Evolver, i: int) -> None:
        if i % record_every == 0 or i == e.steps:
            records.append(e.record())
        if keep_every and i % keep_every == 0:
            history.append(e.state)

    ev.run(callback=cb)
    return RunResult(records, history, ev.state, ev.dt, ev.steps)


def time_reversal_error(state: FieldState, coeffs: CoefficientSet | None, config: EvolutionConfig) -> float:
    """Relative L2 distance after running forward to ``T`` and back to 0."""
    ev = Evolver(state, coeffs, config)
    ev.run()
    ev.run(direction=-1)
    back = ev.state
    num = np.sqrt(np.sum((back.components - state.components) ** 2))
    den = np.sqrt(np.sum(state.components**2))
    return float(num / den) if den > 0 else float(num)


def convergence_ratio(state: FieldState, coeffs: CoefficientSet | None, config: EvolutionConfig) -> dict:
    """Errors at ``dt`` and ``dt/2`` against a Richardson reference from ``dt/2``, ``dt/4``.

    Returns the two errors and their ratio (4 for a second-order scheme).
    """
    base = Evolver(state, coeffs, config)
    dt = base.dt
    finals = []
    for f in (1, 2, 4):
        cfg = EvolutionConfig(config.T, config.cfl, dt / f, config.integrator, config.nonlinearity,
                              config.forcing, config.smallness)
        finals.append(Evolver(state, coeffs, cfg, c_max=base.c_max).run().state.components)
    order = 2 if config.integrator == "leapfrog" else 4
    ref = finals[2] + (finals[2] - finals[1]) / (2**order - 1)
    e1 = float(np.sqrt(np.sum((finals[0] - ref) ** 2)))
    e2 = float(np.sqrt(np.sum((finals[1] - ref) ** 2)))
    return {"dt": dt, "error_dt": e1, "error_half": e2, "ratio": e1 / e2 if e2 > 0 else math.inf}


# cylindrical lift


def plateau_cutoff(x: np.ndarray, radius: float, width: float) -> np.ndarray:
    """Smooth cutoff equal to 1 (to rounding) on ``|x| <= radius``.

    The edges are error-function ramps centred ``6 * width`` beyond the
    plateau, so the deviation from 1 there is below ``erfc(6)/2``.
    """
    edge = radius + 6.0 * width
    return 0.5 * (erf((x + edge) / width) - erf((x - edge) / width))


@dataclass
class CylinderReport:
    times: list[float]
    discrepancy: list[float]
    plateau_derivative: float
    plateau_radius: float
    horizon: float

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy) if self.discrepancy else 0.0


def lift_coefficients(coeffs2d: CoefficientSet, grid3: TorusGrid) -> CoefficientSet:
    """x3-independent 3D coefficients whose 2D reduction is ``coeffs2d``."""
    n3 = grid3.n[2]
    rep = lambda f: np.repeat(f[..., None], n3, axis=-1)  # noqa: E731
    A = np.zeros((3, 3) + grid3.shape)
    A[:2, :2] = rep(coeffs2d.A)
    A[2, 2] = 1.0
    if coeffs2d.eps_is_matrix:
        raise RejectedInput("matrix permittivity cannot be lifted isotropically")
    return CoefficientSet.from_factors(grid3, rep(coeffs2d.eps), rep(coeffs2d.mu), A)


def cylindrical_lift_and_compare(state2d: FieldState, config: EvolutionConfig,
                                 coeffs2d: CoefficientSet | None = None, n3: int = 128,
                                 length3: float | None = None, plateau_radius: float | None = None,
                                 ramp_width: float | None = None, samples: int = 10) -> CylinderReport:
    """Lift 2D data to a slab, evolve both, and compare at ``x3 = 0``.

    ``E~ = phi(x3) (E1, E2, 0)``, ``H~ = phi(x3) (0, 0, H)``. Defaults:
    ``length3`` equals the first 2D side, plateau radius ``1.1 c_max T`` and
    ramps filling the rest of the half period.

    Raises
    ------
    SupportMarginError
        If ``c_max * T`` reaches the plateau radius.
    """
    g2 = state2d.grid
    if g2.dim != 2:
        raise RejectedInput("cylindrical lift needs a 2D state")
    L3 = g2.length[0] if length3 is None else float(length3)
    kerr = config.nonlinearity == "kerr2d"
    c2 = None if kerr else (coeffs2d if coeffs2d is not None else CoefficientSet.flat(g2))
    c_max = 1.0 if kerr else c2.max_wave_speed()
    horizon = c_max * config.T
    R = 1.1 * horizon if plateau_radius is None else float(plateau_radius)
    w = (L3 / 2 - R) / 13 if ramp_width is None else float(ramp_width)
    if horizon >= R:
        raise SupportMarginError(f"plateau radius {R} does not cover the horizon c*T = {horizon}")
    if w <= 0 or R + 12 * w > L3 / 2:
        raise RejectedInput("plateau and ramps do not fit in the third period")
    if np.pi * n3 / L3 * w < 9.6:
        log.warning("cutoff ramp is under-resolved: kmax*width = %.2f", np.pi * n3 / L3 * w)
    g3 = TorusGrid(g2.n + (n3,), g2.length + (L3,), g2.normal_axis)
    c3 = None if kerr else lift_coefficients(c2, g3)
    x3 = g3.coords(2)
    phi = plateau_cutoff(x3, R, w)
    E3 = np.zeros((3,) + g3.shape)
    H3 = np.zeros((3,) + g3.shape)
    E3[0] = state2d.E[0][..., None] * phi
    E3[1] = state2d.E[1][..., None] * phi
    H3[2] = state2d.H[0][..., None] * phi
    lifted = FieldState(g3, E3, H3, state2d.time)
    sp3 = spectral(g3)
    on_plateau = np.abs(x3) <= R
    deriv = 0.0
    for f in (E3[0], E3[1], H3[2]):
        d3 = sp3.deriv(f, 2)
        deriv = max(deriv, float(np.max(np.abs(d3[..., on_plateau]))))
    hmin = min(g3.spacing)
    dt = config.dt if config.dt is not None else config.cfl * hmin / c_max
    cfg3 = EvolutionConfig(config.T, config.cfl, dt, config.integrator, "none", None, None)
    if kerr:
        ev3 = _KerrEvolver3(lifted, cfg3, c_max)
    else:
        ev3 = Evolver(lifted, c3, cfg3, c_max=c_max)
    cfg2 = EvolutionConfig(config.T, config.cfl, ev3.dt, config.integrator, config.nonlinearity, None, None)
    ev2 = Evolver(state2d, c2, cfg2, c_max=c_max)
    if ev2.steps != ev3.steps:
        raise RuntimeError("step counts differ between the 2D and 3D runs")
    mid = n3 // 2
    every = max(1, ev3.steps // samples)
    times, disc = [], []
    ref_norm = max(float(np.sqrt(np.sum(state2d.components**2))), np.finfo(float).tiny)

    def compare() -> None:
        s2, s3 = ev2.state, ev3.state
        diff = (np.sum((s3.E[0][..., mid] - s2.E[0]) ** 2) + np.sum((s3.E[1][..., mid] - s2.E[1]) ** 2)
                + np.sum((s3.H[2][..., mid] - s2.H[0]) ** 2))
        times.append(ev2.time)
        disc.append(float(np.sqrt(diff)) / ref_norm)

    compare()
    for i in range(1, ev3.steps + 1):
        ev2.step()
        ev3.step()
        if i % every == 0 or i == ev3.steps:
            compare()
    return CylinderReport(times, disc, deriv, R, horizon)


class _KerrEvolver3(Evolver):
    """3D isotropic Kerr, used only for the cylindrical lift."""

    def __init__(self, state: FieldState, config: EvolutionConfig, c_max: float):
        super().__init__(state, None, config, c_max=c_max)
        self.kerr = True
        self.D = kerr_displacement(state.E)
        self.rho0 = self.ops.div(self.D)
