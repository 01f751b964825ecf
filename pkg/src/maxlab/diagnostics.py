"""Energies, bootstrap functionals, Helmholtz ratios and Strichartz measurements."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from maxlab import pointwise as pw
from maxlab.errors import AdmissibilityError, CompatibilityError, RejectedInput
from maxlab.evolution import EvolutionConfig, Evolver, effective_permittivity, kerr_displacement
from maxlab.fields import CoefficientSet, FieldState, TorusGrid, field_parity
from maxlab.norms import lq_norm, mixed_norm_value, sobolev_norm
from maxlab.reflect import boundary_trace
from maxlab.spectral import spectral

INF = math.inf


# admissibility


def _recip(v) -> Fraction:
    if v == INF:
        return Fraction(0)
    return 1 / Fraction(v)


@dataclass(frozen=True)
class AdmissibleTriple:
    """Exponents ``(p, q)`` with derivative count ``gamma`` and loss bound ``delta_max``.

    ``delta`` defaults to ``delta_max / 2``.
    """

    p: float
    q: float
    gamma: Fraction
    delta_max: Fraction
    dim: int
    delta: Fraction

    @property
    def charge_order(self) -> Fraction:
        """Sobolev order ``gamma - 1 + 1/p + delta`` used for the initial charge."""
        return self.gamma - 1 + _recip(self.p) + self.delta


def admissible(p, q, dim: int, delta=None) -> AdmissibleTriple:
    """Check wave admissibility and compute the scaling exponent.

    3D: ``3/p + 2/q <= 1``, ``gamma = 3(1/2 - 1/q) - 1/p``, ``delta < 3/q``.
    2D: ``3/p + 1/q <= 1/2``, ``gamma = 2(1/2 - 1/q) - 1/p``, ``delta < 1/2``.

    Raises
    ------
    AdmissibilityError
        Naming the violated condition.
    """
    if dim not in (2, 3):
        raise AdmissibilityError("dim must be 2 or 3")
    if q == INF:
        raise AdmissibilityError("q < inf is required")
    if p != INF and p < 2 or q < 2:
        raise AdmissibilityError("p >= 2 and q >= 2 are required")
    ip, iq = _recip(p), _recip(q)
    if dim == 3:
        if 3 * ip + 2 * iq > 1:
            raise AdmissibilityError(f"3/p + 2/q <= 1 fails: {3 * ip + 2 * iq}")
        gamma = 3 * (Fraction(1, 2) - iq) - ip
        dmax = 3 * iq
    else:
        if 3 * ip + iq > Fraction(1, 2):
            raise AdmissibilityError(f"3/p + 1/q <= 1/2 fails: {3 * ip + iq}")
        gamma = 2 * (Fraction(1, 2) - iq) - ip
        dmax = Fraction(1, 2)
    d = dmax / 2 if delta is None else Fraction(delta).limit_denominator(10**6)
    if not 0 < d < dmax:
        raise AdmissibilityError(f"0 < delta < {dmax} fails for delta = {d}")
    return AdmissibleTriple(p, q, gamma, dmax, dim, d)


# energies


def _weights(coeffs: CoefficientSet | None, grid: TorusGrid):
    if coeffs is None:
        coeffs = CoefficientSet.flat(grid)
    return coeffs.eps_prime, coeffs.mu_prime


def _inner(a: np.ndarray, b: np.ndarray, grid: TorusGrid) -> float:
    """``int_half a.b``, evaluated as half the torus quadrature."""
    return 0.5 * grid.cell_volume * float(np.sum(a * b))


def energy_M(state: FieldState, coeffs: CoefficientSet | None = None, kerr: bool = False) -> float:
    """``M = int_half (D.E + H.B)``."""
    g = state.grid
    if kerr:
        D = kerr_displacement(state.E)
        return _inner(D, state.E, g) + _inner(state.H, state.H, g)
    ep, mp = _weights(coeffs, g)
    B = mp * state.H if g.dim == 2 else pw.matvec(mp, state.H)
    return _inner(pw.matvec(ep, state.E), state.E, g) + _inner(B, state.H, g)


# bootstrap functionals

# centred stencils, offsets -r..r
_FD = {
    1: (np.array([1, -8, 0, 8, -1]) / 12.0, 2),
    2: (np.array([-1, 16, -30, 16, -1]) / 12.0, 2),
    3: (np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0, 3),
}


def time_derivative(series: np.ndarray, dt: float, order: int) -> np.ndarray:
    """Fourth-order centred difference along axis 0; drops ``half-width`` samples at each end."""
    w, r = _FD[order]
    n = series.shape[0]
    if n < 2 * r + 1:
        raise RejectedInput(f"history of {n} samples is too short for derivative order {order}")
    out = sum(w[j] * series[j:n - 2 * r + j] for j in range(2 * r + 1))
    return out / dt**order


@dataclass
class BootstrapSeries:
    times: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    B: np.ndarray
    grad_inf: np.ndarray

    def gronwall_constant(self, offset: float = 0.0) -> float:
        """Smallest ``C`` with ``log A1(t) - log A1(t0) <= C int_t0^t ||d_x u||_inf``.

        ``offset`` is added to ``A1`` (e.g. a conserved ``||rho||_{H^1}^2``).
        """
        a = np.log(self.A1 + offset)
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (self.grad_inf[1:] + self.grad_inf[:-1]) * np.diff(self.times))])
        ok = integral > 0
        if not np.any(ok):
            return 0.0
        return float(max(0.0, np.max((a[ok] - a[0]) / integral[ok])))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "A1", "A2", "B", "grad_inf"])
        for row in zip(self.times, self.A1, self.A2, self.B, self.grad_inf):
            w.writerow([format(float(v), ".17g") for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _stack(history: Sequence[FieldState]) -> tuple[np.ndarray, np.ndarray, float]:
    times = np.array([s.time for s in history])
    if len(times) > 2:
        steps = np.diff(times)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
            raise RejectedInput("history must be sampled at uniform times")
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return times, np.stack([s.components for s in history]), dt


def bootstrap_functionals(history: Sequence[FieldState], coeffs: CoefficientSet | None = None,
                          kerr: bool = False) -> BootstrapSeries:
    """``A1``, ``A2`` and the driver ``B(t)`` on the interior of a uniform history.

    ``A1 = sum_{j=0..2} (W_E d_t^j E, d_t^j E) + (W_H d_t^j H, d_t^j H)`` with
    ``W_E = eps_1(E)`` for the derivative terms of Kerr runs, ``1 + |E|^2``
    for the undifferentiated Kerr term and the conservative weights for linear
    runs. ``A2`` adds the third derivatives. Inner products are over the half space.
    """
    if len(history) < 7:
        raise RejectedInput("at least 7 snapshots are needed for third derivatives")
    grid = history[0].grid
    d = grid.dim
    times, U, dt = _stack(history)
    derivs = {0: U[3:-3], 1: time_derivative(U, dt, 1)[1:-1], 2: time_derivative(U, dt, 2)[1:-1],
              3: time_derivative(U, dt, 3)}
    ep, mp = _weights(coeffs, grid)
    sp = spectral(grid)
    A1, A2, Bs, gi = [], [], [], []
    for i in range(derivs[0].shape[0]):
        E0 = derivs[0][i][:d]
        terms = []
        for j in range(4):
            E, H = derivs[j][i][:d], derivs[j][i][d:]
            if kerr:
                W = effective_permittivity(E0) if j else (1.0 + np.sum(E0**2, 0))
                eE = pw.matvec(W, E) if j else W * E
                hH = H
            else:
                eE = pw.matvec(ep, E)
                hH = mp * H if d == 2 else pw.matvec(mp, H)
            terms.append(_inner(eE, E, grid) + _inner(hH, H, grid))
        A1.append(terms[0] + terms[1] + terms[2])
        A2.append(terms[3] + A1[-1])
        u = derivs[0][i]
        grad = np.sqrt(sum(sp.deriv(c, a) ** 2 for c in u for a in range(d)))
        g_inf = float(np.max(grad))
        gi.append(g_inf)
        Bs.append(g_inf + sobolev_norm(u, 2, grid))
    return BootstrapSeries(times[3:-3], np.array(A1), np.array(A2), np.array(Bs), np.array(gi))


def differentiated_residual(history: Sequence[FieldState], coeffs: CoefficientSet | None = None) -> float:
    """Relative residual of the time-differentiated linear system on a history.

    Checks ``eps' E'' = K H'`` and ``mu' H'' = -K* E'`` with derivatives taken
    by fourth-order differences.
    """
    grid = history[0].grid
    d = grid.dim
    _, U, dt = _stack(history)
    U1 = time_derivative(U, dt, 1)
    U2 = time_derivative(U, dt, 2)
    ep, mp = _weights(coeffs, grid)
    sp = spectral(grid)
    worst = 0.0
    for u1, u2 in zip(U1, U2):
        E1, H1 = u1[:d], u1[d:]
        E2, H2 = u2[:d], u2[d:]
        if d == 3:
            kH, kE = sp.curl(H1), sp.curl(E1)
            rB = pw.matvec(mp, H2) + kE
        else:
            kH, kE = sp.perp_grad(H1[0]), sp.curl2(E1)[None]
            rB = mp * H2 + kE
        rD = pw.matvec(ep, E2) - kH
        scale = math.sqrt(float(np.sum(kH**2) + np.sum(kE**2)))
        if scale > 0:
            worst = max(worst, math.sqrt(float(np.sum(rD**2) + np.sum(rB**2))) / scale)
    return worst


# Helmholtz


@dataclass
class HelmholtzResult:
    lhs: float
    rhs: float
    identity_defect: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def helmholtz_ratio(E: np.ndarray, s: float, grid: TorusGrid, mode: str = "torus",
                    tol: float = 1e-10) -> HelmholtzResult:
    """``||E||_{H^{s+1}}`` against ``||curl E||_{H^s} + ||div E||_{H^s} + ||E||_{L^2}``.

    Also returns the relative defect of ``||curl E||^2 + ||div E||^2 = ||grad E||^2``.
    In ``half`` mode ``E`` must carry the reflection parities and a vanishing
    tangential trace; norms are then over the half space.
    """
    if mode not in ("torus", "half"):
        raise RejectedInput("mode must be 'torus' or 'half'")
    E = np.asarray(E, dtype=float)
    d = grid.dim
    if E.shape != (d,) + grid.shape:
        raise RejectedInput("E must be a vector field on the grid")
    sp = spectral(grid)
    curl = sp.curl(E) if d == 3 else sp.curl2(E)
    div = sp.div(E)
    grad_sq = sum(float(np.sum(sp.deriv(c, a) ** 2)) for c in E for a in range(d))
    cd_sq = float(np.sum(curl**2) + np.sum(div**2))
    defect = abs(cd_sq - grad_sq) / grad_sq if grad_sq > 0 else cd_sq
    factor = 1.0
    if mode == "half":
        pe, _ = field_parity(d, grid.normal_axis)
        scale = max(float(np.max(np.abs(E))), np.finfo(float).tiny)
        for j, (c, p) in enumerate(zip(E, pe)):
            if np.max(np.abs(c - p * grid.mirror(c))) > 1e-12 * scale:
                raise CompatibilityError("field does not carry the reflection parities", (f"E{j + 1}",))
            if j != grid.normal_axis and np.max(np.abs(boundary_trace(c, grid))) > tol * scale:
                raise CompatibilityError("tangential trace does not vanish", (f"E{j + 1}",))
        factor = math.sqrt(0.5)
    lhs = factor * sobolev_norm(E, s + 1, grid)
    rhs = factor * (sobolev_norm(curl, s, grid) + sobolev_norm(div, s, grid) + sobolev_norm(E, 0, grid))
    return HelmholtzResult(lhs, rhs, defect)


def random_parity_field(grid: TorusGrid, rng: np.random.Generator, decay: float = 3.0,
                        kcut: float | None = None, master_n: int | None = None) -> np.ndarray:
    """Random smooth vector field carrying the electric reflection parities.

    Fourier coefficients are drawn on a master lattice of size ``master_n``
    (default: the grid) with amplitude ``<k>^{-decay}``, then truncated to the
    grid, so the same seed gives nested fields on refined grids.
    """
    d = grid.dim
    mn = grid.n[0] if master_n is None else master_n
    master = TorusGrid((mn,) * d, grid.length, grid.normal_axis)
    kk = np.meshgrid(*[master.wavenumbers(a) for a in range(d)], indexing="ij")
    kabs = np.sqrt(sum(k**2 for k in kk))
    amp = (1 + kabs**2) ** (-decay / 2)
    cut = min(np.pi / h for h in grid.spacing) * 2 / 3 if kcut is None else kcut
    mask = np.ones_like(kabs, dtype=bool)
    for a in range(d):
        mask &= np.abs(kk[a]) <= cut
    pe, _ = field_parity(d, grid.normal_axis)
    out = np.zeros((d,) + grid.shape)
    for j in range(d):
        F = (rng.standard_normal(kabs.shape) + 1j * rng.standard_normal(kabs.shape)) * amp * mask
        f = resample(np.fft.ifftn(F).real * master.size, master.n, grid.n)
        out[j] = 0.5 * (f + pe[j] * grid.mirror(f))
    return out


def resample(f: np.ndarray, n_src: tuple[int, ...], n_dst: tuple[int, ...]) -> np.ndarray:
    """Trigonometric interpolant of ``f`` on another sample count (Nyquist modes dropped)."""
    F = np.fft.fftn(f)
    if tuple(n_src) == tuple(n_dst):
        return f
    idx_src, idx_dst = [], []
    for ns, nd in zip(n_src, n_dst):
        m = np.arange(-(min(ns, nd) // 2) + 1, min(ns, nd) // 2)
        idx_src.append(m % ns)
        idx_dst.append(m % nd)
    out = np.zeros(tuple(n_dst), dtype=complex)
    out[np.ix_(*idx_dst)] = F[np.ix_(*idx_src)]
    return np.fft.ifftn(out).real * (np.prod(n_dst) / np.prod(n_src))


@dataclass
class HelmholtzSweep:
    grid_n: int
    s: float
    ratios: list[float]

    @property
    def constant(self) -> float:
        return max(max(self.ratios), 1.0 / min(self.ratios))


def helmholtz_sweep(dim: int, n: int, s: float, count: int = 50, seed: int = 0,
                    length: float = 2 * np.pi, master_n: int | None = None) -> HelmholtzSweep:
    grid = TorusGrid.cube(dim, n, length)
    rng = np.random.default_rng(seed)
    mn = master_n or n
    ratios = []
    for _ in range(count):
        E = random_parity_field(grid, rng, kcut=np.pi * min(n, mn) / length * 2 / 3, master_n=mn)
        ratios.append(helmholtz_ratio(E, s, grid, mode="half").ratio)
    return HelmholtzSweep(n, s, ratios)


# Strichartz


def strichartz_ratio(history: Sequence[FieldState], triple: AdmissibleTriple,
                     charge0: np.ndarray) -> float:
    """``||u||_{L^p_T L^q} / (||u(0)||_{H^{gamma+delta}} + ||rho(0)||_{H^{gamma-1+1/p+delta}})``.

    Norms are over the half space; ``history`` is uniform in time and starts at 0.
    """
    if not history:
        raise RejectedInput("empty history")
    grid = history[0].grid
    if grid.dim != triple.dim:
        raise RejectedInput("triple dimension does not match the history")
    times = np.array([s.time for s in history])
    lq = np.array([lq_norm(s.components, triple.q, grid) for s in history])
    return _ratio_from_series(times, lq, history[0].components, charge0, triple, grid, 1)


def _ratio_from_series(times, lq, u0, rho0, triple: AdmissibleTriple, grid: TorusGrid,
                       copies: float) -> float:
    """Combine sampled ``L^q`` norms (torus) with data norms; ``copies`` rescales periodic tilings."""
    half_q = 0.5 ** (1.0 / triple.q)
    num = mixed_norm_value(times, lq * half_q * copies ** (1.0 / triple.q), triple.p, TIME_RULE)
    s0 = float(triple.gamma + triple.delta)
    s1 = float(triple.charge_order)
    den = math.sqrt(0.5 * copies) * (sobolev_norm(u0, s0, grid) + sobolev_norm(rho0, s1, grid))
    if den == 0:
        raise RejectedInput("zero initial data: ratio is undefined")
    return num / den


def band_data(grid: TorusGrid, lam: float, rng: np.random.Generator) -> FieldState:
    """Random parity-symmetric field with all Fourier modes in ``lam/2 <= |k| <= 2 lam``."""
    sp = spectral(grid)
    d = grid.dim
    nh = 1 if d == 2 else 3
    band = (sp.k_abs >= lam / 2) & (sp.k_abs <= 2 * lam)
    pe, ph = field_parity(d, grid.normal_axis)
    comps = []
    for p in pe + ph:
        F = (rng.standard_normal(sp.spectral_shape) + 1j * rng.standard_normal(sp.spectral_shape)) * band
        f = sp.ifft(F)
        comps.append(0.5 * (f + p * grid.mirror(f)))
    comps = np.array(comps)
    norm = math.sqrt(grid.cell_volume * float(np.sum(comps**2)))
    if norm == 0:
        raise RejectedInput(f"no Fourier modes in the band around {lam}")
    comps /= norm
    return FieldState(grid, comps[:d], comps[d:nh + d])


def flat_propagator_3d(state: FieldState):
    """Exact flat-space solution operator ``t -> (E, H)`` for 3D vacuum data."""
    grid = state.grid
    sp = spectral(grid)
    k = np.array(np.broadcast_arrays(*sp.ik)) / 1j
    kabs = np.sqrt(np.sum(k**2, axis=0))
    safe = np.where(kabs > 0, kabs, 1.0)
    khat = np.where(kabs > 0, k / safe, 0.0)
    E0 = np.array([sp.fft(c) for c in state.E])
    H0 = np.array([sp.fft(c) for c in state.H])

    def split(V):
        long = khat * np.sum(khat * V, axis=0)
        return long, V - long

    EL, ET = split(E0)
    HL, HT = split(H0)
    cross = lambda a, b: np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],  # noqa: E731
                                   a[0] * b[1] - a[1] * b[0]])
    ikxH = 1j * cross(k, HT)
    ikxE = 1j * cross(k, ET)

    def at(t: float) -> np.ndarray:
        c = np.cos(kabs * t)
        s = np.sin(kabs * t) / safe
        E = EL + c * ET + s * ikxH
        H = HL + c * HT - s * ikxE
        return np.array([sp.ifft(v) for v in np.concatenate([E, H])])

    return at


@dataclass(frozen=True)
class SweepMember:
    index: int
    dim: int
    p: float
    q: float
    seed: int
    lam: int
    refine: int
    T: float
    finest: int = 4


@dataclass
class SweepRow:
    index: int
    dim: int
    seed: int
    grid: int
    lam: int
    refine: int
    p: float
    q: float
    gamma: Fraction
    delta: Fraction
    ratio: float


# 3D members use exact dilation: u0(lam x / LAM0) on the base torus is a
# (lam/LAM0)-fold tiling of u0 on a torus shrunk by that factor.
LAM0 = 4
BASE_N_3D = 20
BASE_N_2D = 16
SAMPLES_PER_PERIOD = 8
SWEEP_INTEGRATOR_2D = "rk4"
TIME_RULE = "simpson"


def _grid_size(base: int, refine: int) -> int:
    """Refinement levels count half-steps: level ``r`` uses ``base * r / 2`` points."""
    return base * refine // 2


def _member_3d(m: SweepMember, triple: AdmissibleTriple) -> SweepRow:
    n = _grid_size(BASE_N_3D, m.refine)
    scale = m.lam // LAM0
    base = TorusGrid.cube(3, BASE_N_3D, 2 * np.pi)
    rng = np.random.default_rng(m.seed)
    u0 = band_data(base, LAM0, rng)
    small = TorusGrid.cube(3, n, 2 * np.pi / scale)
    # samples are unchanged by the dilation; only the box shrinks
    comps = np.array([resample(c, base.n, small.n) for c in u0.components])
    state = FieldState(small, comps[:3], comps[3:])
    rho0 = spectral(small).div(state.E)
    copies = float(scale**3)
    if triple.q == 2 and triple.p == INF:
        # L^2 is conserved by the flat propagator; sample anyway for uniformity
        nt = 3
    else:
        omega = 2 * LAM0 * scale
        # time sampling follows the finest level so refinement only changes the space grid
        nt = max(8, int(math.ceil(omega * m.T / (2 * np.pi) * SAMPLES_PER_PERIOD * m.finest / 2)))
    times = np.linspace(0.0, m.T, nt + 1)
    prop = flat_propagator_3d(state)
    lq = np.array([lq_norm(prop(t), triple.q, small) for t in times])
    ratio = _ratio_from_series(times, lq, state.components, rho0, triple, small, copies)
    return SweepRow(m.index, m.dim, m.seed, n, m.lam, m.refine, m.p, m.q, triple.gamma, triple.delta, ratio)


def sweep_coefficients_2d(grid: TorusGrid) -> CoefficientSet:
    """Smooth even variable coefficients used by the 2D sweep members."""
    X, Y = grid.full_mesh()
    L = grid.length
    eps = 1.5 + 0.3 * np.cos(2 * np.pi * X / L[0]) * np.cos(2 * np.pi * Y / L[1])
    mu = 1.0 + 0.2 * np.cos(4 * np.pi * Y / L[1]) ** 2
    return CoefficientSet.from_factors(grid, eps, mu)


def _member_2d(m: SweepMember, triple: AdmissibleTriple) -> SweepRow:
    L = np.pi / 2
    # base grid keeps 2*lam below the Nyquist wavenumber 2 n on a torus of side pi/2
    base_n = max(BASE_N_2D, 4 * int(math.ceil(0.3125 * m.lam)))
    n = _grid_size(base_n, m.refine)
    grid = TorusGrid.cube(2, n, L)
    rng = np.random.default_rng(m.seed)
    coarse = TorusGrid.cube(2, base_n, L)
    u0c = band_data(coarse, m.lam, rng)
    comps = np.array([resample(c, coarse.n, grid.n) for c in u0c.components])
    state = FieldState(grid, comps[:2], comps[2:])
    coeffs = sweep_coefficients_2d(grid)
    # one time step for every level, set by the finest grid
    fine = TorusGrid.cube(2, _grid_size(base_n, m.finest), L)
    c_fine = sweep_coefficients_2d(fine).max_wave_speed()
    dt = 0.25 * fine.spacing[0] / c_fine
    ev = Evolver(state, coeffs, EvolutionConfig(T=m.T, dt=dt, integrator=SWEEP_INTEGRATOR_2D), c_max=c_fine)
    rho0 = ev.charge()
    times, lq = [0.0], [lq_norm(state.components, triple.q, grid)]

    def cb(e: Evolver, i: int) -> None:
        times.append(e.time)
        lq.append(lq_norm(e.state.components, triple.q, grid))

    ev.run(callback=cb)
    ratio = _ratio_from_series(np.array(times), np.array(lq), state.components, rho0, triple, grid, 1.0)
    return SweepRow(m.index, m.dim, m.seed, n, m.lam, m.refine, m.p, m.q, triple.gamma, triple.delta, ratio)


def run_member(m: SweepMember) -> SweepRow:
    triple = admissible(m.p, m.q, m.dim)
    return _member_3d(m, triple) if m.dim == 3 else _member_2d(m, triple)


DEFAULT_TRIPLES = ((3, INF, 2), (3, 4, 8), (2, 8, 8))


def sweep_members(triples=DEFAULT_TRIPLES, seeds: Sequence[int] = range(20), refinements=(2, 3, 4),
                  lams=(4, 8, 16, 32, 64), T: float = 1.0) -> list[SweepMember]:
    out = []
    for dim, p, q in triples:
        for lam in lams:
            for r in refinements:
                for s in seeds:
                    out.append(SweepMember(len(out), dim, p, q, int(s), int(lam), int(r), T, max(refinements)))
    return out


def run_sweep(members: Sequence[SweepMember], workers: int = 1) -> list[SweepRow]:
    """Evaluate members, concurrently when ``workers > 1``; rows keep member order."""
    if workers <= 1:
        return [run_member(m) for m in members]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(run_member, members, chunksize=4))
    return sorted(rows, key=lambda r: r.index)


def _fmt_exp(v) -> str:
    return "inf" if v == INF else format(v, "g")


def sweep_csv(rows: Sequence[SweepRow], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "dim", "grid", "lambda", "p", "q", "gamma", "delta", "ratio"])
    for r in rows:
        w.writerow([r.seed, r.dim, r.grid, r.lam, _fmt_exp(r.p), _fmt_exp(r.q), str(r.gamma), str(r.delta),
                    format(r.ratio, ".17g")])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


@dataclass
class TripleSummary:
    dim: int
    p: str
    q: str
    minimum: float
    maximum: float
    median: float
    spread: float
    medians: dict = field(default_factory=dict)
    monotone: bool = True
    violations: list = field(default_factory=list)


# relative slack for medians that agree to rounding (exactly propagated members)
MONOTONE_SLACK = 1e-12


def sweep_summary(rows: Sequence[SweepRow]) -> list[TripleSummary]:
    """Per triple: extremes, spread ``max/min`` and seed-medians per ``(lambda, refinement)``.

    ``monotone`` is true when, for every ``lambda``, the seed-median does not
    increase from one refinement level to the next.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.dim, r.p, r.q), []).append(r)
    out = []
    for (dim, p, q), rs in groups.items():
        vals = [r.ratio for r in rs]
        med: dict = {}
        for r in rs:
            med.setdefault(r.lam, {}).setdefault(r.refine, []).append(r.ratio)
        medians = {lam: {ref: statistics.median(v) for ref, v in sorted(d.items())} for lam, d in sorted(med.items())}
        violations = []
        for lam, d in medians.items():
            levels = list(d.items())
            for (r1, m1), (r2, m2) in zip(levels, levels[1:]):
                if m2 > m1 * (1 + MONOTONE_SLACK):
                    violations.append({"lambda": lam, "from": r1, "to": r2, "increase": (m2 - m1) / m1})
        out.append(TripleSummary(dim, _fmt_exp(p), _fmt_exp(q), min(vals), max(vals), statistics.median(vals),
                                 max(vals) / min(vals), {str(k): {str(a): b for a, b in v.items()}
                                                         for k, v in medians.items()},
                                 not violations, violations))
    return out


def summary_json(summary: Sequence[TripleSummary], path=None) -> str:
    text = json.dumps([asdict(s) for s in summary], indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
