"""Littlewood-Paley projections, coefficient truncation, envelopes and mollification.

The dyadic bank is built from a smooth step ``beta`` (1 on ``[0, 1]``, 0 on
``[2, inf)``, a degree-7 polynomial in between). Band ``lam = 2^j`` has profile

    chi_1(r)   = beta(r)
    chi_lam(r) = beta(r / lam) - beta(2 r / lam),      supported in [lam/2, 2 lam],

and the top band absorbs everything above the previous one, so the bands sum
to one at every lattice point by telescoping. All profiles are radial and real,
hence they preserve realness and reflection parity.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from maxlab.errors import RejectedInput, SupportMarginError
from maxlab.fields import CoefficientSet, FieldState, TorusGrid
from maxlab.norms import sobolev_norm
from maxlab.spectral import spectral


def smooth_step(r: np.ndarray) -> np.ndarray:
    """``beta``: 1 for ``r <= 1``, 0 for ``r >= 2``, C^3 in between, decreasing."""
    t = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3)


def _top_band(r_max: float) -> int:
    return 2 ** max(1, math.ceil(math.log2(max(r_max, 1.0))))


def _is_band(lam) -> bool:
    lam_f = float(lam)
    return lam_f >= 1 and lam_f == 2 ** round(math.log2(lam_f))


class RadialBank:
    """Dyadic partition of unity in a radial frequency variable ``r >= 0``."""

    def __init__(self, r_max: float):
        self.top = _top_band(r_max)
        self.bands = tuple(2**j for j in range(int(math.log2(self.top)) + 1))

    def check(self, lam) -> int:
        if not _is_band(lam):
            raise RejectedInput(f"band {lam} is not a power of two >= 1")
        if lam > self.top:
            raise RejectedInput(f"band {lam} lies above the Nyquist band {self.top}")
        return int(lam)

    def profile(self, r: np.ndarray, lam) -> np.ndarray:
        lam = self.check(lam)
        if lam == 1:
            return smooth_step(r)
        upper = smooth_step(r / lam) if lam < self.top else np.ones_like(r, dtype=float)
        return upper - smooth_step(2.0 * r / lam)

    def low_pass(self, r: np.ndarray, cutoff) -> np.ndarray:
        """Sum of the profiles of all bands ``<= cutoff`` (a power of two)."""
        cutoff = self.check(cutoff)
        if cutoff >= self.top:
            return np.ones_like(r, dtype=float)
        return smooth_step(r / cutoff)

    def enlarged(self, r: np.ndarray, lam) -> np.ndarray:
        lam = self.check(lam)
        out = self.profile(r, lam)
        if lam > 1:
            out = out + self.profile(r, lam // 2)
        if lam < self.top:
            out = out + self.profile(r, 2 * lam)
        return out


class DyadicProjectorBank(RadialBank):
    """Spatial Littlewood-Paley projections ``S'_lam`` on a torus grid."""

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.sp = spectral(grid)
        super().__init__(float(self.sp.k_abs.max()))
        self._cache: dict = {}

    def multiplier(self, lam) -> np.ndarray:
        key = ("band", lam)
        if key not in self._cache:
            self._cache[key] = self.profile(self.sp.k_abs, lam)
        return self._cache[key]

    def low_multiplier(self, cutoff) -> np.ndarray:
        key = ("low", cutoff)
        if key not in self._cache:
            self._cache[key] = self.low_pass(self.sp.k_abs, cutoff)
        return self._cache[key]

    def project(self, f: np.ndarray, lam) -> np.ndarray:
        return self.sp.apply_multiplier(f, self.multiplier(lam))

    def project_enlarged(self, f: np.ndarray, lam) -> np.ndarray:
        return self.sp.apply_multiplier(f, self.enlarged(self.sp.k_abs, lam))

    def low(self, f: np.ndarray, cutoff) -> np.ndarray:
        return self.sp.apply_multiplier(f, self.low_multiplier(cutoff))

    def decompose(self, f: np.ndarray) -> dict[int, np.ndarray]:
        F = self.sp.fft(f)
        return {lam: self.sp.ifft(self.multiplier(lam) * F) for lam in self.bands}


def project_spatial(f: np.ndarray, lam, bank: DyadicProjectorBank) -> np.ndarray:
    return bank.project(f, lam)


def project_temporal(series: np.ndarray, dt: float, lam, axis: int = 0) -> np.ndarray:
    """Apply the dyadic band ``lam`` in the time-frequency variable along ``axis``."""
    series = np.asarray(series, dtype=float)
    nt = series.shape[axis]
    tau = 2 * np.pi * np.abs(np.fft.fftfreq(nt, d=dt))
    bank = RadialBank(float(tau.max()))
    shape = [1] * series.ndim
    shape[axis] = nt
    m = bank.profile(tau, lam).reshape(shape)
    return sfft.ifft(m * sfft.fft(series, axis=axis), axis=axis).real


def temporal_bands(nt: int, dt: float) -> tuple[int, ...]:
    tau = 2 * np.pi * np.abs(np.fft.fftfreq(nt, d=dt))
    return RadialBank(float(tau.max())).bands


def project_spacetime(history: np.ndarray, dt: float, grid: TorusGrid, lam) -> np.ndarray:
    """Band ``lam`` of ``|(tau, xi)|`` on a history of shape ``(nt, ..., *grid.shape)``."""
    history = np.asarray(history, dtype=float)
    nt = history.shape[0]
    d = grid.dim
    tau = 2 * np.pi * np.fft.fftfreq(nt, d=dt)
    ks = [grid.wavenumbers(a) for a in range(d)]
    r2 = tau.reshape((nt,) + (1,) * (history.ndim - 1)) ** 2
    for a, k in enumerate(ks):
        shape = [1] * history.ndim
        shape[history.ndim - d + a] = k.size
        r2 = r2 + k.reshape(shape) ** 2
    r = np.sqrt(r2)
    bank = RadialBank(float(r.max()))
    axes = (0,) + tuple(range(history.ndim - d, history.ndim))
    return sfft.ifftn(bank.profile(r, lam) * sfft.fftn(history, axes=axes), axes=axes).real


def truncation_cutoff(lam) -> int:
    """Largest dyadic band kept by the ``mu <= lam/16`` rule (the low band is always kept)."""
    return 2 ** max(0, math.floor(math.log2(max(float(lam) / 16.0, 1.0))))


def _low_entries(M: np.ndarray, bank: DyadicProjectorBank, cutoff: int) -> np.ndarray:
    d = bank.grid.dim
    lead = M.shape[:M.ndim - d]
    flat = M.reshape((-1,) + bank.grid.shape)
    out = np.stack([bank.low(f, cutoff) for f in flat])
    return out.reshape(lead + bank.grid.shape)


def truncate_coefficients(coeffs: CoefficientSet, lam, scheme: str = "B",
                          bank: DyadicProjectorBank | None = None) -> CoefficientSet:
    """Low-frequency part of the coefficients relative to band ``lam``.

    Scheme ``A`` filters the composite weights ``eps_prime`` and ``mu_prime``
    directly. Scheme ``B`` filters the factors ``A``, ``eps`` and ``mu`` and
    recomposes with ``h = 1/det(A_<)``, so the truncated set stays a consistent
    geodesic set. Both keep the bands ``mu <= lam/16`` (the low band always).
    """
    bank = bank or DyadicProjectorBank(coeffs.grid)
    cutoff = truncation_cutoff(lam)
    if scheme == "A":
        return CoefficientSet(
            coeffs.grid, coeffs.eps, coeffs.mu, coeffs.A, coeffs.h,
            _low_entries(coeffs.eps_prime, bank, cutoff),
            _low_entries(coeffs.mu_prime, bank, cutoff),
            truncation="A", lam=float(lam),
        )
    if scheme == "B":
        return CoefficientSet.from_factors(
            coeffs.grid,
            _low_entries(coeffs.eps, bank, cutoff),
            _low_entries(coeffs.mu, bank, cutoff),
            _low_entries(coeffs.A, bank, cutoff),
            truncation="B", lam=float(lam),
        )
    raise RejectedInput(f"unknown truncation scheme {scheme!r}")


def low_part(kappa: np.ndarray, lam, bank: DyadicProjectorBank) -> np.ndarray:
    """``kappa_<lam = sum_{mu <= lam/16} S'_mu kappa``."""
    return bank.low(kappa, truncation_cutoff(lam))


def commutator(kappa_low: np.ndarray, lam, bank: DyadicProjectorBank, f: np.ndarray) -> np.ndarray:
    """``[kappa, S'_lam] f = kappa S'_lam f - S'_lam (kappa f)``."""
    return kappa_low * bank.project(f, lam) - bank.project(kappa_low * f, lam)


@dataclass(frozen=True)
class CommutatorEstimate:
    lam: int
    norm: float

    @property
    def scaled(self) -> float:
        return self.lam * self.norm


def commutator_decay(kappa: np.ndarray, lam, bank: DyadicProjectorBank, probes=None,
                     iters: int = 60, seed: int = 0) -> CommutatorEstimate:
    """Estimate ``||[kappa_<lam, S'_lam]||_{L2 -> L2}``.

    With ``probes`` the estimate is the largest ratio ``||C f|| / ||f||`` over
    the probe fields. Otherwise power iteration runs on ``-C^2 = C^* C`` (the
    commutator of two self-adjoint operators is skew-adjoint).
    """
    kl = low_part(kappa, lam, bank)
    if probes is not None:
        best = 0.0
        for f in probes:
            nf = float(np.linalg.norm(f))
            if nf > 0:
                best = max(best, float(np.linalg.norm(commutator(kl, lam, bank, f))) / nf)
        return CommutatorEstimate(int(lam), best)
    rng = np.random.default_rng(seed)
    v = bank.project_enlarged(rng.standard_normal(bank.grid.shape), lam)
    nv = np.linalg.norm(v)
    if nv == 0:
        return CommutatorEstimate(int(lam), 0.0)
    v /= nv
    est = 0.0
    for _ in range(iters):
        w = commutator(kl, lam, bank, v)
        est = float(np.linalg.norm(w))
        v = -commutator(kl, lam, bank, w)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return CommutatorEstimate(int(lam), 0.0)
        v /= nv
    return CommutatorEstimate(int(lam), est)


def telescoping_ratio(coeffs: CoefficientSet, E: np.ndarray, lam,
                      bank: DyadicProjectorBank | None = None) -> float:
    """``||S'_lam div(h_>lam A A^T eps E)|| / (lam ||h_>lam||_inf ||A||_inf^2 ||eps||_inf ||E||)``.

    ``h_>lam`` is the high part of ``h`` left by the ``lam/16`` truncation.
    """
    from maxlab import pointwise as pw

    bank = bank or DyadicProjectorBank(coeffs.grid)
    sp = bank.sp
    h_high = coeffs.h - low_part(coeffs.h, lam, bank)
    eps_mat = coeffs.eps if coeffs.eps_is_matrix else pw.scalar_times_identity(coeffs.eps, coeffs.dim)
    W = pw.matmul(coeffs.ginv, eps_mat)
    flux = h_high * pw.matvec(W, E)
    num = float(np.linalg.norm(bank.project(sp.div(flux), lam))) * math.sqrt(coeffs.grid.cell_volume)
    a_inf = float(np.max(np.linalg.norm(np.moveaxis(coeffs.A, (0, 1), (-2, -1)), ord=2, axis=(-2, -1))))
    den = (lam * float(np.max(np.abs(h_high))) * a_inf**2 * float(np.max(np.abs(eps_mat)))
           * float(np.linalg.norm(E)) * math.sqrt(coeffs.grid.cell_volume))
    return num / den if den > 0 else 0.0


@dataclass
class FrequencyEnvelope:
    """Dyadic envelope ``c_N`` over the raw band norms ``c~_N``."""

    N: np.ndarray
    c_tilde: np.ndarray
    c: np.ndarray
    s: float
    delta: float

    @property
    def C_delta(self) -> float:
        return l2_constant(self.delta)

    def energy_defect(self) -> float:
        """Largest ``c~_N - c_N`` (nonpositive when the energy bound holds)."""
        return float(np.max(self.c_tilde - self.c)) if self.c.size else 0.0

    def l2_excess(self) -> float:
        """``sum c_N^2 - C_delta sum c~_N^2`` (nonpositive when the square-sum bound holds)."""
        return float(np.sum(self.c**2) - self.C_delta * np.sum(self.c_tilde**2))

    def slow_variation_defect(self) -> float:
        """Largest relative excess of ``c_K / c_J`` over ``max(J/K, K/J)^delta``."""
        worst = 0.0
        for j, cj in zip(self.N, self.c):
            for k, ck in zip(self.N, self.c):
                bound = max(j / k, k / j) ** self.delta * cj
                if ck > bound:
                    worst = max(worst, (ck - bound) / max(bound, np.finfo(float).tiny))
        return worst

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "c_tilde", "c"])
        for n, ct, c in zip(self.N, self.c_tilde, self.c):
            w.writerow([int(n), format(float(ct), ".17g"), format(float(c), ".17g")])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def l2_constant(delta: float) -> float:
    """``C_delta = sum_{k in Z} 2^{-2 delta |k|}``."""
    q = 2.0 ** (-2.0 * delta)
    return (1.0 + q) / (1.0 - q)


def envelope_from_bands(N, c_tilde, s: float, delta: float) -> FrequencyEnvelope:
    """``c_N = sup_M min(N/M, M/N)^delta c~_M``."""
    if delta <= 0:
        raise RejectedInput("delta must be positive")
    N = np.asarray(N, dtype=float)
    ct = np.asarray(c_tilde, dtype=float)
    ratio = np.minimum(N[:, None] / N[None, :], N[None, :] / N[:, None])
    c = np.max(ratio**delta * ct[None, :], axis=1) if N.size else ct.copy()
    return FrequencyEnvelope(N, ct, c, float(s), float(delta))


def band_norms(u: np.ndarray, s: float, bank: DyadicProjectorBank) -> tuple[np.ndarray, np.ndarray]:
    """``(N, ||S'_N u||_{H^s})`` over all bands; vector fields sum over components."""
    grid = bank.grid
    comps = u[None] if u.shape == grid.shape else u.reshape((-1,) + grid.shape)
    N = np.array(bank.bands, dtype=float)
    vals = []
    for lam in bank.bands:
        vals.append(sobolev_norm(np.stack([bank.project(c, lam) for c in comps]), s, grid))
    return N, np.array(vals)


def sharp_envelope(u: np.ndarray, s: float, delta: float, bank: DyadicProjectorBank) -> FrequencyEnvelope:
    N, ct = band_norms(u, s, bank)
    return envelope_from_bands(N, ct, s, delta)


def band_energy_csv(u: np.ndarray, bank: DyadicProjectorBank, path=None) -> str:
    N, vals = band_norms(u, 0.0, bank)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "band_l2_squared"])
    for n, v in zip(N, vals):
        w.writerow([int(n), format(float(v**2), ".17g")])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _bump(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    inside = np.abs(y) < 1
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


class Mollifier:
    """Tensor-product mollifier ``prod_i n psi(n y_i)`` sampled on the grid.

    ``psi`` is the standard ``exp(-1/(1-y^2))`` bump; the sampled kernel is
    normalized to unit discrete mass and is symmetric under ``y -> -y``, so its
    Fourier multiplier is real and even.
    """

    def __init__(self, grid: TorusGrid, n: float):
        if n <= 0:
            raise RejectedInput("mollification scale must be positive")
        self.grid = grid
        self.n = float(n)

    def kernel_1d(self, axis: int) -> np.ndarray:
        m, h = self.grid.n[axis], self.grid.spacing[axis]
        j = np.arange(m)
        y = np.where(j < m // 2, j, j - m) * h
        k = _bump(self.n * y)
        k[0] = max(k[0], 0.0)
        total = k.sum()
        if total == 0.0:
            k[0] = 1.0
            total = 1.0
        return k / total

    @cached_property
    def multiplier(self) -> np.ndarray:
        sp = spectral(self.grid)
        out = np.ones(sp.spectral_shape)
        d = self.grid.dim
        for axis in range(d):
            K = np.fft.fft(self.kernel_1d(axis)).real
            if axis == d - 1:
                K = K[: self.grid.n[axis] // 2 + 1]
            shape = [1] * d
            shape[axis] = K.size
            out = out * K.reshape(shape)
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        return spectral(self.grid).apply_multiplier(f, self.multiplier)


def support_margin_ok(E: np.ndarray, grid: TorusGrid, margin: float, tol: float = 1e-12) -> bool:
    """True when ``|E| <= tol * max|E|`` on the slab ``|x_d| <= margin``."""
    x = grid.mesh()[grid.normal_axis]
    near = np.broadcast_to(np.abs(x) <= margin, grid.shape)
    mag = np.sqrt(np.sum(np.asarray(E) ** 2, axis=0))
    top = float(mag.max())
    return top == 0.0 or float(mag[near].max(initial=0.0)) <= tol * top


def mollify_preserving_bc(state: FieldState, n: float, tol: float = 1e-12) -> FieldState:
    """Convolve every component with the tensor mollifier at scale ``1/n``.

    Raises
    ------
    SupportMarginError
        When the electric field does not vanish within ``2/n`` of the boundary.
    """
    if not support_margin_ok(state.E, state.grid, 2.0 / n, tol):
        raise SupportMarginError(f"electric field is supported within 2/n = {2.0 / n:g} of the boundary")
    mol = Mollifier(state.grid, n)
    E = np.stack([mol.apply(c) for c in state.E])
    H = np.stack([mol.apply(c) for c in state.H])
    return state.replace(E, H)


def besov_norm(kappa: np.ndarray, bank: DyadicProjectorBank, kind: str = "B1_inf_2",
               rho: float | None = None) -> float:
    """``(sum_N N^{2 rho} ||S'_N kappa||_inf^2)^{1/2}`` with ``rho = 1`` for ``B1_inf_2``."""
    if kind == "B1_inf_2":
        rho = 1.0
    elif kind == "Brho_inf_2":
        if rho is None:
            raise RejectedInput("Brho_inf_2 needs rho")
    else:
        raise RejectedInput(f"unknown Besov kind {kind!r}")
    total = 0.0
    for lam in bank.bands:
        total += (lam ** (2 * rho)) * float(np.max(np.abs(bank.project(kappa, lam)))) ** 2
    return math.sqrt(total)
