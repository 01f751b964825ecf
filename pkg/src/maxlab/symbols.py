"""Principal symbols of the Maxwell operator and their pointwise diagonalization.

Points are passed as flat batches: ``x`` of shape ``(P, d)``, the time frequency
``xi0`` of shape ``(P,)`` and the spatial covector ``xi`` of shape ``(P, d)``.
Matrix-valued results have shape ``(P, k, k)``.

3D. With ``g^{-1} = A A^T``, ``a = det A`` and the reduced covector
``eta = A^T xi / sqrt(eps mu)``, the symbol

    p / i = [[xi0 h A A^T eps, -C(xi)], [C(xi), xi0 h A A^T mu]]

factors as ``(A+A)(sqrt(eps)+sqrt(mu)) B (sqrt(eps)+sqrt(mu))(A^T+A^T) / a`` with
``B = [[s xi0, -C(eta)], [C(eta), s xi0]]`` real symmetric and ``s = h a``
(``s = 1`` for a consistent set). ``B`` is diagonalized by an orthogonal matrix
whose columns are ``(eta*, 0)``, ``(0, eta*)`` and ``(v, +-C(eta*) v)`` for
``v`` orthogonal to ``eta*``; ``(v, C v)`` carries the eigenvalue
``s xi0 + |eta|`` and ``(v, -C v)`` the eigenvalue ``s xi0 - |eta|``.

2D. In conservative variables ``p = q W`` with ``W = diag(eps', mu')``; ``q``
has eigenvalues ``xi0`` and ``xi0 -+ ||xi||`` where
``||xi||^2 = xi^T eps' xi / (mu' det eps')``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from maxlab.errors import BranchCutoffError, CostGuardError, RejectedInput
from maxlab.fields import CoefficientSet, TorusGrid
from maxlab.lp import smooth_step, truncate_coefficients

BRANCH_CUTOFF = 0.45
_PAIRS = {3: (0, 1), 1: (1, 2), 2: (2, 0)}


def curl_symbol(xi: np.ndarray) -> np.ndarray:
    """``C(xi)_{ij} = -eps_{ijk} xi_k``, so that ``C(xi) v = xi x v``."""
    xi = np.asarray(xi, dtype=float)
    C = np.zeros(xi.shape[:-1] + (3, 3), dtype=xi.dtype)
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    C[..., 0, 1] = -x3
    C[..., 0, 2] = x2
    C[..., 1, 0] = x3
    C[..., 1, 2] = -x1
    C[..., 2, 0] = -x2
    C[..., 2, 1] = x1
    return C


def adjugate(B: np.ndarray) -> np.ndarray:
    """Adjugate (transposed cofactor matrix) of 3x3 matrices; valid for singular ``B``."""
    B = np.asarray(B)
    r0, r1, r2 = B[..., 0, :], B[..., 1, :], B[..., 2, :]
    cof = np.stack([np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)], axis=-2)
    return np.swapaxes(cof, -1, -2)


def adjugate_identity_check(B: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Frobenius residual of ``B^T C(xi) B - C(adj(B) xi)`` (batched)."""
    B = np.asarray(B, dtype=float)
    lhs = np.swapaxes(B, -1, -2) @ curl_symbol(xi) @ B
    rhs = curl_symbol(np.einsum("...ij,...j->...i", adjugate(B), xi))
    return np.linalg.norm(lhs - rhs, axis=(-2, -1))


def algebraic_identities(count: int = 10_000, rng: np.random.Generator | None = None,
                         cutoff: float = BRANCH_CUTOFF) -> dict[str, float]:
    """Largest absolute residuals of the pointwise symbol identities on random inputs.

    ``det_m3`` compares ``det m_3`` with ``eta_3*^2`` and ``det_m3_scaled`` with
    ``-4 eta_3*^2`` (unit ``eta*`` with ``|eta_3*| >= cutoff``). ``curl_square``
    compares ``C(xi)^2`` with ``|xi|^2 I - xi xi^T``; ``curl_gram`` compares
    ``C(xi)^T C(xi)`` with the same matrix. ``adjugate`` is
    ``B^T C(xi) B - C(adj(B) xi)`` for random ``B``.
    """
    rng = rng or np.random.default_rng(0)
    eta = rng.standard_normal((4 * count, 3))
    eta = _unit(eta)
    eta = eta[np.abs(eta[:, 2]) >= cutoff][:count]
    det = np.linalg.det(raw_columns_3d(eta, 3))
    e3 = eta[:, 2] ** 2
    xi = rng.standard_normal((count, 3))
    C = curl_symbol(xi)
    target = np.sum(xi**2, -1)[:, None, None] * np.eye(3) - xi[:, :, None] * xi[:, None, :]
    B = rng.standard_normal((count, 3, 3))
    return {
        "det_m3": float(np.max(np.abs(det - e3))),
        "det_m3_scaled": float(np.max(np.abs(det + 4 * e3))),
        "curl_square": float(np.max(np.linalg.norm(C @ C - target, axis=(-2, -1)))),
        "curl_gram": float(np.max(np.linalg.norm(np.swapaxes(C, -1, -2) @ C - target, axis=(-2, -1)))),
        "adjugate": float(np.max(adjugate_identity_check(B, xi))),
    }


@dataclass(frozen=True)
class SymbolMatrix:
    """Matrix-valued symbol ``(x, xi0, xi) -> (P, size, size)`` with homogeneity tag."""

    dim: int
    size: int
    degree: int
    evaluator: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    name: str = ""

    def __call__(self, x, xi0, xi) -> np.ndarray:
        x, xi0, xi = _batch(x, xi0, xi, self.dim)
        return self.evaluator(x, xi0, xi)


def _batch(x, xi0, xi, dim: int):
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    P = xi.shape[0]
    x = np.broadcast_to(np.atleast_2d(np.asarray(x, dtype=float)), (P, dim))
    xi0 = np.broadcast_to(np.asarray(xi0, dtype=float).reshape(-1), (P,))
    return x, xi0, xi


@dataclass
class PointCoefficients:
    """Coefficient values at a batch of points."""

    A: np.ndarray
    eps: np.ndarray
    mu: np.ndarray

    @property
    def detA(self) -> np.ndarray:
        return np.linalg.det(self.A)

    @property
    def h(self) -> np.ndarray:
        return 1.0 / self.detA

    @property
    def ginv(self) -> np.ndarray:
        return self.A @ np.swapaxes(self.A, -1, -2)

    @property
    def eps_matrix(self) -> np.ndarray:
        if self.eps.ndim == 3:
            return self.eps
        d = self.A.shape[-1]
        return self.eps[:, None, None] * np.eye(d)

    @property
    def eps_prime(self) -> np.ndarray:
        return self.h[:, None, None] * self.A @ self.eps_matrix @ np.swapaxes(self.A, -1, -2)

    @property
    def mu_prime(self) -> np.ndarray:
        if self.A.shape[-1] == 2:
            return self.h * self.mu
        return self.h[:, None, None] * self.mu[:, None, None] * self.ginv


class TrigInterpolant:
    """Exact trigonometric interpolation of a grid field at arbitrary points."""

    def __init__(self, f: np.ndarray, grid: TorusGrid):
        F = np.fft.fftn(f) / grid.size
        keep = np.abs(F) > 0
        idx = np.nonzero(keep)
        self.coef = F[idx]
        self.xi = np.stack([grid.wavenumbers(a)[idx[a]] for a in range(grid.dim)], axis=-1)
        self.x0 = np.array([-L / 2 for L in grid.length])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], 512):
            xs = x[start:start + 512] - self.x0
            out[start:start + 512] = (np.exp(1j * xs @ self.xi.T) @ self.coef).real
        return out


class CoefficientSampler:
    """Evaluate ``A``, ``eps`` and ``mu`` of a coefficient set at arbitrary points.

    ``h`` is always taken as ``1/det A`` at the point, which matches the volume
    factor of a consistent geodesic set and of scheme-B truncations.
    """

    def __init__(self, coeffs: CoefficientSet):
        self.coeffs = coeffs
        g = coeffs.grid
        d = g.dim
        self._A = [[self._interp(coeffs.A[i, j], g) for j in range(d)] for i in range(d)]
        if coeffs.eps_is_matrix:
            self._eps = [[self._interp(coeffs.eps[i, j], g) for j in range(d)] for i in range(d)]
        else:
            self._eps = self._interp(coeffs.eps, g)
        self._mu = self._interp(coeffs.mu, g)

    @staticmethod
    def _interp(f: np.ndarray, grid: TorusGrid):
        if np.all(f == f.flat[0]):
            c = float(f.flat[0])
            return lambda x: np.full(np.atleast_2d(x).shape[0], c)
        return TrigInterpolant(f, grid)

    @property
    def dim(self) -> int:
        return self.coeffs.dim

    def at(self, x: np.ndarray) -> PointCoefficients:
        x = np.atleast_2d(x)
        d = self.dim
        A = np.stack([np.stack([self._A[i][j](x) for j in range(d)], -1) for i in range(d)], -2)
        if isinstance(self._eps, list):
            eps = np.stack([np.stack([self._eps[i][j](x) for j in range(d)], -1) for i in range(d)], -2)
        else:
            eps = self._eps(x)
        return PointCoefficients(A, eps, self._mu(x))


def _sampler(coeffs, lam=None, scheme: str = "B") -> CoefficientSampler:
    if isinstance(coeffs, CoefficientSampler):
        return coeffs
    if lam is not None:
        coeffs = truncate_coefficients(coeffs, lam, scheme)
    return CoefficientSampler(coeffs)


def _symbol_3d(pc: PointCoefficients, xi0, xi) -> np.ndarray:
    P = xi.shape[0]
    p = np.zeros((P, 6, 6), dtype=complex)
    G = pc.h[:, None, None] * pc.ginv
    p[:, :3, :3] = 1j * xi0[:, None, None] * G * pc.eps[:, None, None]
    p[:, 3:, 3:] = 1j * xi0[:, None, None] * G * pc.mu[:, None, None]
    C = curl_symbol(xi)
    p[:, :3, 3:] = -1j * C
    p[:, 3:, :3] = 1j * C
    return p


def _perp(xi: np.ndarray) -> np.ndarray:
    return np.stack([-xi[:, 1], xi[:, 0]], axis=-1)


def _symbol_2d(pc: PointCoefficients, xi0, xi) -> np.ndarray:
    P = xi.shape[0]
    p = np.zeros((P, 3, 3), dtype=complex)
    a = _perp(xi)
    p[:, :2, :2] = 1j * xi0[:, None, None] * pc.eps_prime
    p[:, 2, 2] = 1j * xi0 * pc.mu_prime
    p[:, :2, 2] = 1j * a
    p[:, 2, :2] = 1j * a
    return p


def maxwell_symbol(dim: int, coeffs, lam=None, scheme: str = "B") -> SymbolMatrix:
    """Principal symbol of the (geodesic, reflected) Maxwell operator.

    ``coeffs`` is a :class:`CoefficientSet` (truncated at ``lam`` when given)
    or an existing :class:`CoefficientSampler`.
    """
    sampler = _sampler(coeffs, lam, scheme)
    if sampler.dim != dim:
        raise RejectedInput("dimension does not match the coefficients")
    lo, _ = sampler.coeffs.ellipticity_bounds()
    if lo <= 0:
        raise RejectedInput("coefficients are not elliptic")
    if dim == 3:
        return SymbolMatrix(3, 6, 1, lambda x, xi0, xi: _symbol_3d(sampler.at(x), xi0, xi), "p3")
    return SymbolMatrix(2, 3, 1, lambda x, xi0, xi: _symbol_2d(sampler.at(x), xi0, xi), "p2")


def conservative_factor_2d(coeffs, x, xi0, xi) -> tuple[np.ndarray, np.ndarray]:
    """Split ``p = q W`` in 2D with ``W = diag(eps', mu')`` (action on ``(D, B)``)."""
    sampler = _sampler(coeffs)
    x, xi0, xi = _batch(x, xi0, xi, 2)
    pc = sampler.at(x)
    P = xi.shape[0]
    W = np.zeros((P, 3, 3))
    W[:, :2, :2] = pc.eps_prime
    W[:, 2, 2] = pc.mu_prime
    a = _perp(xi)
    q = np.zeros((P, 3, 3), dtype=complex)
    q[:, 0, 0] = q[:, 1, 1] = q[:, 2, 2] = 1j * xi0
    q[:, :2, 2] = 1j * a / pc.mu_prime[:, None]
    q[:, 2, :2] = 1j * np.einsum("pi,pij->pj", a, np.linalg.inv(pc.eps_prime))
    return q, W


@dataclass
class Conjugation:
    """Pointwise factors with ``p = m d n``; ``m_tilde`` and ``m_raw`` for inspection."""

    m: np.ndarray
    d: np.ndarray
    n: np.ndarray
    m_tilde: np.ndarray | None = None
    m_raw: np.ndarray | None = None

    def product(self) -> np.ndarray:
        return self.m @ self.d @ self.n


def reduced_covector(pc: PointCoefficients, xi: np.ndarray) -> np.ndarray:
    """``A^T xi / sqrt(eps mu)``."""
    return np.einsum("pji,pj->pi", pc.A, xi) / np.sqrt(pc.eps * pc.mu)[:, None]


def raw_columns_3d(eta_star: np.ndarray, branch: int) -> np.ndarray:
    """Un-orthonormalized conjugation matrix for ``branch`` (unit reduced covector)."""
    if branch not in _PAIRS:
        raise RejectedInput(f"branch must be 1, 2 or 3, got {branch}")
    P = eta_star.shape[0]
    C = curl_symbol(eta_star)
    j, k = _PAIRS[branch]
    e = np.eye(3)
    vj = np.cross(e[j], eta_star)
    vk = np.cross(e[k], eta_star)
    Cvj = np.einsum("pij,pj->pi", C, vj)
    Cvk = np.einsum("pij,pj->pi", C, vk)
    z = np.zeros((P, 3))
    cols = [
        np.concatenate([eta_star, z], -1),
        np.concatenate([z, eta_star], -1),
        np.concatenate([vj, Cvj], -1),
        np.concatenate([vj, -Cvj], -1),
        np.concatenate([vk, Cvk], -1),
        np.concatenate([vk, -Cvk], -1),
    ]
    return np.stack(cols, axis=-1)


def _unit(w: np.ndarray) -> np.ndarray:
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


def gram_schmidt_3d(m_raw: np.ndarray) -> np.ndarray:
    """Orthonormalize columns 3..6 pairwise within each eigenspace."""
    cols = [m_raw[..., i] for i in range(6)]
    w1, w2, w3, w4 = (_unit(c) for c in cols[2:])
    w3 = _unit(w3 - np.sum(w1 * w3, -1, keepdims=True) * w1)
    w4 = _unit(w4 - np.sum(w2 * w4, -1, keepdims=True) * w2)
    return np.stack([_unit(cols[0]), _unit(cols[1]), w1, w2, w3, w4], axis=-1)


def _blockdiag(M: np.ndarray) -> np.ndarray:
    P, k, _ = M.shape
    out = np.zeros((P, 2 * k, 2 * k), dtype=M.dtype)
    out[:, :k, :k] = M
    out[:, k:, k:] = M
    return out


def conjugation_3d(x, xi0, xi, branch: int, coeffs, lam=None,
                   cutoff: float = BRANCH_CUTOFF) -> Conjugation:
    """Matrices ``(m_i, d, n_i)`` with ``p = m_i d n_i`` on branch ``i``.

    ``n_i`` carries the scalar factor ``1/det A`` (equal to ``h`` for a
    consistent coefficient set). Eigenvalue order in ``d`` follows the column
    layout: ``(xi0, xi0, +, -, +, -)``.

    Raises
    ------
    BranchCutoffError
        If ``|eta*_i| < cutoff`` at any sample.
    """
    sampler = _sampler(coeffs, lam)
    x, xi0, xi = _batch(x, xi0, xi, 3)
    pc = sampler.at(x)
    eta = reduced_covector(pc, xi)
    r = np.linalg.norm(eta, axis=-1)
    if np.any(r == 0):
        raise RejectedInput("spatial covector must be nonzero")
    eta_star = eta / r[:, None]
    if np.any(np.abs(eta_star[:, branch - 1]) < cutoff):
        raise BranchCutoffError(f"|eta*_{branch}| below cutoff {cutoff} on some samples")
    m_raw = raw_columns_3d(eta_star, branch)
    mt = gram_schmidt_3d(m_raw)
    a = pc.detA
    s = pc.h * a
    vals = np.stack([s * xi0, s * xi0, s * xi0 + r, s * xi0 - r, s * xi0 + r, s * xi0 - r], -1)
    d = np.zeros(vals.shape + (6,), dtype=complex)
    idx = np.arange(6)
    d[:, idx, idx] = 1j * vals
    sq = np.concatenate([np.repeat(np.sqrt(pc.eps)[:, None], 3, 1), np.repeat(np.sqrt(pc.mu)[:, None], 3, 1)], 1)
    AA = _blockdiag(pc.A)
    m = AA @ (sq[:, :, None] * mt)
    n = (np.swapaxes(mt, -1, -2) * sq[:, None, :]) @ np.swapaxes(AA, -1, -2) / a[:, None, None]
    return Conjugation(m, d, n, mt, m_raw)


def conjugation_2d(x, xi0, xi, coeffs, lam=None) -> Conjugation:
    """Matrices ``(m, d, n)`` with ``p = m d n`` in 2D.

    ``d = i diag(xi0, xi0 - ||xi||, xi0 + ||xi||)``; the first row of ``n``
    is ``(xi*^T eps' / mu', 0)``, the normalized divergence row.
    """
    sampler = _sampler(coeffs, lam)
    x, xi0, xi = _batch(x, xi0, xi, 2)
    if np.any(np.linalg.norm(xi, axis=-1) == 0):
        raise RejectedInput("spatial covector must be nonzero")
    pc = sampler.at(x)
    E = pc.eps_prime
    mu = pc.mu_prime
    detE = np.linalg.det(E)
    nu = np.sqrt(np.einsum("pi,pij,pj->p", xi, E, xi) / (mu * detE))
    xs = xi / nu[:, None]
    ast = _perp(xi) / nu[:, None]
    P = xi.shape[0]
    m = np.zeros((P, 3, 3))
    m[:, :2, 0] = np.einsum("pij,pj->pi", E, xs) / detE[:, None]
    m[:, :2, 1] = ast / mu[:, None]
    m[:, :2, 2] = -ast / mu[:, None]
    m[:, 2, 1] = -1.0
    m[:, 2, 2] = -1.0
    Einv_a = np.einsum("pij,pj->pi", np.linalg.inv(E), ast)
    nhat = np.zeros((P, 3, 3))
    nhat[:, 0, :2] = xs / mu[:, None]
    nhat[:, 1, :2] = 0.5 * Einv_a
    nhat[:, 2, :2] = -0.5 * Einv_a
    nhat[:, 1, 2] = nhat[:, 2, 2] = -0.5
    W = np.zeros((P, 3, 3))
    W[:, :2, :2] = E
    W[:, 2, 2] = mu
    d = np.zeros((P, 3, 3), dtype=complex)
    d[:, 0, 0] = 1j * xi0
    d[:, 1, 1] = 1j * (xi0 - nu)
    d[:, 2, 2] = 1j * (xi0 + nu)
    return Conjugation(m.astype(complex), d, (nhat @ W).astype(complex))


def branch_ramp(t: np.ndarray, cutoff: float = BRANCH_CUTOFF) -> np.ndarray:
    """0 for ``t <= cutoff``, 1 for ``t >= 1/sqrt(3)``, smooth in between."""
    top = 1.0 / math.sqrt(3.0)
    return 1.0 - smooth_step(1.0 + (np.asarray(t) - cutoff) / (top - cutoff))


def annulus_profile(r: np.ndarray, lam: float) -> np.ndarray:
    if lam <= 1:
        return smooth_step(r)
    return smooth_step(r / lam) - smooth_step(2.0 * r / lam)


class PhasePartition:
    """Cutoffs ``pi_i = chi_lam(|(xi0, xi)|) * ramp(|eta*_i|)`` for ``i = 1, 2, 3``.

    Every unit covector has a component of size at least ``1/sqrt(3)``, so the
    ramps sum to at least 1 and the partition covers the annulus.
    """

    def __init__(self, coeffs, lam: float, cutoff: float = BRANCH_CUTOFF):
        self.sampler = _sampler(coeffs, lam)
        self.lam = float(lam)
        self.cutoff = cutoff

    def __call__(self, x, xi0, xi, branch: int) -> np.ndarray:
        x, xi0, xi = _batch(x, xi0, xi, 3)
        eta = reduced_covector(self.sampler.at(x), xi)
        eta_star = eta / np.linalg.norm(eta, axis=-1, keepdims=True)
        r = np.sqrt(xi0**2 + np.sum(xi**2, -1))
        return annulus_profile(r, self.lam) * branch_ramp(np.abs(eta_star[:, branch - 1]), self.cutoff)


@dataclass
class PhaseSamples:
    x: np.ndarray
    xi0: np.ndarray
    xi: np.ndarray


def sample_phase_space(grid: TorusGrid, lam: float, count: int, rng: np.random.Generator,
                       coeffs=None, branch: int | None = None,
                       cutoff: float = BRANCH_CUTOFF) -> PhaseSamples:
    """Random points on the ``lam`` annulus; with ``branch`` only those within its cutoff."""
    d = grid.dim
    sampler = None if branch is None else _sampler(coeffs, lam)
    xs, x0s, xis = [], [], []
    have = 0
    while have < count:
        m = max(2 * (count - have), 16)
        x = rng.uniform(-0.5, 0.5, (m, d)) * np.array(grid.length)
        direction = rng.standard_normal((m, d))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        xi = direction * rng.uniform(lam / 2, 2 * lam, (m, 1))
        xi0 = rng.uniform(-2 * lam, 2 * lam, m)
        if branch is not None:
            eta = reduced_covector(sampler.at(x), xi)
            ok = np.abs(eta[:, branch - 1]) / np.linalg.norm(eta, axis=-1) >= cutoff
            x, xi, xi0 = x[ok], xi[ok], xi0[ok]
        xs.append(x)
        xis.append(xi)
        x0s.append(xi0)
        have += x.shape[0]
    return PhaseSamples(np.concatenate(xs)[:count], np.concatenate(x0s)[:count], np.concatenate(xis)[:count])


@dataclass
class ResidualRow:
    lam: float
    branch: int
    max_residual: float
    orthonormality_defect: float
    samples: int


def factorization_residual(dim: int, coeffs, lam: float, samples: PhaseSamples | None = None,
                           branch: int | None = None, count: int = 1000,
                           rng: np.random.Generator | None = None) -> ResidualRow:
    """Largest ``||p pi - m d n pi||_F`` over the samples (2D: ``branch`` is ignored)."""
    sampler = _sampler(coeffs, lam)
    grid = sampler.coeffs.grid
    if samples is None:
        rng = rng or np.random.default_rng(0)
        samples = sample_phase_space(grid, lam, count, rng, sampler, branch if dim == 3 else None)
    if samples.xi.shape[0] == 0:
        raise RejectedInput("empty sample set")
    p = maxwell_symbol(dim, sampler)(samples.x, samples.xi0, samples.xi)
    if dim == 3:
        if branch is None:
            raise RejectedInput("3D residuals need a branch")
        conj = conjugation_3d(samples.x, samples.xi0, samples.xi, branch, sampler)
        pi = PhasePartition(sampler, lam)(samples.x, samples.xi0, samples.xi, branch)
        mt = conj.m_tilde
        orth = float(np.max(np.abs(np.swapaxes(mt, -1, -2) @ mt - np.eye(6))))
    else:
        conj = conjugation_2d(samples.x, samples.xi0, samples.xi, sampler)
        pi = annulus_profile(np.sqrt(samples.xi0**2 + np.sum(samples.xi**2, -1)), lam)
        orth = 0.0
    diff = (p - conj.product()) * pi[:, None, None]
    res = float(np.max(np.linalg.norm(diff, axis=(-2, -1))))
    return ResidualRow(float(lam), 0 if dim == 2 else int(branch), res, orth, int(samples.xi.shape[0]))


def residual_csv(rows: list[ResidualRow], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "branch", "max_residual", "orthonormality_defect"])
    for r in rows:
        w.writerow([format(r.lam, "g"), r.branch, format(r.max_residual, ".17g"),
                    format(r.orthonormality_defect, ".17g")])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


MAX_QUANTIZE_PAIRS = 1 << 22


def quantize(symbol, f: np.ndarray, grid: TorusGrid, xi0: float = 0.0,
             max_pairs: int = MAX_QUANTIZE_PAIRS) -> np.ndarray:
    """Dense standard quantization ``sum_xi e^{i x.xi} a(x, xi) f_hat(xi)`` at every grid point.

    ``symbol`` is a :class:`SymbolMatrix` or a callable ``a(x, xi)`` returning
    ``(P,)`` or ``(P, k, k)``. Matrix symbols act on ``f`` of shape
    ``(k, *grid.shape)``.

    Raises
    ------
    CostGuardError
        When ``(number of modes)^2`` exceeds ``max_pairs``.
    """
    N = grid.size
    if N * N > max_pairs:
        raise CostGuardError(f"dense quantization of {N} modes exceeds the pair limit {max_pairs}")
    if isinstance(symbol, SymbolMatrix):
        def a(x, xi):
            return symbol(x, np.full(x.shape[0], xi0), xi)
    else:
        a = symbol
    f = np.asarray(f, dtype=float)
    comps = f[None] if f.shape == grid.shape else f
    x = np.stack([c.ravel() for c in grid.full_mesh()], -1)
    kgrid = np.meshgrid(*[grid.wavenumbers(ax) for ax in range(grid.dim)], indexing="ij")
    xi = np.stack([k.ravel() for k in kgrid], -1)
    x0 = np.array([-L / 2 for L in grid.length])
    fhat = np.stack([np.fft.fftn(c).ravel() for c in comps]) * np.exp(-1j * xi @ x0)[None] / N
    out = np.zeros((comps.shape[0], N), dtype=complex)
    chunk = max(1, min(N, (1 << 20) // N))
    for start in range(0, N, chunk):
        xs = x[start:start + chunk]
        P = xs.shape[0]
        vals = a(np.repeat(xs, N, axis=0), np.tile(xi, (P, 1)))
        phase = np.exp(1j * xs @ xi.T)
        if vals.ndim == 1:
            vals = vals.reshape(P, N)
            out[:, start:start + P] = np.einsum("pk,ck->cp", phase * vals, fhat)
        else:
            k = vals.shape[-1]
            vals = vals.reshape(P, N, k, k)
            out[:, start:start + P] = np.einsum("pk,pkij,jk->ip", phase, vals, fhat)
    out = out.reshape(comps.shape)
    scale = max(float(np.max(np.abs(out))), np.finfo(float).tiny)
    if float(np.max(np.abs(out.imag))) <= 1e-10 * scale:
        out = out.real
    return out[0] if f.shape == grid.shape else out
