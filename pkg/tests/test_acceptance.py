"""End-to-end acceptance checks at full size; one PASS/FAIL line per criterion is
printed in the terminal summary."""

from __future__ import annotations

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE
from maxlab import diagnostics as diag
from maxlab import evolution as evo
from maxlab import lp
from maxlab import symbols as sym
from maxlab.errors import AdmissibilityError
from maxlab.fields import TorusGrid, field_parity
from maxlab.norms import sobolev_norm
from maxlab.presets import coefficient_preset, data_preset, random_data, wave_packet

pytestmark = pytest.mark.slow

INF = math.inf


def record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (ok, detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def test_criterion_1_symbol_identities():
    t0 = time.perf_counter()
    ids = sym.algebraic_identities(10_000, np.random.default_rng(2024))
    elapsed = time.perf_counter() - t0
    ok = ids["det_m3"] <= 1e-12 and ids["curl_square"] <= 1e-12 and ids["adjugate"] <= 1e-12 and elapsed < 5
    record(1, ok, f"det(m3)-eta3*^2 {ids['det_m3']:.2e}, C^2-(|xi|^2 I - xi xi^T) {ids['curl_square']:.2e}, "
                  f"adjugate {ids['adjugate']:.2e}; det(m3)+4 eta3*^2 {ids['det_m3_scaled']:.2e}, "
                  f"C^T C {ids['curl_gram']:.2e}; {elapsed:.2f} s")
    assert elapsed < 5
    assert ids["adjugate"] <= 1e-12
    assert ids["det_m3"] <= 1e-12
    assert ids["curl_square"] <= 1e-12


def test_criterion_2_factorization_residuals():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    rows = []
    for dim in (2, 3):
        grid = TorusGrid.cube(dim, 32)
        coeffs = coefficient_preset("smooth", grid)
        assert coeffs.evenness_defect() < 1e-14
        for lam in (4, 16, 64, 256):
            for branch in ((None,) if dim == 2 else (1, 2, 3)):
                rows.append(sym.factorization_residual(dim, coeffs, lam, branch=branch, count=1000, rng=rng))
    elapsed = time.perf_counter() - t0
    res = max(r.max_residual for r in rows)
    orth = max(r.orthonormality_defect for r in rows)
    ok = res <= 1e-10 and orth <= 1e-12 and elapsed < 10 and all(r.samples == 1000 for r in rows)
    record(2, ok, f"max residual {res:.2e}, orthonormality {orth:.2e}, {len(rows)} rows, {elapsed:.1f} s")
    assert ok


@pytest.mark.parametrize("dim,n", [(2, 128), (3, 48)])
def test_criterion_3_linear_evolution(dim, n):
    t0 = time.perf_counter()
    grid = TorusGrid.cube(dim, n)
    coeffs = coefficient_preset("smooth", grid)
    s0 = random_data(grid, 11)
    cfg = evo.EvolutionConfig(T=1.0)
    res = evo.evolve(s0, coeffs, cfg)
    rev = evo.time_reversal_error(s0, coeffs, cfg)
    elapsed = time.perf_counter() - t0
    e, c, p = res.max_energy_drift(), res.max_charge_drift(), res.max_parity_defect()
    ok = e <= 1e-9 and c <= 1e-10 and p <= 1e-12 and rev <= 1e-8 and elapsed < 120
    line = f"{dim}D {n}^{dim}: energy {e:.1e}, charge {c:.1e}, parity {p:.1e}, reversal {rev:.1e}, {elapsed:.1f} s"
    prev = ACCEPTANCE.get(3)
    if prev is not None:
        record(3, prev[0] and ok, prev[1] + "; " + line)
    else:
        record(3, ok, line)
    assert ok


def test_criterion_4_kerr():
    t0 = time.perf_counter()
    grid = TorusGrid.cube(2, 128)
    s0 = data_preset("kerr-small", grid, 3, 0.05)
    assert sobolev_norm(s0.components, 2, grid) == pytest.approx(0.05, rel=1e-12)
    cfg = evo.EvolutionConfig(T=1.0, nonlinearity="kerr2d")
    res = evo.evolve(s0, None, cfg, keep_every=1)
    charge = res.max_charge_drift()
    trip = max(float(np.max(np.abs(evo.kerr_invert(evo.kerr_displacement(s.E)) - s.E))) for s in res.history)
    boot = diag.bootstrap_functionals(res.history, kerr=True)
    C = boot.gronwall_constant()
    conv = evo.convergence_ratio(s0, None, cfg)
    elapsed = time.perf_counter() - t0
    ok = (charge <= 1e-10 and trip <= 1e-12 and math.isfinite(C)
          and abs(conv["ratio"] / 4 - 1) <= 0.15 and elapsed < 300)
    record(4, ok, f"charge {charge:.1e}, round trip {trip:.1e}, Gronwall C {C:.3f}, "
                  f"dt-halving ratio {conv['ratio']:.4f}, {elapsed:.1f} s")
    assert ok


def test_criterion_5_helmholtz():
    rng = np.random.default_rng(5)
    grid = TorusGrid.cube(3, 32)
    defects = [diag.helmholtz_ratio(rng.standard_normal((3,) + grid.shape), 1.0, grid).identity_defect
               for _ in range(100)]
    parts, ok = [f"torus identity {max(defects):.1e}"], max(defects) <= 1e-10
    for s in (0.0, 1.0):
        coarse = diag.helmholtz_sweep(3, 16, s, 50, seed=9, master_n=32)
        fine = diag.helmholtz_sweep(3, 32, s, 50, seed=9, master_n=32)
        change = abs(fine.constant / coarse.constant - 1)
        inside = all(1 / c.constant <= r <= c.constant for c in (coarse, fine) for r in c.ratios)
        ok = ok and change <= 0.10 and inside
        parts.append(f"s={s:g}: C {coarse.constant:.4f} -> {fine.constant:.4f} ({change:.2%})")
    record(5, ok, ", ".join(parts))
    assert ok


def test_criterion_6_littlewood_paley():
    rng = np.random.default_rng(6)
    parts, ok = [], True

    g = TorusGrid.cube(2, 128)
    bank = lp.DyadicProjectorBank(g)
    f = rng.standard_normal(g.shape)
    tele = float(np.max(np.abs(sum(bank.decompose(f).values()) - f)))
    ok &= tele <= 1e-10
    parts.append(f"partition {tele:.1e}")

    big = TorusGrid.cube(2, 1024)
    bbank = lp.DyadicProjectorBank(big)
    kappa = np.broadcast_to(np.abs(big.mesh()[big.normal_axis]), big.shape).copy()
    scaled = [lp.commutator_decay(kappa, lam, bbank, iters=60).scaled for lam in (8, 16, 32, 64, 128, 256)]
    sup = max(scaled)
    # bounded: no growth from the middle of the range to the top
    ok &= math.isfinite(sup) and scaled[-1] <= 1.1 * max(scaled[:4])
    parts.append(f"sup lambda*||[kappa,S]|| {sup:.3f}")

    # envelope axioms over every pair of bands, for several data and exponents
    worst = -math.inf
    for delta in (0.1, 0.25, 0.5, 1.0):
        for decay in (0.5, 1.0, 2.0):
            u = diag.random_parity_field(g, rng, decay=decay)
            env = lp.sharp_envelope(u, 1.0, delta, bank)
            worst = max(worst, env.energy_defect(), env.slow_variation_defect() - 1e-12,
                        env.l2_excess())
    ok &= worst <= 0.0
    parts.append("envelope axioms hold" if worst <= 0.0 else f"envelope axiom defect {worst:.1e}")

    u = diag.random_parity_field(g, rng, decay=1.0)
    parity = field_parity(2, g.normal_axis)[0]
    errs, pmax = [], 0.0
    for n in (2, 4, 8, 16, 32, 64):
        mol = lp.Mollifier(g, n)
        un = np.stack([mol.apply(c) for c in u])
        pmax = max(pmax, max(float(np.max(np.abs(c - p * g.mirror(c)))) for c, p in zip(un, parity)))
        errs.append(sobolev_norm(un - u, 0, g))
    mono = all(b <= a for a, b in zip(errs, errs[1:]))
    ok &= pmax <= 1e-12 and mono
    parts.append(f"mollifier parity {pmax:.1e}, monotone {mono}")
    record(6, bool(ok), ", ".join(parts))
    assert ok


def test_criterion_7_strichartz_sweep():
    t0 = time.perf_counter()
    members = diag.sweep_members()
    rows = diag.run_sweep(members, workers=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t0
    summary = diag.sweep_summary(rows)
    ok = elapsed < 1200 and len(rows) == 3 * 20 * 3 * 5
    parts = []
    for s in summary:
        ok = ok and s.spread <= 100 and s.monotone
        parts.append(f"{s.dim}D (p={s.p},q={s.q}) max/min {s.spread:.1f} monotone {s.monotone}")
    record(7, ok, "; ".join(parts) + f"; {elapsed:.0f} s")
    assert ok


def test_criterion_8_cylindrical_consistency():
    grid = TorusGrid.cube(2, 64)
    rep = evo.cylindrical_lift_and_compare(wave_packet(grid), evo.EvolutionConfig(T=1.0), None, n3=128)
    ok = rep.max_discrepancy <= 1e-6 and rep.plateau_derivative <= 1e-10 and rep.horizon >= 1.0
    record(8, ok, f"L2 discrepancy {rep.max_discrepancy:.1e} up to t={rep.horizon:g}, "
                  f"plateau d/dx3 {rep.plateau_derivative:.1e}")
    assert ok


def test_criterion_9_admissibility():
    got = [diag.admissible(INF, 2, 3).gamma, diag.admissible(4, 8, 3).gamma, diag.admissible(8, 8, 2).gamma]
    want = [Fraction(0), Fraction(7, 8), Fraction(5, 8)]
    rejected = False
    try:
        diag.admissible(4, INF, 3)
    except AdmissibilityError:
        rejected = True
    ok = got == want and rejected
    record(9, ok, f"gamma {[str(g) for g in got]}, q=inf rejected {rejected}")
    assert ok
